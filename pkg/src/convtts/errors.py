"""Error types shared across modules (data/file problems map to CLI exit code 2)."""


class DataError(Exception):
    """Bad input data: corpus files, audio files, serialized artifacts."""


class WavFormatError(DataError):
    """WAV file is not the 16-bit PCM mono RIFF/WAVE layout this engine reads."""


class FileFormatError(DataError):
    """A binary artifact (MSPEC1 spectrogram, FCTTS1 checkpoint) failed validation."""


class ConfigError(DataError):
    """Run-config file contains an unknown key or an unparsable value."""
