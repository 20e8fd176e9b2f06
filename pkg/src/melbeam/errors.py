"""Package-level exception types mapped onto CLI exit codes."""


class MelbeamError(Exception):
    """Base class for all melbeam errors."""


class ConfigError(MelbeamError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class DataError(MelbeamError):
    """Invalid or missing runtime data such as audio files (CLI exit code 3)."""
