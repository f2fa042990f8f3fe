"""Root exceptions and the exit codes the CLI maps them to."""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_COMPUTE = 3


class GazeIdError(Exception):
    exit_code = EXIT_COMPUTE


class DataError(GazeIdError, ValueError):
    """Input problem: missing/malformed files, manifest or split inconsistencies."""

    exit_code = EXIT_DATA


class ComputeError(GazeIdError, RuntimeError):
    """The pipeline could not produce a result from otherwise valid input."""

    exit_code = EXIT_COMPUTE


class UsageError(GazeIdError):
    """Bad command line: unknown override keys, inconsistent flags."""

    exit_code = EXIT_USAGE
