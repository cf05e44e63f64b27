"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` so the command-line front end can map an
error class to a distinct process status.
"""


class OctxError(Exception):
    exit_code = 10


class ParameterError(OctxError, ValueError):
    exit_code = 11


class EmptyPairsError(OctxError, ValueError):
    exit_code = 12


class NoPatchesError(OctxError, ValueError):
    exit_code = 13


class SplitError(OctxError, ValueError):
    exit_code = 14


class OrderingError(OctxError, ValueError):
    exit_code = 15


class UndefinedObjectiveError(OctxError, ValueError):
    exit_code = 16


class TrainingError(OctxError, ValueError):
    exit_code = 17


class InitError(OctxError, ValueError):
    exit_code = 18


class ConsistencyError(OctxError, ValueError):
    exit_code = 19


class NoRewardError(OctxError, ValueError):
    exit_code = 20


class EmptyConfusionError(OctxError, ValueError):
    exit_code = 21


class UndefinedAUCError(OctxError, ValueError):
    exit_code = 22


class EmptyTraceError(OctxError, ValueError):
    exit_code = 23


class MissingInputError(OctxError, FileNotFoundError):
    exit_code = 3


class MalformedFileError(OctxError, ValueError):
    """Bad file content; ``path`` and ``line`` locate the problem."""

    exit_code = 4

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line
