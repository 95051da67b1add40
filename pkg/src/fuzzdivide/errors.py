"""Exception hierarchy shared by every module.

The CLI maps these to exit codes, so new error types should subclass one of
the concrete classes below rather than ``FuzzDivideError`` directly.
"""


class FuzzDivideError(Exception):
    exit_code = 2


class InvalidInputError(FuzzDivideError, ValueError):
    pass


class InvalidCountError(InvalidInputError):
    pass


class TraceFormatError(FuzzDivideError, ValueError):
    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if lineno is not None:
            where.append(f"line {lineno}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class IngestError(FuzzDivideError):
    def __init__(self, message, problems=()):
        self.problems = list(problems)
        if self.problems:
            message = message + "\n  " + "\n  ".join(self.problems)
        super().__init__(message)


class AllowlistWriteError(FuzzDivideError, OSError):
    pass


class SeedNotFoundError(FuzzDivideError, LookupError):
    pass


class IntegrityError(FuzzDivideError):
    exit_code = 3


class CorpusTooLargeError(InvalidInputError):
    pass
