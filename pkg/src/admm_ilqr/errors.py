"""Exception types raised across the package."""


class DimensionError(ValueError):
    pass


class NotOrthonormal(ValueError):
    pass


class AntipodalPoints(ValueError):
    pass


class NotTangent(ValueError):
    pass


class ScenarioParseError(ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ValidationError(ValueError):
    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class SolverAbort(RuntimeError):
    pass
