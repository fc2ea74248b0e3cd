"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A model parameter lies outside its valid domain."""


class DimensionError(ValueError):
    """An array or grid does not have the expected shape."""


class NumericalError(ArithmeticError):
    """A numerical routine (quadrature, series) failed to converge."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration.

    ``line`` is the 1-based line number in the config file when known.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
