"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigError(ValueError):
    """A configuration document failed validation.

    ``path`` is the JSON path of the offending node (``$`` for the root).
    """

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path
