"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a configuration value is out of range or malformed."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InsufficientDataError(ValueError):
    pass


class EmptyWindowError(ValueError):
    pass


class UnknownObjectError(KeyError):
    def __init__(self, object_id):
        self.object_id = object_id
        super().__init__(f"unknown object id {object_id}")

    def __str__(self):
        return self.args[0]
