"""Exception types shared across the package."""


class SchemaError(ValueError):
    """A required column or schema key is missing or malformed."""


class SampleParseError(ValueError):
    """A sample value in an input file could not be parsed as a number."""


class FormatError(ValueError):
    """An interchange file (embeddings, tree, checkpoint) is malformed."""


class CapabilityError(RuntimeError):
    """The requested operation needs information the input does not carry."""


class ConfigError(ValueError):
    """A run configuration is invalid or references missing files."""
