class ExtractError(Exception):
    """Base class for extractor failures."""


class PromptFileError(ExtractError):
    """The prompt file is malformed."""


class DataError(ExtractError):
    """The image folder does not match the prompt file."""


class EncoderError(ExtractError):
    """A backbone could not be resolved or run."""
