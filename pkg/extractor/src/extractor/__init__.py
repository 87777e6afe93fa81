"""Feature-bundle extraction with frozen image/text encoders."""

__version__ = "0.1.0"

from .extract import extract  # noqa: F401
from .prompts import PromptSet, build_prompts, load_prompt_file  # noqa: F401
from .encoders import resolve_encoder  # noqa: F401
