"""Prompt files: per class, one general template plus domain descriptors.

Format: a JSON list preserving class order, e.g.

    [
      {"name": "sphynx",
       "prompts": ["A photo of a sphynx.",
                   "A photo of a sphynx, which has wrinkled hairless skin."]},
      ...
    ]

The first prompt of every class is the general one; every class must
carry the same number of prompts. Descriptor lists from an external
generator can be turned into this shape with :func:`build_prompts`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import PromptFileError

GENERAL_TEMPLATE = "A photo of a {}."
DOMAIN_TEMPLATE = "A photo of a {}, which {}."


@dataclass(frozen=True)
class PromptSet:
    class_names: list[str]
    prompt_texts: list[list[str]]  # one list of M strings per class

    @property
    def num_prompts(self) -> int:
        return len(self.prompt_texts[0])


def build_prompts(descriptors: dict[str, list[str]]) -> PromptSet:
    """General prompt first, then one domain prompt per descriptor."""
    names = list(descriptors)
    texts = []
    for name in names:
        texts.append(
            [GENERAL_TEMPLATE.format(name)]
            + [DOMAIN_TEMPLATE.format(name, d) for d in descriptors[name]]
        )
    return validate_prompt_set(PromptSet(names, texts))


def validate_prompt_set(prompts: PromptSet) -> PromptSet:
    if not prompts.class_names:
        raise PromptFileError("prompt file names no classes")
    if len(set(prompts.class_names)) != len(prompts.class_names):
        raise PromptFileError("duplicate class names in prompt file")
    counts = {len(p) for p in prompts.prompt_texts}
    if counts == {0}:
        raise PromptFileError("classes have no prompts")
    if len(counts) != 1:
        raise PromptFileError(f"classes disagree on prompt count: {sorted(counts)}")
    return prompts


def load_prompt_file(path) -> PromptSet:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise PromptFileError(f"cannot read prompt file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PromptFileError(f"prompt file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise PromptFileError("prompt file root must be a list of class entries")
    names, texts = [], []
    for entry in raw:
        if not isinstance(entry, dict) or set(entry) != {"name", "prompts"}:
            raise PromptFileError("each entry needs exactly the keys 'name' and 'prompts'")
        if not isinstance(entry["prompts"], list) or not all(
            isinstance(p, str) for p in entry["prompts"]
        ):
            raise PromptFileError(f"prompts of '{entry['name']}' must be strings")
        names.append(str(entry["name"]))
        texts.append(list(entry["prompts"]))
    return validate_prompt_set(PromptSet(names, texts))
