import json

import numpy as np
import pytest
from PIL import Image


def _paint(path, base_color, seed):
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    pixels = np.clip(
        np.array(base_color, dtype=np.float64) + rng.normal(0, 30, size=(24, 24, 3)),
        0,
        255,
    ).astype(np.uint8)
    Image.fromarray(pixels, "RGB").save(path)


@pytest.fixture()
def toy_dataset(tmp_path):
    """Two classes x four images, plus a matching prompt file."""
    images = tmp_path / "pets"
    specs = {"redcat": (200, 40, 40), "bluedog": (40, 40, 200)}
    for name, color in specs.items():
        (images / name).mkdir(parents=True)
        for k in range(4):
            _paint(images / name / f"{name}_{k}.png", color, seed=hash((name, k)) % (2**32))
    prompt_file = tmp_path / "prompts.json"
    prompt_file.write_text(
        json.dumps(
            [
                {
                    "name": "redcat",
                    "prompts": [
                        "A photo of a redcat.",
                        "A photo of a redcat, which has red fur.",
                    ],
                },
                {
                    "name": "bluedog",
                    "prompts": [
                        "A photo of a bluedog.",
                        "A photo of a bluedog, which has blue fur.",
                    ],
                },
            ]
        )
    )
    return images, prompt_file
