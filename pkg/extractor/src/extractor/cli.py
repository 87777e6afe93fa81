"""extract: image folders + prompt file -> engine-ready feature bundle.

Exit codes: 0 success, 1 usage error, 2 data/encoder error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ExtractError
from .extract import extract
from .prompts import load_prompt_file


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")

    def exit(self, status=0, message=None):
        if status != 0:
            raise _UsageError(message or f"{self.prog}: usage error")
        raise SystemExit(0)


def run(argv, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = _Parser(prog="extract", description=__doc__)
    parser.add_argument("--images", required=True, help="root folder, one subfolder per class")
    parser.add_argument("--prompts", required=True, help="JSON prompt file")
    parser.add_argument("--backbones", required=True, help="comma-separated encoder ids")
    parser.add_argument("--out", required=True, help="bundle output directory")
    try:
        args = parser.parse_args(argv)
        backbone_ids = [b for b in args.backbones.split(",") if b]
        if not backbone_ids:
            raise _UsageError("--backbones names no encoders")
        prompts = load_prompt_file(args.prompts)
        manifest_path = extract(args.images, prompts, backbone_ids, args.out)
    except _UsageError as exc:
        stderr.write(str(exc) + "\n" + parser.format_usage())
        return 1
    except SystemExit:
        return 0
    except (ExtractError, OSError) as exc:
        stderr.write(f"error: {exc}\n")
        return 2
    stdout.write(
        json.dumps(
            {
                "command": "extract",
                "params": {
                    "images": args.images,
                    "prompts": args.prompts,
                    "backbones": backbone_ids,
                    "out": args.out,
                },
                "manifest": str(manifest_path),
            },
            sort_keys=True,
        )
        + "\n"
    )
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
