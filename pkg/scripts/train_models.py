#!/usr/bin/env python3
"""Train both learned models and save their checkpoints.

Runs the CLI twice (once per model) with the repository's example
configuration; extra arguments are forwarded, so e.g.

    python scripts/train_models.py --out-dir /tmp/run --seed 1

trains both models into /tmp/run with seed 1. Checkpoints land in
results/ by default.
"""

import sys
from pathlib import Path

from d2dpower.cli import cli_main


def main() -> int:
    root = Path(__file__).resolve().parent.parent
    base = [
        "--config", str(root / "configs" / "example.toml"),
        "--out-dir", str(root / "results"),
    ]
    extra = sys.argv[1:]
    for model in ("wugnn", "gnn"):
        code = cli_main(["train", "--model", model] + base + extra)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
