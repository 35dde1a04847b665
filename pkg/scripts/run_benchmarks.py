#!/usr/bin/env python3
"""Run the scalability and timing sweeps against saved checkpoints.

Expects the checkpoints written by scripts/train_models.py (results/ by
default); extra arguments are forwarded to both CLI invocations, so e.g.

    python scripts/run_benchmarks.py --out-dir /tmp/run

benchmarks the checkpoints in /tmp/run and writes the reports next to
them. A missing checkpoint file skips that method rather than failing.
"""

import sys
from pathlib import Path

from d2dpower.cli import cli_main


def _out_dir(argv) -> Path:
    for i, arg in enumerate(argv):
        if arg == "--out-dir" and i + 1 < len(argv):
            return Path(argv[i + 1])
        if arg.startswith("--out-dir="):
            return Path(arg.split("=", 1)[1])
    return Path(__file__).resolve().parent.parent / "results"


def main() -> int:
    root = Path(__file__).resolve().parent.parent
    extra = sys.argv[1:]
    out = _out_dir(extra)
    base = [
        "--config", str(root / "configs" / "example.toml"),
        "--out-dir", str(out),
    ]
    checkpoint_flags = []
    for flag, name in (("--wugnn", "wugnn_checkpoint.json"), ("--gnn", "gnn_checkpoint.json")):
        path = out / name
        if path.exists():
            checkpoint_flags += [flag, str(path)]
        else:
            print(f"note: {path} not found, skipping that method")
    for experiment in ("scalability", "timing"):
        code = cli_main(["bench", experiment] + checkpoint_flags + base + extra)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
