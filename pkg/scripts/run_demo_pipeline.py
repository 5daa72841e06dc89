#!/usr/bin/env python3
"""Drive the full CLI pipeline on the bundled 20-day corpus with mock providers.

Writes artifacts under ./demo_artifacts (or --out) and finishes with a
similar-day query for the first training day's own text.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from contrasim.cli import bundled_path


def run(args, config, out):
    cmd = [sys.executable, "-m", "contrasim", *args,
           "--config", str(config), "--out", str(out)]
    print("+", " ".join(args))
    proc = subprocess.run(cmd)
    if proc.returncode != 0:
        sys.exit(proc.returncode)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_artifacts")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--loss", choices=["wscl", "cwcl"], default="wscl")
    args = parser.parse_args()

    out = Path(args.out)
    with tempfile.NamedTemporaryFile("w", suffix=".toml", delete=False) as fh:
        fh.write(
            f'[dataset]\npath = "{bundled_path("synthetic_20d.jsonl")}"\n'
            '[providers.embedding]\ndim = 32\n'
            '[augment]\nper_anchor = 3\n'
            f'[train]\nepochs = 25\nhidden = 64\nproj_dim = 32\nloss = "{args.loss}"\n'
            '[metrics]\nsplit = "train"\nk = 3\nbaseline_repeats = 500\n'
            f'[pipeline]\nseed = {args.seed}\n'
        )
        config = fh.name

    for command in ("ingest", "augment", "embed", "train-proj", "audit-space",
                    "train-heads", "eval-heads", "baseline", "shift-analysis"):
        run([command], config, out)

    first_day = json.loads((out / "corpus" / "train.jsonl").read_text().splitlines()[0])
    run(["query-similar", "--text", "\n".join(first_day["headlines"]), "--k", "5"],
        config, out)
    print(f"\nartifacts under {out.resolve()}")


if __name__ == "__main__":
    main()
