#!/usr/bin/env python3
"""Run every shipped experiment config and collect results under results/.

The pipeline command is inferred from the config file name suffix
(_constants, _solve, _converge, _invariance); anything else runs `all`.
"""
import argparse
import subprocess
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
SUFFIX_COMMANDS = {"constants": "constants", "solve": "solve",
                   "converge": "converge", "invariance": "invariance"}


def command_for(cfg: Path) -> str:
    suffix = cfg.stem.rsplit("_", 1)[-1]
    return SUFFIX_COMMANDS.get(suffix, "all")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--results", type=Path, default=REPO / "results")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    configs = sorted((REPO / "configs").glob("*.cfg"))
    if not configs:
        print("no configs found", file=sys.stderr)
        return 1
    failures = 0
    for cfg in configs:
        out = args.results / cfg.stem
        cmd = [sys.executable, "-m", "evolveq", command_for(cfg),
               "--config", str(cfg), "--out", str(out),
               "--threads", str(args.threads)]
        print(f"== {cfg.name} -> {out}")
        rc = subprocess.run(cmd).returncode
        if rc != 0:
            print(f"   exited with status {rc}", file=sys.stderr)
            failures += 1
    print(f"{len(configs) - failures}/{len(configs)} configs succeeded")
    return 2 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
