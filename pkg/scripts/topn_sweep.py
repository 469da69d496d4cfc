"""Run the pipeline followed by a top-N sweep and print coverage per N.

    python3 scripts/topn_sweep.py --input tests/fixtures/sweep.jsonl \
        --config tests/fixtures/sweep_config.json --out runs/sweep --sizes 50,100,150,200,250
"""
import argparse
import json
import sys
from pathlib import Path

from muscad.cli import main as muscad_main


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--input", required=True, action="append")
    ap.add_argument("--config")
    ap.add_argument("--out", type=Path, default=Path("runs/sweep"))
    ap.add_argument("--sizes", default="50,100,150,200,250")
    args = ap.parse_args(argv)

    common = [f"--input={p}" for p in args.input] + ["--workdir", str(args.out), "--threads", "1"]
    if args.config:
        common += ["--config", args.config]
    status = muscad_main(["pipeline", *common])
    if status not in (0, 3):
        return status
    status = max(status, muscad_main(["sweep", *common, "--lexicon.sweep", args.sizes]))
    if status not in (0, 3):
        return status

    rows = json.loads((args.out / "sweep.json").read_text())["rows"]
    print(f"{'N':>6} {'used':>6} {'coverage':>9}")
    for r in rows:
        print(f"{r['top_n']:>6} {r['effective_top_n']:>6} {r['coverage']:>9.4f}")
    cov = [r["coverage"] for r in rows]
    print("monotone non-decreasing:", all(b >= a for a, b in zip(cov, cov[1:])))
    return status


if __name__ == "__main__":
    sys.exit(main())
