#!/usr/bin/env python3
"""Summarize one or more rounds.csv files: final accuracies, tail/byz
selection rates over a round window. Helper for eyeballing tuning runs.

Usage: python3 scripts/summarize_run.py OUT_DIR [--from 30] [--to 100] \
    [--tail-id 0] [--byz-id 5]
"""

import argparse
import csv
import json
from pathlib import Path


def load(csv_path: Path):
    with open(csv_path) as f:
        return list(csv.DictReader(f))


def selection_rates(jsonl_path: Path, lo: int, hi: int, tail_id: int, byz_id: int):
    tail_sel = byz_sel = total = 0
    with open(jsonl_path) as f:
        for line in f:
            rec = json.loads(line)
            if not (lo <= rec["round"] < hi):
                continue
            total += 1
            sel = rec.get("selection")
            ind = sel["indicators"] if sel else [True] * rec["n_participants"]
            tail_sel += bool(ind[tail_id])
            byz_sel += bool(ind[byz_id])
    if total == 0:
        return 0.0, 0.0
    return tail_sel / total, byz_sel / total


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--from", dest="lo", type=int, default=30)
    ap.add_argument("--to", dest="hi", type=int, default=10_000)
    ap.add_argument("--tail-id", type=int, default=0)
    ap.add_argument("--byz-id", type=int, default=5)
    args = ap.parse_args()

    dirs = sorted(d for d in args.out_dir.iterdir() if (d / "rounds.csv").exists()) \
        if not (args.out_dir / "rounds.csv").exists() else [args.out_dir]
    for d in dirs:
        rows = load(d / "rounds.csv")
        final = rows[-1]
        lo, hi = args.lo, min(args.hi, len(rows))
        window = rows[lo:hi]
        avg_overall = sum(float(r["overall_acc"]) for r in window) / max(len(window), 1)
        tail_rate, byz_rate = selection_rates(
            d / "rounds.jsonl", lo, hi, args.tail_id, args.byz_id
        )
        print(
            f"{d.name:12s} final_overall={float(final['overall_acc']):.4f} "
            f"final_class0={float(final['class0_acc'] or 'nan'):.4f} "
            f"avg_overall[{lo}:{hi}]={avg_overall:.4f} "
            f"tail_sel={tail_rate:.2%} byz_sel={byz_rate:.2%}"
        )


if __name__ == "__main__":
    main()
