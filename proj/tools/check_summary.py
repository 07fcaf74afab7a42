#!/usr/bin/env python3
"""Recompute summary.csv from result.csv and compare.

Errors are recomputed from the stored poses, not read from the dx/dy/dpsi
columns, so both the error definition and the RMS aggregation are checked.
"""
import csv
import math
import sys

import numpy as np


def rot(row, prefix):
    return np.array([[float(row[f"{prefix}r{r}{c}"]) for c in range(3)] for r in range(3)])


def pos(row, prefix):
    return np.array([float(row[f"{prefix}p{a}"]) for a in "xyz"])


def log_yaw(R):
    c = max(-1.0, min(1.0, (np.trace(R) - 1.0) / 2.0))
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = np.linalg.norm(w)
    a = math.atan2(s, c)
    if a < 1e-6:
        v = w * (1.0 + a * a / 6.0)
    else:
        v = w * a / s
    yaw = v[2]
    return math.atan2(math.sin(yaw), math.cos(yaw))


def check(run_dir):
    with open(f"{run_dir}/result.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    with open(f"{run_dir}/summary.csv", newline="") as f:
        summary = {r["filter"]: r for r in csv.DictReader(f)}
    if len(summary) != 2:
        raise SystemExit(f"{run_dir}: expected 2 filter rows, got {len(summary)}")
    bad = 0
    for name, srow in summary.items():
        p = name.lower() + "_"
        errs = []
        for r in rows:
            d = pos(r, p) - pos(r, "truth_")
            yaw = log_yaw(rot(r, "truth_").T @ rot(r, p))
            errs.append((d[0], d[1], yaw))
            for got, want in ((float(r[p + "dx"]), d[0]), (float(r[p + "dy"]), d[1]), (float(r[p + "dpsi"]), yaw)):
                if abs(got - want) > 1e-9:
                    bad += 1
        e = np.array(errs)
        recomputed = {
            "rms_x": math.sqrt(np.mean(e[:, 0] ** 2)),
            "rms_y": math.sqrt(np.mean(e[:, 1] ** 2)),
            "rms_planar": math.sqrt(np.mean(e[:, 0] ** 2 + e[:, 1] ** 2)),
            "rms_yaw": math.sqrt(np.mean(e[:, 2] ** 2)),
            "final_dx": e[-1, 0],
            "final_dy": e[-1, 1],
            "final_planar": math.hypot(e[-1, 0], e[-1, 1]),
            "final_yaw": abs(e[-1, 2]),
        }
        for key, want in recomputed.items():
            got = float(srow[key])
            if abs(got - want) > 1e-9 * max(1.0, abs(want)):
                print(f"{run_dir} {name} {key}: summary {got} recomputed {want}")
                bad += 1
        flags = [int(r[p + "flag"]) for r in rows]
        applied = sum(1 for f in flags if f in (1, 3))
        if applied != int(srow["updates_applied"]):
            print(f"{run_dir} {name}: applied updates {applied} vs summary {srow['updates_applied']}")
            bad += 1
    return bad


def main(argv):
    if len(argv) < 2:
        raise SystemExit("usage: check_summary.py RUN_DIR [RUN_DIR ...]")
    bad = sum(check(d) for d in argv[1:])
    if bad:
        raise SystemExit(f"{bad} mismatches")
    print(f"summary consistent for {len(argv) - 1} run(s)")


if __name__ == "__main__":
    main(sys.argv)
