#!/usr/bin/env python3
"""Regenerates constants/calibrated.json.

Runs `smpsim_cli calibrate` for every tunable constant and stores the shipped values next to the
smallest ladder value that met the target error, with the measured errors as provenance.
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

SHIPPED = {
    "c_l2": 6.0,
    "c_learn": 2.0,
    "c_flying_pony": 40.0,
    "warmup_c": 1.0,
    "smooth_batches": 12,
    "levin_c1": 8.0,
    "levin_c2": 4.0,
    "levin_c3": 10.0,
    "levin_scale": 1.0,
}

RUNS = [
    ["--protocol", "l2", "--k", "4", "16", "--gamma", "0.5"],
    ["--protocol", "smooth", "--k", "16", "64", "--ell", "2", "--eps", "0.3", "--c-min", "0.05", "--steps", "30"],
    ["--protocol", "levin", "--k", "16", "64", "--ell", "2", "--eps", "0.3", "--c-min", "0.01", "--steps", "30"],
    ["--protocol", "warmup", "--k", "16", "64", "--eps", "0.3", "--c-min", "0.05", "--steps", "30"],
    ["--protocol", "flying-pony", "--k", "64", "256", "--c-min", "1"],
    ["--protocol", "learn", "--k", "8", "32", "--eps", "0.25", "--c-min", "0.01", "--steps", "30"],
]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", default="build/smpsim_cli")
    ap.add_argument("--seed", default="20240601")
    ap.add_argument("--budget", default="300")
    ap.add_argument("--out", default="constants/calibrated.json")
    args = ap.parse_args()

    records = {}
    for run in RUNS:
        cmd = [args.cli, "calibrate", "--seed", args.seed, "--budget", args.budget, *run]
        res = subprocess.run(cmd, capture_output=True, text=True)
        if res.returncode != 0:
            print(res.stderr, file=sys.stderr)
            return res.returncode
        j = json.loads(res.stdout)
        prov = j["provenance"]
        name = prov["constant"]
        records[prov["protocol"]] = {
            "constant": name,
            "calibrated_minimum": j["constants"][name],
            "shipped": SHIPPED[name],
            **{k: v for k, v in prov.items() if k not in ("constant", "protocol")},
        }
        print(f"{prov['protocol']:12s} {name:14s} min {j['constants'][name]:.4g}  shipped {SHIPPED[name]}", file=sys.stderr)

    out = {"schema_version": 1, "constants": SHIPPED, "calibration": records}
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
