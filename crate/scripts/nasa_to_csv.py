#!/usr/bin/env python3
"""Convert NASA PCoE battery .mat files into capforge capacity CSVs.

Usage: nasa_to_csv.py OUT_DIR B0005.mat [B0006.mat ...]

Each discharge cycle contributes one row; cycles are numbered 1, 2, ... in
discharge order. Output header is `cycle,capacity_ah`, one file per battery
named after the .mat stem.
"""

import csv
import sys
from pathlib import Path

from scipy.io import loadmat


def discharge_capacities(mat_path: Path) -> list[float]:
    battery = mat_path.stem
    mat = loadmat(mat_path)
    cycles = mat[battery][0, 0]["cycle"][0]
    out = []
    for cycle in cycles:
        if str(cycle["type"][0]) != "discharge":
            continue
        capacity = cycle["data"][0, 0]["Capacity"]
        if capacity.size:
            out.append(float(capacity.ravel()[0]))
    return out


def main(argv: list[str]) -> int:
    if len(argv) < 3:
        print(__doc__, file=sys.stderr)
        return 2
    out_dir = Path(argv[1])
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in argv[2:]:
        path = Path(name)
        capacities = discharge_capacities(path)
        target = out_dir / f"{path.stem}.csv"
        with target.open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["cycle", "capacity_ah"])
            for i, c in enumerate(capacities, start=1):
                w.writerow([i, repr(c)])
        print(f"{target}: {len(capacities)} cycles")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
