"""Print BER CSVs from a results directory as aligned text tables.

Usage:
    python scripts/show_ber.py results/fig9_integer_doppler
"""

import csv
import sys
from pathlib import Path


def main():
    for path in sorted(Path(sys.argv[1]).glob("*.csv")):
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "ber" not in rows[0]:
            continue
        print(path.stem)
        for r in rows:
            print(f"  {float(r['snr_db']):6.2f} dB  BER {float(r['ber']):.3e}  ({r['errors']} / {r['bits']})")


if __name__ == "__main__":
    main()
