"""Hand-count oracle for the cleaning fixture.

Counts data rows that are (a) complete (no empty field) and (b) distinct,
working on the raw CSV text only.
"""
import csv
import sys

path = sys.argv[1] if len(sys.argv) > 1 else "fixtures/datasets/sample_measurements.csv"
with open(path, newline="") as fh:
    rows = list(csv.reader(fh))[1:]
print("data rows:", len(rows))
print("distinct complete rows:", len({tuple(r) for r in rows if all(c.strip() for c in r)}))
