"""Plot carmona.csv (generated by specband 0.1.0)."""

import csv
import sys

import matplotlib.pyplot as plt

with open("carmona.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["L"]) for r in rows]
fig, ax = plt.subplots()
for col in ['probe', 'oracle']:
    ax.plot(x, [float(r[col]) for r in rows], marker="o", label=col)
ax.set_xlabel("L")
ax.legend()
fig.savefig("carmona.png" if len(sys.argv) < 2 else sys.argv[1], dpi=150)
