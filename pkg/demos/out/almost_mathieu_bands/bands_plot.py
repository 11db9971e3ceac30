"""Plot bands.csv (generated by specband 0.1.0)."""

import csv
import sys

import matplotlib.pyplot as plt

with open("bands.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["ell"]) for r in rows]
fig, ax = plt.subplots()
for col in ['E1', 'E2']:
    ax.plot(x, [float(r[col]) for r in rows], marker="o", label=col)
ax.set_xlabel("ell")
ax.legend()
fig.savefig("bands.png" if len(sys.argv) < 2 else sys.argv[1], dpi=150)
