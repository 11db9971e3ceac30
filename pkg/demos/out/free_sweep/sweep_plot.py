"""Plot sweep.csv (generated by specband 0.1.0)."""

import csv
import sys

import matplotlib.pyplot as plt

with open("sweep.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["L"]) for r in rows]
fig, ax = plt.subplots()
for col in ['inv_norm_integral', 'g_lb', 'g_th']:
    ax.plot(x, [float(r[col]) for r in rows], marker="o", label=col)
ax.set_xlabel("L")
ax.set_yscale("log")
ax.set_xscale("log")
ax.legend()
fig.savefig("sweep.png" if len(sys.argv) < 2 else sys.argv[1], dpi=150)
