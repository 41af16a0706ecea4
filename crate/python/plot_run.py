#!/usr/bin/env python3
"""Quick-look plots for a `gdr run` CSV (developer tooling).

Usage: python3 python/plot_run.py out.csv [plot.png]
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

path = sys.argv[1]
out = sys.argv[2] if len(sys.argv) > 2 else path.rsplit(".", 1)[0] + ".png"
df = pd.read_csv(path)

fig, axes = plt.subplots(2, 2, figsize=(11, 7))
qcols = [c for c in df.columns if c.startswith("q")]
for c in qcols[:6]:
    axes[0, 0].plot(df["t"], df[c], lw=0.7, label=c)
axes[0, 0].set_title("coordinates")
axes[0, 0].legend(fontsize=7)

axes[0, 1].plot(df["t"], df["E"], label="E")
axes[0, 1].plot(df["t"], df["T"], label="T", lw=0.7)
axes[0, 1].plot(df["t"], df["V"], label="V", lw=0.7)
axes[0, 1].set_title("energies")
axes[0, 1].legend(fontsize=7)

axes[1, 0].semilogy(df["t"], abs(df["E"] - df["E"][0]) / abs(df["E"][0]) + 1e-300)
axes[1, 0].set_title("relative energy drift")

if df["j_z"].notna().any():
    for c in ("l_x", "l_y", "l_z", "j_x", "j_y", "j_z"):
        axes[1, 1].plot(df["t"], df[c], lw=0.7, label=c)
    axes[1, 1].set_title("momenta")
    axes[1, 1].legend(fontsize=7)
else:
    axes[1, 1].plot(df["t"], df["diss_f"] + df["diss_s"], lw=0.7)
    axes[1, 1].set_title("dissipation per step")

for ax in axes.flat:
    ax.set_xlabel("t")
fig.tight_layout()
fig.savefig(out, dpi=150)
print(f"wrote {out}")
