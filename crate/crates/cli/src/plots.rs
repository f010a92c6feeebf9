//! Matplotlib scripts written next to the CSV outputs.

pub const TRACE: &str = r#"#!/usr/bin/env python3
import os
import numpy as np
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
d = np.genfromtxt(os.path.join(here, "trace.csv"), delimiter=",", names=True)
t = d["t"]

qw, qx, qy, qz = d["qw"], d["qx"], d["qy"], d["qz"]
roll = np.degrees(np.arctan2(2 * (qw * qx + qy * qz), 1 - 2 * (qx**2 + qy**2)))
pitch = np.degrees(np.arcsin(np.clip(2 * (qw * qy - qz * qx), -1, 1)))
yaw = np.degrees(np.arctan2(2 * (qw * qz + qx * qy), 1 - 2 * (qy**2 + qz**2)))

fig, ax = plt.subplots(3, 1, sharex=True, figsize=(8, 9))
for k, c in enumerate("xyz"):
    line, = ax[0].plot(t, d[c], label=c)
    ax[0].plot(t, d["ref_" + c], "--", color=line.get_color())
ax[0].set_ylabel("position [m]")
ax[0].legend()
for name, v in (("roll", roll), ("pitch", pitch), ("yaw", yaw)):
    ax[1].plot(t, v, label=name)
ax[1].set_ylabel("attitude [deg]")
ax[1].legend()
for k in range(1, 5):
    ax[2].step(t, d["u%d" % k], where="post", label="u%d" % k)
ax[2].set_ylabel("rotor speed [krpm]")
ax[2].set_xlabel("t [s]")
ax[2].legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "trace.png"), dpi=150)
"#;

pub const BENCHMARK: &str = r#"#!/usr/bin/env python3
import os
import csv
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "benchmark_summary.csv"))))
fig, ax = plt.subplots(figsize=(6, 4))
for solver in sorted({r["solver"] for r in rows}):
    rs = sorted((r for r in rows if r["solver"] == solver), key=lambda r: int(r["N"]))
    ax.plot([int(r["N"]) for r in rs], [float(r["median_iter_us"]) for r in rs], "o-", label=solver)
ax.set_xlabel("N")
ax.set_ylabel("time per IP iteration [us]")
ax.set_yscale("log")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "benchmark.png"), dpi=150)
"#;

/// Positions of every run of a study, one panel per axis.
pub fn study(name: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
import os
import csv
from collections import defaultdict
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
runs = defaultdict(lambda: defaultdict(list))
for r in csv.DictReader(open(os.path.join(here, "study_{name}_traces.csv"))):
    for k in ("t", "x", "y", "z", "ref_x", "ref_y", "ref_z"):
        runs[r["label"]][k].append(float(r[k]))
fig, ax = plt.subplots(3, 1, sharex=True, figsize=(8, 9))
for label, d in runs.items():
    for i, c in enumerate("xyz"):
        ax[i].plot(d["t"], d[c], label=label)
first = next(iter(runs.values()), None)
for i, c in enumerate("xyz"):
    if first:
        ax[i].plot(first["t"], first["ref_" + c], "k--", label="reference")
    ax[i].set_ylabel(c + " [m]")
ax[0].legend(fontsize="small")
ax[2].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(os.path.join(here, "study_{name}.png"), dpi=150)
"#
    )
}

pub const CONDENSING: &str = r#"#!/usr/bin/env python3
import os
import csv
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "study_condensing.csv"))))
m = [int(r["block_size"]) for r in rows]
fig, ax = plt.subplots(figsize=(6, 4))
ax.semilogy(m, [max(float(r["max_deviation"]), 1e-17) for r in rows], "o-")
ax.set_xlabel("block size M")
ax.set_ylabel("max |u_M - u_1|")
fig.tight_layout()
fig.savefig(os.path.join(here, "study_condensing.png"), dpi=150)
"#;
