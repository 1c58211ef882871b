#!/usr/bin/env python
# Cars on a line without the v >= 0 domain: the falsifier finds a car that
# rolls back past the origin, and the forward variant survives every sample.

from pathlib import Path

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from qdtl import corpus

figs = Path(__file__).parent / "figs"
figs.mkdir(exist_ok=True)

print("forward:", corpus.falsify_entry("cars-forward", samples=500) or "no counterexample")

cx = corpus.falsify_entry("cars-braking", samples=100)
print(f"braking: counterexample at sample {cx.sample}, seed {cx.seed}")
print("initial state:", cx.state)

(flow,) = cx.trace.segments
t = np.asarray(flow.times())
states = list(flow.states())
cars = sorted({key[1] for key in flow.keys})

plt.clf()
fig, ax = plt.subplots(figsize=(6, 4))
for car in cars:
    x = np.array([float(s.get("x", car)) for s in states])
    ax.plot(t, x, label=f"x({car[0]})")
ax.axhline(0, color="r", ls="--")
if cx.position is not None:
    ax.axvline(t[cx.position], color="k", ls=":", label="first violation")
ax.set_xlabel("time")
ax.set_ylabel("position")
ax.set_title("braking counterexample")
ax.legend()
fig.tight_layout()
fig.savefig(figs / "braking.png", dpi=120)
