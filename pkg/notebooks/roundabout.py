#!/usr/bin/env python
# Roundabout manoeuvre: replay the invariant proof, then fly n aircraft
# around the circle and watch the pairwise separation.

import itertools
import math
from pathlib import Path

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from qdtl import corpus
from qdtl.parser import parse_program
from qdtl.semantics import compile_ode, integrate

figs = Path(__file__).parent / "figs"
figs.mkdir(exist_ok=True)

res = corpus.check_entry("atc-flight")
print("flight:", res.status, res.stats["steps"], "steps, rules", sorted(res.stats["rules"]))

th = corpus.load_theory(str(corpus.entry("atc-flight").theory_path))
ode = parse_program("forall i:A F(i)", th.signature, th.definitions)
p = 5.0


def fly(rb, duration=2 * math.pi, h=0.01):
    c = compile_ode(rb.state(), ode)
    grid, ys = integrate(c, duration, h)
    ys = np.asarray(ys, dtype=float)
    col = {key: k for k, key in enumerate(c.keys)}
    x1 = np.stack([ys[:, col[("x1", (o,))]] for o in rb.names])
    x2 = np.stack([ys[:, col[("x2", (o,))]] for o in rb.names])
    sep = np.min([np.hypot(x1[a] - x1[b], x2[a] - x2[b])
                  for a, b in itertools.combinations(range(len(rb.names)), 2)], axis=0)
    return np.asarray(grid), x1, x2, sep


plt.clf()
fig, (ax_orbit, ax_sep) = plt.subplots(1, 2, figsize=(11, 5))
for n in (2, 3, 5, 8):
    rb = corpus.roundabout(n, p=p)
    grid, x1, x2, sep = fly(rb)
    ax_orbit.plot(x1[0], x2[0], label=f"n = {n}, r = {rb.radius:.2f}")
    ax_orbit.plot(x1[:, 0], x2[:, 0], "k.", ms=4)
    ax_sep.plot(grid, sep, label=f"n = {n}")
    print(f"n = {n}: radius {rb.radius:.3f}, min separation {sep.min():.3f}")

# the same three aircraft with A1 stalled in place; Tangential fails
rb = corpus.roundabout(3, p=p)
values = dict(rb.values)
values["d1"] = {**values["d1"], ("A1",): 0.0}
values["d2"] = {**values["d2"], ("A1",): 0.0}
grid, x1, x2, sep = fly(corpus.Roundabout(rb.names, values, rb.radius))
ax_sep.plot(grid, sep, "k:", label="n = 3, A1 stalled")
print(f"stalled: min separation {sep.min():.3f} at t = {grid[sep.argmin()]:.2f}")

ax_orbit.set_aspect("equal")
ax_orbit.set_xlabel("x1")
ax_orbit.set_ylabel("x2")
ax_orbit.set_title("one full turn")
ax_orbit.legend(fontsize=8)
ax_sep.axhline(p, color="r", ls="--", label="p")
ax_sep.set_xlabel("time")
ax_sep.set_ylabel("closest pair distance")
ax_sep.set_ylim(0, None)
ax_sep.legend(fontsize=8)
fig.tight_layout()
fig.savefig(figs / "roundabout.png", dpi=120)
