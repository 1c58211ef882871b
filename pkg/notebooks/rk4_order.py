#!/usr/bin/env python
# Convergence of the RK4 flow integrator on the turning aircraft, whose
# closed form is a rotation of the velocity vector.

import math
from pathlib import Path

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from qdtl import corpus
from qdtl.parser import parse_program
from qdtl.semantics import compile_ode, integrate, make_state

figs = Path(__file__).parent / "figs"
figs.mkdir(exist_ok=True)

th = corpus.load_theory(str(corpus.entry("atc-flight").theory_path))
ode = parse_program("forall i:A F(i)", th.signature, th.definitions)

w, dur = 0.7, 1.0
x1, x2, d1, d2 = 1.0, -2.0, 0.5, 1.5
s = make_state({"A": ("A0",)}, {"x1": {("A0",): x1}, "x2": {("A0",): x2},
                                "d1": {("A0",): d1}, "d2": {("A0",): d2}, "omega": w})
c = compile_ode(s, ode)
wt = w * dur
exact = {"x1": x1 + (d1 * math.sin(wt) + d2 * (math.cos(wt) - 1)) / w,
         "x2": x2 + (d1 * (1 - math.cos(wt)) + d2 * math.sin(wt)) / w,
         "d1": d1 * math.cos(wt) - d2 * math.sin(wt),
         "d2": d1 * math.sin(wt) + d2 * math.cos(wt)}
target = np.array([exact[key[0]] for key in c.keys])

hs = 0.2 / 2.0 ** np.arange(7)
errors = []
for h in hs:
    _, ys = integrate(c, dur, h)
    errors.append(np.max(np.abs(np.asarray(ys[-1], dtype=float) - target)))
errors = np.array(errors)

slope = np.polyfit(np.log(hs), np.log(errors), 1)[0]
print("h      error     ratio")
for k, (h, e) in enumerate(zip(hs, errors)):
    ratio = errors[k - 1] / e if k else float("nan")
    print(f"{h:.5f}  {e:.3e}  {ratio:5.1f}")
print(f"fitted order {slope:.2f}")

plt.clf()
fig, ax = plt.subplots(figsize=(5, 4))
ax.loglog(hs, errors, "o-", label="RK4")
ax.loglog(hs, errors[0] * (hs / hs[0]) ** 4, "k--", label="h^4")
ax.set_xlabel("step size h")
ax.set_ylabel("max error at t = 1")
ax.legend()
fig.tight_layout()
fig.savefig(figs / "rk4_order.png", dpi=120)
