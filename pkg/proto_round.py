"""Prototype the rounding stage: quadruple-vote consensus + stability."""
import time

import numpy as np

from ulab.core import GroupFn, GroupParams, PolyPhase, poly_phase_fn
from ulab.galg import bihom_defect
from ulab.arrange import PartialMap

P52 = GroupParams(5, 2)

from proto_pipe2 import stage1, fit_biaffine

q2 = PolyPhase.from_coeffs(P52, {(0, 0, 0): 1, (1, 1, 1): 2, (0, 1): 1, (0,): 3})
rng = np.random.default_rng(1234)
mask = rng.random(25) < 0.1
vals = poly_phase_fn(q2).values.copy()
vals[mask] = np.exp(2j * np.pi * rng.random(int(mask.sum())))
f3 = GroupFn(P52, vals)

dom, vmap = stage1(f3, 0.35)
phi = PartialMap(P52, P52, dom, vmap)
print("density", phi.density())

t0 = time.time()
d = bihom_defect(phi.to_dist_fn(), phi.indicator())
print("defect %.4f t %.2f" % (d, time.time() - t0))

# line-vote rounding: rows/columns are affine, so
#   vote(a,b | b1,b2) = V[a,b1] + V[a,b2] - V[a, b1+b2-b]   (same for columns)
N = P52.size
q = P52.size
t0 = time.time()
idxN = np.arange(N, dtype=np.int64)
add = P52.add(idxN[:, None], idxN[None, :])
sub = P52.sub(idxN[:, None], idxN[None, :])
vadd = P52.add(idxN[:, None], idxN[None, :])
vsub = P52.sub(idxN[:, None], idxN[None, :])
hist = np.zeros((N, N, q), dtype=np.int64)


def line_votes(dom_line, val_line, hist_line):
    pair_sum = add  # (b1, b2) -> b1 + b2
    pair_val = vadd[val_line[:, None], val_line[None, :]]  # V[b1] + V[b2]
    pair_dom = dom_line[:, None] & dom_line[None, :]
    for b in range(N):
        b3 = sub[pair_sum, b]
        ok = pair_dom & dom_line[b3]
        votes = vsub[pair_val, val_line[b3]]
        hist_line[b] += np.bincount(votes[ok], minlength=q)


for a in range(N):
    line_votes(dom[a], vmap[a], hist[a])
for b in range(N):
    hist_col = np.zeros((N, q), dtype=np.int64)
    line_votes(dom[:, b], vmap[:, b], hist_col)
    hist[:, b, :] += hist_col
rounded = hist.argmax(axis=2)
tot = hist.sum(axis=2)
top = hist.max(axis=2)
stab = np.where(tot > 0, top / np.maximum(tot, 1), 0.0)
print("rounding t %.2f" % (time.time() - t0))
print("mean stability %.4f min %.4f" % (stab[dom].mean(), stab[dom].min()))
changed = int((rounded[dom] != vmap[dom]).sum())
print("values changed by rounding:", changed, "of", int(dom.sum()))
phi2 = PartialMap(P52, P52, dom, np.where(dom, rounded, 0).astype(np.int64))
T, s, t, e, agree = fit_biaffine(P52, dom, phi2.values)
print("post-round fit agreement %.4f" % agree)
d2 = bihom_defect(phi2.to_dist_fn(), phi2.indicator())
print("post-round defect %.4g" % d2)
