"""Prototype of the inverse pipeline, stage by stage, with measured values."""
import time

import numpy as np

from ulab.arrange import PartialMap, densify, row_freiman_filter
from ulab.bilinear import bogolyubov_bilinear, bohr_decompose
from ulab.core import GroupFn, GroupParams, PolyPhase, correlation, dft, poly_phase_fn
from ulab.galg import bihom_defect
from ulab.gowers import derivative2, uk_norm
from ulab.trilinear import TrilinearForm, symmetry_pipeline

P5 = GroupParams(5, 1)
P52 = GroupParams(5, 2)


def gate_and_phi(f, c1):
    """Stage 0 gate value + stage 1 partial map."""
    params = f.params
    N = params.size
    u4 = uk_norm(f, 4).value
    dom = np.zeros((N, N), dtype=bool)
    vals = np.zeros((N, N), dtype=np.int64)
    peaks = np.zeros((N, N))
    for a in range(N):
        for b in range(N):
            d = derivative2(f, a, b)
            dh = dft(d)
            r = int(np.argmax(np.abs(dh.values)))
            peaks[a, b] = abs(dh.values[r])
            if peaks[a, b] >= c1:
                dom[a, b] = True
                vals[a, b] = r
    phi = PartialMap(params, params, dom, vals)
    return u4, phi, peaks


# --- measure U4 for the three acceptance inputs + random ---
q1 = PolyPhase.from_coeffs(P5, {(0, 0, 0): 1, (0, 0): 2, (0,): 1})
f1 = poly_phase_fn(q1)

q2 = PolyPhase.from_coeffs(P52, {(0, 0, 0): 1, (1, 1, 1): 2, (0, 1): 1, (0,): 3})
f2 = poly_phase_fn(q2)

rng = np.random.default_rng(1234)
mask = rng.random(25) < 0.1
vals = poly_phase_fn(q2).values.copy()
vals[mask] = np.exp(2j * np.pi * rng.random(int(mask.sum())))
f3 = GroupFn(P52, vals)
print("corrupted points:", int(mask.sum()), "/ 25")

frand = GroupFn(P52, np.exp(2j * np.pi * np.random.default_rng(77).random(25)))

for name, f in [("exact F5", f1), ("exact F5^2", f2), ("corrupt F5^2", f3), ("random", frand)]:
    t0 = time.time()
    u4, phi, peaks = gate_and_phi(f, c1=0.5)
    print(
        name,
        "U4 %.6f" % u4,
        "density %.4f" % phi.density(),
        "min peak %.4f" % peaks.min(),
        "t %.2fs" % (time.time() - t0),
    )

# --- phi correctness for exact cubic: phi(a,b) should be bilinear 6*sigma(a,b,.) ---
u4, phi2, _ = gate_and_phi(f2, 0.5)
# expected: q2 cubic part C(x)=x0^3+2x1^3; sigma_q(a,b,c): diagonal sum a0b0c0 + 2a1b1c1
# L(a,b) = 6 sigma(a,b,.) -> L_c = 6*[a0b0, 2*a1b1] = [a0b0, 2*a1b1] mod 5
dig = P52.digits(np.arange(25, dtype=np.int64))
ok = True
for a in range(25):
    for b in range(25):
        da, db = dig[a], dig[b]
        want = np.array([da[0] * db[0] % 5, 2 * da[1] * db[1] % 5], dtype=np.int64) * 6 % 5
        got = P52.digits(int(phi2.values[a, b]))
        if not np.array_equal(want, got):
            ok = False
print("phi == 6*sigma bilinear map (exact):", ok)

u4c, phi3, _ = gate_and_phi(f3, 0.5)
bad = 0
for a in range(25):
    for b in range(25):
        da, db = dig[a], dig[b]
        want = np.array([da[0] * db[0] % 5, 2 * da[1] * db[1] % 5], dtype=np.int64) * 6 % 5
        if phi3.domain[a, b] and not np.array_equal(want, P52.digits(int(phi3.values[a, b]))):
            bad += 1
print("corrupt: wrong peaks", bad, "of", int(phi3.domain.sum()))

# --- stage 2 on exact F5^2 ---
t0 = time.time()
phi_f = row_freiman_filter(phi2)
print("row filter kept", phi_f.density(), "t %.2f" % (time.time() - t0))
t0 = time.time()
phi_d, drep = densify(phi_f, eta_target=0.05, seed=0, samples=20000)
print("densify k", drep.k, "kept", drep.kept_points, "criterion %.4f" % drep.criterion, "t %.2f" % (time.time() - t0))

# --- stage 3 ---
t0 = time.time()
eta_m = bihom_defect(phi_d.to_dist_fn(), phi_d.indicator())
print("bihom defect %.6g t %.2f" % (eta_m, time.time() - t0))

# --- stage 4 ---
t0 = time.time()
beta, brep = bogolyubov_bilinear(phi_d.indicator(), 0.15)
print("bog k", brep.k, "m", brep.m, "error %.6g" % brep.error, "t %.2f" % (time.time() - t0))

# --- stage 5 ---
t = max(3 * beta.k + 2, 7)
t0 = time.time()
dec = bohr_decompose(beta, t)
xl, yl, zt = dec.cell_tables()
print("bohr t", t, "X0 dim", dec.X0.dim, "Y0 dim", dec.Y0.dim, "peeled", len(dec.peeled), "t %.2f" % (time.time() - t0))
# cells on the domain
from collections import Counter

cells = Counter()
tot = Counter()
for a in range(25):
    for b in range(25):
        key = (int(xl[a]), int(yl[b]), int(zt[a, b]))
        tot[key] += 1
        if phi_d.domain[a, b]:
            cells[key] += 1
dens = {k: cells[k] / tot[k] for k in tot}
best = max(sorted(dens), key=lambda k: dens[k])
print("cells:", len(tot), "best cell", best, "density %.4f" % dens[best], "size", tot[best])
