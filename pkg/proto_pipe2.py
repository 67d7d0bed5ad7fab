"""Prototype stages 6-11 with the fit helpers destined for the cli module."""
import time
from collections import Counter

import numpy as np

from ulab.core import (
    GroupFn,
    GroupParams,
    PolyPhase,
    correlation,
    dft,
    gf_rowreduce,
    gf_solve,
    poly_phase_fn,
)
from ulab.gowers import derivative2, uk_norm
from ulab.grid import GridFn
from ulab.trilinear import TrilinearForm, kappa_from_sigma, symmetry_pipeline, u3_lower
from ulab.trilinear import quad_phase_search

P5 = GroupParams(5, 1)
P52 = GroupParams(5, 2)


def stage1(f, c1):
    params = f.params
    N = params.size
    dom = np.zeros((N, N), dtype=bool)
    vals = np.zeros((N, N), dtype=np.int64)
    for a in range(N):
        for b in range(N):
            dh = dft(derivative2(f, a, b))
            r = int(np.argmax(np.abs(dh.values)))
            if abs(dh.values[r]) >= c1:
                dom[a, b] = True
                vals[a, b] = r
    return dom, vals


def fit_biaffine(params, dom, vals):
    """Exact F_p fit of vals[a,b] ~ a.T_c b + s_c.a + t_c.b + e_c per coord."""
    p, n, N = params.p, params.n, params.size
    xs, ys = np.nonzero(dom)
    da = params.digits(xs.astype(np.int64))
    db = params.digits(ys.astype(np.int64))
    # design rows: outer(da, db) flattened, da, db, 1
    rows = np.concatenate(
        [np.einsum("mi,mj->mij", da, db).reshape(len(xs), n * n), da, db, np.ones((len(xs), 1), dtype=np.int64)],
        axis=1,
    ) % p
    targets = params.digits(vals[xs, ys])  # (m, n)
    d = rows.shape[1]
    # deterministically select a maximal independent row subset (lex order)
    keep = []
    cur = np.zeros((0, d), dtype=np.int64)
    rank = 0
    for i in range(len(rows)):
        trial = np.concatenate([cur, rows[i : i + 1]], axis=0)
        r, _ = gf_rowreduce(p, trial)
        rr = int((r.any(axis=1)).sum())
        if rr > rank:
            keep.append(i)
            cur = trial
            rank = rr
        if rank == d:
            break
    A = rows[keep]
    sol = np.zeros((n, d), dtype=np.int64)  # per output coordinate
    for c in range(n):
        sol[c] = gf_solve(p, A, targets[keep][:, c])
    T = sol[:, : n * n].reshape(n, n, n)  # T[c] is (n, n)
    s = sol[:, n * n : n * n + n]
    t = sol[:, n * n + n : n * n + 2 * n]
    e = sol[:, -1]
    # agreement over all data
    pred = (
        np.einsum("mi,cij,mj->mc", da, T, db) + da @ s.T + db @ t.T + e[None, :]
    ) % p
    agree = float(np.mean(np.all(pred == targets, axis=1)))
    return T, s, t, e, agree


def psi_table(params, T, s, t, e):
    N, n, p = params.size, params.n, params.p
    dig = params.digits(np.arange(N, dtype=np.int64))
    out = (
        np.einsum("ai,cij,bj->abc", dig, T, dig)
        + (dig @ s.T)[:, None, :]
        + (dig @ t.T)[None, :, :]
        + e[None, None, :]
    ) % p
    return out  # (N, N, n) digits


def check_affine_each_var(params, table):
    """Exhaustive second-difference constancy along both variables."""
    p = params.p
    N = params.size
    idx = np.arange(N, dtype=np.int64)
    add = params.add(idx[:, None], idx[None, :])
    for h in range(N):
        dif = (table[:, add[:, h], :] - table) % p  # rows: vary b
        if not np.all(dif == dif[:, :1, :]):
            return False
        difc = (table[add[:, h], :, :] - table) % p
        if not np.all(difc == difc[:1, :, :]):
            return False
    return True


def exhaustive_affine(params, xs_idx, data_digits):
    """Best affine map x -> Mx+u (per-coordinate exhaustive), lex-first tie."""
    p, n = params.p, params.n
    dx = params.digits(np.asarray(xs_idx, dtype=np.int64))
    m = len(xs_idx)
    cand = np.array(np.meshgrid(*([np.arange(p)] * (n + 1)), indexing="ij")).reshape(n + 1, -1).T
    # candidate row: (u, m_0..m_{n-1}) -- put u first for lex (prefer small shift)? choose (m,u) lex: build as rows of [m..., u]
    cand = np.array([list(row[:n]) + [row[n]] for row in cand], dtype=np.int64)
    M = np.zeros((n, n), dtype=np.int64)
    u = np.zeros(n, dtype=np.int64)
    for c in range(n):
        pred = (dx @ cand[:, :n].T + cand[:, n][None, :]) % p  # (m, C)
        hits = (pred == data_digits[:, c : c + 1]).sum(axis=0)
        best = int(np.argmax(hits))  # argmax returns first max -> lex-first
        M[c] = cand[best, :n]
        u[c] = cand[best, n]
    predfull = (dx @ M.T + u[None, :]) % p
    agree = float(np.mean(np.all(predfull == data_digits, axis=1))) if m else 1.0
    return M, u, agree


def run_tail(f, name):
    params = f.params
    p, n, N = params.p, params.n, params.size
    print("=== %s ===" % name)
    dom, vals = stage1(f, 0.35)
    print("density", dom.mean())
    t0 = time.time()
    T, s, t, e, agree = fit_biaffine(params, dom, vals)
    print("fit agree %.4f" % agree, "s,t,e nonzero:", s.any(), t.any(), e.any(), "t %.2f" % (time.time() - t0))
    tab = psi_table(params, T, s, t, e)
    print("affine-in-each-var:", check_affine_each_var(params, tab))
    # stage 8: residuals vs bilinear-only part
    dig = params.digits(np.arange(N, dtype=np.int64))
    gamma = np.einsum("ai,cij,bj->abc", dig, T, dig) % p
    xs, ys = np.nonzero(dom)
    resid = (params.digits(vals[xs, ys]) - gamma[xs, ys]) % p
    # theta from reference column, lambda by majority
    theta_data = {}
    lam_data = {}
    b0 = int(ys[0])
    for a, b, r in zip(xs, ys, resid):
        if b == b0:
            theta_data[int(a)] = tuple(r)
    for a, b, r in zip(xs, ys, resid):
        if int(a) in theta_data:
            off = tuple((r - np.array(theta_data[int(a)])) % p)
            lam_data.setdefault(int(b), Counter())[off] += 1
    lam = {b: np.array(max(sorted(c), key=lambda k: c[k]), dtype=np.int64) for b, c in lam_data.items()}
    for a, b, r in zip(xs, ys, resid):
        if int(a) not in theta_data and int(b) in lam:
            theta_data[int(a)] = tuple((r - lam[int(b)]) % p)
    Mth, uth, ath = exhaustive_affine(params, sorted(theta_data), np.array([theta_data[a] for a in sorted(theta_data)]))
    Mlm, ulm, alm = exhaustive_affine(params, sorted(lam), np.array([lam[b] for b in sorted(lam)]))
    print("theta affine agree %.3f" % ath, "lambda %.3f" % alm, "maps zero:", not Mth.any() and not uth.any() and not Mlm.any() and not ulm.any())
    # backtophi agreement
    pred = (gamma[xs, ys] + (params.digits(np.asarray(sorted(theta_data), dtype=np.int64)) @ 0 if False else 0))  # noqa
    th_tab = (dig @ Mth.T + uth[None, :]) % p
    lm_tab = (dig @ Mlm.T + ulm[None, :]) % p
    full = (gamma + th_tab[:, None, :] + lm_tab[None, :, :]) % p
    back = float(np.mean(np.all(full[xs, ys] == params.digits(vals[xs, ys]), axis=1)))
    print("backtophi agreement %.4f" % back)
    # stage 9
    tau = TrilinearForm.from_component_mats(params, T)
    t0 = time.time()
    sigma, rep = symmetry_pipeline(f, tau, (Mth, uth), (Mlm, ulm))
    print("alpha9 %.6f residual %.6g asserted %s t %.2f" % (rep.alpha, rep.residual_rank, rep.asserted, time.time() - t0))
    # stage 10
    kap0, cstar = kappa_from_sigma(sigma)
    mscale = (-pow(cstar, p - 2, p)) % p
    kap = PolyPhase.from_coeffs(params, {mono: coef * mscale % p for mono, coef in kap0.terms})
    g = GroupFn(params, f.values * np.exp(-2j * np.pi * kap.phase_table() / p))
    # h-grids: u=1, v = omega^{b.(-Mlm^T).c + (-(uth+ulm)).c}, w = omega^{a.(-Mth^T).c}
    BC = (-Mlm.T) % p
    AC = (-Mth.T) % p
    lc = (-(uth + ulm)) % p
    expo_v = (np.einsum("bi,ij,cj->bc", dig, BC, dig) + dig @ lc) % p
    expo_w = np.einsum("ai,ij,cj->ac", dig, AC, dig) % p
    vgrid = GridFn(params, np.exp(2j * np.pi * expo_v / p))
    wgrid = GridFn(params, np.exp(2j * np.pi * expo_w / p))
    ugrid = GridFn.constant(params, 1.0)
    alpha10, norm3 = u3_lower(g, ugrid, vgrid, wgrid)
    print("alpha10 %.6f u3 norm %.6f >= alpha9: %s" % (alpha10, norm3, norm3 >= rep.alpha - 1e-9))
    # stage 11
    qq, cq = quad_phase_search(g)
    total = dict(kap.terms)
    for mono, coef in qq.terms:
        total[mono] = (total.get(mono, 0) + coef) % p
    final = PolyPhase.from_coeffs(params, total)
    fc = abs(correlation(f, final))
    print("quad corr %.4f final |corr| %.6f terms %s" % (cq, fc, final.terms))
    return fc


q1 = PolyPhase.from_coeffs(P5, {(0, 0, 0): 1, (0, 0): 2, (0,): 1})
f1 = poly_phase_fn(q1)
run_tail(f1, "exact F5 x^3+2x^2+x")

q2 = PolyPhase.from_coeffs(P52, {(0, 0, 0): 1, (1, 1, 1): 2, (0, 1): 1, (0,): 3})
f2 = poly_phase_fn(q2)
run_tail(f2, "exact F5^2")

rng = np.random.default_rng(1234)
mask = rng.random(25) < 0.1
vals = poly_phase_fn(q2).values.copy()
vals[mask] = np.exp(2j * np.pi * rng.random(int(mask.sum())))
f3 = GroupFn(P52, vals)
run_tail(f3, "corrupt F5^2")
