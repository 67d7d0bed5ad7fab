"""Arrangement counting, respect statistics, sign-pattern uniqueness, and
dependent-random-selection densification.

A 4-arrangement in G^2 is the 8-point configuration generated by the
parameters (x1, x2, w, y1, y1', y2, y2', h); a partial map respects it when
all 8 points lie in its domain and the Morse-signed value sum vanishes.
Second-order arrangements repeat the construction inside each of the 8
slots, giving 32 points signed by the length-32 Morse prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ulab.core import GroupParams
from ulab.galg import DistFn, grid_inner_dist, mixed_conv_dist
from ulab.grid import MORSE8, MORSE32, GridFn, arr_functional, sample_arrangement_points

__all__ = [
    "PartialMap",
    "ArrangementStats",
    "DensifyReport",
    "respect_stats",
    "morse_sign_scan",
    "rare_zero_fraction",
    "densify",
    "row_freiman_filter",
    "partial_map_to_json",
    "partial_map_from_json",
]

_MC_BLOCK = 8192
_EXACT_CAP = 9


@dataclass(frozen=True)
class PartialMap:
    """A map defined on a subset of G^2 with values in a target group."""

    params: GroupParams
    value_params: GroupParams
    domain: np.ndarray  # bool (N, N)
    values: np.ndarray  # int64 (N, N), meaningful only where domain holds

    def __post_init__(self) -> None:
        N = self.params.size
        if self.domain.shape != (N, N) or self.values.shape != (N, N):
            raise ValueError("domain and values must both have shape (N, N)")

    @classmethod
    def from_points(
        cls,
        params: GroupParams,
        value_params: GroupParams,
        points: dict[tuple[int, int], int],
    ) -> "PartialMap":
        N = params.size
        dom = np.zeros((N, N), dtype=bool)
        vals = np.zeros((N, N), dtype=np.int64)
        for (x, y), g in points.items():
            dom[x, y] = True
            vals[x, y] = int(g) % value_params.size
        return cls(params, value_params, dom, vals)

    def density(self) -> float:
        return float(self.domain.mean())

    def restrict(self, mask: np.ndarray) -> "PartialMap":
        return PartialMap(self.params, self.value_params, self.domain & mask, self.values)

    def indicator(self) -> GridFn:
        return GridFn.from_mask(self.params, self.domain)

    def to_dist_fn(self) -> DistFn:
        pts = {
            (int(x), int(y)): int(self.values[x, y])
            for x, y in zip(*np.nonzero(self.domain))
        }
        return DistFn.from_point_map(self.params, self.value_params, pts)


@dataclass(frozen=True)
class ArrangementStats:
    total: float
    respected: float
    order: int
    stderr: float
    mode: str
    samples: int = 0

    def __post_init__(self) -> None:
        if self.respected > self.total + 1e-9:
            raise ValueError("respected exceeds total")

    @property
    def ratio(self) -> float:
        return self.respected / self.total if self.total > 0 else 0.0


def _signed_value_sum(phi: PartialMap, px: np.ndarray, py: np.ndarray, signs) -> np.ndarray:
    """Morse-signed sum of phi values at the given points, in the value group."""
    vp = phi.value_params
    acc = np.zeros(px.shape[0], dtype=np.int64)
    for j, s in enumerate(signs):
        v = phi.values[px[:, j], py[:, j]]
        acc = vp.add(acc, v) if s > 0 else vp.sub(acc, v)
    return acc


def _mc_respect(
    phi: PartialMap, order: int, samples: int, seed: int
) -> tuple[float, float, float]:
    """Returns (total_ratio, respected_ratio, stderr of respected_ratio)."""
    params = phi.params
    signs = MORSE8 if order == 1 else MORSE32
    done = 0
    tot_sum = 0.0
    resp_sum = 0.0
    resp_sq = 0.0
    block = 0
    while done < samples:
        m = min(_MC_BLOCK, samples - done)
        rng = np.random.default_rng(np.random.SeedSequence([seed, block]))
        pts = sample_arrangement_points(params, order, m, rng)
        px, py = pts[:, :, 0], pts[:, :, 1]
        inside = phi.domain[px, py].all(axis=1)
        zero = _signed_value_sum(phi, px, py, signs) == 0
        resp = (inside & zero).astype(np.float64)
        tot_sum += float(inside.sum())
        resp_sum += float(resp.sum())
        resp_sq += float((resp**2).sum())
        done += m
        block += 1
    tot_ratio = tot_sum / samples
    resp_ratio = resp_sum / samples
    var = max(resp_sq / samples - resp_ratio**2, 0.0)
    return tot_ratio, resp_ratio, float(np.sqrt(var / samples))


def respect_stats(
    phi: PartialMap,
    order: int = 1,
    mode: str = "exact",
    samples: int = 100_000,
    seed: int = 0,
) -> ArrangementStats:
    """Count (or estimate) the 4-arrangements inside the domain and the
    respected ones among them.

    Exact mode evaluates respected / |G|^8 = |mixed_conv(1_A phi)|_2^2 with
    algebra-valued convolutions, so it is limited to order 1 and |G| <= 9.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    params = phi.params
    N = params.size
    if mode == "exact":
        if order != 1:
            raise ValueError("exact mode supports order 1 only")
        if N > _EXACT_CAP:
            raise ValueError("exact mode limited to |G| <= %d" % _EXACT_CAP)
        total_ratio = arr_functional(phi.indicator())
        F = phi.to_dist_fn()
        M = mixed_conv_dist(F, F, F, F)
        resp_ratio = grid_inner_dist(M, M)
        scale = float(N) ** 8
        total = round(total_ratio * scale)
        resp = round(resp_ratio * scale)
        if abs(total - total_ratio * scale) > 1e-6 * scale or abs(
            resp - resp_ratio * scale
        ) > 1e-6 * scale:
            raise ArithmeticError("exact arrangement count did not round cleanly")
        return ArrangementStats(float(total), float(resp), 1, 0.0, "exact")
    if mode == "mc":
        tot_ratio, resp_ratio, se = _mc_respect(phi, order, samples, seed)
        # 8 free parameters at order 1; 8 outer + 24 inner at order 2.
        scale = float(N) ** (8 if order == 1 else 32)
        return ArrangementStats(
            tot_ratio * scale, resp_ratio * scale, order, se * scale, "mc", samples
        )
    raise ValueError("mode must be 'exact' or 'mc'")


# ============================================================
# sign-pattern uniqueness
# ============================================================


def _order1_sign_matrix() -> np.ndarray:
    """Integer matrix whose kernel consists of the sign patterns eps for which
    sum_i eps_i a_i (x) b_i vanishes for every 4-arrangement.

    The 8 points have first coordinates that are +-1 combinations of
    (x1, x2, w) and second coordinates that are combinations of
    (y1, y1', y2, y2', h); the tensor sum vanishes identically over every
    prime field iff each of the 15 parameter-pair coefficients is zero in Z.
    """
    acoef = [
        (1, 0, 0),
        (1, 0, 0),
        (1, 0, -1),
        (1, 0, -1),
        (0, 1, 0),
        (0, 1, 0),
        (0, 1, -1),
        (0, 1, -1),
    ]
    bcoef = [
        (1, 0, 0, 0, 0),
        (1, 0, 0, 0, -1),
        (0, 1, 0, 0, 0),
        (0, 1, 0, 0, -1),
        (0, 0, 1, 0, 0),
        (0, 0, 1, 0, -1),
        (0, 0, 0, 1, 0),
        (0, 0, 0, 1, -1),
    ]
    rows = []
    for s in range(3):
        for t in range(5):
            rows.append([acoef[i][s] * bcoef[i][t] for i in range(8)])
    return np.array(rows, dtype=np.int64)


def morse_sign_scan(order1_only: bool = True) -> list[np.ndarray]:
    """All patterns eps in {-1,0,1}^8 making the signed tensor sum vanish on
    every 4-arrangement; returns exactly the zero pattern and +-Morse8."""
    if not order1_only:
        raise ValueError("the 3^32 second-order scan is infeasible; "
                         "test specific patterns with rare_zero_fraction")
    M = _order1_sign_matrix()
    grids = np.indices((3,) * 8).reshape(8, -1).T - 1  # all of {-1,0,1}^8
    admissible = np.all(grids @ M.T == 0, axis=1)
    return [grids[i].copy() for i in np.nonzero(admissible)[0]]


def rare_zero_fraction(
    params: GroupParams, eps, samples: int = 100_000, seed: int = 0
) -> tuple[float, float]:
    """Fraction of second-order arrangements whose eps-signed tensor sum
    vanishes, with its standard error.  eps must not be a Morse multiple
    (those vanish identically)."""
    e = np.asarray(eps, dtype=np.int64)
    if e.shape != (32,):
        raise ValueError("eps must have length 32")
    if not e.any():
        raise ValueError("eps = 0 vanishes identically; excluded")
    if np.array_equal(e, MORSE32) or np.array_equal(e, -MORSE32):
        raise ValueError("Morse multiples vanish identically; excluded")
    p, n = params.p, params.n
    done = 0
    zero_sum = 0.0
    zero_sq = 0.0
    block = 0
    while done < samples:
        m = min(_MC_BLOCK, samples - done)
        rng = np.random.default_rng(np.random.SeedSequence([seed, block]))
        pts = sample_arrangement_points(params, 2, m, rng)
        acc = np.zeros((m, n, n), dtype=np.int64)
        for j in range(32):
            if e[j] == 0:
                continue
            da = params.digits(pts[:, j, 0])
            db = params.digits(pts[:, j, 1])
            acc += int(e[j]) * np.einsum("ms,mt->mst", da, db)
        hit = (acc % p == 0).all(axis=(1, 2)).astype(np.float64)
        zero_sum += float(hit.sum())
        zero_sq += float((hit**2).sum())
        done += m
        block += 1
    frac = zero_sum / samples
    var = max(zero_sq / samples - frac**2, 0.0)
    return frac, float(np.sqrt(var / samples))


# ============================================================
# densification by dependent random selection
# ============================================================


@dataclass(frozen=True)
class DensifyReport:
    k: int
    retries_used: int
    criterion: float  # respected_ratio - eta^{-1} violated_ratio at the winner
    stats: ArrangementStats
    reference_k: int
    kept_points: int
    attempts: list = field(default_factory=list)


def _riesz_select(
    phi: PartialMap, k: int, rng: np.random.Generator
) -> np.ndarray:
    """One dependent random selection: keep (x,y) with probability
    2^{-k} prod_i (1 + cos(2 pi / p (s_i . phi(x,y) + x . M_i y)))."""
    params, vp = phi.params, phi.value_params
    p = params.p
    N = params.size
    xs, ys = np.nonzero(phi.domain)
    if k == 0:
        return phi.domain.copy()
    prob = np.ones(len(xs))
    dx = params.digits(xs.astype(np.int64))
    dy = params.digits(ys.astype(np.int64))
    vals = phi.values[xs, ys]
    for _ in range(k):
        s = int(rng.integers(vp.size))
        M = rng.integers(0, p, size=(params.n, params.n))
        lin = vp.dot(np.full(len(xs), s, dtype=np.int64), vals)
        bil = np.einsum("ms,st,mt->m", dx, M, dy) % p
        theta = 2 * np.pi * ((lin + bil) % p) / p
        prob *= (1 + np.cos(theta)) / 2
    keep = rng.random(len(xs)) < prob
    mask = np.zeros_like(phi.domain)
    mask[xs[keep], ys[keep]] = True
    return mask


def densify(
    phi: PartialMap,
    eta_target: float,
    seed: int = 0,
    k: int | None = None,
    retries: int = 6,
    samples: int = 20_000,
    k_max: int = 6,
) -> tuple[PartialMap, DensifyReport]:
    """Dependent random selection towards a subset whose second-order respect
    ratio beats the X - eta^{-1} Y criterion.

    With k unset, tries k = 0, 1, ... and stops at the first k whose best
    attempt meets the criterion; otherwise uses the given k.  The winning
    attempt overall is returned even if no attempt meets the criterion, but
    an all-empty outcome raises with diagnostics.
    """
    if eta_target <= 0:
        raise ValueError("eta_target must be positive")
    if phi.value_params.p != phi.params.p:
        raise ValueError("selection phases need matching characteristic on both groups")
    inv_eta = 1.0 / eta_target
    delta = max(phi.density(), 1.0 / phi.params.size ** 2)
    reference_k = int(np.ceil(2**32 * (np.log(1 / eta_target) + np.log(1 / delta))))
    ks = [k] if k is not None else list(range(k_max + 1))
    best = None  # (criterion, resp_ratio, kept, mask, stats, k, attempt)
    attempts = []
    attempt_idx = 0
    for kk in ks:
        for r in range(retries if kk > 0 else 1):
            rng = np.random.default_rng(np.random.SeedSequence([seed, kk, r]))
            mask = _riesz_select(phi, kk, rng)
            kept = int(mask.sum())
            attempt_idx += 1
            if kept == 0:
                attempts.append({"k": kk, "retry": r, "kept": 0, "criterion": None})
                continue
            sub = phi.restrict(mask)
            stats = respect_stats(sub, order=2, mode="mc", samples=samples, seed=seed + attempt_idx)
            scale = float(phi.params.size) ** 32
            x_ratio = stats.respected / scale
            y_ratio = (stats.total - stats.respected) / scale
            crit = x_ratio - inv_eta * y_ratio
            attempts.append({"k": kk, "retry": r, "kept": kept, "criterion": crit})
            # A zero total estimate certifies nothing, so such a candidate
            # never outranks one whose criterion was actually measured.
            measured = stats.total > 0
            key = (
                measured and crit >= 0,
                crit if measured else float("-inf"),
                x_ratio,
                kept,
            )
            cand = (key, crit, mask, stats, kk, r, kept)
            if best is None or cand[0] > best[0]:
                best = cand
        if best is not None and best[0][0]:
            break
    if best is None:
        raise RuntimeError(
            "densify: every selection emptied the domain; attempts: %r" % attempts
        )
    _, crit, mask, stats, kk, r, kept = best
    report = DensifyReport(kk, r + 1, crit, stats, reference_k, kept, attempts)
    return phi.restrict(mask), report


# ============================================================
# per-row Freiman filtering
# ============================================================


def row_freiman_filter(phi: PartialMap) -> PartialMap:
    """Greedy maximal subset of each row on which the row map is a Freiman
    homomorphism.

    Points are visited in index order; a point joins the row if none of the
    pair sums it creates conflicts with an existing pair-sum value.
    """
    params, vp = phi.params, phi.value_params
    N = params.size
    add_d = params.add
    add_v = vp.add
    keep = np.zeros_like(phi.domain)
    for x in range(N):
        ys = np.nonzero(phi.domain[x])[0]
        chosen: list[int] = []
        sums: dict[int, int] = {}
        for y in ys:
            v = int(phi.values[x, y])
            ok = True
            new_entries = []
            for y2 in chosen + [int(y)]:
                key = int(add_d(np.int64(y), np.int64(y2)))
                val = int(add_v(np.int64(v), np.int64(phi.values[x, y2])))
                if key in sums and sums[key] != val:
                    ok = False
                    break
                new_entries.append((key, val))
            if ok:
                chosen.append(int(y))
                for key, val in new_entries:
                    sums[key] = val
                keep[x, y] = True
    return phi.restrict(keep)


# ============================================================
# serialization
# ============================================================


def partial_map_to_json(phi: PartialMap) -> dict:
    pts = [
        {"x": int(x), "y": int(y), "v": int(phi.values[x, y])}
        for x, y in zip(*np.nonzero(phi.domain))
    ]
    pts.sort(key=lambda e: (e["x"], e["y"]))
    return {
        "p": phi.params.p,
        "n": phi.params.n,
        "value_p": phi.value_params.p,
        "value_n": phi.value_params.n,
        "points": pts,
    }


def partial_map_from_json(data: dict) -> PartialMap:
    params = GroupParams(int(data["p"]), int(data["n"]))
    vp = GroupParams(int(data.get("value_p", data["p"])), int(data.get("value_n", data["n"])))
    pts = {(int(e["x"]), int(e["y"])): int(e["v"]) for e in data["points"]}
    return PartialMap.from_points(params, vp, pts)
