"""Exhaustive lattice counts for the resonance sets on dyadic annuli.

Membership ``k ~ N`` means k lies in the sharp shell kept by P_N
(|k| <= 1 for N = 1, N/2 < |k| <= N otherwise); with ``ball=True`` the whole
disc |k| <= N is used instead.

Counts for every value of the quadratic constraint are produced at once as a
histogram over kappa, so a sup over kappa is a max over that histogram.
"""

from __future__ import annotations

import functools
import itertools
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .spectral import check_dyadic

__all__ = [
    "ResourceGuardError",
    "CountingQuery",
    "annulus_points",
    "count_S_histogram",
    "enumerate_S",
    "sup_count_S",
    "count_E_histogram",
    "enumerate_E",
    "enumerate_E_bruteforce",
    "fit_exponent",
    "MAX_SHELL",
    "MAX_SEARCH",
]

MAX_SHELL = 64
MAX_SEARCH = 10 ** 9


class ResourceGuardError(RuntimeError):
    """Raised when an enumeration would exceed the configured search budget."""


@functools.lru_cache(maxsize=64)
def annulus_points(N: int, ball: bool = False) -> np.ndarray:
    """Integer points of the P_N shell (or of the disc |k| <= N), shape (P, 2)."""
    check_dyadic(N)
    r = np.arange(-N, N + 1)
    a, b = np.meshgrid(r, r, indexing="ij")
    r2 = a ** 2 + b ** 2
    if ball or N == 1:
        keep = r2 <= N * N
    else:
        keep = (4 * r2 > N * N) & (r2 <= N * N)
    pts = np.stack([a[keep], b[keep]], axis=1)
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True)
class CountingQuery:
    m: tuple[int, int]
    shells: tuple[int, ...]
    signs: tuple[int, ...]
    kappa: int | None = None
    cyclic: bool = True
    ball: bool = False

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(x) for x in self.m))
        object.__setattr__(self, "shells", tuple(int(x) for x in self.shells))
        object.__setattr__(self, "signs", tuple(int(x) for x in self.signs))
        if not self.shells:
            raise ValueError("shells must be nonempty")
        if len(self.signs) != len(self.shells):
            raise ValueError("one sign per shell is required")
        if any(x not in (1, -1) for x in self.signs):
            raise ValueError("signs must be +1 or -1")
        for N in self.shells:
            check_dyadic(N)


def _check_S(q: CountingQuery):
    if len(q.shells) != 3:
        raise ValueError("the S count needs exactly three shells")
    big = max(q.shells)
    if big > MAX_SHELL:
        pts = [len(annulus_points(min(N, MAX_SHELL), q.ball)) for N in q.shells]
        est = (big / MAX_SHELL) ** 4 * pts[0] * pts[1]
        raise ResourceGuardError(
            f"shell {big} exceeds the limit {MAX_SHELL}; roughly {est:.3g} pair evaluations would be needed")


def count_S_histogram(q: CountingQuery) -> Counter:
    """kappa -> #{(k1, k2, k3)} for the linear constraint sum s_j k_j = m, pairings excluded.

    The pairing hyperplanes are k_j = +-k_{j+1} for j = 1, 2 and, when
    ``cyclic``, also k_3 = +-k_1.
    """
    _check_S(q)
    A1, A2, A3 = (annulus_points(N, q.ball) for N in q.shells)
    s1, s2, s3 = q.signs
    N3 = q.shells[2]
    lookup = np.zeros((2 * N3 + 1, 2 * N3 + 1), dtype=bool)
    lookup[A3[:, 0] + N3, A3[:, 1] + N3] = True
    m = np.asarray(q.m)
    q2 = (A2 ** 2).sum(axis=1)
    hist: Counter = Counter()
    for k1 in A1:
        k3 = s3 * (m - s1 * k1 - s2 * A2)
        ok = (np.abs(k3) <= N3).all(axis=1)
        idx = np.where(ok)[0]
        k3 = k3[idx]
        ok = lookup[k3[:, 0] + N3, k3[:, 1] + N3]
        idx, k3 = idx[ok], k3[ok]
        k2 = A2[idx]
        bad = _paired(k1[None, :], k2) | _paired(k2, k3)
        if q.cyclic:
            bad |= _paired(k3, k1[None, :])
        idx, k3 = idx[~bad], k3[~bad]
        kap = s1 * int(k1 @ k1) + s2 * q2[idx] + s3 * (k3 ** 2).sum(axis=1)
        vals, cnt = np.unique(kap, return_counts=True)
        for v, c in zip(vals.tolist(), cnt.tolist()):
            hist[v] += c
    return hist


def _paired(a, b):
    return (a == b).all(axis=-1) | (a == -b).all(axis=-1)


def enumerate_S(q: CountingQuery) -> int:
    """|S_{m,kappa}(N1, N2, N3)| for the query's kappa."""
    if q.kappa is None:
        raise ValueError("query has no kappa; use count_S_histogram for all values")
    return count_S_histogram(q).get(int(q.kappa), 0)


def sup_count_S(shells, signs, ms, cyclic: bool = True, ball: bool = False) -> tuple[int, tuple, int]:
    """Max over m in ``ms`` and over kappa; returns (count, m, kappa)."""
    best = (0, None, None)
    for m in ms:
        h = count_S_histogram(CountingQuery(tuple(m), tuple(shells), tuple(signs), cyclic=cyclic, ball=ball))
        if h:
            kap, c = max(h.items(), key=lambda kv: (kv[1], -abs(kv[0])))
            if c > best[0]:
                best = (c, tuple(m), kap)
    return best


# the E set ---------------------------------------------------------------------

def _E_setup(shells):
    shells = tuple(int(x) for x in shells)
    if len(shells) < 2 or len(shells) % 2:
        raise ValueError("the E count needs 2k+2 shells: N_1..N_{k+1} then M_1..M_{k+1}")
    for N in shells:
        check_dyadic(N)
    half = len(shells) // 2
    quad = [1] * half + [-1] * half
    # top two by shell size; ties broken by index
    order = sorted(range(len(shells)), key=lambda j: (-shells[j], j))
    return shells, quad, order[0], order[1]


def _search_size(shells, skip, ball):
    size = 1
    for j, N in enumerate(shells):
        if j != skip:
            size *= len(annulus_points(N, ball))
    return size


def count_E_histogram(shells, ball: bool = False, max_search: int = MAX_SEARCH) -> Counter:
    """kappa -> |E_kappa| over frequencies n_j ~ N_j (j <= k+1) and m_j ~ M_j.

    Constraints: sum n_j + sum m_j = 0 and sum |n_j|^2 - sum |m_j|^2 = kappa,
    with n_(1) +- n_(2) != 0 for the two frequencies on the largest shells.
    n_(1) is solved from the linear constraint; the rest of the frequencies
    are folded into a histogram of (partial sum, partial quadratic form).
    """
    shells, quad, top, second = _E_setup(shells)
    size = _search_size(shells, top, ball)
    if size > max_search:
        raise ResourceGuardError(f"search space of {size:.3g} points exceeds the guard {max_search:.3g}")
    rest = [j for j in range(len(shells)) if j not in (top, second)]
    # histogram over the remaining frequencies: key (sx, sy, q) -> count
    acc: Counter = Counter({(0, 0, 0): 1})
    for j in rest:
        pts = annulus_points(shells[j], ball)
        qq = quad[j] * (pts ** 2).sum(axis=1)
        nxt: Counter = Counter()
        for (sx, sy, sq), c in acc.items():
            for (px, py), pq in zip(pts.tolist(), qq.tolist()):
                nxt[(sx + px, sy + py, sq + pq)] += c
        acc = nxt
    keys = np.array(list(acc.keys()), dtype=np.int64).reshape(-1, 3)
    mult = np.array(list(acc.values()), dtype=np.int64)
    Ntop = shells[top]
    lookup = np.zeros((2 * Ntop + 1, 2 * Ntop + 1), dtype=bool)
    Ptop = annulus_points(Ntop, ball)
    lookup[Ptop[:, 0] + Ntop, Ptop[:, 1] + Ntop] = True
    hist: Counter = Counter()
    for n2 in annulus_points(shells[second], ball):
        n1 = -(keys[:, :2] + n2)
        ok = (np.abs(n1) <= Ntop).all(axis=1)
        ok[ok] = lookup[n1[ok, 0] + Ntop, n1[ok, 1] + Ntop]
        ok &= ~_paired(n1, n2[None, :])
        if not ok.any():
            continue
        kap = keys[ok, 2] + quad[second] * int(n2 @ n2) + quad[top] * (n1[ok] ** 2).sum(axis=1)
        w = mult[ok]
        vals, inv = np.unique(kap, return_inverse=True)
        sums = np.bincount(inv, weights=w).astype(np.int64)
        for v, c in zip(vals.tolist(), sums.tolist()):
            hist[v] += c
    return hist


def enumerate_E(kappa: int, shells, ball: bool = False, max_search: int = MAX_SEARCH) -> int:
    return count_E_histogram(shells, ball, max_search).get(int(kappa), 0)


def enumerate_E_bruteforce(kappa: int | None, shells, ball: bool = False, max_search: int = 10 ** 8):
    """Second implementation: direct search over every frequency except the last one.

    The last frequency is fixed by the linear constraint.  The innermost
    loop is vectorized over the second-to-last shell.  With ``kappa=None``
    the whole histogram is returned.
    """
    shells, quad, top, second = _E_setup(shells)
    last = len(shells) - 1
    size = _search_size(shells, last, ball)
    if size > max_search:
        raise ResourceGuardError(f"search space of {size:.3g} points exceeds the guard {max_search:.3g}")
    pts = [annulus_points(N, ball) for N in shells]
    NL = shells[last]
    member = np.zeros((2 * NL + 1, 2 * NL + 1), dtype=bool)
    member[pts[last][:, 0] + NL, pts[last][:, 1] + NL] = True
    inner = pts[last - 1]
    inner_q = quad[last - 1] * (inner ** 2).sum(axis=1)
    hist: Counter = Counter()
    for combo in itertools.product(*(p.tolist() for p in pts[:last - 1])):
        sx = sum(v[0] for v in combo)
        sy = sum(v[1] for v in combo)
        sq = sum(qs * (v[0] ** 2 + v[1] ** 2) for qs, v in zip(quad, combo))
        x = -(sx + inner[:, 0])
        y = -(sy + inner[:, 1])
        ok = (np.abs(x) <= NL) & (np.abs(y) <= NL)
        ok[ok] = member[x[ok] + NL, y[ok] + NL]
        if not ok.any():
            continue
        vx = np.empty((len(shells), int(ok.sum())), dtype=np.int64)
        vy = np.empty_like(vx)
        for j, v in enumerate(combo):
            vx[j], vy[j] = v[0], v[1]
        vx[last - 1], vy[last - 1] = inner[ok, 0], inner[ok, 1]
        vx[last], vy[last] = x[ok], y[ok]
        same = (vx[top] == vx[second]) & (vy[top] == vy[second])
        opposite = (vx[top] == -vx[second]) & (vy[top] == -vy[second])
        keep = ~(same | opposite)
        kap = sq + inner_q[ok] + quad[last] * (x[ok] ** 2 + y[ok] ** 2)
        hist.update(kap[keep].tolist())
    if kappa is None:
        return hist
    return hist.get(int(kappa), 0)


def fit_exponent(xs, ys) -> float:
    """Least-squares slope of log(ys) against log(xs)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(ys <= 0):
        raise ValueError("counts must be positive to fit a power law")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
