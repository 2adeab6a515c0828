"""Samples of the Gaussian measure mu_s and the statistics checked on them.

A sample has coefficients ``g_n / <n>^s`` on |n| <= cutoff, with g_n i.i.d.
complex normals (independent real and imaginary parts of variance 1/2).

Randomness comes from numpy's Philox counter-based generator.  Sample number
``stream`` uses ``SeedSequence(seed, spawn_key=(stream,))``, so every sample is
a pure function of (seed, stream).  Modes are drawn in square-shell order
(max(|n1|, |n2|), then n1, then n2), which makes the P_{<=N} projection of a
sample with a larger cutoff identical to the sample drawn at cutoff N.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .spectral import SpectralField, ball_mask, bracket, check_dyadic, shell_mask, symbol

__all__ = [
    "GaussianSpec",
    "sample",
    "sample_batch",
    "pairing_statistic",
    "conj_product_coefficient",
    "conj_product_variance",
    "conj_variance_bound",
    "covariance_check",
    "pairing_variances",
]


@dataclass(frozen=True)
class GaussianSpec:
    s: float
    cutoff: int
    seed: int = 0

    def __post_init__(self):
        if not self.s > 2:
            raise ValueError(f"s must exceed 2, got {self.s!r}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError(f"cutoff must be a positive integer, got {self.cutoff!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")


@functools.lru_cache(maxsize=32)
def _draw_order(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Box positions (row, col) in square-shell order."""
    r = np.arange(-cutoff, cutoff + 1)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    n1, n2 = n1.ravel(), n2.ravel()
    order = np.lexsort((n2, n1, np.maximum(np.abs(n1), np.abs(n2))))
    return n1[order] + cutoff, n2[order] + cutoff


@functools.lru_cache(maxsize=32)
def _weights(s: float, cutoff: int) -> np.ndarray:
    r = np.arange(-cutoff, cutoff + 1)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    return np.where(ball_mask(n1, n2, cutoff), bracket(n1, n2) ** (-s), 0.0)


def _generator(seed: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def standard_complex_normals(seed: int, stream: int, cutoff: int) -> np.ndarray:
    """The g_n of one sample on the full box, before the ball mask is applied."""
    rows, cols = _draw_order(cutoff)
    z = _generator(seed, stream).standard_normal(2 * rows.size).reshape(-1, 2)
    g = np.empty((2 * cutoff + 1, 2 * cutoff + 1), dtype=complex)
    g[rows, cols] = (z[:, 0] + 1j * z[:, 1]) * np.sqrt(0.5)
    return g


def sample(spec: GaussianSpec, stream: int) -> SpectralField:
    g = standard_complex_normals(spec.seed, stream, spec.cutoff)
    return SpectralField(g * _weights(float(spec.s), spec.cutoff), spec.cutoff)


def sample_batch(spec: GaussianSpec, streams) -> np.ndarray:
    """Stacked coefficient boxes for the given streams, shape (len(streams), side, side)."""
    w = _weights(float(spec.s), spec.cutoff)
    return np.stack([standard_complex_normals(spec.seed, i, spec.cutoff) * w for i in streams])


def pairing_statistic(u: SpectralField | np.ndarray, N: int, j: int, s: float, cutoff: int | None = None):
    """int P_N(d_j u) P_N(D^s ubar) = sum over the P_N shell of i n_j |n|^s |u_hat(n)|^2.

    Accepts a field or a stack of coefficient boxes (then ``cutoff`` is needed).
    """
    check_dyadic(N)
    if j not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    if isinstance(u, SpectralField):
        coeffs, cut = u.coeffs, u.cutoff
    else:
        coeffs, cut = np.asarray(u), int(cutoff)
    r = np.arange(-cut, cut + 1)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    nj = n1 if j == 0 else n2
    w = np.where(shell_mask(n1, n2, N), 1j * nj * symbol("D", n1, n2, s), 0)
    return np.sum(w * np.abs(coeffs) ** 2, axis=(-2, -1))


def conj_product_coefficient(u: SpectralField, N: int, M: int, n: tuple[int, int], s: float) -> complex:
    """Fourier coefficient at n of D^s P_N ubar . D^{s-2} P_M ubar."""
    from .spectral import D, multiply, project

    ub = u.conj()
    prod = multiply(D(project(ub, N), s), D(project(ub, M), s - 2))
    return prod.coefficient(tuple(n))


def conj_product_coefficients(coeffs: np.ndarray, cutoff: int, N: int, M: int, n: tuple[int, int], s: float) -> np.ndarray:
    """Vectorized coefficient at n for a stack of coefficient boxes (direct sum over m)."""
    r = np.arange(-cutoff, cutoff + 1)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    ub = np.conj(coeffs[..., ::-1, ::-1])  # coefficients of ubar
    A = ub * np.where(shell_mask(n1, n2, N), symbol("D", n1, n2, s), 0)
    B = ub * np.where(shell_mask(n1, n2, M), symbol("D", n1, n2, s - 2), 0)
    # sum_m A(m) B(n - m): shift B by n and flip
    out = np.zeros(coeffs.shape[:-2], dtype=complex)
    a, b = n
    for i, j in zip(*np.nonzero(shell_mask(n1, n2, N))):
        m1, m2 = int(n1[i, j]), int(n2[i, j])
        l1, l2 = a - m1, b - m2
        if abs(l1) <= cutoff and abs(l2) <= cutoff:
            out = out + A[..., i, j] * B[..., l1 + cutoff, l2 + cutoff]
    return out


def conj_product_variance(N: int, M: int, n: tuple[int, int], s: float) -> float:
    """Exact E|coefficient|^2 under mu_s by pairing the Gaussian factors (Wick's rule).

    The coefficient is sum_m c_m conj(g_{-m}) conj(g_{m-n}); E[conj(g) conj(g)] = 0,
    so only the two pairings g_{-m} <-> g_{-m'} and g_{-m} <-> g_{m'-n} survive.
    """
    check_dyadic(N)
    check_dyadic(M)
    a, b = n
    R = max(N, M)
    r = np.arange(-R, R + 1)
    n1, n2 = np.meshgrid(r, r, indexing="ij")

    def c(m1, m2):
        l1, l2 = a - m1, b - m2
        if not (shell_mask(m1, m2, N) and shell_mask(l1, l2, M)):
            return 0.0
        return (float(symbol("D", m1, m2, s)) * float(symbol("D", l1, l2, s - 2))
                / (bracket(m1, m2) ** s * bracket(l1, l2) ** s))

    total = 0.0
    for m1, m2 in zip(n1.ravel(), n2.ravel()):
        cm = c(int(m1), int(m2))
        if cm == 0.0:
            continue
        total += cm * cm + cm * c(a - int(m1), b - int(m2))
    return float(total)


def conj_variance_bound(N: int, M: int, n: tuple[int, int], constant: float = 8.0) -> float:
    """constant * min(M^-2, 1_{|n|~N} + <n>^-2 1_{N<<|n|} + N^-2 1_{N>>|n|}).

    |n| ~ N means N/4 <= |n| <= 4N; N << |n| means |n| > 4N; N >> |n| means |n| < N/4.
    """
    r = float(np.hypot(*n))
    if r > 4 * N:
        second = float(bracket(*n)) ** -2
    elif r < N / 4:
        second = float(N) ** -2
    else:
        second = 1.0
    return constant * min(float(M) ** -2, second)


def covariance_check(spec: GaussianSpec, n_samples: int, chunk: int = 2000) -> dict:
    """Per-mode empirical E|u_hat(n)|^2 and E[g_n^2] against <n>^{-2s} and 0.

    z-scores use the exact sampling variances: |g|^2 is Exp(1), so the mean
    of |u_hat|^2 has standard error <n>^{-2s}/sqrt(n); the complex mean of g^2
    has E|g^2|^2 = 2, hence standard error sqrt(2/n) in modulus, sqrt(1/n) per
    real component.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    N = spec.cutoff
    w = _weights(float(spec.s), N)
    sq = np.zeros(w.shape)
    g2 = np.zeros(w.shape, dtype=complex)
    for lo in range(0, n_samples, chunk):
        g = np.stack([standard_complex_normals(spec.seed, i, N) for i in range(lo, min(n_samples, lo + chunk))])
        sq += np.sum(np.abs(g * w) ** 2, axis=0)
        g2 += np.sum(g * g, axis=0)
    keep = w > 0
    target = w[keep] ** 2
    var = sq[keep] / n_samples
    z_var = (var - target) / (target / np.sqrt(n_samples))
    m2 = g2[keep] / n_samples
    z_g2 = np.maximum(np.abs(m2.real), np.abs(m2.imag)) * np.sqrt(n_samples)
    return {
        "n_modes": int(keep.sum()),
        "n_samples": n_samples,
        "max_abs_z_variance": float(np.max(np.abs(z_var))),
        "max_abs_z_g2": float(np.max(z_g2)),
        "max_abs_g2_mean": float(np.max(np.abs(m2))),
        "z_variance": z_var,
        "z_g2": z_g2,
    }


def pairing_variances(s: float, Ns, n_samples: int, seed: int = 0, j: int = 0, chunk: int = 1000) -> np.ndarray:
    """Empirical variance of the pairing statistic at each N in ``Ns`` from shared samples.

    One sample is drawn at cutoff max(Ns); by the prefix property its
    projections are the samples at the smaller cutoffs.
    """
    Ns = [check_dyadic(N) for N in Ns]
    spec = GaussianSpec(s, max(Ns), seed)
    vals = np.zeros((n_samples, len(Ns)), dtype=complex)
    for lo in range(0, n_samples, chunk):
        idx = range(lo, min(n_samples, lo + chunk))
        batch = sample_batch(spec, idx)
        for a, N in enumerate(Ns):
            vals[lo:lo + len(idx), a] = pairing_statistic(batch, N, j, s, spec.cutoff)
    centered = vals - vals.mean(axis=0)
    return np.mean(np.abs(centered) ** 2, axis=0) * n_samples / (n_samples - 1)
