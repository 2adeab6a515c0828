"""Finite Fourier arithmetic on the 2-torus.

A field is a finitely supported table of complex Fourier coefficients
``u(x) = sum_n u_hat(n) exp(i n.x)`` stored densely on the square box
``|n1|, |n2| <= cutoff``.  Integrals use the normalized Haar measure, so
``int |u|^2 = sum |u_hat(n)|^2``.

Products are computed on a zero-padded physical grid large enough that no
aliasing occurs; the result is the exact convolution of the coefficient
tables.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import scipy.fft as sfft

__all__ = [
    "SpectralField",
    "Grid",
    "bracket",
    "is_dyadic",
    "check_dyadic",
    "apply_multiplier",
    "D",
    "partial",
    "grad",
    "laplacian",
    "bracket_pow",
    "project",
    "project_leq",
    "sobolev_norm",
    "fourier_lebesgue_norm",
    "wiener_norm",
    "multiply",
    "multiply_direct",
    "inner",
    "grid_size_for",
]


def bracket(n1, n2):
    """Japanese bracket <n> = sqrt(1 + |n|^2)."""
    return np.sqrt(1.0 + np.asarray(n1, dtype=float) ** 2 + np.asarray(n2, dtype=float) ** 2)


def is_dyadic(N) -> bool:
    return isinstance(N, (int, np.integer)) and N >= 1 and (int(N) & (int(N) - 1)) == 0


def check_dyadic(N) -> int:
    if not is_dyadic(N):
        raise ValueError(f"expected a dyadic integer 1, 2, 4, ..., got {N!r}")
    return int(N)


@functools.lru_cache(maxsize=64)
def _box_indices(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.arange(-cutoff, cutoff + 1)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    n1.setflags(write=False)
    n2.setflags(write=False)
    return n1, n2


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients on the box ``[-cutoff, cutoff]^2``.

    ``coeffs[n1 + cutoff, n2 + cutoff]`` holds ``u_hat((n1, n2))``.
    """

    coeffs: np.ndarray
    cutoff: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        side = 2 * self.cutoff + 1
        if self.cutoff < 0 or c.shape != (side, side):
            raise ValueError(f"coefficient table of shape {c.shape} does not match cutoff {self.cutoff}")
        object.__setattr__(self, "coeffs", c)

    # construction -------------------------------------------------------
    @classmethod
    def zeros(cls, cutoff: int) -> "SpectralField":
        side = 2 * cutoff + 1
        return cls(np.zeros((side, side), dtype=complex), cutoff)

    @classmethod
    def from_modes(cls, modes: Mapping[tuple[int, int], complex], cutoff: int | None = None) -> "SpectralField":
        if cutoff is None:
            cutoff = max((max(abs(a), abs(b)) for a, b in modes), default=0)
        out = np.zeros((2 * cutoff + 1, 2 * cutoff + 1), dtype=complex)
        for (a, b), c in modes.items():
            if abs(a) > cutoff or abs(b) > cutoff:
                raise ValueError(f"mode {(a, b)} lies outside the cutoff box {cutoff}")
            out[a + cutoff, b + cutoff] += c
        return cls(out, cutoff)

    @classmethod
    def single_mode(cls, n: tuple[int, int], c: complex = 1.0, cutoff: int | None = None) -> "SpectralField":
        return cls.from_modes({tuple(n): c}, cutoff)

    def to_modes(self) -> dict[tuple[int, int], complex]:
        """Sparse view: only nonzero coefficients."""
        n1, n2 = self.indices
        nz = np.nonzero(self.coeffs)
        return {(int(n1[i, j]), int(n2[i, j])): complex(self.coeffs[i, j]) for i, j in zip(*nz)}

    # views --------------------------------------------------------------
    @property
    def indices(self) -> tuple[np.ndarray, np.ndarray]:
        return _box_indices(self.cutoff)

    @property
    def bandwidth(self) -> int:
        """Smallest box half-width containing the support."""
        nz = np.nonzero(self.coeffs)
        if nz[0].size == 0:
            return 0
        return int(max(np.abs(nz[0] - self.cutoff).max(), np.abs(nz[1] - self.cutoff).max()))

    def coefficient(self, n: tuple[int, int]) -> complex:
        a, b = n
        if abs(a) > self.cutoff or abs(b) > self.cutoff:
            return 0j
        return complex(self.coeffs[a + self.cutoff, b + self.cutoff])

    def conj(self) -> "SpectralField":
        """The field conj(u): coefficient at n is conj(u_hat(-n))."""
        return SpectralField(np.conj(self.coeffs[::-1, ::-1]), self.cutoff)

    def resized(self, cutoff: int) -> "SpectralField":
        """Zero-pad or crop the box (cropping drops coefficients)."""
        if cutoff == self.cutoff:
            return self
        out = SpectralField.zeros(cutoff)
        m = min(cutoff, self.cutoff)
        out.coeffs[cutoff - m:cutoff + m + 1, cutoff - m:cutoff + m + 1] = \
            self.coeffs[self.cutoff - m:self.cutoff + m + 1, self.cutoff - m:self.cutoff + m + 1]
        return out

    def map_coeffs(self, fn: Callable[[np.ndarray], np.ndarray]) -> "SpectralField":
        return SpectralField(fn(self.coeffs), self.cutoff)

    # arithmetic ---------------------------------------------------------
    def _aligned(self, other: "SpectralField"):
        c = max(self.cutoff, other.cutoff)
        return self.resized(c).coeffs, other.resized(c).coeffs, c

    def __add__(self, other: "SpectralField") -> "SpectralField":
        a, b, c = self._aligned(other)
        return SpectralField(a + b, c)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        a, b, c = self._aligned(other)
        return SpectralField(a - b, c)

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs, self.cutoff)

    def __mul__(self, scalar) -> "SpectralField":
        if isinstance(scalar, SpectralField):
            return multiply(self, scalar)
        return SpectralField(self.coeffs * scalar, self.cutoff)

    __rmul__ = __mul__

    def allclose(self, other: "SpectralField", rtol=1e-12, atol=1e-14) -> bool:
        a, b, _ = self._aligned(other)
        return bool(np.allclose(a, b, rtol=rtol, atol=atol))

    def __repr__(self) -> str:
        return f"SpectralField(cutoff={self.cutoff}, nnz={np.count_nonzero(self.coeffs)})"


# multipliers ---------------------------------------------------------------

def _abs_pow(n1, n2, sigma: float) -> np.ndarray:
    r = np.hypot(n1, n2)
    out = np.zeros_like(r, dtype=float)
    nz = r > 0
    out[nz] = r[nz] ** sigma
    return out


def symbol(kind: str, n1, n2, sigma: float | None = None, axis: int | None = None) -> np.ndarray:
    """Fourier symbol of a multiplier evaluated at integer frequencies.

    kinds: ``"D"`` -> |n|^sigma (zero at n = 0 for every sigma),
    ``"partial"`` -> i n_axis, ``"laplacian"`` -> -|n|^2,
    ``"bracket"`` -> <n>^sigma.
    """
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    if kind == "D":
        return _abs_pow(n1, n2, float(sigma))
    if kind == "partial":
        if axis not in (0, 1):
            raise ValueError("partial derivative needs axis 0 or 1")
        return 1j * (n1 if axis == 0 else n2)
    if kind == "laplacian":
        return -(n1 ** 2 + n2 ** 2)
    if kind == "bracket":
        return bracket(n1, n2) ** float(sigma)
    raise ValueError(f"unknown multiplier kind {kind!r}")


def apply_multiplier(u: SpectralField, kind: str, sigma: float | None = None, axis: int | None = None) -> SpectralField:
    n1, n2 = u.indices
    return SpectralField(u.coeffs * symbol(kind, n1, n2, sigma, axis), u.cutoff)


def D(u: SpectralField, sigma: float) -> SpectralField:
    return apply_multiplier(u, "D", sigma)


def partial(u: SpectralField, axis: int) -> SpectralField:
    return apply_multiplier(u, "partial", axis=axis)


def grad(u: SpectralField) -> tuple[SpectralField, SpectralField]:
    return partial(u, 0), partial(u, 1)


def laplacian(u: SpectralField) -> SpectralField:
    return apply_multiplier(u, "laplacian")


def bracket_pow(u: SpectralField, sigma: float) -> SpectralField:
    return apply_multiplier(u, "bracket", sigma)


# projectors ----------------------------------------------------------------

def shell_mask(n1, n2, N: int) -> np.ndarray:
    """Indicator of the sharp dyadic shell kept by P_N."""
    N = check_dyadic(N)
    r2 = np.asarray(n1) ** 2 + np.asarray(n2) ** 2
    if N == 1:
        return r2 <= 1
    return (4 * r2 > N * N) & (r2 <= N * N)


def ball_mask(n1, n2, N: float) -> np.ndarray:
    return np.asarray(n1) ** 2 + np.asarray(n2) ** 2 <= N * N


def project(u: SpectralField, N: int) -> SpectralField:
    """Sharp Littlewood-Paley piece P_N."""
    n1, n2 = u.indices
    return SpectralField(np.where(shell_mask(n1, n2, N), u.coeffs, 0), u.cutoff)


def project_leq(u: SpectralField, N: int) -> SpectralField:
    """P_{<=N}: keep |n| <= N."""
    check_dyadic(N)
    n1, n2 = u.indices
    return SpectralField(np.where(ball_mask(n1, n2, N), u.coeffs, 0), u.cutoff)


# norms ---------------------------------------------------------------------

def sobolev_norm(u: SpectralField, sigma: float) -> float:
    n1, n2 = u.indices
    return float(np.sqrt(np.sum(bracket(n1, n2) ** (2 * sigma) * np.abs(u.coeffs) ** 2)))


def fourier_lebesgue_norm(u: SpectralField, sigma: float) -> float:
    n1, n2 = u.indices
    return float(np.max(bracket(n1, n2) ** sigma * np.abs(u.coeffs)))


def wiener_norm(u: SpectralField) -> float:
    return float(np.sum(np.abs(u.coeffs)))


def inner(f: SpectralField, g: SpectralField) -> complex:
    """(f, g) = int f conj(g) = sum_n f_hat(n) conj(g_hat(n))."""
    a, b, _ = f._aligned(g)
    return complex(np.sum(a * np.conj(b)))


# physical grid -------------------------------------------------------------

def grid_size_for(bandwidth: int) -> int:
    """Smallest FFT-friendly grid resolving every mode |n_i| <= bandwidth."""
    return sfft.next_fast_len(2 * int(bandwidth) + 1)


@functools.lru_cache(maxsize=32)
def _grid_freqs(G: int) -> tuple[np.ndarray, np.ndarray]:
    f = np.rint(sfft.fftfreq(G) * G)
    k1, k2 = np.meshgrid(f, f, indexing="ij")
    k1.setflags(write=False)
    k2.setflags(write=False)
    return k1, k2


class Grid:
    """Uniform G x G collocation grid on the torus.

    Pointwise products of grid values are exact as long as every
    intermediate quantity has all frequencies strictly inside (-G/2, G/2).
    Callers pick G with :func:`grid_size_for`.
    """

    def __init__(self, size: int):
        if size < 1:
            raise ValueError("grid size must be >= 1")
        self.size = int(size)
        self.k1, self.k2 = _grid_freqs(self.size)
        self._symbols: dict = {}

    @classmethod
    def for_bandwidth(cls, bandwidth: int) -> "Grid":
        return cls(grid_size_for(bandwidth))

    def to_physical(self, u: SpectralField) -> np.ndarray:
        G, B = self.size, u.cutoff
        if 2 * B + 1 > G:
            u = u.resized((G - 1) // 2) if u.bandwidth <= (G - 1) // 2 else u
            if 2 * u.cutoff + 1 > G:
                raise ValueError(f"grid of size {G} cannot hold a field of bandwidth {u.bandwidth}")
            B = u.cutoff
        table = np.zeros((G, G), dtype=complex)
        idx = np.arange(-B, B + 1) % G
        table[np.ix_(idx, idx)] = u.coeffs
        return sfft.ifft2(table) * (G * G)

    def to_spectral(self, values: np.ndarray, cutoff: int | None = None) -> SpectralField:
        G = self.size
        if cutoff is None:
            cutoff = (G - 1) // 2
        table = sfft.fft2(values) / (G * G)
        idx = np.arange(-cutoff, cutoff + 1) % G
        return SpectralField(table[np.ix_(idx, idx)], cutoff)

    def symbol(self, kind: str, sigma: float | None = None, axis: int | None = None) -> np.ndarray:
        key = (kind, sigma, axis)
        s = self._symbols.get(key)
        if s is None:
            s = symbol(kind, self.k1, self.k2, sigma, axis)
            self._symbols[key] = s
        return s

    def ball(self, N: int) -> np.ndarray:
        key = ("ball", N)
        s = self._symbols.get(key)
        if s is None:
            s = ball_mask(self.k1, self.k2, N).astype(float)
            self._symbols[key] = s
        return s

    def apply(self, values: np.ndarray, mult: np.ndarray) -> np.ndarray:
        """Apply a Fourier multiplier (given on grid frequencies) to grid values."""
        return sfft.ifft2(sfft.fft2(values) * mult)

    def mean(self, values: np.ndarray) -> complex:
        """Normalized integral; exact when the integrand's bandwidth is below G."""
        return complex(values.mean())


def multiply(u: SpectralField, v: SpectralField) -> SpectralField:
    """Exact (alias-free) product; result cutoff is the sum of cutoffs."""
    cutoff = u.cutoff + v.cutoff
    grid = Grid.for_bandwidth(cutoff)
    return grid.to_spectral(grid.to_physical(u) * grid.to_physical(v), cutoff)


def multiply_direct(u: SpectralField, v: SpectralField) -> SpectralField:
    """Coefficient convolution by explicit shifts; no transforms involved."""
    cutoff = u.cutoff + v.cutoff
    out = np.zeros((2 * cutoff + 1, 2 * cutoff + 1), dtype=complex)
    side_v = 2 * v.cutoff + 1
    for (a, b), c in u.to_modes().items():
        i0 = a + u.cutoff
        j0 = b + u.cutoff
        out[i0:i0 + side_v, j0:j0 + side_v] += c * v.coeffs
    return SpectralField(out, cutoff)


def random_field(rng: np.random.Generator, cutoff: int, n_modes: int | None = None, scale: float = 1.0) -> SpectralField:
    """Test helper: complex normal coefficients on random modes of the box."""
    side = 2 * cutoff + 1
    c = (rng.standard_normal((side, side)) + 1j * rng.standard_normal((side, side))) * (scale / math.sqrt(2))
    if n_modes is not None:
        keep = np.zeros(side * side, dtype=bool)
        keep[rng.choice(side * side, size=min(n_modes, side * side), replace=False)] = True
        c = np.where(keep.reshape(side, side), c, 0)
    return SpectralField(c, cutoff)
