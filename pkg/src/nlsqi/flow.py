"""Truncated defocusing NLS on E_N = span{e^{in.x} : |n| <= N}.

The ODE is ``du/dt = i Lap u - i P_{<=N}(|u|^{2k} u)``.  It is integrated with
classical RK4 in the interaction picture: the linear phase is removed
exactly and RK4 only sees the smooth nonlinear part.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.fft as sfft

from .spectral import SpectralField, check_dyadic

__all__ = [
    "FlowConfig",
    "Trajectory",
    "FlowKernel",
    "nonlinearity",
    "linear_propagate",
    "step",
    "evolve",
    "flow_map",
    "conserved",
    "vector_field",
    "divergence_probe",
]


@dataclass(frozen=True)
class FlowConfig:
    k: int
    N: int
    dt: float = 1e-3
    integrator: Literal["rk4-interaction"] = "rk4-interaction"
    direction: Literal["forward", "backward"] = "forward"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        check_dyadic(self.N)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.integrator != "rk4-interaction":
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"direction must be 'forward' or 'backward', got {self.direction!r}")

    @property
    def sign(self) -> int:
        return 1 if self.direction == "forward" else -1


@dataclass
class Trajectory:
    times: list[float]
    states: list[SpectralField]
    config: FlowConfig
    n_steps: int = 0

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")

    @property
    def final(self) -> SpectralField:
        return self.states[-1]


class FlowKernel:
    """Dense-array kernels for fixed (k, N).

    Fields are handled as (2N+1)^2 coefficient boxes.  The physical grid has
    size G > (2k+2)N, so the degree 2k+1 nonlinearity and the degree 2k+2
    potential energy are computed without aliasing onto |n| <= N.
    """

    def __init__(self, k: int, N: int):
        self.k = int(k)
        self.N = int(N)
        self.side = 2 * self.N + 1
        self.G = sfft.next_fast_len((2 * self.k + 2) * self.N + 1)
        r = np.arange(-self.N, self.N + 1)
        n1, n2 = np.meshgrid(r, r, indexing="ij")
        self.lap = (n1 ** 2 + n2 ** 2).astype(float)  # |n|^2
        self.mask = self.lap <= self.N ** 2
        self._idx = r % self.G

    def to_grid(self, c: np.ndarray) -> np.ndarray:
        table = np.zeros((self.G, self.G), dtype=complex)
        table[np.ix_(self._idx, self._idx)] = c
        return sfft.ifft2(table, overwrite_x=True) * (self.G * self.G)

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        table = sfft.fft2(values) / (self.G * self.G)
        return table[np.ix_(self._idx, self._idx)]

    def F(self, c: np.ndarray) -> np.ndarray:
        """P_{<=N}(|u|^{2k} u) for a coefficient box c supported in |n| <= N."""
        u = self.to_grid(c)
        return self.from_grid(np.abs(u) ** (2 * self.k) * u) * self.mask

    def rhs(self, c: np.ndarray, linear: bool = True, nonlinear: bool = True) -> np.ndarray:
        out = np.zeros_like(c)
        if linear:
            out -= 1j * self.lap * c
        if nonlinear:
            out -= 1j * self.F(c)
        return out

    def rk4(self, c: np.ndarray, h: float) -> np.ndarray:
        lap = self.lap
        ph_half = np.exp(-0.5j * h * lap)
        ph_full = ph_half * ph_half
        # interaction variable v = e^{i tau |n|^2} u, tau measured from the step start
        k1 = -1j * self.F(c)
        u2 = ph_half * (c + 0.5 * h * k1)
        k2 = -1j * np.conj(ph_half) * self.F(u2)
        u3 = ph_half * (c + 0.5 * h * k2)
        k3 = -1j * np.conj(ph_half) * self.F(u3)
        u4 = ph_full * (c + h * k3)
        k4 = -1j * np.conj(ph_full) * self.F(u4)
        return ph_full * (c + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))

    def integrate(self, c: np.ndarray, T: float, dt: float) -> tuple[np.ndarray, int]:
        """Fixed steps of size dt toward T, finishing with one partial step."""
        if T == 0:
            return c.copy(), 0
        sgn = 1.0 if T > 0 else -1.0
        n_full = int(math.floor(abs(T) / dt * (1 + 1e-12)))
        rem = abs(T) - n_full * dt
        for _ in range(n_full):
            c = self.rk4(c, sgn * dt)
        steps = n_full
        if rem > 1e-14 * max(1.0, abs(T)):
            c = self.rk4(c, sgn * rem)
            steps += 1
        return c, steps

    def mass(self, c: np.ndarray) -> float:
        return float(np.sum(np.abs(c) ** 2))

    def hamiltonian(self, c: np.ndarray) -> float:
        u = self.to_grid(c * self.mask)
        pot = float(np.mean(np.abs(u) ** (2 * self.k + 2))) / (self.k + 1)
        return float(np.sum(self.lap * np.abs(c) ** 2)) + pot


@functools.lru_cache(maxsize=32)
def kernel(k: int, N: int) -> FlowKernel:
    return FlowKernel(k, N)


def _box(u: SpectralField, N: int) -> np.ndarray:
    """Coefficient box of u at cutoff N; u must lie in E_N."""
    K = kernel(1, N)
    if u.bandwidth > N or np.any(u.resized(N).coeffs[~K.mask] != 0):
        raise ValueError(f"field is not in E_N: modes with |n| > {N} present")
    return np.array(u.resized(N).coeffs, dtype=complex)


def nonlinearity(u: SpectralField, k: int, N: int) -> SpectralField:
    """P_{<=N}(|P_{<=N}u|^{2k} P_{<=N}u), returned at cutoff N."""
    check_dyadic(N)
    K = kernel(k, N)
    return SpectralField(K.F(u.resized(N).coeffs * K.mask), N)


def linear_propagate(u: SpectralField, t: float) -> SpectralField:
    """e^{it Lap}: coefficient at n times exp(-i t |n|^2)."""
    n1, n2 = u.indices
    return SpectralField(u.coeffs * np.exp(-1j * t * (n1 ** 2 + n2 ** 2)), u.cutoff)


def step(u: SpectralField, cfg: FlowConfig) -> SpectralField:
    K = kernel(cfg.k, cfg.N)
    return SpectralField(K.rk4(_box(u, cfg.N), cfg.sign * cfg.dt), cfg.N)


def flow_map(u0: SpectralField, T: float, cfg: FlowConfig) -> SpectralField:
    """Phi(T, u0) without storing intermediate states."""
    K = kernel(cfg.k, cfg.N)
    c, _ = K.integrate(_box(u0, cfg.N), cfg.sign * T, cfg.dt)
    return SpectralField(c, cfg.N)


def evolve(u0: SpectralField, T: float, cfg: FlowConfig, checkpoints: int | None = None) -> Trajectory:
    """Integrate to horizon T (negative T runs backward).

    ``checkpoints`` limits the stored states to roughly that many evenly
    spaced ones (plus both endpoints); by default every step is kept.
    """
    K = kernel(cfg.k, cfg.N)
    c = _box(u0, cfg.N)
    T_eff = cfg.sign * T
    sgn = 1.0 if T_eff >= 0 else -1.0
    n_full = int(math.floor(abs(T_eff) / cfg.dt * (1 + 1e-12)))
    rem = abs(T_eff) - n_full * cfg.dt
    hs = [sgn * cfg.dt] * n_full
    if rem > 1e-14 * max(1.0, abs(T_eff)):
        hs.append(sgn * rem)
    every = 1 if not checkpoints else max(1, len(hs) // checkpoints)
    times, states = [0.0], [SpectralField(c.copy(), cfg.N)]
    t = 0.0
    for i, h in enumerate(hs, start=1):
        c = K.rk4(c, h)
        t = sgn * min(abs(T_eff), i * cfg.dt)
        if i % every == 0 or i == len(hs):
            times.append(t)
            states.append(SpectralField(c.copy(), cfg.N))
    return Trajectory(times, states, cfg, n_steps=len(hs))


def conserved(u: SpectralField, k: int, N: int | None = None) -> tuple[float, float]:
    """(mass, Hamiltonian) with the potential term built from P_{<=N}u."""
    if N is None:
        # smallest dyadic N whose ball holds the whole support, so P_{<=N}u = u
        n1, n2 = u.indices
        r2 = np.max(np.where(u.coeffs != 0, n1 ** 2 + n2 ** 2, 0))
        N = 1
        while N * N < r2:
            N *= 2
    K = kernel(k, N)
    c = u.resized(N).coeffs * K.mask
    mass = float(np.sum(np.abs(u.coeffs) ** 2))
    n1, n2 = u.indices
    kin = float(np.sum((n1 ** 2 + n2 ** 2) * np.abs(u.coeffs) ** 2))
    pot = float(np.mean(np.abs(K.to_grid(c)) ** (2 * k + 2))) / (k + 1)
    return mass, kin + pot


def vector_field(u: SpectralField, cfg: FlowConfig, nonlinear: bool = True) -> SpectralField:
    """b(u) = i Lap u - i P_{<=N}(|u|^{2k} u)."""
    K = kernel(cfg.k, cfg.N)
    return SpectralField(K.rhs(_box(u, cfg.N), nonlinear=nonlinear), cfg.N)


def divergence_probe(u: SpectralField, cfg: FlowConfig, h: float, nonlinear: bool = True,
                     return_scale: bool = False, return_parts: bool = False):
    """Central-difference divergence of b over the real coordinates of E_N.

    Each complex mode contributes d Re(b_n)/d Re(u_n) + d Im(b_n)/d Im(u_n).
    With ``return_scale`` the sum of absolute per-coordinate contributions is
    returned too; it is the natural size against which the estimate is judged.
    ``return_parts`` appends the array of per-coordinate contributions.
    """
    K = kernel(cfg.k, cfg.N)
    c0 = _box(u, cfg.N)
    rhs = (lambda c: K.rhs(c, nonlinear=nonlinear))
    parts = []
    for i, j in zip(*np.nonzero(K.mask)):
        for unit in (1.0, 1j):
            cp = c0.copy()
            cm = c0.copy()
            cp[i, j] += h * unit
            cm[i, j] -= h * unit
            diff = (rhs(cp)[i, j] - rhs(cm)[i, j]) / (2 * h)
            parts.append(diff.real if unit == 1.0 else diff.imag)
    parts = np.array(parts)
    total = float(parts.sum())
    out = (total,)
    if return_scale:
        out += (float(np.abs(parts).sum()),)
    if return_parts:
        out += (parts,)
    return out if len(out) > 1 else total
