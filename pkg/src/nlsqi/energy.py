"""Modified energy of the truncated flow and the exact decomposition of its derivative.

For u in E_N, with ``W(u) = (D^{s-2}ubar u^{k+1} ubar^{k-1}, D^s u)``, the
modified energy is ``||D^s u||^2 + k Re W(u)`` and ``S(u) = (k/2) Re W(u)``.
The sign of the correction is the one that removes the top-order pairing
``2k Im(D^s ubar u^{k+1} ubar^{k-1}, D^s u)`` from the time derivative (see
``top_order_pairing``).

Every pairing is evaluated on a collocation grid large enough that all
products and multiplier applications are exact.
"""

from __future__ import annotations

import functools
from dataclasses import asdict, dataclass

import numpy as np
import scipy.fft as sfft

from .flow import FlowConfig, flow_map, kernel
from .spectral import SpectralField, ball_mask, check_dyadic, symbol

__all__ = [
    "EnergyBreakdown",
    "commutator",
    "commutator_oracle",
    "correction_S",
    "modified_energy",
    "l2s",
    "energy_terms",
    "identity_residual",
    "directional_derivative",
    "q1",
    "q2",
    "q_ref",
    "gaussian_log_weight",
    "top_order_pairing",
]

TERM_NAMES = ("term_I", "term_II", "term_III", "term_IV", "term_V", "term_VI", "term_VII")


@dataclass(frozen=True)
class EnergyBreakdown:
    s: float
    k: int
    N: int
    l2s: float
    correction: float  # k Re W = 2 S
    term_I: float
    term_II: float
    term_III: float
    term_IV: float
    term_V: float
    term_VI: float
    term_VII: float
    q1: float
    q2: float
    galerkin_remainder: float  # part of term_VI caused by the projection in the flow

    @property
    def terms(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in TERM_NAMES])

    @property
    def term_sum(self) -> float:
        return float(np.sum(self.terms))

    @property
    def modified_energy(self) -> float:
        return self.l2s + self.correction

    def as_dict(self) -> dict:
        d = asdict(self)
        d["term_sum"] = self.term_sum
        d["modified_energy"] = self.modified_energy
        return d


@functools.lru_cache(maxsize=64)
def _grid(G: int):
    f = np.rint(sfft.fftfreq(G) * G)
    k1, k2 = np.meshgrid(f, f, indexing="ij")
    return k1, k2


class _Ctx:
    """Grid values of u and the derived fields used by the pairings.

    The grid resolves products of total degree 4k+2 in fields of bandwidth B,
    which covers every integrand below, including multipliers applied to
    degree 2k+1 products.
    """

    def __init__(self, u: SpectralField, s: float, k: int, N: int | None = None):
        self.s, self.k = float(s), int(k)
        B = max(u.bandwidth, 1) if N is None else max(int(N), 1)
        self.G = sfft.next_fast_len((4 * self.k + 2) * B + 1)
        self.k1, self.k2 = _grid(self.G)
        G = self.G
        if u.bandwidth > B:
            raise ValueError(f"field bandwidth {u.bandwidth} exceeds the resolved bandwidth {B}")
        table = np.zeros((G, G), dtype=complex)
        idx = np.arange(-B, B + 1) % G
        table[np.ix_(idx, idx)] = u.resized(B).coeffs
        self.hat = table  # coefficients of u on grid frequencies
        self._cache: dict = {}

    # multipliers act on grid values through their coefficient tables
    def sym(self, kind, sigma=None, axis=None):
        key = ("sym", kind, sigma, axis)
        if key not in self._cache:
            self._cache[key] = symbol(kind, self.k1, self.k2, sigma, axis)
        return self._cache[key]

    def phys(self, hat):
        return sfft.ifft2(hat) * (self.G * self.G)

    def spec(self, vals):
        return sfft.fft2(vals) / (self.G * self.G)

    def mult(self, vals, kind, sigma=None, axis=None):
        return self.phys(self.spec(vals) * self.sym(kind, sigma, axis))

    def field(self, name):
        """Named grid fields, built lazily."""
        if name in self._cache:
            return self._cache[name]
        s = self.s
        if name == "u":
            v = self.phys(self.hat)
        elif name == "ub":
            v = np.conj(self.field("u"))
        elif name.startswith("Du:"):
            v = self.phys(self.hat * self.sym("D", float(name[3:])))
        elif name.startswith("Dub:"):
            v = np.conj(self.field("Du:" + name[4:]))
        elif name.startswith("gDu:"):  # grad D^sigma u, axis given as 'gDu:sigma:axis'
            sig, ax = name[4:].split(":")
            v = self.phys(self.hat * self.sym("D", float(sig)) * self.sym("partial", axis=int(ax)))
        elif name.startswith("gDub:"):
            v = np.conj(self.field("gDu:" + name[5:]))
        elif name == "lap_u":
            v = self.phys(self.hat * self.sym("laplacian"))
        elif name == "lap_ub":
            v = np.conj(self.field("lap_u"))
        else:
            raise KeyError(name)
        self._cache[name] = v
        return v

    def grad(self, kind, sigma=0.0):
        """Tuple of two grid fields: grad D^sigma u (kind 'u') or its conjugate ('ub')."""
        pre = "gDu:" if kind == "u" else "gDub:"
        return tuple(self.field(f"{pre}{sigma}:{ax}") for ax in (0, 1))

    def pow(self, a, b):
        """u^a ubar^b on the grid; negative exponents are not allowed."""
        if a < 0 or b < 0:
            raise ValueError("negative power")
        key = ("pow", a, b)
        if key not in self._cache:
            self._cache[key] = self.field("u") ** a * self.field("ub") ** b
        return self._cache[key]

    def pair(self, f, g):
        """(f, g) = mean of f conj(g)."""
        return complex(np.mean(f * np.conj(g)))

    def grad_of(self, vals):
        return tuple(self.mult(vals, "partial", axis=ax) for ax in (0, 1))


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1]


def _W(ctx: _Ctx) -> complex:
    k, s = ctx.k, ctx.s
    return ctx.pair(ctx.field(f"Dub:{s - 2}") * ctx.pow(k + 1, k - 1), ctx.field(f"Du:{s}"))


def l2s(u: SpectralField, s: float) -> float:
    """||D^s u||^2."""
    n1, n2 = u.indices
    return float(np.sum(symbol("D", n1, n2, 2 * s) * np.abs(u.coeffs) ** 2))


def _in_EN(u: SpectralField, N: int) -> SpectralField:
    check_dyadic(N)
    n1, n2 = u.indices
    return SpectralField(np.where(ball_mask(n1, n2, N), u.coeffs, 0), u.cutoff).resized(min(u.cutoff, N))


def correction_S(u: SpectralField, s: float, k: int, N: int) -> float:
    """S(u) = (k/2) Re(D^{s-2}P ubar (P u)^{k+1} (P ubar)^{k-1}, D^s P u) with P = P_{<=N}."""
    v = _in_EN(u, N)
    return 0.5 * k * _W(_Ctx(v, s, k)).real


def modified_energy(u: SpectralField, s: float, k: int) -> float:
    """||D^s u||^2 + k Re W(u) on the whole support of u."""
    return l2s(u, s) + k * _W(_Ctx(u, s, k)).real


def top_order_pairing(u: SpectralField, s: float, k: int) -> float:
    """Im(D^s ubar u^{k+1} ubar^{k-1}, D^s u).

    d/dt ||D^s u||^2 contains 2k times this pairing; d/dt Re W contributes
    -2 times it, hence the +k in front of Re W.
    """
    ctx = _Ctx(u, s, k)
    return ctx.pair(ctx.field(f"Dub:{s}") * ctx.pow(k + 1, k - 1), ctx.field(f"Du:{s}")).imag


# commutator ----------------------------------------------------------------

def _commutator_grid(ctx: _Ctx, sigma: float, conj: bool = False):
    k = ctx.k
    u, ub = (ctx.field("ub"), ctx.field("u")) if conj else (ctx.field("u"), ctx.field("ub"))
    Du = ctx.field(f"Dub:{sigma}") if conj else ctx.field(f"Du:{sigma}")
    Dub = ctx.field(f"Du:{sigma}") if conj else ctx.field(f"Dub:{sigma}")
    mod2k = ctx.pow(k, k)
    first = ctx.mult(u * mod2k, "D", sigma)
    third = u ** (k + 1) * ub ** (k - 1) * Dub
    return first - (k + 1) * Du * mod2k - k * third


def commutator(u: SpectralField, sigma: float, k: int) -> SpectralField:
    """C^sigma(u) = D^sigma(u|u|^{2k}) - (k+1) D^sigma u |u|^{2k} - k u^{k+1} ubar^{k-1} D^sigma ubar."""
    B = max(u.bandwidth, 1)
    ctx = _Ctx(u, 0.0, k, B)
    vals = _commutator_grid(ctx, sigma)
    cut = (2 * k + 1) * B
    hat = ctx.spec(vals)
    idx = np.arange(-cut, cut + 1) % ctx.G
    return SpectralField(hat[np.ix_(idx, idx)], cut)


def commutator_oracle(u: SpectralField, sigma: float, k: int) -> SpectralField:
    """Same combination built from direct coefficient convolutions only."""
    from .spectral import D as Dop, multiply_direct

    ub = u.conj()

    def power(f, g, a, b):
        out = SpectralField.from_modes({(0, 0): 1.0})
        for _ in range(a):
            out = multiply_direct(out, f)
        for _ in range(b):
            out = multiply_direct(out, g)
        return out

    mod2k = power(u, ub, k, k)
    first = Dop(multiply_direct(u, mod2k), sigma)
    second = multiply_direct(Dop(u, sigma), mod2k)
    third = multiply_direct(power(u, ub, k + 1, k - 1), Dop(ub, sigma))
    return first - (k + 1) * second - k * third


# derivative decomposition ------------------------------------------------------

def _linear_pairings(ctx: _Ctx) -> dict:
    """Im parts of the pairings produced by the linear part i Lap u."""
    k, s = ctx.k, ctx.s
    Ds = ctx.field(f"Du:{s}")
    a = ctx.field(f"Dub:{s - 2}")
    ga = ctx.grad("ub", s - 2)
    gu = ctx.grad("u", 0.0)
    gub = ctx.grad("ub", 0.0)
    out = dict.fromkeys(("Y2", "Y3", "Y4", "Y5", "Y5a", "Y5b"), 0.0)
    out["Y3"] = ctx.pair(_dot(ga, gu) * ctx.pow(k, k - 1), Ds).imag
    out["Y5a"] = ctx.pair(a * _dot(gu, gu) * ctx.pow(k - 1, k - 1), Ds).imag
    if k >= 2:
        out["Y2"] = ctx.pair(a * ctx.field("lap_ub") * ctx.pow(k + 1, k - 2), Ds).imag
        out["Y4"] = ctx.pair(_dot(ga, gub) * ctx.pow(k + 1, k - 2), Ds).imag
        out["Y5"] = ctx.pair(a * _dot(gu, gub) * ctx.pow(k, k - 2), Ds).imag
    if k >= 3:
        out["Y5b"] = ctx.pair(a * _dot(gub, gub) * ctx.pow(k + 1, k - 3), Ds).imag
    return out


def _nonlinear_W_rate(ctx: _Ctx, Gv) -> float:
    """Re of dW along du/dt = -i G (grid values Gv of G)."""
    k, s = ctx.k, ctx.s
    Ds = ctx.field(f"Du:{s}")
    a = ctx.field(f"Dub:{s - 2}")
    Gb = np.conj(Gv)
    w = ctx.pow(k + 1, k - 1)
    val = -ctx.pair(ctx.mult(Gb, "D", s - 2) * w, Ds).imag
    val += (k + 1) * ctx.pair(a * Gv * ctx.pow(k, k - 1), Ds).imag
    if k >= 2:
        val -= (k - 1) * ctx.pair(a * Gb * ctx.pow(k + 1, k - 2), Ds).imag
    val -= ctx.pair(a * w, ctx.mult(Gv, "D", s)).imag
    return val


def _nonlinear_display(ctx: _Ctx) -> tuple[float, float]:
    """The eight-line expansion of the nonlinear rate, split as (lines 1,3-8, line 2).

    Every line is evaluated with the real multiplier D^{s-2} and the identity
    (X, D^s u) = (grad X, grad D^{s-2} u).
    """
    k, s = ctx.k, ctx.s
    u, ub = ctx.field("u"), ctx.field("ub")
    a = ctx.field(f"Dub:{s - 2}")
    ga = ctx.grad("ub", s - 2)
    gDu = ctx.grad("u", s - 2)
    p = ctx.pow(k + 1, k - 1)  # |u|^{2k-2} u^2
    mod2k = ctx.pow(k, k)
    F = u * mod2k
    Cb = _commutator_grid(ctx, s - 2, conj=True)  # C^{s-2}(ubar)
    gCb = ctx.grad_of(Cb)

    def pr(x, y):
        return ctx.pair(x[0], y[0]) + ctx.pair(x[1], y[1])

    def scal(f, vec):
        return (f * vec[0], f * vec[1])

    line2 = 2 * k * pr(scal(mod2k * p, ga), gDu).imag
    rest = 2 * pr(scal(p, gCb), gDu).imag
    rest += (2 * k + 2) * pr(scal(a * p, ctx.grad_of(mod2k)), gDu).imag
    rest += k * pr(scal(ctx.field(f"Du:{s - 2}") * p, ctx.grad_of(ctx.pow(k - 1, k + 1))), gDu).imag
    rest += pr(scal(ctx.mult(np.conj(F), "D", s - 2), ctx.grad_of(p)), gDu).imag
    rest -= 2 * pr(scal(a, ctx.grad_of(ctx.pow(2 * k + 1, 2 * k - 1))), gDu).imag
    rest += pr(scal(a, ctx.grad_of(p)), ctx.grad_of(ctx.mult(F, "D", s - 2))).imag
    rest += k * pr(scal(p, ga), scal(a, ctx.grad_of(p))).imag
    return rest, line2


def _place(ctx: _Ctx, f: SpectralField):
    """Grid values of a field whose bandwidth fits the context grid."""
    B = f.cutoff
    tab = np.zeros((ctx.G, ctx.G), dtype=complex)
    idx = np.arange(-B, B + 1) % ctx.G
    tab[np.ix_(idx, idx)] = f.coeffs
    return ctx.phys(tab)


def _q1_ctx(ctx: _Ctx) -> float:
    k, s = ctx.k, ctx.s
    if k == 1:
        return 0.0
    gu = ctx.grad("u", 0.0)
    gub = ctx.grad("ub", 0.0)
    Dsub = ctx.field(f"Dub:{s}")
    a = ctx.field(f"Dub:{s - 2}")
    p = ctx.pow(k + 1, k - 1)
    first = [np.mean(Dsub * g) for g in gu]
    second = [np.mean(p * a * g) for g in gub]
    return float(-2 * k * (k - 1) * (k + 1) * (first[0] * second[0] + first[1] * second[1]).real)


def energy_terms(u: SpectralField, s: float, k: int, N: int) -> EnergyBreakdown:
    """Exact decomposition of d/dt(||D^s u||^2 + k Re W) along the truncated flow at P_{<=N}u.

    term_I    2 Im(C^s u, D^s u)
    term_II   2k(k-1) Im(D^{s-2}ubar u^{k+1} Lap ubar ubar^{k-2}, D^s u)
    term_III  2k(k+1) Im(grad D^{s-2}ubar . grad u u^k ubar^{k-1}, D^s u)
    term_IV   2k(k-1) Im(grad D^{s-2}ubar . grad ubar u^{k+1} ubar^{k-2}, D^s u)
    term_V    2k(k+1)(k-1) Im(D^{s-2}ubar grad u . grad ubar u^k ubar^{k-2}, D^s u)
              + k^2(k+1) Im(D^{s-2}ubar grad u . grad u u^{k-1} ubar^{k-1}, D^s u)
              + k(k-1)(k-2) Im(D^{s-2}ubar grad ubar . grad ubar u^{k+1} ubar^{k-3}, D^s u)
    term_VI   -k times the seven gradient pairings of the nonlinear rate, plus the
              correction from projecting the nonlinearity onto E_N
    term_VII  -2k^2 Im(grad D^{s-2}ubar |u|^{4k-2} u^2, grad D^{s-2} u)

    Pairings carrying a vanishing integer factor are skipped, so no negative
    powers of ubar are ever formed.
    """
    v = _in_EN(u, N)
    ctx = _Ctx(v, s, k, N)
    Ds = ctx.field(f"Du:{s}")
    term_I = 2 * ctx.pair(_commutator_grid(ctx, s), Ds).imag
    Y = _linear_pairings(ctx)
    term_II = 2 * k * (k - 1) * Y["Y2"]
    term_III = 2 * k * (k + 1) * Y["Y3"]
    term_IV = 2 * k * (k - 1) * Y["Y4"]
    term_V = (2 * k * (k + 1) * (k - 1) * Y["Y5"] + k * k * (k + 1) * Y["Y5a"]
              + k * (k - 1) * (k - 2) * Y["Y5b"])
    bracket7, line2 = _nonlinear_display(ctx)
    # flow nonlinearity is P_{<=N}F; the display expands the rate for F itself
    F = ctx.field("u") * ctx.pow(k, k)
    Fhat = ctx.spec(F)
    keep = (ctx.k1 ** 2 + ctx.k2 ** 2) <= N * N
    QF = ctx.phys(np.where(keep, 0, Fhat))
    galerkin = -k * _nonlinear_W_rate(ctx, QF)
    term_VI = -k * bracket7 + galerkin
    term_VII = -k * line2
    terms = (term_I, term_II, term_III, term_IV, term_V, term_VI, term_VII)
    q1v = _q1_ctx(ctx)
    q2v = 0.5 * float(sum(terms)) - q1v
    return EnergyBreakdown(
        s=float(s), k=int(k), N=int(N),
        l2s=l2s(v, s), correction=k * _W(ctx).real,
        term_I=term_I, term_II=term_II, term_III=term_III, term_IV=term_IV,
        term_V=term_V, term_VI=term_VI, term_VII=term_VII,
        q1=q1v, q2=q2v, galerkin_remainder=galerkin,
    )


def energy_rate(u: SpectralField, s: float, k: int, N: int) -> float:
    """d/dt of the modified energy along the truncated flow, from the chain rule.

    Independent of the term-by-term expansion: 2 Im(D^s PF, D^s u) plus the
    linear and nonlinear rates of Re W with du/dt = i Lap u - i PF.
    """
    v = _in_EN(u, N)
    ctx = _Ctx(v, s, k, N)
    Ds = ctx.field(f"Du:{s}")
    PFg = _place(ctx, _pf(v, k, N))
    lin = ctx.field("lap_u")
    rate_l2s = 2 * ctx.pair(ctx.mult(PFg, "D", s), Ds).imag
    # linear rate of Re W: du/dt = i Lap u is du/dt = -i G with G = -Lap u
    rate_W = _nonlinear_W_rate(ctx, -lin) + _nonlinear_W_rate(ctx, PFg)
    return rate_l2s + k * rate_W


def _pf(v: SpectralField, k: int, N: int) -> SpectralField:
    return SpectralField(kernel(k, N).F(v.resized(N).coeffs * kernel(k, N).mask), N)


def directional_derivative(u: SpectralField, s: float, k: int, N: int, eps: float = 1e-6) -> float:
    """Central difference of the modified energy along the vector field b(u)."""
    from .flow import vector_field

    v = _in_EN(u, N).resized(N)
    b = vector_field(v, FlowConfig(k=k, N=N))
    return (modified_energy(v + eps * b, s, k) - modified_energy(v - eps * b, s, k)) / (2 * eps)


def q1(u: SpectralField, s: float, k: int, N: int) -> float:
    """-2k(k-1)(k+1) Re[(int D^s ubar grad u) . (int |u|^{2k-2} u^2 D^{s-2} ubar grad ubar)] at P_{<=N}u."""
    v = _in_EN(u, N)
    return _q1_ctx(_Ctx(v, s, k, N))


def q2(u: SpectralField, s: float, k: int, N: int) -> float:
    return energy_terms(u, s, k, N).q2


def identity_residual(u0: SpectralField, cfg: FlowConfig, dt_fd: float, s: float,
                      return_parts: bool = False):
    """|FD - AN| for the modified energy along the truncated flow.

    FD is the central difference over Phi(+-dt_fd, u0); AN is the term sum at u0.
    """
    v = _in_EN(u0, cfg.N).resized(cfg.N)
    fwd = flow_map(v, dt_fd, cfg)
    bwd = flow_map(v, -dt_fd, cfg)
    fd = (modified_energy(fwd, s, cfg.k) - modified_energy(bwd, s, cfg.k)) / (2 * dt_fd)
    an = energy_terms(v, s, cfg.k, cfg.N).term_sum
    if return_parts:
        return abs(fd - an), fd, an
    return abs(fd - an)


# Gaussian reference weight ----------------------------------------------------

def gaussian_log_weight(u: SpectralField, s: float, N: int) -> float:
    """sum_{|n|<=N} <n>^{2s} |u_hat(n)|^2, minus the log-density of mu_s on E_N up to a constant."""
    n1, n2 = u.indices
    w = (1.0 + n1 ** 2 + n2 ** 2) ** s
    return float(np.sum(np.where(ball_mask(n1, n2, N), w * np.abs(u.coeffs) ** 2, 0.0)))


def q_ref(u: SpectralField, s: float, k: int, N: int) -> float:
    """d/dt[sum <n>^{2s}|u_hat|^2 - 1/2 ||D^s u||^2] along the truncated flow.

    Adding this to q1 + q2 turns the transported density into the exact one
    for the Gaussian measure as sampled.
    """
    v = _in_EN(u, N).resized(N)
    n1, n2 = v.indices
    r2 = n1 ** 2 + n2 ** 2
    w = (1.0 + r2) ** s - 0.5 * symbol("D", n1, n2, 2 * s)
    F = _pf(v, k, N).coeffs
    return float(2 * np.sum(w * np.imag(np.conj(v.coeffs) * F)))
