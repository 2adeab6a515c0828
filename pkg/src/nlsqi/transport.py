"""Transport of the Gaussian and weighted measures by the truncated flow.

On E_N the weighted measure is rho_N ~ exp(-S(u) - sum <n>^{2s}|u_hat|^2) du,
with sum <n>^{2s}|u_hat|^2 the Gaussian weight of mu_s as sampled.  The flow
preserves Lebesgue measure, so

    Phi_t # rho_N = f_t rho_N,   f_t(x) = exp(int_0^t R(Phi(-t', x)) dt'),

where R is the rate of S + (Gaussian weight) along the flow:
R = q1 + q2 + q_ref.  Expectations under rho are computed under mu with the
importance weight exp(-S).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.special import logsumexp

from . import energy
from .flow import FlowConfig, kernel
from .gauss import GaussianSpec, sample
from .parallel import map_indexed
from .spectral import SpectralField, ball_mask, fourier_lebesgue_norm

__all__ = [
    "McReport",
    "ObservableSpec",
    "weight_rho",
    "density_rate",
    "density_exponent",
    "exact_exponent",
    "mu_density",
    "qi_test",
    "qi_battery",
    "exp_moment",
    "S_tail",
    "verdict",
    "DEFAULT_PANELS_PER_UNIT",
]

# Simpson panels per unit time.  The integrand oscillates at frequencies up
# to about (2k+2) N^2, so the panel must be short on that scale.
DEFAULT_PANELS_PER_UNIT = 160


@dataclass
class McReport:
    name: str
    estimate: float
    stderr: float
    n_samples: int
    bound: float | None
    verdict: Literal["pass", "fail", "inconclusive"]
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if math.isnan(self.stderr) or self.stderr < 0:
            raise ValueError("stderr must be nonnegative")

    def as_dict(self) -> dict:
        return asdict(self)


def verdict(estimate: float, stderr: float, bound: float, scale: float | None = None,
            inconclusive_ratio: float = 0.25) -> str:
    """'pass' if |estimate| <= bound, 'inconclusive' if stderr > ratio * scale."""
    if scale is not None and stderr > inconclusive_ratio * abs(scale):
        return "inconclusive"
    return "pass" if abs(estimate) <= bound else "fail"


# observables ---------------------------------------------------------------

_CYL_FUNCS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "cos": np.cos,
    "sin": np.sin,
    "tanh": np.tanh,
    "gauss": lambda x: np.exp(-x * x),
    "logistic": lambda x: 1.0 / (1.0 + np.exp(-x)),
}


@dataclass(frozen=True)
class ObservableSpec:
    """A functional F of a field.

    kinds:
      ``cylinder``   f(sum_j a_j Re u_hat(n_j) + b_j Im u_hat(n_j)) with f bounded
                     (params: modes, a, b, func)
      ``indicator``  1{||u||_{FL^{sigma,oo}} <= R} (params: sigma, R)
      ``moment``     (Re u_hat(n))^a (params: mode, power); unbounded
    """

    kind: Literal["cylinder", "indicator", "moment"]
    params: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        p = self.params
        if self.kind == "cylinder":
            modes = p.get("modes")
            if not modes:
                raise ValueError("cylinder observable needs a nonempty 'modes' list")
            for key in ("a", "b"):
                if key in p and len(p[key]) != len(modes):
                    raise ValueError(f"'{key}' must have one entry per mode")
            if p.get("func", "cos") not in _CYL_FUNCS:
                raise ValueError(f"unknown cylinder function {p.get('func')!r}")
        elif self.kind == "indicator":
            if "R" not in p or p["R"] <= 0:
                raise ValueError("indicator observable needs R > 0")
        elif self.kind == "moment":
            if "mode" not in p:
                raise ValueError("moment observable needs 'mode'")
        else:
            raise ValueError(f"unknown observable kind {self.kind!r}")

    @property
    def bounded(self) -> bool:
        return self.kind in ("cylinder", "indicator")

    @property
    def label(self) -> str:
        return self.name or f"{self.kind}:{sorted(self.params.items())}"

    def __call__(self, u: SpectralField) -> float:
        p = self.params
        if self.kind == "cylinder":
            modes = p["modes"]
            a = p.get("a", [1.0] * len(modes))
            b = p.get("b", [0.0] * len(modes))
            x = 0.0
            for m, aj, bj in zip(modes, a, b):
                c = u.coefficient(tuple(m))
                x += aj * c.real + bj * c.imag
            return float(_CYL_FUNCS[p.get("func", "cos")](x))
        if self.kind == "indicator":
            return float(fourier_lebesgue_norm(u, p.get("sigma", 1.4)) <= p["R"])
        c = u.coefficient(tuple(p["mode"]))
        return float(c.real ** p.get("power", 1))


# densities ---------------------------------------------------------------------

def weight_rho(u: SpectralField, s: float, k: int, N: int) -> float:
    """exp(-S(u)) with S at truncation N."""
    return math.exp(-energy.correction_S(u, s, k, N))


def density_rate(u: SpectralField, s: float, k: int, N: int, reference: bool = True) -> float:
    """q1 + q2 (+ q_ref): rate of S + (1/2)||D^s u||^2 (+ Gaussian weight correction).

    q1 + q2 is half the term sum, evaluated through the chain-rule rate,
    which agrees with the term sum to rounding and costs a third as much.
    """
    r = 0.5 * energy.energy_rate(u, s, k, N)
    if reference:
        r += energy.q_ref(u, s, k, N)
    return r


def _simpson(values: np.ndarray, h: float) -> float:
    return float(h / 3.0 * (values[0] + values[-1] + 4 * values[1:-1:2].sum() + 2 * values[2:-1:2].sum()))


def default_panels(t: float) -> int:
    return max(1, int(math.ceil(abs(t) * DEFAULT_PANELS_PER_UNIT)))


def density_exponent(u0: SpectralField, t: float, cfg: FlowConfig, s: float,
                     quad_steps: int | None = None, reference: bool = True) -> float:
    """Composite Simpson integral of the density rate over the backward orbit.

    int_0^t R(Phi(-t', u0)) dt' with ``quad_steps`` panels (default from
    DEFAULT_PANELS_PER_UNIT).  ``reference=False`` integrates q1 + q2 only.
    """
    if t == 0:
        return 0.0
    m = quad_steps or default_panels(t)
    h = t / (2 * m)
    K = kernel(cfg.k, cfg.N)
    c = energy._in_EN(u0, cfg.N).resized(cfg.N).coeffs.copy()
    vals = np.empty(2 * m + 1)
    for j in range(2 * m + 1):
        if j:
            c, _ = K.integrate(c, -h, cfg.dt)
        vals[j] = density_rate(SpectralField(c, cfg.N), s, cfg.k, cfg.N, reference)
    return _simpson(vals, h)


def exact_exponent(u0: SpectralField, t: float, cfg: FlowConfig, s: float) -> float:
    """Endpoint form of the exponent: (S + weight)(u0) - (S + weight)(Phi(-t, u0))."""
    from .flow import flow_map

    v = energy._in_EN(u0, cfg.N).resized(cfg.N)
    back = flow_map(v, -t, cfg)

    def pot(w):
        return energy.correction_S(w, s, cfg.k, cfg.N) + energy.gaussian_log_weight(w, s, cfg.N)

    return pot(v) - pot(back)


def mu_density(u: SpectralField, t: float, spec: GaussianSpec, cfg: FlowConfig,
               quad_steps: int | None = None) -> float:
    """d(Phi_t # mu)/d mu at u: exp(exponent) exp(S(Phi(-t,u))) exp(-S(u))."""
    from .flow import flow_map

    v = energy._in_EN(u, cfg.N).resized(cfg.N)
    ex = density_exponent(v, t, cfg, spec.s, quad_steps)
    back = flow_map(v, -t, cfg)
    S = energy.correction_S
    return math.exp(ex + S(back, spec.s, cfg.k, cfg.N) - S(v, spec.s, cfg.k, cfg.N))


# Monte Carlo -----------------------------------------------------------------

def _qi_item(i: int, spec: GaussianSpec, cfg: FlowConfig, t: float, observables, quad_steps):
    from .flow import flow_map

    u = energy._in_EN(sample(spec, i), cfg.N).resized(cfg.N)
    w = weight_rho(u, spec.s, cfg.k, cfg.N)
    ut = flow_map(u, t, cfg)
    ft = math.exp(density_exponent(u, t, cfg, spec.s, quad_steps))
    A = [w * F(ut) for F in observables]
    B = [w * F(u) * ft for F in observables]
    return A, B


def qi_battery(observables: Sequence[ObservableSpec], t: float, spec: GaussianSpec, cfg: FlowConfig,
               n_samples: int, quad_steps: int | None = None, workers: int = 1,
               n_sigma: float = 4.0) -> list[McReport]:
    """Change-of-variables test for several observables on shared samples.

    For each F: A = E_mu[w F(Phi_t u)] and B = E_mu[w F(u) f_t(u)] with
    w = exp(-S).  The estimate is mean(A - B) with the standard error of the
    paired differences; pass if |A - B| <= n_sigma * stderr.
    """
    for F in observables:
        if not F.bounded:
            raise ValueError(f"observable {F.label} is not bounded; the equality test needs bounded F")
    if not observables:
        raise ValueError("observables must be a nonempty list")
    if spec.cutoff < cfg.N:
        raise ValueError("sampler cutoff must be at least the flow cutoff N")
    rows = map_indexed(_qi_item, range(n_samples), workers, spec, cfg, t, list(observables), quad_steps)
    A = np.array([r[0] for r in rows])
    B = np.array([r[1] for r in rows])
    reports = []
    for j, F in enumerate(observables):
        d = A[:, j] - B[:, j]
        est = float(d.mean())
        se = float(d.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else float("inf")
        scale = max(abs(A[:, j].mean()), abs(B[:, j].mean()))
        v = verdict(est, se, n_sigma * se, scale)
        reports.append(McReport(
            name=f"qi:{F.label}", estimate=est, stderr=se, n_samples=n_samples, bound=n_sigma * se, verdict=v,
            details={"A": float(A[:, j].mean()), "B": float(B[:, j].mean()), "t": t, "s": spec.s,
                     "k": cfg.k, "N": cfg.N, "threshold_sigma": n_sigma},
        ))
    return reports


def qi_test(obs: ObservableSpec, t: float, spec: GaussianSpec, cfg: FlowConfig, n_samples: int,
            quad_steps: int | None = None, workers: int = 1) -> McReport:
    return qi_battery([obs], t, spec, cfg, n_samples, quad_steps, workers)[0]


def _moment_item(i, spec, cfg, kind, p, R, sigma):
    """(log integrand, log rho-weight) at sample i; the integrand is -inf outside the ball."""
    u = energy._in_EN(sample(spec, i), cfg.N).resized(cfg.N)
    S = energy.correction_S(u, spec.s, cfg.k, cfg.N)
    if kind == "S":
        if fourier_lebesgue_norm(u, sigma) > R:
            return -math.inf, 0.0
        return p * abs(S), 0.0
    if fourier_lebesgue_norm(u, sigma) > R:
        return -math.inf, -S
    return p * abs(energy.q1(u, spec.s, cfg.k, cfg.N)) - S, -S


def _log_mean(logs: np.ndarray) -> float:
    return float(logsumexp(logs) - math.log(logs.size)) if logs.size else -math.inf


def exp_moment(kind: Literal["S", "Q1"], p: float, R: float, spec: GaussianSpec, cfg: FlowConfig,
               n_samples: int, sigma: float | None = None, workers: int = 1,
               tolerance: float = 0.05) -> McReport:
    """int_{B_R} exp(p|S|) d mu (kind S) or int_{B_R} exp(p|q1|) d rho (kind Q1).

    B_R is the FL^{sigma,oo} ball, sigma = s - 1.1 by default, and rho is
    normalized to a probability measure (weights exp(-S) under mu).  The
    estimate uses 2 n_samples draws; the verdict compares it with the
    estimate from the first n_samples (pass if the relative change is within
    ``tolerance``).  Sums are formed in log space; if the estimate itself
    overflows a double it is reported as inf and the verdict is fail.
    """
    if p <= 0 or R <= 0:
        raise ValueError("p and R must be positive")
    if kind not in ("S", "Q1"):
        raise ValueError(f"unknown moment kind {kind!r}")
    sigma = spec.s - 1.1 if sigma is None else sigma
    rows = np.array(map_indexed(_moment_item, range(2 * n_samples), workers, spec, cfg, kind, p, R, sigma))
    logs, logw = rows[:, 0], rows[:, 1]
    log_half = _log_mean(logs[:n_samples]) - _log_mean(logw[:n_samples])
    log_full = _log_mean(logs) - _log_mean(logw)
    inside = np.isfinite(logs)
    if inside.any():
        # relative standard error of a ratio estimator, from values scaled by their maxima
        x = np.exp(logs - logs[inside].max())
        y = np.exp(logw - logw.max())
        d = x / x.mean() - y / y.mean()
        rel_se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else math.inf
        rel = abs(math.expm1(log_half - log_full))
    else:
        rel_se, rel = math.inf, math.inf
    full = math.exp(log_full) if log_full < 709 else math.inf
    se = full * rel_se if math.isfinite(full) and math.isfinite(rel_se) else math.inf
    v = "pass" if math.isfinite(full) and rel <= tolerance else "fail"
    if v == "pass" and rel_se > 0.25:
        v = "inconclusive"
    return McReport(
        name=f"exp_moment:{kind}", estimate=full, stderr=se, n_samples=int(logs.size), bound=tolerance,
        verdict=v,
        details={"p": p, "R": R, "sigma": sigma, "log_estimate": log_full, "log_estimate_half": log_half,
                 "relative_change": rel, "relative_stderr": rel_se,
                 "ball_fraction": float(inside.mean()), "s": spec.s, "k": cfg.k, "N": cfg.N},
    )


def _tail_item(i, spec, k, Ns, R, sigma):
    u = sample(spec, i)
    Nmax = 2 * max(Ns)
    top = energy._in_EN(u, Nmax)
    if fourier_lebesgue_norm(top, sigma) > R:
        return [0.0] * len(Ns), 0
    S = {N: energy.correction_S(u, spec.s, k, N) for N in sorted(set(Ns) | {2 * N for N in Ns})}
    return [abs(S[2 * N] - S[N]) for N in Ns], 1


def S_tail(spec: GaussianSpec, k: int, Ns: Sequence[int], R: float, n_samples: int,
           sigma: float | None = None, workers: int = 1) -> dict:
    """E_mu[|S(P_{<=2N}u) - S(P_{<=N}u)| 1_{B_R}] for each N, with standard errors."""
    if spec.cutoff < 2 * max(Ns):
        raise ValueError("sampler cutoff must be at least 2 max(N)")
    sigma = spec.s - 1.1 if sigma is None else sigma
    rows = map_indexed(_tail_item, range(n_samples), workers, spec, k, list(Ns), R, sigma)
    arr = np.array([r[0] for r in rows])
    inside = int(sum(r[1] for r in rows))
    return {
        "N": list(Ns),
        "mean": arr.mean(axis=0).tolist(),
        "stderr": (arr.std(axis=0, ddof=1) / math.sqrt(n_samples)).tolist(),
        "ball_fraction": inside / n_samples,
    }
