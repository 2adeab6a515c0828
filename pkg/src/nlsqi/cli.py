"""Command-line runner.

    nlsqi <subcommand> [--config FILE] [--out-dir DIR] [--workers W] [--seed-override S]

Subcommands: sample, evolve, energy-audit, counting, qi-test, moments, schema.
``--config`` takes a TOML file or the name of a bundled config (``smoke``).
Exit codes: 0 pass, 1 test failure (or inconclusive), 2 config error,
3 resource guard.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, reports
from .config import ConfigError, ExperimentConfig
from .counting import ResourceGuardError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3


def _bundled(name: str) -> str | None:
    res = resources.files("nlsqi").joinpath("configs", f"{name}.toml")
    return res.read_text(encoding="utf-8") if res.is_file() else None


def resolve_config(arg: str | None, subcommand: str, seed_override: int | None) -> ExperimentConfig:
    if arg is None:
        return cfgmod.from_mapping({}, "", None, seed_override, subcommand)
    if not Path(arg).exists():
        text = _bundled(arg)
        if text is not None:
            return cfgmod.parse(text, f"<bundled:{arg}>", seed_override, subcommand)
    return cfgmod.load(arg, seed_override, subcommand)


# experiments -------------------------------------------------------------------

def run_sample(cfg: ExperimentConfig, out: reports.OutputDir, workers: int) -> int:
    from .gauss import covariance_check, sample

    p = cfg.params
    spec = cfg.gaussian(p["cutoff"])
    rows = []
    for i in range(p["first_stream"], p["first_stream"] + cfg.n_samples):
        for (n1, n2), c in sorted(sample(spec, i).to_modes().items()):
            rows.append((i, n1, n2, float(c.real), float(c.imag)))
    out.write_csv("samples.csv", "sample", rows)
    out.write_json("first_sample.json", reports.snapshot(sample(spec, p["first_stream"])), "snapshot")
    summary = {k: v for k, v in covariance_check(spec, max(2, cfg.n_samples)).items()
               if k not in ("z_variance", "z_g2")}
    out.write_json("summary.json", summary)
    return EXIT_PASS


def run_evolve(cfg: ExperimentConfig, out: reports.OutputDir, workers: int) -> int:
    from .flow import conserved, evolve
    from .gauss import sample
    from .spectral import fourier_lebesgue_norm, sobolev_norm

    p = cfg.params
    if p["snapshot"]:
        try:
            u0 = reports.from_snapshot(json.loads(Path(p["snapshot"]).read_text()))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load 'snapshot': {exc}") from None
    else:
        u0 = sample(cfg.gaussian(cfg.N), p["stream"])
    u0 = u0.resized(max(u0.cutoff, cfg.N))
    n1, n2 = u0.indices
    if np.any((u0.coeffs != 0) & (n1 ** 2 + n2 ** 2 > cfg.N ** 2)):
        raise ConfigError(f"initial field has modes outside |n| <= N = {cfg.N}")
    u0 = u0.resized(cfg.N)
    traj = evolve(u0, cfg.t, cfg.flow(p["direction"]), checkpoints=p["checkpoints"])
    rows = []
    for t, u in zip(traj.times, traj.states):
        m, h = conserved(u, cfg.k, cfg.N)
        rows.append((float(t), m, h, sobolev_norm(u, cfg.s), fourier_lebesgue_norm(u, cfg.s - 1.1)))
    out.write_csv("trajectory.csv", "evolve", rows)
    out.write_json("final.json", reports.snapshot(traj.final), "snapshot")
    m0, h0 = rows[0][1], rows[0][2]
    drift = {"mass": abs(rows[-1][1] - m0) / max(abs(m0), 1e-300),
             "hamiltonian": abs(rows[-1][2] - h0) / max(abs(h0), 1e-300)}
    out.write_json("summary.json", {"n_steps": traj.n_steps, "relative_drift": drift})
    ok = all(math.isfinite(v) for v in drift.values())
    return EXIT_PASS if ok else EXIT_FAIL


def run_energy_audit(cfg: ExperimentConfig, out: reports.OutputDir, workers: int) -> int:
    from .energy import energy_rate, energy_terms, identity_residual
    from .gauss import sample
    from .spectral import project_leq

    p = cfg.params
    spec = cfg.gaussian(p["cutoff"])
    flow = cfg.flow()
    rows, docs, mismatch, rrows = [], [], [], []
    resid = np.zeros((cfg.n_samples, len(p["dt_fd"])))
    for i in range(cfg.n_samples):
        u = project_leq(sample(spec, i), cfg.N).resized(cfg.N)
        b = energy_terms(u, cfg.s, cfg.k, cfg.N)
        d = b.as_dict()
        docs.append(d)
        rows.append([i] + [d[c] for c in reports.CSV_COLUMNS["energy-audit"][1:]])
        rate = energy_rate(u, cfg.s, cfg.k, cfg.N)
        mismatch.append(abs(b.term_sum - rate) / (abs(rate) + 1.0))
        for a, h in enumerate(p["dt_fd"]):
            r, fd, an = identity_residual(u, flow, float(h), cfg.s, return_parts=True)
            resid[i, a] = r
            rrows.append((i, float(h), r, fd, an))
    out.write_csv("energy_terms.csv", "energy-audit", rows)
    out.write_csv("identity_residuals.csv", "energy-residuals", rrows)
    out.write_json("first_breakdown.json", docs[0], "energy_breakdown")
    hs = np.asarray(p["dt_fd"], dtype=float)
    orders = None
    if hs.size > 1:
        med = np.median(resid, axis=0)
        orders = [float(x) for x in np.log(med[:-1] / med[1:]) / np.log(hs[:-1] / hs[1:])]
    worst = float(max(mismatch))
    summary = {"max_relative_mismatch_vs_chain_rule": worst, "tolerance": p["tolerance"],
               "median_fd_residual": np.median(resid, axis=0), "observed_orders": orders,
               "verdict": "pass" if worst <= p["tolerance"] else "fail"}
    out.write_json("summary.json", summary)
    return EXIT_PASS if summary["verdict"] == "pass" else EXIT_FAIL


def run_counting(cfg: ExperimentConfig, out: reports.OutputDir, workers: int) -> int:
    from .counting import count_E_histogram, fit_exponent, sup_count_S

    p = cfg.params
    rows, table = [], []
    for N in p["Ns"]:
        if p["set"] == "S":
            ms = p["ms"] or [[0, 0], [1, 0], [1, 1], [N // 2, 0], [N, 0]]
            c, m, kap = sup_count_S([N, N, N], p["signs"], ms, p["cyclic"], p["ball"])
        else:
            shells = [N, N] + [2] * (2 * p["k"])
            h = count_E_histogram(shells, p["ball"], p["max_search"])
            kap, c = max(h.items(), key=lambda kv: (kv[1], -abs(kv[0]))) if h else (0, 0)
            m = None
        shells = [N, N, N] if p["set"] == "S" else shells
        signs = p["signs"] if p["set"] == "S" else [1] * (len(shells) // 2) + [-1] * (len(shells) // 2)
        rows.append({"N": N, "count": int(c), "kappa": int(kap or 0), "m": list(m) if m else None})
        table.append((p["set"], " ".join(map(str, shells)), " ".join(map(str, signs)),
                      m[0] if m else "", m[1] if m else "", int(kap or 0), int(c)))
    counts = [r["count"] for r in rows]
    exponent = fit_exponent(p["Ns"], counts) if all(c > 0 for c in counts) else None
    verdict = "pass" if exponent is not None and exponent <= p["max_exponent"] else "fail"
    out.write_csv("counts.csv", "counting", table)
    out.write_json("summary.json", {"set": p["set"], "rows": rows, "exponent": exponent,
                                    "bound": p["max_exponent"], "verdict": verdict}, "counting_summary")
    return EXIT_PASS if verdict == "pass" else EXIT_FAIL


def run_qi_test(cfg: ExperimentConfig, out: reports.OutputDir, workers: int) -> int:
    from .transport import qi_battery

    p = cfg.params
    reps = qi_battery(cfg.observables(), cfg.t, cfg.gaussian(p["cutoff"]), cfg.flow(), cfg.n_samples,
                      p["quad_steps"], workers, p["n_sigma"])
    docs = [r.as_dict() for r in reps]
    for d in docs:
        reports.validate(reports._plain(d), "mc_report")
    out.write_json("reports.json", docs)
    out.write_csv("qi.csv", "qi-test", [(r.name, r.estimate, r.stderr, r.bound, r.details["A"], r.details["B"],
                                         r.verdict) for r in reps])
    return EXIT_PASS if all(r.verdict == "pass" for r in reps) else EXIT_FAIL


def run_moments(cfg: ExperimentConfig, out: reports.OutputDir, workers: int) -> int:
    from .transport import exp_moment

    p = cfg.params
    r = exp_moment(p["kind"], p["p"], p["R"], cfg.gaussian(p["cutoff"]), cfg.flow(), cfg.n_samples,
                   p["sigma"], workers, p["tolerance"])
    out.write_json("report.json", r.as_dict(), "mc_report")
    out.write_csv("moments.csv", "moments", [(r.name, r.estimate, r.stderr, r.details["relative_change"], r.verdict)])
    return EXIT_PASS if r.verdict == "pass" else EXIT_FAIL


RUNNERS = {
    "sample": run_sample,
    "evolve": run_evolve,
    "energy-audit": run_energy_audit,
    "counting": run_counting,
    "qi-test": run_qi_test,
    "moments": run_moments,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlsqi", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML file, or the name of a bundled config")
        sp.add_argument("--out-dir", default=os.environ.get("NLSQI_OUT_DIR", f"nlsqi-{name}"))
        sp.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $NLSQI_WORKERS or 1)")
        sp.add_argument("--seed-override", type=int, default=None)
    sp = sub.add_parser("schema")
    sp.add_argument("--out-dir", default=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.subcommand == "schema":
        text = reports.dumps(reports.schema_document())
        if args.out_dir:
            reports.OutputDir(args.out_dir).write_text("schema.json", text)
        sys.stdout.write(text)
        return EXIT_PASS
    try:
        cfg = resolve_config(args.config, args.subcommand, args.seed_override)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .parallel import default_workers

    workers = default_workers() if args.workers is None else max(1, args.workers)
    out = reports.OutputDir(args.out_dir)
    t0 = time.perf_counter()
    try:
        code = RUNNERS[cfg.subcommand](cfg, out, workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        code = EXIT_GUARD
    elapsed = time.perf_counter() - t0
    out.write_manifest(cfg.subcommand, cfg.as_dict(), {"run": elapsed}, code, __version__)
    verdict = {EXIT_PASS: "PASS", EXIT_FAIL: "FAIL", EXIT_CONFIG: "CONFIG ERROR", EXIT_GUARD: "RESOURCE GUARD"}[code]
    print(f"{cfg.subcommand}: {verdict} ({elapsed:.1f} s) -> {out.path}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
