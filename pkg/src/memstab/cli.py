"""Command-line pipeline: certify | simulate | verify | energy-check | demo.

Configuration is a single JSON document with strict key checking; outputs are
fixed-schema CSV files (17 significant digits, byte-stable across runs and
worker counts), a flat certificate.json, a machine-readable report.json, and
report figures alongside.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import figures
from .certificate import (
    ASCertificate,
    BoundednessError,
    Certificate,
    InfeasibleError,
    build_as_certificate,
    build_certificate,
    certificate_json,
    check_hypotheses,
)
from .model import (
    HeatModelSpec,
    InitialSegment,
    map_heat_to_problem,
    validate_problem,
)
from .simulate import SimConfig, check_step_stability, run_monte_carlo
from .timefn import DivergentIntegralError, TimeFunction
from .verify import (
    CheckRecord,
    VerificationReport,
    check_as_decay,
    check_decay_functional,
    check_ms_bound,
    energy_refinement_study,
    fit_decay_rate,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_CONFIG = 3

#: Reduction factor the energy-identity residual must achieve per dt halving.
ENERGY_REFINEMENT_FACTOR = 1.7


class ConfigError(ValueError):
    """Configuration file is missing, malformed, or fails validation."""


@dataclass(frozen=True)
class CertOptions:
    gamma1_fraction: float = 0.1
    safety: float = 0.95
    bisect_tol: float = 1e-9
    r3_weight: str = "sigma1"


@dataclass(frozen=True)
class VerifyOptions:
    ci_mult: float = 3.0
    window_fraction: float = 0.5
    n0: int = 2
    min_rate_ratio: float = 0.8
    energy_levels: int = 4
    energy_paths: int = 20
    energy_horizon: float = 2.0


@dataclass(frozen=True)
class RunConfig:
    model: HeatModelSpec
    sim: SimConfig
    cert: CertOptions = field(default_factory=CertOptions)
    verify: VerifyOptions = field(default_factory=VerifyOptions)
    output_dir: str = "out"


def _require_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown key {where}.{name}" if where else f"unknown key {name}")


def _num(section, key, where, default=None, required=False, positive=False, nonneg=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key {where}.{key}")
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number")
    v = float(v)
    if positive and v <= 0.0:
        raise ConfigError(f"{where}.{key}: must be positive")
    if nonneg and v < 0.0:
        raise ConfigError(f"{where}.{key}: must be nonnegative")
    return v


def _int(section, key, where, default=None, minimum=None):
    if key not in section:
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key}: expected an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}.{key}: must be >= {minimum}")
    return v


def timefunction_from_dict(obj, where: str) -> TimeFunction:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object with a 'kind' field")
    kind = obj.get("kind")
    try:
        if kind == "exppoly":
            _require_keys(obj, {"kind", "terms"}, where)
            return TimeFunction.exppoly(obj.get("terms", []))
        if kind == "table":
            _require_keys(obj, {"kind", "times", "values"}, where)
            return TimeFunction.table(obj["times"], obj["values"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: expected 'exppoly' or 'table'")


def timefunction_to_dict(tf: TimeFunction) -> dict:
    if tf.kind == "exppoly":
        return {"kind": "exppoly", "terms": [list(t) for t in tf.exp_terms]}
    return {"kind": "table", "times": list(tf.times), "values": list(tf.values)}


def phi_from_dict(obj, where: str) -> InitialSegment:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object with a 'kind' field")
    kind = obj.get("kind")
    try:
        if kind == "constant":
            _require_keys(obj, {"kind", "coeffs"}, where)
            return InitialSegment(kind="constant", coeffs=tuple(obj.get("coeffs", ())))
        if kind == "bump":
            _require_keys(obj, {"kind", "mode", "amp"}, where)
            return InitialSegment(
                kind="bump", mode=int(obj.get("mode", 1)), amp=float(obj.get("amp", 1.0))
            )
        if kind == "linear":
            _require_keys(obj, {"kind", "start", "end"}, where)
            return InitialSegment(
                kind="linear", start=tuple(obj.get("start", ())), end=tuple(obj.get("end", ()))
            )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: expected 'constant', 'bump' or 'linear'")


def phi_to_dict(phi: InitialSegment) -> dict:
    if phi.kind == "constant":
        return {"kind": "constant", "coeffs": list(phi.coeffs)}
    if phi.kind == "bump":
        return {"kind": "bump", "mode": phi.mode, "amp": phi.amp}
    return {"kind": "linear", "start": list(phi.start), "end": list(phi.end)}


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top-level config must be a JSON object")
    _require_keys(doc, {"model", "sim", "certificate", "verify", "output_dir"}, "")

    mdl = doc.get("model")
    if not isinstance(mdl, dict):
        raise ConfigError("missing required section 'model'")
    _require_keys(
        mdl, {"nu", "b1", "b2", "k", "k1", "k2", "p_coeffs", "phi", "n_modes"}, "model"
    )
    kwargs = dict(
        nu=_num(mdl, "nu", "model", required=True, positive=True),
        b1=_num(mdl, "b1", "model", required=True, nonneg=True),
        b2=_num(mdl, "b2", "model", required=True, nonneg=True),
        k=_num(mdl, "k", "model", required=True, positive=True),
        n_modes=_int(mdl, "n_modes", "model", default=16, minimum=1),
    )
    if "k1" in mdl:
        kwargs["k1"] = timefunction_from_dict(mdl["k1"], "model.k1")
    if "k2" in mdl:
        kwargs["k2"] = timefunction_from_dict(mdl["k2"], "model.k2")
    if "p_coeffs" in mdl:
        if not isinstance(mdl["p_coeffs"], list):
            raise ConfigError("model.p_coeffs: expected a list of numbers")
        kwargs["p_coeffs"] = tuple(float(c) for c in mdl["p_coeffs"])
    if "phi" in mdl:
        kwargs["phi"] = phi_from_dict(mdl["phi"], "model.phi")
    try:
        model = HeatModelSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc

    sim = doc.get("sim", {})
    if not isinstance(sim, dict):
        raise ConfigError("section 'sim' must be an object")
    _require_keys(sim, {"dt", "T", "n_paths", "master_seed", "output_stride"}, "sim")
    try:
        sim_cfg = SimConfig(
            dt=_num(sim, "dt", "sim", default=2.0**-10, positive=True),
            T=_num(sim, "T", "sim", default=10.0, positive=True),
            n_paths=_int(sim, "n_paths", "sim", default=200, minimum=1),
            master_seed=_int(sim, "master_seed", "sim", default=20260809, minimum=0),
            output_stride=_int(sim, "output_stride", "sim", default=8, minimum=1),
        )
    except ValueError as exc:
        raise ConfigError(f"sim.dt: {exc}") from exc

    co = doc.get("certificate", {})
    if not isinstance(co, dict):
        raise ConfigError("section 'certificate' must be an object")
    _require_keys(co, {"gamma1_fraction", "safety", "bisect_tol", "r3_weight"}, "certificate")
    r3w = co.get("r3_weight", "sigma1")
    if r3w not in ("sigma1", "sigma"):
        raise ConfigError("certificate.r3_weight: expected 'sigma1' or 'sigma'")
    cert_opts = CertOptions(
        gamma1_fraction=_num(co, "gamma1_fraction", "certificate", default=0.1, positive=True),
        safety=_num(co, "safety", "certificate", default=0.95, positive=True),
        bisect_tol=_num(co, "bisect_tol", "certificate", default=1e-9, positive=True),
        r3_weight=r3w,
    )
    if not cert_opts.gamma1_fraction < 1.0:
        raise ConfigError("certificate.gamma1_fraction: must be < 1")
    if not cert_opts.safety < 1.0:
        raise ConfigError("certificate.safety: must be < 1")

    vo = doc.get("verify", {})
    if not isinstance(vo, dict):
        raise ConfigError("section 'verify' must be an object")
    _require_keys(
        vo,
        {
            "ci_mult",
            "window_fraction",
            "n0",
            "min_rate_ratio",
            "energy_levels",
            "energy_paths",
            "energy_horizon",
        },
        "verify",
    )
    verify_opts = VerifyOptions(
        ci_mult=_num(vo, "ci_mult", "verify", default=3.0, positive=True),
        window_fraction=_num(vo, "window_fraction", "verify", default=0.5, positive=True),
        n0=_int(vo, "n0", "verify", default=2, minimum=1),
        min_rate_ratio=_num(vo, "min_rate_ratio", "verify", default=0.8, positive=True),
        energy_levels=_int(vo, "energy_levels", "verify", default=4, minimum=1),
        energy_paths=_int(vo, "energy_paths", "verify", default=20, minimum=1),
        energy_horizon=_num(vo, "energy_horizon", "verify", default=2.0, positive=True),
    )

    out_dir = doc.get("output_dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("output_dir: expected a string")
    return RunConfig(model=model, sim=sim_cfg, cert=cert_opts, verify=verify_opts, output_dir=out_dir)


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "model": {
            "nu": cfg.model.nu,
            "b1": cfg.model.b1,
            "b2": cfg.model.b2,
            "k": cfg.model.k,
            "k1": timefunction_to_dict(cfg.model.k1),
            "k2": timefunction_to_dict(cfg.model.k2),
            "p_coeffs": list(cfg.model.p_coeffs),
            "phi": phi_to_dict(cfg.model.phi),
            "n_modes": cfg.model.n_modes,
        },
        "sim": {
            "dt": cfg.sim.dt,
            "T": cfg.sim.T,
            "n_paths": cfg.sim.n_paths,
            "master_seed": cfg.sim.master_seed,
            "output_stride": cfg.sim.output_stride,
        },
        "certificate": {
            "gamma1_fraction": cfg.cert.gamma1_fraction,
            "safety": cfg.cert.safety,
            "bisect_tol": cfg.cert.bisect_tol,
            "r3_weight": cfg.cert.r3_weight,
        },
        "verify": {
            "ci_mult": cfg.verify.ci_mult,
            "window_fraction": cfg.verify.window_fraction,
            "n0": cfg.verify.n0,
            "min_rate_ratio": cfg.verify.min_rate_ratio,
            "energy_levels": cfg.verify.energy_levels,
            "energy_paths": cfg.verify.energy_paths,
            "energy_horizon": cfg.verify.energy_horizon,
        },
        "output_dir": cfg.output_dir,
    }


def parse_config(path) -> RunConfig:
    """Load and validate a single-JSON-document run configuration."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return config_from_dict(doc)


def default_demo_config() -> RunConfig:
    """Built-in feasible scenario: damping comfortably above the memory gains."""
    model = HeatModelSpec(
        nu=5.0,
        b1=1.0,
        b2=1.0,
        k=1.0,
        k1=TimeFunction.exppoly([(0.1, 1.0)]),
        k2=TimeFunction.exppoly([(0.1, 1.0)]),
        p_coeffs=(0.1,),
        phi=InitialSegment(kind="constant", coeffs=(1.0,)),
        n_modes=16,
    )
    sim = SimConfig(dt=2.0**-10, T=10.0, n_paths=200, master_seed=20260809, output_stride=8)
    return RunConfig(model=model, sim=sim, output_dir="demo_out")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_curve_csv(path, curve, cert: Certificate | None) -> None:
    """curve.csv: columns (t, mean_sq, ci_half, cert_bound)."""
    lines = ["t,mean_sq,ci_half,cert_bound"]
    t = np.asarray(curve.times)
    bound = (
        cert.B * np.exp(-cert.sigma * t) if cert is not None else np.full_like(t, math.nan)
    )
    for i in range(t.size):
        lines.append(
            f"{_fmt(t[i])},{_fmt(curve.mean[i])},{_fmt(curve.ci_half[i])},{_fmt(bound[i])}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_paths_csv(path, records, cert: Certificate | None) -> None:
    """paths_summary.csv: columns (path, N, interval_sup, threshold, violated)."""
    lines = ["path,N,interval_sup,threshold,violated"]
    for rec in sorted(records, key=lambda r: r.path_index):
        for N, sup in enumerate(rec.interval_sups):
            if cert is not None:
                thr = math.exp(-cert.sigma * N / 2.0)
                violated = int(sup > thr)
            else:
                thr = math.nan
                violated = 0
            lines.append(f"{rec.path_index},{N},{_fmt(sup)},{_fmt(thr)},{violated}")
    Path(path).write_text("\n".join(lines) + "\n")


def _print_check(c: CheckRecord) -> None:
    tag = "PASS" if c.passed else "FAIL"
    print(f"  [{tag}] {c.name}: measured={c.measured:.6g} bound={c.bound:.6g} ({c.note})")


def _certify(cfg: RunConfig):
    problem = map_heat_to_problem(cfg.model)
    report = validate_problem(problem)
    for item in report.failures():
        print(f"  [warn] precondition failed: {item.name} {item.detail}")
    cert = build_certificate(
        problem,
        gamma1_fraction=cfg.cert.gamma1_fraction,
        safety=cfg.cert.safety,
        tol=cfg.cert.bisect_tol,
        r3_weight=cfg.cert.r3_weight,
    )
    asc = build_as_certificate(problem, cert)
    return problem, cert, asc


def cmd_certify(cfg: RunConfig, out_dir: Path) -> int:
    problem, cert, asc = _certify(cfg)
    hyp = check_hypotheses(problem, cert=cert, heat_model=cfg.model)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = certificate_json(cert, asc)
    (out_dir / "certificate.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(f"certificate written to {out_dir / 'certificate.json'}")
    print(
        f"  rate sigma={cert.sigma:.6g}  amplitude B={cert.B:.6g}  "
        f"constraint slack={cert.constraint_slack:.6g}"
    )
    print(
        f"  pathwise rate sigma/2={asc.as_rate:.6g}  interval coefficient={asc.interval_coeff:.6g}"
    )
    if not (problem.g_env.alpha.is_zero() and problem.h_env.alpha.is_zero()):
        print(
            "  note: time-varying gain envelopes enter the decay budget with "
            "weight exp(sigma*r)"
        )
    for c in hyp.conditions:
        if not c.passed:
            print(f"  [warn] hypothesis not established: {c.name}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out_dir: Path, n_workers: int = 1) -> int:
    try:
        _, cert, _ = _certify(cfg)
    except (InfeasibleError, BoundednessError, DivergentIntegralError) as exc:
        print(f"no certificate for this model ({exc}); simulating without bound column")
        cert = None
    curve, records = run_monte_carlo(cfg.model, cfg.sim, n_workers=n_workers)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_curve_csv(out_dir / "curve.csv", curve, cert)
    write_paths_csv(out_dir / "paths_summary.csv", records, cert)
    print(
        f"simulated {cfg.sim.n_paths} paths to T={cfg.sim.T} at dt={cfg.sim.dt:.6g}; "
        f"wrote {out_dir / 'curve.csv'} and {out_dir / 'paths_summary.csv'}"
    )
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out_dir: Path, n_workers: int = 1) -> int:
    problem, cert, asc = _certify(cfg)
    curve, records = run_monte_carlo(cfg.model, cfg.sim, n_workers=n_workers)

    report = VerificationReport()
    report.add(check_ms_bound(curve, cert, ci_mult=cfg.verify.ci_mult))
    report.add(check_decay_functional(curve, cert, problem, ci_mult=cfg.verify.ci_mult))
    as_record, detail = check_as_decay(records, cert, asc, n0=cfg.verify.n0)
    report.add(as_record)

    fit = fit_decay_rate(curve, window_fraction=cfg.verify.window_fraction)
    ratio = fit.sigma_hat / cert.sigma if math.isfinite(fit.sigma_hat) else math.inf
    fit_ok = (not math.isnan(fit.sigma_hat)) and ratio >= cfg.verify.min_rate_ratio
    report.add(
        CheckRecord(
            name="fitted_rate_consistency",
            passed=fit_ok,
            measured=ratio,
            bound=cfg.verify.min_rate_ratio,
            slack=ratio - cfg.verify.min_rate_ratio,
            note=f"fitted rate {fit.sigma_hat:.6g} vs certified {cert.sigma:.6g}; {fit.note}",
        )
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "certificate.json").write_text(
        json.dumps(certificate_json(cert, asc), indent=2) + "\n"
    )
    write_curve_csv(out_dir / "curve.csv", curve, cert)
    write_paths_csv(out_dir / "paths_summary.csv", records, cert)
    doc = report.to_dict()
    doc["fit"] = {
        "sigma_hat": fit.sigma_hat,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "t_lo": fit.t_lo,
        "t_hi": fit.t_hi,
        "n_used": fit.n_used,
        "note": fit.note,
    }
    doc["certificate"] = certificate_json(cert, asc)
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    figures.save_decay_figure(out_dir / "decay.png", curve, cert, fit)
    figures.save_interval_figure(out_dir / "intervals.png", detail, curve.n_paths)

    print(f"verification report ({out_dir / 'report.json'}):")
    for c in report.checks:
        _print_check(c)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_energy(cfg: RunConfig, out_dir: Path) -> int:
    dts, rms = energy_refinement_study(
        cfg.model,
        base_dt=cfg.sim.dt,
        levels=cfg.verify.energy_levels,
        n_paths=cfg.verify.energy_paths,
        horizon=cfg.verify.energy_horizon,
        master_seed=cfg.sim.master_seed,
    )
    factors = rms[:-1] / rms[1:]
    ok = bool(np.all(factors >= ENERGY_REFINEMENT_FACTOR))
    report = VerificationReport()
    report.add(
        CheckRecord(
            name="energy_identity_refinement",
            passed=ok,
            measured=float(np.min(factors)),
            bound=ENERGY_REFINEMENT_FACTOR,
            slack=float(np.min(factors)) - ENERGY_REFINEMENT_FACTOR,
            note="smallest RMS-residual reduction factor per dt halving",
        )
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["level,dt,rms_residual"]
    for i, (dt, r) in enumerate(zip(dts, rms)):
        lines.append(f"{i},{_fmt(dt)},{_fmt(r)}")
    (out_dir / "energy.csv").write_text("\n".join(lines) + "\n")
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    figures.save_energy_figure(out_dir / "energy.png", dts, rms)
    print(f"energy-identity refinement over {len(dts)} levels:")
    for c in report.checks:
        _print_check(c)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    sim = cfg.sim
    model = cfg.model
    try:
        if args.seed is not None:
            sim = dataclasses.replace(sim, master_seed=args.seed)
        if args.paths is not None:
            sim = dataclasses.replace(sim, n_paths=args.paths)
        if args.dt is not None:
            sim = dataclasses.replace(sim, dt=args.dt)
        if args.modes is not None:
            model = dataclasses.replace(model, n_modes=args.modes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return dataclasses.replace(cfg, sim=sim, model=model)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memstab",
        description=(
            "Exponential-stability certificates for stochastic heat dynamics with "
            "memory, plus Monte Carlo verification of the certified bounds."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "certify": "build the decay certificate and write certificate.json",
        "simulate": "run the Monte Carlo simulator and write the CSV outputs",
        "verify": "certify, simulate, and check every certified bound",
        "energy-check": "dyadic refinement study of the pathwise energy identity",
        "demo": "run the built-in feasible scenario end to end",
    }
    for name, help_text in specs.items():
        sp = sub.add_parser(name, help=help_text)
        if name != "demo":
            sp.add_argument("--config", required=True, help="path to the JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory (default from config)")
        sp.add_argument("--seed", type=int, default=None, help="override sim.master_seed")
        sp.add_argument("--paths", type=int, default=None, help="override sim.n_paths")
        sp.add_argument("--dt", type=float, default=None, help="override sim.dt")
        sp.add_argument("--modes", type=int, default=None, help="override model.n_modes")
        if name in ("simulate", "verify", "demo"):
            sp.add_argument(
                "--workers", type=int, default=1, help="worker processes (output is identical)"
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "demo":
            cfg = default_demo_config()
        else:
            cfg = parse_config(args.config)
        cfg = _apply_overrides(cfg, args)
        out_dir = Path(args.out) if args.out is not None else Path(cfg.output_dir)

        if args.command != "certify":
            try:
                check_step_stability(cfg.model, cfg.sim.dt)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc

        if args.command == "certify":
            return cmd_certify(cfg, out_dir)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir, n_workers=args.workers)
        if args.command in ("verify", "demo"):
            return cmd_verify(cfg, out_dir, n_workers=args.workers)
        if args.command == "energy-check":
            return cmd_energy(cfg, out_dir)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, BoundednessError, DivergentIntegralError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
