"""
Командная строка kgscatter: coeffs, profile, residual, solve, check.

Коды выхода: 0 - успех, 1 - численный сбой (KGError), 2 - ошибка
использования (неизвестный флаг, невалидная конфигурация).
Каждый JSON-отчёт содержит полную итоговую конфигурацию запуска.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError
from scipy.integrate import trapezoid

import coeffs
import elliptic
import hyperbolic
import profiles
import solver
from config import ResidualConfig, RunConfig, load_run_config, resolve_environment, save_run_config
from errors import DomainError, FitError, KGError, ShapeError
from utils import ensure_dir, setup_logging, write_csv, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

# флаг -> путь в RunConfig
DATA_FLAGS = {
    "dimension": ("data", "dimension"),
    "amp_a": ("data", "amp_a"),
    "amp_b": ("data", "amp_b"),
    "phase_b": ("data", "phase_b"),
    "width": ("data", "width"),
    "center_a": ("data", "center_a"),
    "center_b": ("data", "center_b"),
    "coupling": ("data", "coupling"),
    "rho0": ("data", "rho0"),
    "samples": ("data", "samples_path"),
    "z_half_width": ("data", "grid", "half_width"),
    "z_points": ("data", "grid", "points"),
}
COMMAND_FLAGS = {
    "coeffs": {
        "dimension": ("coeffs", "dimension"),
        "zeta": ("coeffs", "zetas"),
        "n_min": ("coeffs", "n_min"),
        "n_max": ("coeffs", "n_max"),
        "derivative": ("coeffs", "derivative_order"),
        "method": ("coeffs", "method"),
    },
    "profile": {
        **DATA_FLAGS,
        "t": ("profile", "t"),
        "with_correction": ("profile", "with_correction"),
        "nmax": ("profile", "n_max"),
        "x_points": ("profile", "x_points"),
    },
    "residual": {
        **{k: v for k, v in DATA_FLAGS.items() if k != "coupling"},
        "coupling": ("residual", "coupling"),
        "variant": ("residual", "variant"),
        "t_min": ("residual", "t_min"),
        "t_max": ("residual", "t_max"),
        "t_count": ("residual", "t_count"),
        "nmax": ("residual", "n_max"),
        "q": ("residual", "q"),
        "drop_decades": ("residual", "drop_decades"),
    },
    "solve": {
        **{k: v for k, v in DATA_FLAGS.items() if k not in ("dimension", "coupling")},
        "L": ("solver", "half_width"),
        "N": ("solver", "points"),
        "dt": ("solver", "dt"),
        "coupling": ("solver", "coupling"),
        "T": ("solver", "t_start"),
        "T_end": ("solver", "t_end"),
        "snapshots": ("solver", "snapshots"),
        "dealias": ("solver", "dealias"),
    },
    "check": {"target": ("check", "target")},
}
COMMON_FLAGS = {
    "seed": ("seed",),
    "threads": ("threads",),
    "output_dir": ("output_dir",),
    "log_level": ("log_level",),
}


# ---------------------------------------------------------------------------
# Отчёты
# ---------------------------------------------------------------------------

class CoeffsReport(BaseModel):
    config: Dict[str, Any]
    rows: List[Tuple[int, float, float, str, float]]


class ProfileReport(BaseModel):
    config: Dict[str, Any]
    t: float
    kind: str
    cone_cut: float
    points: int
    l2_norm: float
    assumption: profiles.AssumptionReport


class ResidualSummary(BaseModel):
    config: Dict[str, Any]
    variant: str
    q: float
    p: Optional[float] = None
    C: Optional[float] = None
    window: Optional[Tuple[float, float]] = None
    t_samples: List[float]
    norms: List[float]
    fit_error: Optional[str] = None
    p_window: Optional[Tuple[float, float]] = None
    accepted: Optional[bool] = None


class CheckRow(BaseModel):
    group: str
    name: str
    value: float
    tolerance: float
    passed: bool


class CheckReport(BaseModel):
    config: Dict[str, Any]
    rows: List[CheckRow] = Field(default_factory=list)
    passed: bool


# ---------------------------------------------------------------------------
# Разбор аргументов
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="RunConfig JSON file")
    p.add_argument("--output-dir", dest="output_dir", default=None)
    p.add_argument("--log-level", dest="log_level", default=None,
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)


def _add_data(p: argparse.ArgumentParser, dimension: bool = True, coupling: bool = True) -> None:
    if dimension:
        p.add_argument("--dimension", type=int, choices=[1, 2], default=None)
    p.add_argument("--amp-a", dest="amp_a", type=float, default=None)
    p.add_argument("--amp-b", dest="amp_b", type=float, default=None)
    p.add_argument("--phase-b", dest="phase_b", type=float, default=None, help="phase of B1 relative to A1")
    p.add_argument("--width", type=float, default=None)
    p.add_argument("--center-a", dest="center_a", type=float, default=None)
    p.add_argument("--center-b", dest="center_b", type=float, default=None)
    if coupling:
        p.add_argument("--lambda", dest="coupling", type=float, default=None)
    p.add_argument("--rho0", type=float, default=None)
    p.add_argument("--samples", default=None, help=".npz file with arrays z, A1, B1")
    p.add_argument("--z-half-width", dest="z_half_width", type=float, default=None)
    p.add_argument("--z-points", dest="z_points", type=int, default=None)


def _variant(text: str) -> str:
    value = text.replace("-", "_")
    if value not in hyperbolic.VARIANTS:
        raise argparse.ArgumentTypeError(f"unknown variant {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgscatter", description="Klein-Gordon modified scattering profiles")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeffs", help="Fourier coefficients L_n(zeta)")
    _add_common(p)
    p.add_argument("--dimension", type=int, choices=[1, 2], default=None)
    p.add_argument("--zeta", type=float, nargs="+", default=None)
    p.add_argument("--n", type=int, default=None, help="single index (sets --n-min and --n-max)")
    p.add_argument("--n-min", dest="n_min", type=int, default=None)
    p.add_argument("--n-max", dest="n_max", type=int, default=None)
    p.add_argument("--derivative", type=int, choices=[0, 1, 2], default=None)
    p.add_argument("--method", choices=["quadrature", "closed_form", "symbolic"], default=None)
    p.set_defaults(handler=cmd_coeffs)

    p = sub.add_parser("profile", help="evaluate u_ap or u_ap + v_ap at time t")
    _add_common(p)
    _add_data(p)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--with-correction", dest="with_correction", action="store_true", default=None)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--x-points", dest="x_points", type=int, default=None)
    p.set_defaults(handler=cmd_profile)

    p = sub.add_parser("residual", help="residual norms and decay fit")
    _add_common(p)
    _add_data(p)
    p.add_argument("--variant", type=_variant, default=None)
    p.add_argument("--t-min", dest="t_min", type=float, default=None)
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.add_argument("--t-count", dest="t_count", type=int, default=None)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--drop-decades", dest="drop_decades", type=float, default=None)
    p.set_defaults(handler=cmd_residual)

    p = sub.add_parser("solve", help="final-value experiment (1D)")
    _add_common(p)
    _add_data(p, dimension=False, coupling=False)
    p.add_argument("--L", dest="L", type=float, default=None)
    p.add_argument("--N", dest="N", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--lambda", dest="coupling", type=float, default=None)
    p.add_argument("--T", dest="T", type=float, default=None)
    p.add_argument("--T-end", dest="T_end", type=float, default=None)
    p.add_argument("--zeta-profile", dest="zeta_profile", type=float, default=None,
                   help="constant ratio |B1|/|A1| (sets amp_b = zeta * amp_a)")
    p.add_argument("--snapshots", type=int, default=None)
    p.add_argument("--dealias", action="store_true", default=None)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("check", help="identity suite with a PASS/FAIL table")
    _add_common(p)
    p.add_argument("target", nargs="?", default=None,
                   choices=["all", "elliptic", "coeffs", "assumption", "roundtrip"])
    p.set_defaults(handler=cmd_check)
    return parser


def _assign(tree: Dict[str, Any], path: Sequence[str], value: Any) -> None:
    for key in path[:-1]:
        tree = tree.setdefault(key, {})
    tree[path[-1]] = value


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Файл конфигурации -> переменные окружения -> флаги (по возрастанию приоритета)."""
    cfg = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    cfg = resolve_environment(cfg)
    tree = cfg.model_dump()
    tree["command"] = args.command
    flags = {**COMMON_FLAGS, **COMMAND_FLAGS[args.command]}
    given = vars(args)
    if args.command == "coeffs" and given.get("n") is not None:
        given = {**given, "n_min": given["n"], "n_max": given["n"]}
    for name, path in flags.items():
        value = given.get(name)
        if value is not None:
            _assign(tree, path, value)
    if args.command == "solve":
        tree["data"]["dimension"] = 1
        tree["data"]["coupling"] = tree["solver"]["coupling"]
        if given.get("zeta_profile") is not None:
            tree["data"]["amp_b"] = given["zeta_profile"] * tree["data"]["amp_a"]
    if args.command == "residual":
        residual = ResidualConfig.model_validate(tree["residual"]).for_dimension(tree["data"]["dimension"])
        tree["residual"] = residual.model_dump()
        tree["data"]["coupling"] = residual.coupling
    return RunConfig.model_validate(tree)


# ---------------------------------------------------------------------------
# Подкоманды
# ---------------------------------------------------------------------------

def _out(cfg: RunConfig) -> Path:
    """Каталог подкоманды; рядом с результатами кладётся итоговая конфигурация."""
    out = ensure_dir(Path(cfg.output_dir) / cfg.command)
    save_run_config(cfg, out / "config.json")
    return out


def _execute(args: argparse.Namespace, body: Callable[[RunConfig, Optional[profiles.FinalData]], int],
             needs_data: bool) -> int:
    try:
        cfg = resolve_config(args)
        data = profiles.data_from_spec(cfg.data) if needs_data else None
    except (ValidationError, DomainError, ShapeError, ValueError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    setup_logging(cfg.log_level)
    try:
        return body(cfg, data)
    except KGError as exc:
        logger.error("%s failed: %s", cfg.command, exc)
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _run_coeffs(cfg: RunConfig, _data) -> int:
    c = cfg.coeffs
    ns = range(c.n_min, c.n_max + 1)
    rows = []
    for zeta in c.zetas:
        table = coeffs.ln_table(ns, zeta, c.dimension, c.derivative_order, c.method)
        rows.extend(table.rows())
    out = _out(cfg)
    write_csv(out / "coeffs.csv", ["n", "zeta", "value", "method", "im_residue"], rows)
    write_json(out / "coeffs.json", CoeffsReport(config=cfg.model_dump(), rows=rows).model_dump_json(indent=2))
    if len(rows) == 1:
        print(f"{rows[0][2]:.10f}")
    else:
        for n, zeta, value, _, _ in rows:
            print(f"n={n:<4d} zeta={zeta:<10g} {value:.10f}")
    return EXIT_OK


def cmd_coeffs(args: argparse.Namespace) -> int:
    return _execute(args, _run_coeffs, needs_data=False)


def _run_profile(cfg: RunConfig, data: profiles.FinalData) -> int:
    pc = cfg.profile
    phases = profiles.phase_pair(data)
    if pc.with_correction:
        field = profiles.u_tilde_eval(data, phases, pc.t, n_max=pc.n_max, points=pc.x_points)
    else:
        field = profiles.uap_eval(data, phases, pc.t, points=pc.x_points)
    out = _out(cfg)
    values = np.ravel(field.values)
    if data.dimension == 1:
        header = ["x", "re", "im"]
        columns = [field.x]
        norm = math.sqrt(float(trapezoid(np.abs(field.values) ** 2, field.x)))
    else:
        header = ["x1", "x2", "re", "im"]
        columns = [np.ravel(field.x[0]), np.ravel(field.x[1])]
        h = float(field.x[0][1, 0] - field.x[0][0, 0])
        norm = math.sqrt(float(np.sum(np.abs(field.values) ** 2)) * h * h)
    write_csv(out / "profile.csv", header, zip(*columns, values.real, values.imag))
    report = ProfileReport(config=cfg.model_dump(), t=pc.t, kind=field.kind, cone_cut=field.cone_cut,
                           points=pc.x_points, l2_norm=norm, assumption=profiles.validate_assumption(data))
    write_json(out / "profile.json", report.model_dump_json(indent=2))
    print(f"{field.kind} at t={pc.t:g}: ||.||_L2 = {norm:.10e}")
    return EXIT_OK


def cmd_profile(args: argparse.Namespace) -> int:
    return _execute(args, _run_profile, needs_data=True)


def _run_residual(cfg: RunConfig, data: profiles.FinalData) -> int:
    rc = cfg.residual
    phases = profiles.phase_pair(data)
    ts = np.geomspace(rc.t_min, rc.t_max, rc.t_count)
    out = _out(cfg)
    try:
        report = hyperbolic.residual_norms(data, phases, rc.variant, ts, rc.n_max, rc.q, rc.drop_decades,
                                           threads=cfg.threads)
        error = None
    except FitError as exc:
        if exc.report is None:
            raise
        report, error = exc.report, str(exc)
    p_window = hyperbolic.DECAY_WINDOWS.get((data.dimension, report.variant)) if rc.q is None else None
    accepted = None
    if p_window is not None and report.p is not None:
        accepted = p_window[0] <= report.p <= p_window[1]
    write_csv(out / "residual.csv", ["t", "norm"], report.rows())
    summary = ResidualSummary(config=cfg.model_dump(), variant=report.variant, q=report.q, p=report.p,
                              C=report.C, window=report.window, t_samples=list(report.t_samples),
                              norms=list(report.norms), fit_error=error, p_window=p_window, accepted=accepted)
    write_json(out / "residual.json", summary.model_dump_json(indent=2))
    if error is not None:
        raise FitError(error, report)
    print(f"{report.variant}: p = {report.p:.4f} (q = {report.q:g}), C = {report.C:.4e}")
    if accepted is False:
        logger.warning("p = %.4f outside [%g, %g]", report.p, *p_window)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_residual(args: argparse.Namespace) -> int:
    return _execute(args, _run_residual, needs_data=True)


def _run_solve(cfg: RunConfig, data: profiles.FinalData) -> int:
    phases = profiles.phase_pair(data)
    report = solver.final_value_experiment(cfg.solver, data, phases, n_max=cfg.profile.n_max)
    report = report.model_copy(update={"config": cfg.model_dump()})
    out = _out(cfg)
    header = ["t", "err_tilde", "err_ap", "v_norm", "im_norm", "profile_norm", "envelope"]
    write_csv(out / "experiment.csv", header, report.rows())
    write_json(out / "experiment.json", report.model_dump_json(indent=2))
    print("=" * 60)
    print(f"{'t':>10} {'||u-u~||':>14} {'envelope':>14} {'||Im u||':>14}")
    for t, e, _, _, im, _, env in report.rows():
        print(f"{t:>10.3f} {e:>14.6e} {env:>14.6e} {im:>14.6e}")
    print("=" * 60)
    print(f"tracking={report.tracking_ok} smallness={report.smallness_ok} complexness={report.complexness_ok}")
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_solve(args: argparse.Namespace) -> int:
    return _execute(args, _run_solve, needs_data=True)


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def _row(group: str, name: str, value: float, tolerance: float, passed: Optional[bool] = None) -> CheckRow:
    ok = value <= tolerance if passed is None else passed
    return CheckRow(group=group, name=name, value=float(value), tolerance=float(tolerance), passed=bool(ok))


def _check_elliptic() -> List[CheckRow]:
    ks = np.linspace(0.0, 0.999, 50)
    K, E = elliptic.ellip_KE(ks)
    ref = np.array([elliptic.quadrature_KE(k) for k in ks])
    rows = [
        _row("elliptic", "K vs quadrature (50 moduli)", float(np.max(np.abs(K - ref[:, 0]))), 1e-11),
        _row("elliptic", "E vs quadrature (50 moduli)", float(np.max(np.abs(E - ref[:, 1]))), 1e-11),
    ]
    for k in (1.0 - 1e-3, 1.0 - 1e-6, 1.0 - 1e-9):
        lo, hi = elliptic.log_singularity_bracket(k)
        ratio = float(elliptic.ellip_K(k)) / abs(math.log1p(-k))
        rows.append(_row("elliptic", f"log bracket k=1-{1 - k:.0e}", ratio, hi, lo <= ratio <= hi))
    return rows


def _check_coeffs() -> List[CheckRow]:
    exact = 16.0 / (3.0 * math.pi)
    rows = [
        _row("coeffs", "L_0(1) quadrature", abs(coeffs.ln_quadrature(0, 1.0, 2) - exact), 1e-10),
        _row("coeffs", "L_0(1) closed form", abs(float(coeffs.l0_closed(1.0)) - exact), 1e-10),
    ]
    worst = 0.0
    for zeta in (0.25, 1.0, 3.0):
        for n in range(-2, 2):
            worst = max(worst, abs(coeffs.cubic_coeff(n, zeta) - coeffs.ln_quadrature(n, zeta, 1)))
    rows.append(_row("coeffs", "1D table vs quadrature", worst, 1e-10))
    for dim in (1, 2):
        worst = max(coeffs.reflection_residual(n, z, dim) for n in range(-8, 9) for z in (0.25, 0.5, 0.9, 2.0, 4.0))
        rows.append(_row("coeffs", f"reflection identity d={dim}", worst, 1e-10))
    worst = max(abs(coeffs.ln_exact_at_one(n, 2) - coeffs.ln_quadrature(n, 1.0, 2)) for n in range(-8, 9))
    rows.append(_row("coeffs", "L_n(1) closed form vs quadrature", worst, 1e-10))
    worst = max(abs(coeffs.discriminant_integral(z) - coeffs.complexness_discriminant(z)) for z in (0.25, 0.5, 2.0, 4.0))
    rows.append(_row("coeffs", "discriminant integral", worst, 1e-9))
    excess = max(coeffs.kernel_integral_bound(z).value - coeffs.kernel_integral_bound(z).bound
                 for z in (0.25, 0.5, 1.0, 2.0, 4.0))
    rows.append(_row("coeffs", "kernel integral below bound", excess, 0.0))
    rows.append(_row("coeffs", "L_0 small zeta", abs(float(coeffs.l0_closed(1e-3)) - 1.0), 5e-3))
    rows.append(_row("coeffs", "L_0 large zeta", abs(float(coeffs.l0_closed(100.0)) / 150.0 - 1.0), 1e-2))
    return rows


def _check_assumption() -> List[CheckRow]:
    data = profiles.canonical_data(1)
    report = profiles.validate_assumption(data)
    rows = [_row("assumption", "canonical datum passes", 0.0 if report.passed else 1.0, 0.0)]
    g = np.exp(-0.5 * data.grid.axis ** 2)
    A1 = 0.1 * g * np.exp(0.3j)
    real = profiles.FinalData(1, data.grid, A1, np.conj(A1))
    zeta, _ = profiles.zeta_and_alpha(real.A1, real.B1)
    phases = profiles.phase_pair(real)
    rows.append(_row("assumption", "real data: zeta == 1", float(np.max(np.abs(zeta - 1.0))), 1e-15))
    rows.append(_row("assumption", "real data: S_A + S_B == 0", float(np.max(np.abs(phases.total))), 1e-15))
    return rows


def _check_roundtrip() -> List[CheckRow]:
    cfg = RunConfig(command="check")
    rows = [_row("roundtrip", "RunConfig dumps/loads", 0.0 if RunConfig.loads(cfg.dumps()) == cfg else 1.0, 0.0)]
    grid = solver.SpectralGrid(32.0, 256)
    rng = np.random.default_rng(cfg.seed)
    state = solver.EvolutionState(0.0, rng.standard_normal(256) + 1j * rng.standard_normal(256),
                                  rng.standard_normal(256) + 1j * rng.standard_normal(256))
    back = solver.state_from_half_kg(*solver.half_kg_variables(state, grid), state.t, grid)
    err = max(float(np.max(np.abs(back.u - state.u))), float(np.max(np.abs(back.ut - state.ut))))
    rows.append(_row("roundtrip", "half-KG variables", err, 1e-12))
    x = np.linspace(-9.0, 9.0, 37)
    t, x_back = hyperbolic.from_hyperbolic(hyperbolic.to_hyperbolic(10.0, x))
    rows.append(_row("roundtrip", "hyperbolic coordinates", float(np.max(np.abs(x_back - x))
                                                                  + np.max(np.abs(t - 10.0))), 1e-12))
    return rows


CHECKS: Dict[str, Callable[[], List[CheckRow]]] = {
    "elliptic": _check_elliptic,
    "coeffs": _check_coeffs,
    "assumption": _check_assumption,
    "roundtrip": _check_roundtrip,
}


def _run_check(cfg: RunConfig, _data) -> int:
    target = cfg.check.target
    groups = list(CHECKS) if target == "all" else [target]
    rows: List[CheckRow] = []
    for name in groups:
        rows.extend(CHECKS[name]())
    report = CheckReport(config=cfg.model_dump(), rows=rows, passed=all(r.passed for r in rows))
    out = _out(cfg)
    write_json(out / "check.json", report.model_dump_json(indent=2))
    write_csv(out / "check.csv", ["group", "name", "value", "tolerance", "passed"],
              [(r.group, r.name, r.value, r.tolerance, r.passed) for r in rows])
    print("=" * 60)
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.group:<11} {r.name:<36} {r.value:.3e}")
    print("=" * 60)
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_check(args: argparse.Namespace) -> int:
    return _execute(args, _run_check, needs_data=False)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
