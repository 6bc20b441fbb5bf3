"""Command-line driver: one subcommand per pipeline, plain-text reports and
byte-deterministic CSV/JSON artifacts."""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConvergenceError,
    DomainError,
    InconclusiveError,
    ProblemParams,
    RadialField,
    RadialGrid,
    compute_constants,
)

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_CONVERGENCE, EXIT_INCONCLUSIVE, EXIT_IO = 0, 1, 2, 3, 4, 5

THREADS_ENV = "PLAPLACE_MASS_THREADS"

COMMANDS = ("eigen", "green", "mass", "mass-curve", "lambda-star", "bubble-expansion",
            "energy-expansion", "pohozaev-check", "mass-residue", "s-lambda", "ground-state",
            "solvability", "blowup", "constants")


class UsageError(Exception):
    pass


@dataclass
class Config:
    p: float = 2.0
    dim: int = 3
    radius: float = 1.0
    # "lambda" in files and flags
    lam: float = 1.0
    grid_n: int = 1601
    grading: float = 1e-6
    tol: float | None = None
    eps_list: list | None = None
    delta_list: list | None = None
    lambda_grid: list | None = None
    out_path: str | None = None

    def params(self, lam: float | None = None) -> ProblemParams:
        return ProblemParams(self.p, self.dim, self.radius, self.lam if lam is None else lam)

    def grid(self) -> RadialGrid:
        return RadialGrid(self.radius, self.grid_n, self.grading)

    def echo(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            out["lambda" if f.name == "lam" else f.name] = getattr(self, f.name)
        return out


def _float_list(text: str) -> list:
    items = [t for t in text.replace(",", " ").split() if t]
    if not items:
        raise ValueError("empty list")
    return [float(t) for t in items]


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() == "none" else float(text)


_PARSERS = {
    "p": float, "dim": int, "radius": float, "lambda": float, "grid_n": int,
    "grading": float, "tol": _optional_float, "eps_list": _float_list,
    "delta_list": _float_list, "lambda_grid": _float_list, "out_path": str,
}


def _attr(key: str) -> str:
    return "lam" if key == "lambda" else key


def load_config(path: str | None, overrides: dict | None = None) -> Config:
    """Read ``key = value`` lines (``#`` starts a comment); flags in ``overrides`` win."""
    cfg = Config()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        seen = {}
        for lineno, raw in enumerate(lines, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in _PARSERS:
                raise UsageError(f"{path}:{lineno}: unknown key '{key}'")
            if key in seen:
                raise UsageError(f"{path}:{lineno}: duplicate key '{key}' (first set on line {seen[key]})")
            seen[key] = lineno
            try:
                setattr(cfg, _attr(key), _PARSERS[key](value))
            except ValueError:
                raise UsageError(f"{path}:{lineno}: type mismatch for key '{key}': {value!r}") from None
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, _attr(key), value)
    return cfg


# --------------------------------------------------------------------------
# reports


@dataclass
class Report:
    name: str
    columns: list
    rows: list
    provenance: dict
    summary: dict = field(default_factory=dict)
    command: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    elapsed: float = 0.0


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    return x


def _csv_field(x) -> str:
    x = _num(x)
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _sorted_rows(rows):
    def key(row):
        k = _num(row[0])
        return (0, k, "") if isinstance(k, (int, float)) else (1, 0.0, str(k))
    return sorted(rows, key=key)


def render_csv(report: Report) -> str:
    lines = [",".join(report.columns)]
    lines += [",".join(_csv_field(v) for v in row) for row in _sorted_rows(report.rows)]
    return "\n".join(lines) + "\n"


def _json_safe(x):
    x = _num(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, list):
        return [_json_safe(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    return x


def render_json(report: Report) -> str:
    doc = {
        "command": report.command,
        "config": report.config,
        "columns": report.columns,
        "rows": [[_json_safe(v) for v in row] for row in _sorted_rows(report.rows)],
        "summary": report.summary,
        "provenance": report.provenance,
    }
    return json.dumps(_json_safe(doc), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def render_text(report: Report) -> str:
    def show(v):
        v = _num(v)
        if isinstance(v, float):
            return format(v, ".10g")
        if isinstance(v, list):
            return "[" + ", ".join(show(t) for t in v) + "]"
        return _csv_field(v)

    out = [f"# {report.name}: {' '.join(report.command)}"]
    out += [f"#   {k} = {show(v)}" for k, v in report.config.items() if v is not None]
    cells = [report.columns] + [[show(v) for v in row] for row in _sorted_rows(report.rows)]
    widths = [max(len(r[i]) for r in cells) for i in range(len(report.columns))]
    for r in cells:
        out.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    out += [f"{k}: {show(v)}" for k, v in report.summary.items()]
    out.append(f"elapsed: {report.elapsed:.3f} s")
    return "\n".join(out) + "\n"


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(report: Report, out_path: str | None, stream=None):
    """Table to ``stream``; ``<name>.csv`` and ``<name>.json`` under ``out_path``."""
    stream = stream or sys.stdout
    if out_path is not None:
        os.makedirs(out_path, exist_ok=True)
        base = os.path.join(out_path, report.name)
        _atomic_write(base + ".csv", render_csv(report))
        _atomic_write(base + ".json", render_json(report))
    stream.write(render_text(report))


# --------------------------------------------------------------------------
# pipelines


def _workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def cmd_eigen(cfg: Config) -> Report:
    from .radial_ode import first_eigenvalue

    lam, eig = first_eigenvalue(cfg.params(0.0), cfg.grid())
    return Report("eigen", ["p", "dim", "radius", "lambda1", "lambda1_inverse_power"],
                  [[cfg.p, cfg.dim, cfg.radius, lam, eig.meta["lambda_inverse_power"]]],
                  {"lambda1": "first Dirichlet eigenvalue of -Δ_p on B_R by shooting bisection",
                   "lambda1_inverse_power": "same eigenvalue from inverse power iteration"})


def cmd_green(cfg: Config) -> Report:
    from .green import solve_green

    gf = solve_green(cfg.params(), cfg.grid(), tol=cfg.tol or 1e-12)
    r = gf.grid.positive
    rows = [[ri, gi, hi] for ri, gi, hi in zip(r, gf.G.values[1:], gf.H.values[1:])]
    return Report("green", ["r", "G", "H"], rows,
                  {"G": "Green function of -Δ_p - λ|.|^{p-2} on B_R with pole at the center",
                   "H": "regular part G - Γ"},
                  {"mass": gf.mass, "mass_error": gf.mass_error})


def cmd_mass(cfg: Config) -> Report:
    from .green import solve_green

    gf = solve_green(cfg.params(), cfg.grid(), tol=cfg.tol or 1e-12)
    return Report("mass", ["lambda", "mass", "error_estimate"], [[cfg.lam, gf.mass, gf.mass_error]],
                  {"mass": "regular part H_λ at the pole",
                   "error_estimate": "difference between nested-grid extrapolations"})


def cmd_mass_curve(cfg: Config) -> Report:
    from .green import mass_curve

    grid = cfg.lambda_grid or [0.0, 0.5, 1.0, 1.5, 2.0, 2.4]
    mc = mass_curve(cfg.params(), grid, cfg.grid(), workers=_workers())
    return Report("mass-curve", ["lambda", "mass"], [list(t) for t in zip(mc.lambda_values, mc.masses)],
                  {"mass": "regular part H_λ at the pole; strictly increasing in λ"})


def cmd_lambda_star(cfg: Config) -> Report:
    from .green import lambda_star_bisection

    res = lambda_star_bisection(cfg.params(), tol=cfg.tol or 1e-8, grid=cfg.grid())
    return Report("lambda-star", ["lambda_star", "lower", "upper", "mass_at_root", "lambda1"],
                  [[res.lambda_star, res.bracket[0], res.bracket[1], res.mass_at_root, res.lambda1]],
                  {"lambda_star": "zero of λ -> H_λ at the pole on (0, λ₁)",
                   "lambda1": "first Dirichlet eigenvalue"})


def cmd_bubble_expansion(cfg: Config) -> Report:
    from .green import approximate_green_via_bubbles

    eps_list = cfg.eps_list or [0.2, 0.1, 0.05, 0.025]
    out = approximate_green_via_bubbles(cfg.params(), eps_list, cfg.grid())
    return Report("bubble-expansion", ["eps", "sup_distance"], [[e, d] for e, _, d in out],
                  {"sup_distance": "sup over B_R of |(C0/C1) ε^{-(N-p)/p}(PU_ε - U_ε) - H_λ|"})


def cmd_energy_expansion(cfg: Config) -> Report:
    from .bubble import energy_expansion

    eps_list = cfg.eps_list or [0.2, 0.1, 0.05, 0.025, 0.0125]
    ee = energy_expansion(cfg.params(), eps_list, cfg.grid())
    return Report("energy-expansion", ["eps", "Q"], [list(t) for t in zip(ee.eps_list, ee.Q_values)],
                  {"Q": "Sobolev quotient Q_λ of the projected bubble PU_ε",
                   "fitted_slope": "least-squares coefficient of ε^{N-p} in S0 - Q",
                   "predicted_slope": "(p-1) S0^{(p-N)/p} I_{p*-1} (C1/C0) H_λ"},
                  {"S0": ee.S0, "fitted_slope": ee.fitted_slope, "predicted_slope": ee.predicted_slope,
                   "relative_gap": ee.relative_gap, "mass": ee.mass, "fit_window": list(ee.fit_window),
                   "fit_terms": ee.fit_terms})


def cmd_pohozaev_check(cfg: Config) -> Report:
    from .bubble import project_bubble
    from .pohozaev import pohozaev_residual, reduction_identity_check, residue_constant

    params = cfg.params()
    eps = (cfg.eps_list or [0.1])[0]
    deltas = cfg.delta_list or [0.2, 0.4, 0.6]
    pb = project_bubble(params, eps, cfg.grid())
    # PU_ε solves -Δ_p PU = λ PU^{p-1} + U_ε^{p*-1}
    f = RadialField(pb.U.grid, pb.U.values ** (params.pstar - 1))
    rows = [[d, pohozaev_residual(params, pb.PU, d, c=0, f=f, relative=True)] for d in deltas]
    summary = {"eps": eps}
    if params.small_dimension:
        lhs, rhs, ratio = reduction_identity_check(params)
        summary.update(residue_constant=residue_constant(params), reduction_lhs=lhs,
                       reduction_rhs=rhs, reduction_ratio=ratio)
    return Report("pohozaev-check", ["delta", "relative_residual"], rows,
                  {"relative_residual": "Pohozaev identity on B_δ for PU_ε, divided by its largest term",
                   "residue_constant": "constant linking the δ-ball identity of G_λ to H_λ",
                   "reduction_lhs": "∫|y|^q (1+|y|^q)^{-a}",
                   "reduction_rhs": "N(p-1)/p ∫(1+|y|^q)^{-a}"}, summary)


def cmd_mass_residue(cfg: Config) -> Report:
    from .pohozaev import mass_residue

    deltas = cfg.delta_list or [0.2, 0.4, 0.6]
    rep = mass_residue(cfg.params(), deltas, cfg.grid())
    return Report("mass-residue", ["delta", "residue"], [list(t) for t in zip(rep.delta_list, rep.residue_values)],
                  {"residue": "δ-ball Pohozaev expression for G_λ, independent of δ",
                   "inferred_mass": "mean residue divided by the residue constant"},
                  {"inferred_mass": rep.inferred_mass, "residue_constant": rep.C_pz, "spread": rep.spread})


def cmd_s_lambda(cfg: Config) -> Report:
    from .bubble import minimize_quotient

    params = cfg.params()
    grid = cfg.grid()
    r = grid.nodes
    init = RadialField(grid, 1.0 - (r / cfg.radius) ** 2, -2.0 * r / cfg.radius**2)
    res = minimize_quotient(params, init, grad_tol=cfg.tol or 1e-8)
    S0 = compute_constants(params).S0
    return Report("s-lambda", ["lambda", "S_est", "S0", "concentrated", "iterations", "gradient_norm"],
                  [[cfg.lam, res.S_est, S0, res.concentrated, res.iterations, res.gradient_norm]],
                  {"S_est": "final Q_λ along the normalized descent flow",
                   "concentrated": "peak grew while Q_λ stalled near S0 (infimum not attained)"})


def _ground_state_row(gs):
    from .blowup import GroundState

    if isinstance(gs, GroundState):
        return [gs.lam, "exists", gs.amplitude, gs.mu, gs.Q_value, gs.min_rho]
    return [gs.lam, "nonexistent", None, None, None, gs.min_rho]


def cmd_ground_state(cfg: Config) -> Report:
    from .blowup import ground_state_shoot

    gs = ground_state_shoot(cfg.params())
    return Report("ground-state", ["lambda", "verdict", "amplitude", "mu", "Q", "min_rho"],
                  [_ground_state_row(gs)],
                  {"amplitude": "u(0) of the positive radial solution",
                   "mu": "blow-up scale amplitude^{-p/(N-p)}",
                   "Q": "Sobolev quotient of the solution",
                   "min_rho": "smallest first-zero radius over the amplitude grid"})


def cmd_solvability(cfg: Config) -> Report:
    from .blowup import solvability_scan

    grid = cfg.lambda_grid or list(np.linspace(0.5, 9.5, 20))
    scan = solvability_scan(cfg.params(), grid)
    rows = [[l, e, m] for l, e, m in zip(scan.lambda_grid, scan.exists, scan.min_rho)]
    return Report("solvability", ["lambda", "exists", "min_rho"], rows,
                  {"exists": "a positive radial solution vanishing at R was found",
                   "bracket": "adjacent grid values where solvability switches on"},
                  {"bracket": list(scan.bracket) if scan.bracket else None})


def cmd_blowup(cfg: Config) -> Report:
    from .blowup import blowup_diagnostics
    from .green import lambda_star_bisection

    params = cfg.params()
    lam_star = lambda_star_bisection(params, tol=cfg.tol or 1e-8, grid=cfg.grid()).lambda_star
    lams = cfg.lambda_grid or [lam_star + d for d in (0.5, 0.2, 0.1, 0.05)]
    rep = blowup_diagnostics(params, lams, lambda_star=lam_star)
    rows = [[r.lam, r.mu, r.profile_distance, r.green_ratio.get(0.5), r.amplitude, r.Q_value,
             r.bound_constant, r.crit_integral, r.green_ratio.get(0.3), r.green_ratio.get(0.7)]
            for r in rep.rows]
    return Report("blowup", ["lambda", "mu", "profile_supdist", "green_ratio_r05", "amplitude", "Q",
                             "bound_constant", "crit_integral", "green_ratio_r03", "green_ratio_r07"], rows,
                  {"mu": "amplitude^{-p/(N-p)}",
                   "profile_supdist": "sup over |y| <= 10 of |u(μy)/u(0) - U_∞(y)|",
                   "green_ratio_r05": "μ^{-(N-p)/(p(p-1))} u(r) / ((∫U_∞^{p*-1})^{1/(p-1)} G_λ*(r)) at r = 0.5",
                   "bound_constant": "max of u / (u(0) U_∞(r/μ)), at least 1",
                   "crit_integral": "∫ u^{p*} over the ball"},
                  {"lambda_star": rep.lambda_star, "caveat": rep.caveat})


def cmd_constants(cfg: Config) -> Report:
    c = compute_constants(cfg.params(0.0))
    return Report("constants", ["p", "dim", "omega_N", "C0", "C1", "Lambda", "S0", "I_pstar", "I_pstar_minus1"],
                  [[cfg.p, cfg.dim, c.omega_N, c.C0, c.C1, c.Lambda, c.S0, c.I_pstar, c.I_pstar_minus1]],
                  {"C0": "fundamental-solution constant, Γ = C0 r^{-(N-p)/(p-1)}",
                   "C1": "bubble normalization",
                   "Lambda": "C1^{-p²/((N-p)(p-1))}",
                   "S0": "best Sobolev constant",
                   "I_pstar": "∫ U_1^{p*}", "I_pstar_minus1": "∫ U_1^{p*-1}"})


_HANDLERS = {
    "eigen": cmd_eigen, "green": cmd_green, "mass": cmd_mass, "mass-curve": cmd_mass_curve,
    "lambda-star": cmd_lambda_star, "bubble-expansion": cmd_bubble_expansion,
    "energy-expansion": cmd_energy_expansion, "pohozaev-check": cmd_pohozaev_check,
    "mass-residue": cmd_mass_residue, "s-lambda": cmd_s_lambda, "ground-state": cmd_ground_state,
    "solvability": cmd_solvability, "blowup": cmd_blowup, "constants": cmd_constants,
}


# --------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


_EPILOG = f"""\
config file: `key = value` lines, `#` comments; keys p, dim, radius, lambda,
grid_n, grading, tol, eps_list, delta_list, lambda_grid, out_path.  Flags
override the file.  Lists are comma-separated.

outputs: a table on stdout; with --out-path, <command>.csv (header row,
17 significant digits, rows sorted by the first column) and <command>.json
(the same rows plus config, summary and provenance).

exit codes: 0 ok, 1 usage, 2 domain, 3 convergence, 4 inconclusive, 5 I/O.
{THREADS_ENV} sets the worker count for mass-curve (default 1).
"""


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plaplace-mass", description="Radial p-Laplacian mass and critical-exponent pipelines.",
                     epilog=_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name in COMMANDS:
        sp = sub.add_parser(name, epilog=_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter,
                            help=_HANDLERS[name].__name__.replace("cmd_", "").replace("_", " "))
        sp.add_argument("--config", help="config file of key = value lines")
        sp.add_argument("--p", type=float, help="p >= 2 (default 2)")
        sp.add_argument("--dim", type=int, help="dimension N > p (default 3)")
        sp.add_argument("--radius", type=float, help="ball radius R (default 1)")
        sp.add_argument("--lambda", dest="lambda_", type=float, help="λ (default 1)")
        sp.add_argument("--grid-n", type=int, help="geometric grid nodes (default 1601)")
        sp.add_argument("--grading", type=float, help="smallest node over R (default 1e-6)")
        sp.add_argument("--tol", type=float, help="solver or bisection tolerance (command default)")
        sp.add_argument("--eps-list", type=_float_list, help="bubble scales, comma-separated")
        sp.add_argument("--delta-list", type=_float_list, help="ball radii δ, comma-separated")
        sp.add_argument("--lambda-grid", type=_float_list, help="λ values, comma-separated")
        sp.add_argument("--out-path", help="directory for CSV/JSON artifacts")
    return parser


def _strip_out_path(argv: list) -> list:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
        elif tok == "--out-path":
            skip = True
        elif not tok.startswith("--out-path="):
            out.append(tok)
    return out


def run_command(argv: list | None = None, stream=None, err=None) -> int:
    stream = stream or sys.stdout
    err = err or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        overrides = {"p": args.p, "dim": args.dim, "radius": args.radius, "lambda": args.lambda_,
                     "grid_n": args.grid_n, "grading": args.grading, "tol": args.tol,
                     "eps_list": args.eps_list, "delta_list": args.delta_list,
                     "lambda_grid": args.lambda_grid, "out_path": args.out_path}
        cfg = load_config(args.config, overrides)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE

    t0 = time.perf_counter()
    try:
        report = _HANDLERS[args.command](cfg)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    except DomainError as exc:
        err.write(f"domain error: {exc}\n")
        return EXIT_DOMAIN
    except InconclusiveError as exc:
        err.write(f"inconclusive: {exc}\n")
        return EXIT_INCONCLUSIVE
    except (ConvergenceError, RuntimeError, FloatingPointError) as exc:
        err.write(f"convergence error: {exc}\n")
        return EXIT_CONVERGENCE
    # the output location is not part of the result, so it stays out of the artifacts
    report.command = _strip_out_path(argv)
    report.config = {k: v for k, v in cfg.echo().items() if k != "out_path"}
    report.elapsed = time.perf_counter() - t0
    try:
        emit_report(report, cfg.out_path, stream)
    except OSError as exc:
        err.write(f"I/O error: {exc}\n")
        return EXIT_IO
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())
