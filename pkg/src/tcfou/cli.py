"""Command-line front end: ``tcfou <subcommand> [options]``.

Subcommands write CSV data (header row, 17 significant digits) to ``--out``
or standard output and, with ``--out``, a JSON sidecar ``<out>.json``
holding the full run configuration, seed, library version and tolerances.
Equal configurations produce byte-identical CSV files.

Exit codes: 0 success, 1 a verification or acceptance check failed,
2 invalid input, 3 numerical nonconvergence or divergence.  Errors are
reported as one JSON object on standard error.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, NonConvergenceError, TcfouError, UnsupportedModelError, ValidationError

__all__ = ["RunConfig", "main", "run", "parse_grid", "read_config_file", "SCHEMA"]

SCHEMA = "tcfou-run/1"
EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_NONCONVERGENCE = 0, 1, 2, 3
_FMT = "%.16e"


@dataclass
class RunConfig:
    """Resolved options of one invocation, as embedded in the JSON sidecar."""

    subcommand: str
    model: str | None = None
    hurst: float | None = None
    theta: float | None = None
    grids: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    seed: int | None = None
    out: str | None = None
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(**d)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------

def parse_grid(text: str, *, count: bool = False) -> list[float]:
    """Parse ``a:b:step`` (or ``a:b:n`` with ``count``), a comma list, or a scalar.

    Ranges include both ends; grid points are ``a + k*step`` so that equal
    strings always give bit-identical grids.
    """
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(s) for s in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            a, b, c = parts
            if count:
                n = int(c)
                if n != c or n < 1:
                    raise ValidationError(f"grid {text!r}: point count must be a positive integer")
                return np.linspace(a, b, n).tolist()
            if not c > 0 or b < a:
                raise ValidationError(f"grid {text!r}: need a <= b and step > 0")
            n = int(math.floor((b - a) / c + 1e-9))
            return (a + c * np.arange(n + 1)).tolist()
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse grid {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ValidationError(f"cannot parse grid {text!r}")
    return vals


def read_config_file(path: str) -> dict:
    """Read ``key = value`` lines (``#`` comments); keys are flag names."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read config file: {exc}") from None
    for k, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{k}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = val
    return out


def _add_process(p, model=True):
    p.add_argument("--hurst", type=float, default=0.75, help="Hurst index H in (1/2, 1)")
    p.add_argument("--theta", type=float, default=1.0, help="relaxation time theta > 0")
    if model:
        p.add_argument("--model", default="stable:0.7",
                       help="stable:A | tempered:A:M | gamma:A:B | identity")


def _add_io(p):
    p.add_argument("--out", default=None, help="CSV output file (JSON sidecar at <out>.json)")
    p.add_argument("--config", default=None, help="key = value file mirroring the flags")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tcfou", description="Time-changed fractional Ornstein-Uhlenbeck numerics.")
    ap.add_argument("--version", action="version", version=f"tcfou {__version__}")
    sub = ap.add_subparsers(dest="subcommand", parser_class=_Parser)

    p = sub.add_parser("variance", help="V(t) and V'(t) of the fOU process")
    _add_process(p, model=False)
    p.add_argument("--t", default="0:5:0.01", help="time grid a:b:step or list")
    _add_io(p)

    p = sub.add_parser("moments", help="time-changed even moments V^Psi_2n(t)")
    _add_process(p)
    p.add_argument("--n", type=int, default=1, help="moment order 2n")
    p.add_argument("--t", default="0.1,1,10", help="time grid a:b:step or list (t > 0)")
    _add_io(p)

    p = sub.add_parser("density", help="time-changed density p^Psi(t, x)")
    _add_process(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--x", default="-4:4:0.01")
    p.add_argument("--method", choices=["mixture", "fourier", "laplace"], default="mixture",
                   help="laplace inverts the Fokker-Planck transform pbar^Psi (x != 0)")
    _add_io(p)

    p = sub.add_parser("fe", help="inverse-subordinator density f_E(t, y)")
    p.add_argument("--model", default="stable:0.7")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--y", default="0.01:3:0.01", help="grid of y > 0")
    p.add_argument("--strategy", default=None,
                   choices=["closed-form-stable", "talbot", "convolution", "point-mass"])
    _add_io(p)

    p = sub.add_parser("simulate", help="Monte Carlo moments of U_H(E(t))")
    _add_process(p)
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--dt", type=float, default=2.0 ** -6,
                   help="grid step (operational time for subordinated runs)")
    p.add_argument("--t", default="0.5,1,5", help="target times")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fine-factor", type=int, default=16, help="fOU grid refinement")
    p.add_argument("--plain", action="store_true", help="simulate the fOU process without time change")
    _add_io(p)

    p = sub.add_parser("verify-fp", help="residuals of the generalized Fokker-Planck equation")
    _add_process(p)
    p.add_argument("--lambda", dest="lam", default="0.5,1,2")
    p.add_argument("--x", default="-2,-1,-0.5,0.5,1,2")
    p.add_argument("--mild-tol", type=float, default=1e-6, help="relative mild-residual tolerance")
    p.add_argument("--time-domain", action="store_true", help="also check the Caputo form in time")
    p.add_argument("--t-grid", default="0.5:2:7", help="a:b:n points for --time-domain")
    p.add_argument("--time-floor", type=float, default=1e-3)
    _add_io(p)

    p = sub.add_parser("check", help="run the acceptance suite")
    p.add_argument("--quick", action="store_true", help="skip the Monte Carlo criteria")
    p.add_argument("--only", default=None, help="comma list of criterion numbers")
    _add_io(p)
    return ap


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _csv(columns: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else _FMT % v for v in row) + "\n")
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _emit(cfg: RunConfig, columns, rows, summary: dict | None = None, stdout=None):
    text = _csv(columns, rows)
    stdout = stdout or sys.stdout
    side = {"schema": SCHEMA, "version": __version__, "config": cfg.to_dict(),
            "seed": cfg.seed, "tolerances": cfg.tolerances, "columns": list(columns)}
    if summary is not None:
        side["summary"] = summary
    if cfg.out:
        Path(cfg.out).write_text(text)
        Path(cfg.out + ".json").write_text(_dumps(side))
    else:
        stdout.write(text)


def _params(a):
    from .fou_analytic import FouParams

    return FouParams(a.hurst, a.theta)


def _model(spec):
    from .bernstein import parse_model

    return parse_model(spec)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_variance(a, cfg):
    from .fou_analytic import variance, variance_derivative

    p = _params(a)
    t = np.asarray(parse_grid(a.t))
    if np.any(t < 0):
        raise ValidationError("variance needs t >= 0")
    cfg.grids["t"] = t.tolist()
    V = np.atleast_1d(variance(p, t))
    Vp = np.zeros_like(t)
    pos = t > 0
    Vp[pos] = variance_derivative(p, t[pos])
    cfg.tolerances = {"quadrature": "Gauss-Jacobi, 96 nodes", "saturation_theta": 50.0}
    _emit(cfg, ["t", "V", "Vprime"], zip(t, V, Vp))
    return EXIT_OK


def _cmd_moments(a, cfg):
    from .fou_analytic import double_factorial, variance_limit
    from .subordination import InverseSubordinatorKernel, tc_moment

    p = _params(a)
    kern = InverseSubordinatorKernel(_model(a.model))
    t = np.asarray(parse_grid(a.t))
    if np.any(t <= 0):
        raise ValidationError("moments need t > 0")
    cfg.grids["t"] = t.tolist()
    cfg.options["n"] = a.n
    m = np.atleast_1d(tc_moment(kern, p, a.n, t))
    bound = double_factorial(a.n) * variance_limit(p) ** a.n
    cfg.tolerances = {"tail_mass": kern.tail_mass}
    _emit(cfg, ["t", "moment", "bound"], ((ti, mi, bound) for ti, mi in zip(t, m)))
    return EXIT_OK


def _cmd_density(a, cfg):
    from .subordination import InverseSubordinatorKernel, tc_density

    p = _params(a)
    x = np.asarray(parse_grid(a.x))
    cfg.grids["x"] = x.tolist()
    cfg.options.update(t=a.t, method=a.method)
    if not a.t > 0:
        raise ValidationError("density needs t > 0")
    model = _model(a.model)
    if a.method == "laplace":
        if np.any(x == 0):
            raise ValidationError("x = 0 is outside the operator domain R* = R \\ {0}: "
                                  "L(d^2 p_H/dx^2) is not integrable at x = 0 "
                                  "(the integrand behaves like s^(-1-H) as s -> 0)")
        vals, errs = _density_laplace(p, model, a.t, x)
        cfg.tolerances = {"talbot_nodes": 32, "talbot_atol": 1e-9, "talbot_rtol": 1e-6}
    else:
        kern = InverseSubordinatorKernel(model)
        vals, errs, meta = tc_density(kern, p, a.t, x, method=a.method, full_output=True)
        cfg.options["derivative_count"] = meta["derivative_count"]
        cfg.tolerances = {"tail_mass": kern.tail_mass}
    _emit(cfg, ["x", "p", "err_estimate"], zip(x, np.atleast_1d(vals), np.atleast_1d(errs)))
    return EXIT_OK


def _density_laplace(params, model, t, xs):
    from .fokker_planck import OperatorContext, tc_density_inverse

    ctx = OperatorContext(params, model)
    res = [tc_density_inverse(ctx, t, float(x)) for x in xs]
    return np.array([float(r.value) for r in res]), np.array([float(r.error) for r in res])


def _cmd_fe(a, cfg):
    from .subordination import InverseSubordinatorKernel

    kern = InverseSubordinatorKernel(_model(a.model), a.strategy)
    y = np.asarray(parse_grid(a.y))
    if np.any(y <= 0) or not a.t > 0:
        raise ValidationError("f_E needs t > 0 and y > 0")
    cfg.grids["y"] = y.tolist()
    cfg.options.update(t=a.t, strategy=kern.strategy.value)
    vals, errs = kern.density(a.t, y, full_output=True)
    cfg.tolerances = {"talbot_nodes": kern.talbot_nodes}
    _emit(cfg, ["y", "f_E", "err_estimate"],
          zip(y, np.atleast_1d(vals), np.broadcast_to(np.atleast_1d(errs), y.shape)))
    return EXIT_OK


def _cmd_simulate(a, cfg):
    from .simulate import SimulationConfig, estimate_fou, estimate_timechanged

    p = _params(a)
    t = np.asarray(parse_grid(a.t))
    if np.any(t <= 0):
        raise ValidationError("simulate needs target times t > 0")
    steps = int(math.ceil(float(t.max()) / a.dt - 1e-9))
    sc = SimulationConfig(dt=a.dt, horizon=steps * a.dt, paths=a.paths, seed=a.seed,
                          fine_factor=a.fine_factor)
    cfg.grids["t"] = t.tolist()
    cfg.mc = {"paths": a.paths, "dt": a.dt, "horizon": sc.horizon, "fine_factor": a.fine_factor,
              "plain": bool(a.plain)}
    if a.plain:
        cfg.model = None
        off = np.abs(t / a.dt - np.rint(t / a.dt)) > 1e-9
        if np.any(off):
            raise ValidationError("plain fOU targets must lie on the dt grid")
        est = estimate_fou(p, sc, t)
        scheme = {"fbm": "exact circulant embedding (Cholesky fallback)",
                  "fou": "Riemann-Stieltjes sum on the dt grid"}
    else:
        est = estimate_timechanged(p, _model(a.model), t, sc)
        scheme = {"fbm": "exact circulant embedding (Cholesky fallback)",
                  "fou": "Riemann-Stieltjes sum on the fine grid dt/fine_factor",
                  "subordinator": "i.i.d. increments on the operational dt grid",
                  "evaluation": "nearest fine-grid point to the E(t) bracket midpoint"}
    cfg.tolerances = {"band": "3*se_var + bias"}
    summary = {"scheme": scheme,
               "estimates": [{"t": e.t, "mean": e.mean, "var": e.var, "m4": e.m4, "se_mean": e.se_mean,
                              "se_var": e.se_var, "se_m4": e.se_m4, "bias": e.bias} for e in est]}
    _emit(cfg, ["t", "mean", "var", "m4", "se_var"],
          ((e.t, e.mean, e.var, e.m4, e.se_var) for e in est), summary)
    return EXIT_OK


def _cmd_verify_fp(a, cfg):
    from .fokker_planck import OperatorContext, mild_residual, time_domain_residual

    lams = parse_grid(a.lam)
    xs = parse_grid(a.x)
    if any(x == 0 for x in xs):
        raise ValidationError("x = 0 is outside the operator domain R* = R \\ {0}: "
                              "L(d^2 p_H/dx^2) is not integrable at x = 0 "
                              "(the integrand behaves like s^(-1-H) as s -> 0)")
    if any(not l > 0 for l in lams):
        raise ValidationError("verify-fp needs lambda > 0")
    ctx = OperatorContext(_params(a), _model(a.model))
    cfg.grids.update(lam=lams, x=xs)
    cfg.options["time_domain"] = bool(a.time_domain)
    cfg.tolerances = {"mild_relative": a.mild_tol}
    rows = []
    worst = 0.0
    for lam in lams:
        for x in xs:
            r = mild_residual(ctx, lam, x)
            worst = max(worst, r.relative)
            rows.append(("mild", lam, x, r.residual, r.scale, r.relative, a.mild_tol))
    summary = {"max_mild_relative": worst, "mild_pass": worst <= a.mild_tol}
    ok = worst <= a.mild_tol
    if a.time_domain:
        tg = parse_grid(a.t_grid, count=True)
        if len(tg) < 2:
            raise ValidationError("--t-grid needs at least two points")
        cfg.grids["t"] = tg
        cfg.tolerances["time_floor"] = a.time_floor
        tmax = 0.0
        for x in xs:
            tr = time_domain_residual(ctx, x, tg[0], tg[-1], len(tg), floor=a.time_floor)
            for ti, res, tol, cap in zip(tr.t, tr.residual, tr.tolerance, tr.caputo):
                rows.append(("time", float(ti), x, float(res), abs(float(cap)), float(res / tol), float(tol)))
                tmax = max(tmax, float(res / tol))
        summary.update(max_time_ratio=tmax, time_pass=tmax <= 1.0)
        ok = ok and tmax <= 1.0
    summary["pass"] = ok
    _emit(cfg, ["form", "lambda_or_t", "x", "residual", "scale", "relative", "tolerance"], rows, summary)
    return EXIT_OK if ok else EXIT_FAILED


def _cmd_check(a, cfg, stdout):
    from .acceptance import run_suite

    only = None if a.only is None else [int(v) for v in parse_grid(a.only)]
    cfg.options.update(quick=bool(a.quick), only=only)

    def show(r):
        stdout.write(r.line() + "\n")
        stdout.flush()

    results = run_suite(quick=a.quick, only=only, progress=show)
    ok = all(r.passed for r in results)
    stdout.write(f"{'PASS' if ok else 'FAIL'}: {sum(r.passed and not r.skipped for r in results)} passed, "
                 f"{sum(not r.passed for r in results)} failed, {sum(r.skipped for r in results)} skipped\n")
    if a.out:
        side = {"schema": SCHEMA, "version": __version__, "config": cfg.to_dict(),
                "results": [{"number": r.number, "name": r.name, "status": r.status, "elapsed": r.elapsed,
                             "budget": r.budget, "note": r.note,
                             "metrics": {k: {"value": v, "tolerance": t} for k, (v, t) in r.metrics.items()}}
                            for r in results]}
        Path(a.out).write_text(_dumps(side))
    return EXIT_OK if ok else EXIT_FAILED


_COMMANDS = {"variance": _cmd_variance, "moments": _cmd_moments, "density": _cmd_density,
             "fe": _cmd_fe, "simulate": _cmd_simulate, "verify-fp": _cmd_verify_fp}


_NEG_VALUE = re.compile(r"^-[\d.]")


def _join_negative_values(argv):
    # argparse takes "-4:4:0.01" for an option; bind such values to their flag
    out = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEG_VALUE.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def _parse(argv):
    ap = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    a = ap.parse_args(argv)
    if a.subcommand is None:
        raise ValidationError("a subcommand is required: " + ", ".join([*_COMMANDS, "check"]))
    if getattr(a, "config", None):
        sub = ap._subparsers._group_actions[0].choices[a.subcommand]
        known = {act.dest for act in sub._actions}
        values = read_config_file(a.config)
        alias = {"lambda": "lam"}
        values = {alias.get(k, k): v for k, v in values.items()}
        bad = sorted(set(values) - known - {"config"})
        if bad:
            raise ValidationError(f"unknown config keys for {a.subcommand}: {', '.join(bad)}")
        conv = {}
        for act in sub._actions:
            if act.dest in values:
                v = values[act.dest]
                if isinstance(act, argparse._StoreTrueAction):
                    conv[act.dest] = v.lower() in ("1", "true", "yes", "on")
                else:
                    conv[act.dest] = act.type(v) if act.type else v
        sub.set_defaults(**conv)
        a = ap.parse_args(argv)
    return a


def run(argv=None, stdout=None, stderr=None) -> int:
    """Execute one command line; returns the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        a = _parse(argv)
        cfg = RunConfig(a.subcommand, model=getattr(a, "model", None), hurst=getattr(a, "hurst", None),
                        theta=getattr(a, "theta", None), seed=getattr(a, "seed", None), out=a.out)
        if a.subcommand == "check":
            return _cmd_check(a, cfg, stdout)
        return _COMMANDS[a.subcommand](a, cfg) if cfg.out else _run_stdout(a, cfg, stdout)
    except (DomainError, UnsupportedModelError, ValueError) as exc:
        return _fail(stderr, exc, EXIT_INVALID)
    except NonConvergenceError as exc:
        return _fail(stderr, exc, EXIT_NONCONVERGENCE)
    except TcfouError as exc:
        return _fail(stderr, exc, EXIT_INVALID)


def _run_stdout(a, cfg, stdout):
    old = sys.stdout
    sys.stdout = stdout
    try:
        return _COMMANDS[a.subcommand](a, cfg)
    finally:
        sys.stdout = old


def _fail(stderr, exc, code):
    stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
