"""Command-line entry point: ``ahm <subcommand> [options]``.

Exit status is 0 when every asserted check passes, 1 when a check fails (the
first failure is named on stderr) and 2 for configuration errors.  A report is
written in every non-configuration case.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import energy_difference, energy_hm, l1_condition, total_energy, total_energy_closed_form
from .curvature import scalar_curvature_oracle, warped
from .energy import Tolerances, Verdict, _jsonable, elementary_inequality, verify_theorem
from .errors import AHMError
from .fixtures import random_perturbation
from .gauge import horizon_value_check, l1_condition_tilde, radial_gauge, transformed_coeffs
from .metric import BackgroundParams, Grid, MetricSpec, regularity_residual, validate_spec
from .specio import SpecFormatError, load_spec, spec_from_dict, spec_to_dict, write_atomic

BUILTIN_PREFIX = "builtin:"


class ConfigError(Exception):
    pass


@dataclass
class Outcome:
    """Report payload, optional CSV rows and the named checks it asserts."""

    report: dict
    checks: dict = field(default_factory=dict)       # name -> (passed, value, tolerance)
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def check(self, name: str, passed: bool, value, tolerance) -> None:
        self.checks[name] = (bool(passed), value, tolerance)

    @property
    def first_failure(self) -> str | None:
        for name, (ok, value, tol) in self.checks.items():
            if not ok:
                return f"{name} (value {value}, tolerance {tol})"
        return None


# ----------------------------------------------------------------------
# argument handling
# ----------------------------------------------------------------------

def builtin_specs() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("ahm").joinpath("data").iterdir()
                  if p.name.endswith(".yaml"))


def resolve_spec(ref: str | None) -> MetricSpec:
    if ref is None:
        raise ConfigError("--config is required for this subcommand")
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        path = resources.files("ahm").joinpath("data", f"{name}.yaml")
        if not path.is_file():
            raise ConfigError(f"unknown builtin spec {name!r}; available: {', '.join(builtin_specs())}")
        import yaml

        return spec_from_dict(yaml.safe_load(path.read_text()))
    p = Path(ref)
    if not p.is_file():
        raise ConfigError(f"spec file {ref!r} not found")
    return load_spec(p)


def parse_grid(text: str | None, default: Grid) -> Grid:
    if text is None:
        return default
    try:
        nr, nxi, nphi = (int(x) for x in text.split(","))
    except ValueError as exc:
        raise ConfigError("--grid expects R,XI,PHI") from exc
    if min(nr, nxi, nphi) < 8:
        raise ConfigError("grid node counts must be >= 8")
    return Grid(nr=nr, nxi=nxi, nphi=nphi)


def parse_int_range(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad integer range {text!r}") from exc


def parse_s_range(text: str) -> np.ndarray:
    """'start:stop:step' -> positive grid start + k step, k integer, inside (0, stop]."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad s range {text!r}; expected start:stop:step") from exc
    if step <= 0 or stop <= start:
        raise ConfigError("s range needs stop > start and step > 0")
    count = int(round((stop - start) / step))
    s = start + step * np.arange(count + 1)
    return s[s > 0]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ahm", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, spec=True):
        if spec:
            p.add_argument("--config", help=f"spec YAML path or {BUILTIN_PREFIX}NAME")
        p.add_argument("--out", help="report path (stdout when omitted)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--grid", help="node counts R,XI,PHI (each >= 8)")
        p.add_argument("--tol", type=float, help="override the tolerance of the main check")
        return p

    common(sub.add_parser("validate", help="decay, positivity and regularity diagnostics"))
    p = common(sub.add_parser("curvature", help="R(g) on a grid with a finite-difference oracle table"))
    p.add_argument("--oracle-points", type=int, default=24)
    common(sub.add_parser("energy", help="E(g), E(g_HM) and their difference"))
    common(sub.add_parser("gauge", help="radial gauge table, coefficient transforms, horizon value"))
    common(sub.add_parser("verify", help="full energy-inequality pipeline"))
    p = common(sub.add_parser("sweep", help="elementary inequality table"), spec=False)
    p.add_argument("--n", default="3..8")
    p.add_argument("--s", default="0:4:0.001")
    p = common(sub.add_parser("fuzz", help="random L1-respecting perturbations through the pipeline"))
    p.add_argument("--n", type=int, default=3, help="dimension when --config is omitted")
    p.add_argument("--a", type=float, default=0.0, help="background a when --config is omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--amplitude", type=float, default=1e-3)
    sub.add_parser("list", help="list the shipped specs")
    return ap


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def _angles_columns(n: int) -> list[str]:
    return ["r", "xi"] + [f"phi{k}" for k in range(3, n + 1)]


def cmd_validate(spec: MetricSpec, args) -> Outcome:
    grid = parse_grid(args.grid, Grid())
    tol = args.tol if args.tol is not None else 1e-10
    diag = validate_spec(spec, grid, tol)
    out = Outcome({"diagnostics": diag.to_dict(), "grid": grid.to_dict(), "regularity_tolerance": tol})
    out.columns = ["check", "passed", "residual", "detail"]
    for name, c in diag.checks.items():
        out.check(name, c.passed, c.residual, tol if name == "regularity" else None)
        out.rows.append([name, c.passed, c.residual, c.detail])
    return out


def cmd_curvature(spec: MetricSpec, args) -> Outcome:
    grid = parse_grid(args.grid, Grid(nr=16, nxi=8, nphi=8))
    tol = args.tol if args.tol is not None else 1e-5
    bg, n = spec.background, spec.n
    r = grid.r_nodes(bg)
    angles, _ = grid.boundary(bg)
    B = angles.shape[0]
    rr, aa = np.repeat(r, B), np.tile(angles, (r.size, 1))
    w = warped(spec, rr, aa)
    deficit = w.deficit
    # oracle on a deterministic subset of the band [2, 10] r+: closer in the 1e-3 step is not
    # resolved, farther out the r^2 growth of the components swamps the differences in roundoff
    far = np.flatnonzero((rr >= 2 * bg.r_plus) & (rr <= 10 * bg.r_plus))
    if far.size == 0:
        rb = np.geomspace(2 * bg.r_plus, 10 * bg.r_plus, 4)
        rr, aa = np.concatenate([rr, np.repeat(rb, B)]), np.concatenate([aa, np.tile(angles, (4, 1))])
        w = warped(spec, rr, aa)
        far = np.flatnonzero(rr >= 2 * bg.r_plus)[-4 * B:]
    pick = far[np.linspace(0, far.size - 1, min(args.oracle_points, far.size)).astype(int)] if far.size else far
    rows, worst = [], 0.0
    for i in pick:
        point = np.concatenate([[rr[i]], aa[i]])
        ref = scalar_curvature_oracle(spec, point, step=1e-3)
        val = float(w.scalar[i])
        res = abs(val - ref)
        worst = max(worst, res)
        rows.append([*point.tolist(), val, ref, res])
    out = Outcome({"grid": grid.to_dict(), "deficit_min": float(deficit.min()), "deficit_max": float(deficit.max()),
                   "oracle_points": len(rows), "oracle_step": 1e-3, "oracle_max_residual": worst,
                   "oracle_tolerance": tol})
    out.columns = _angles_columns(n) + ["value", "reference", "residual"]
    out.rows = rows
    out.check("oracle_agreement", worst <= tol, worst, tol)
    return out


def cmd_energy(spec: MetricSpec, args) -> Outcome:
    grid = parse_grid(args.grid, Grid())
    tol = args.tol if args.tol is not None else 1e-8
    E = total_energy(spec, grid)
    Ec = total_energy_closed_form(spec)
    rel = abs(E - Ec) / max(1.0, abs(Ec))
    l1 = l1_condition(spec, grid)
    out = Outcome({"E_g": E, "E_g_closed_form": Ec, "E_hm": energy_hm(spec), "difference": energy_difference(spec, grid),
                   "r_breve_0": spec.background.r_breve, "beta": spec.background.beta, "l1_condition": l1.passed,
                   "l1_sup": l1.sup, "quadrature_vs_closed_form": rel, "tolerance": tol})
    out.columns = ["quantity", "value", "reference", "residual"]
    out.rows = [["E_g", E, Ec, rel]]
    out.check("energy_quadrature", rel <= tol, rel, tol)
    return out


def cmd_gauge(spec: MetricSpec, args) -> Outcome:
    tol = args.tol if args.tol is not None else 1e-6
    gm = radial_gauge(spec)
    tc = transformed_coeffs(gm, spec)
    report = {"gauge": gm.to_dict(), "transformed_fit_deviation": tc.fit_deviation, "horizon_tolerance": tol}
    out = Outcome(report)
    reg = regularity_residual(spec)
    if reg <= 1e-10:
        hc = horizon_value_check(gm, spec, tol=tol)
        report.update(horizon_residual=hc.residual, rho_horizon_limit=hc.rho_limit,
                      rho_horizon_closed_form=hc.rho_closed_form)
        out.check("horizon_value", hc.matched, hc.residual, tol)
    else:
        report["horizon_residual"] = None
        out.check("regularity", False, reg, 1e-10)
    lt = l1_condition_tilde(gm, spec, tc)
    report["l1_tilde"] = {"passed": lt.passed, "sup": lt.sup, "agrees_with_original": lt.agrees_with_original}
    out.check("l1_tilde_agreement", lt.agrees_with_original, lt.sup, 1e-12)
    out.columns = ["r", "r_tilde", "drtilde_dr"]
    out.rows = [list(x) for x in zip(gm.r_nodes, gm.r_tilde_nodes, gm.rho_nodes)]
    return out


def _report_checks(out: Outcome, rep, tol: Tolerances) -> None:
    flags = rep.hypothesis_flags
    for name in ("validation", "regularity", "beta_match", "scalar_curvature_sign", "l1", "torus_integral"):
        out.check(f"hypothesis_{name}", flags.get(name, False), flags.get(name), True)
    if rep.identity_residual is not None:
        out.check("integrated_identity", rep.identity_residual <= tol.identity, rep.identity_residual, tol.identity)
        if "lower_bound_ordering" in flags:
            out.check("lower_bound_ordering", flags["lower_bound_ordering"], rep.bound_gap, tol.lower_bound)
    if rep.equality_verdict is Verdict.EQUALITY:
        out.check("rigidity", rep.rigidity_residual <= tol.rigidity, rep.rigidity_residual, tol.rigidity)
    if rep.equality_verdict is Verdict.STRICT:
        out.check("strict_positive", rep.difference > 0, rep.difference, 0.0)


def cmd_verify(spec: MetricSpec, args) -> Outcome:
    tol = Tolerances(identity=args.tol) if args.tol is not None else Tolerances()
    grid = parse_grid(args.grid, Grid(nr=48, nxi=16, nphi=6))
    rep = verify_theorem(spec, tol, grid=grid)
    out = Outcome(rep.to_dict())
    _report_checks(out, rep, tol)
    out.columns = ["quantity", "value", "reference", "residual"]
    out.rows = [["difference", rep.difference, rep.lower_bound, rep.bound_gap],
                ["identity_residual", rep.identity_residual, 0.0, rep.identity_residual],
                ["A_integral", rep.A_integral, 0.0, None]]
    return out


def cmd_sweep(args) -> Outcome:
    tol = args.tol if args.tol is not None else 1e-12
    ns = parse_int_range(args.n)
    if not ns or min(ns) < 2:
        raise ConfigError("--n values must be >= 2")
    s = parse_s_range(args.s)
    out = Outcome({})
    out.columns = ["n", "s", "value", "reference", "residual"]
    summary, worst_agree, min_value, spurious = [], 0.0, math.inf, []
    for n in ns:
        d, f = elementary_inequality(n, s)
        scale = n - 1 + s**n + n * s
        agree = np.abs(d - f) / scale
        worst_agree = max(worst_agree, float(agree.max()))
        i = int(np.argmin(d))
        min_value = min(min_value, float(d[i]))
        zeros = s[np.abs(d) <= tol]
        spurious += [(n, float(z)) for z in zeros if abs(z - 1.0) > 1e-9]
        summary.append({"n": n, "min_value": float(d[i]), "argmin_s": float(s[i]), "zeros": zeros.tolist()})
        out.rows += [[n, float(a), float(b), float(c), float(e)] for a, b, c, e in zip(s, d, f, agree)]
    out.report = {"n": ns, "s_range": args.s, "samples_per_n": int(s.size), "summary": summary,
                  "min_value": min_value, "max_relative_disagreement": worst_agree, "tolerance": tol}
    out.check("nonnegative", min_value >= -tol, min_value, tol)
    out.check("forms_agree", worst_agree <= tol, worst_agree, tol)
    out.check("zero_only_at_one", not spurious, spurious[:3], tol)
    return out


def cmd_fuzz(spec: MetricSpec | None, args) -> Outcome:
    if args.samples < 1 or args.amplitude < 0:
        raise ConfigError("--samples must be >= 1 and --amplitude >= 0")
    bg = spec.background if spec is not None else BackgroundParams(args.n, args.a, 1.0, (2 * math.pi,) * (args.n - 2))
    tol = Tolerances(identity=args.tol) if args.tol is not None else Tolerances()
    grid = parse_grid(args.grid, Grid(nr=24, nxi=8, nphi=4))
    identity_grid = Grid(nxi=8, nphi=4)
    rng = np.random.default_rng(args.seed)
    counts = {v.value: 0 for v in Verdict}
    samples, worst_identity, violations = [], 0.0, []
    for k in range(args.samples):
        s = random_perturbation(bg, rng, args.amplitude)
        rep = verify_theorem(s, tol, grid=grid, identity_grid=identity_grid)
        counts[rep.equality_verdict.value] += 1
        if rep.identity_residual is not None:
            worst_identity = max(worst_identity, rep.identity_residual)
        if rep.equality_verdict is Verdict.STRICT and rep.difference < 0:
            violations.append(k)
        samples.append({"index": k, "verdict": rep.equality_verdict.value, "difference": rep.difference,
                        "identity_residual": rep.identity_residual,
                        "failed_gates": sorted(g for g, ok in rep.hypothesis_flags.items() if not ok),
                        "spec": spec_to_dict(s)})
    out = Outcome({"background": {"n": bg.n, "a": bg.a, "r0": bg.r0, "lambda": list(bg.torus_periods)},
                   "seed": args.seed, "samples": args.samples, "amplitude": args.amplitude, "verdicts": counts,
                   "max_identity_residual": worst_identity, "identity_tolerance": tol.identity, "runs": samples})
    out.columns = ["index", "verdict", "difference", "identity_residual"]
    out.rows = [[x["index"], x["verdict"], x["difference"], x["identity_residual"]] for x in samples]
    out.check("identity", worst_identity <= tol.identity, worst_identity, tol.identity)
    out.check("no_counterexample", not violations, violations, 0.0)
    return out


# ----------------------------------------------------------------------
# output
# ----------------------------------------------------------------------

def render(out: Outcome, fmt: str, meta: dict) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(out.columns)
        for row in out.rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in row])
        return buf.getvalue()
    doc = {"meta": meta, "report": out.report,
           "checks": {k: {"passed": ok, "value": v, "tolerance": t} for k, (ok, v, t) in out.checks.items()}}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.command == "list":
        print("\n".join(f"{BUILTIN_PREFIX}{name}" for name in builtin_specs()))
        return 0
    try:
        spec = None
        if args.command != "sweep" and (args.command != "fuzz" or args.config is not None):
            spec = resolve_spec(args.config)
        handlers = {"validate": cmd_validate, "curvature": cmd_curvature, "energy": cmd_energy,
                    "gauge": cmd_gauge, "verify": cmd_verify, "fuzz": cmd_fuzz}
        out = cmd_sweep(args) if args.command == "sweep" else handlers[args.command](spec, args)
    except (ConfigError, SpecFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AHMError as exc:
        out = Outcome({"error": f"{type(exc).__name__}: {exc}"})
        out.check(type(exc).__name__, False, str(exc), None)

    meta = {"version": __version__, "command": args.command,
            "config": {k: v for k, v in sorted(vars(args).items()) if k not in ("out",)}}
    text = render(out, args.format, meta)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    failure = out.first_failure
    if failure:
        print(f"check failed: {failure}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
