"""Batch command-line front end.

Each verification family maps to a subcommand; ``verify-all`` reproduces
the full acceptance suite.  Configuration comes from an INI-style file
(sections [grid], [scan], [ggmt], [evolve], [output]) with flags taking
precedence; every report embeds a hash of the effective configuration and
a stable machine tag per check.  Reports are deterministic: rerunning a
command produces byte-identical JSON apart from the timestamp and
wall-time fields.

Exit codes: 0 all checks passed, 1 at least one check failed, 2 bad
configuration, 3 numerical failure (a diagnostics file is written).

Example:

    ksmode ggmt --l 2 --alpha 0.2 --p 4 --theta 0.5
    ksmode spectrum --l 4
    ksmode verify-all --output-dir reports/
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import os
import sys
import time
import traceback
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import acceptance, evolution, ggmt, operators, profile, spectra, waveop
from .acceptance import Check
from .radial import DivergentTailError, RadialFunction, make_grid

DEFAULTS = {
    "grid": {"n": 400, "rmax": 40.0, "stretch": "uniform", "ratio": 1.0},
    "scan": {"threshold": 0.05, "n0": 200, "rmax0": 40.0, "levels": 3,
             "growth": 30.0},
    "ggmt": {"l": 2, "alpha": 0.2, "p": 4.0, "theta": 0.5, "w_eps": 0.01,
             "w_power": -1.2, "w_floor": 0.02},
    "evolve": {"dt": 0.01, "horizon": 5.0, "amplitude": 1e-3},
    "output": {"dir": ""},
}

_INT_KEYS = {("grid", "n"), ("scan", "n0"), ("scan", "levels"), ("ggmt", "l")}


@dataclass
class RunConfig:
    """Effective configuration of one CLI run (defaults < file < flags)."""
    values: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | None, overrides: dict) -> "RunConfig":
        values = {sec: dict(kv) for sec, kv in DEFAULTS.items()}
        if path:
            parser = configparser.ConfigParser()
            read = parser.read(path)
            if not read:
                raise ConfigError(f"config file not found: {path}")
            for sec in parser.sections():
                if sec not in values:
                    raise ConfigError(f"unknown config section [{sec}]")
                for key, raw in parser.items(sec):
                    if key not in values[sec]:
                        raise ConfigError(f"unknown config key {sec}.{key}")
                    values[sec][key] = _parse_value(sec, key, raw)
        for (sec, key), val in overrides.items():
            if val is not None:
                values[sec][key] = val
        cfg = cls(values)
        cfg.validate()
        return cfg

    def __getitem__(self, seckey):
        sec, key = seckey
        return self.values[sec][key]

    def validate(self) -> None:
        g = self.values["grid"]
        if g["n"] < 16:
            raise ConfigError("grid.n must be at least 16")
        if g["rmax"] <= 0:
            raise ConfigError("grid.rmax must be positive")
        if g["stretch"] not in ("uniform", "geometric"):
            raise ConfigError("grid.stretch must be uniform or geometric")
        if g["stretch"] == "geometric" and g["ratio"] <= 0:
            raise ConfigError("grid.ratio must be positive")
        s = self.values["scan"]
        if not (s["levels"] >= 3 and s["n0"] >= 16):
            raise ConfigError("scan needs levels >= 3 and n0 >= 16")
        gg = self.values["ggmt"]
        if not (-gg["l"] <= gg["alpha"] < gg["l"] + 0.5):
            raise ConfigError("ggmt.alpha outside [-l, l + 1/2)")
        if gg["p"] <= 1.0 or not (0.0 <= gg["theta"] <= 1.0):
            raise ConfigError("ggmt needs p > 1 and theta in [0, 1]")
        e = self.values["evolve"]
        if e["dt"] <= 0 or e["dt"] > 0.05 or e["horizon"] <= 0:
            raise ConfigError("evolve needs 0 < dt <= 0.05 and horizon > 0")

    def grid(self):
        g = self.values["grid"]
        stretch = "uniform" if g["stretch"] == "uniform" else \
            ("geometric", g["ratio"])
        return make_grid(g["n"], g["rmax"], stretch)

    def canonical(self) -> str:
        # the output location is not part of the computation's identity
        lines = []
        for sec in sorted(self.values):
            if sec == "output":
                continue
            for key in sorted(self.values[sec]):
                lines.append(f"{sec}.{key}={_fmt(self.values[sec][key])}")
        return "\n".join(lines)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


class ConfigError(ValueError):
    pass


def _parse_value(sec, key, raw):
    if (sec, key) in _INT_KEYS:
        return int(raw)
    if key in ("stretch", "dir"):
        return raw.strip()
    return float(raw)


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _json_text(obj, indent=0) -> str:
    """Deterministic JSON with floats at 17 significant digits."""
    pad = " " * indent
    if isinstance(obj, dict):
        items = [f'{pad} "{k}": {_json_text(obj[k], indent + 1).lstrip()}'
                 for k in obj]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        items = [pad + " " + _json_text(v, indent + 1).lstrip() for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g")
    return json.dumps(str(obj))


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg["output", "dir"] or os.environ.get("KSMODE_OUTDIR", "reports")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_summary(cfg, command, checks, extra, t0) -> Path:
    summary = {
        "command": command,
        "config_hash": cfg.hash(),
        "checks": [c.as_dict() for c in checks],
        "wall_time": time.perf_counter() - t0,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        summary["details"] = extra
    path = _out_dir(cfg) / f"{command.replace('-', '_')}_summary.json"
    path.write_text(_json_text(summary) + "\n")
    return path


def _print_checks(checks) -> None:
    for c in checks:
        state = "PASS" if c.passed else "FAIL"
        print(f"[{state}] {c.name}: value={_fmt(float(c.value))} "
              f"tol={_fmt(float(c.tolerance))}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_profile_check(cfg, args):
    checks = acceptance.criterion_profile()
    bounds_ok = ggmt.pointwise_q_bounds(cfg.grid())
    checks.append(Check("pointwise profile bounds", "profile.bounds",
                        float(bounds_ok), 0.0, bounds_ok))
    return checks, None


def cmd_ggmt(cfg, args):
    gc = cfg.values["ggmt"]
    weight = ggmt.paper_weight(gc["w_eps"], gc["w_power"], gc["w_floor"])
    rep = ggmt.l2_pipeline(l=gc["l"], alpha=gc["alpha"], p=gc["p"],
                           theta=gc["theta"], W=weight)
    checks = [
        Check("N below the certification threshold", "ggmt.bigN_lt_1",
              rep.bigN, 1.0, rep.bigN < 1.0),
        Check("potential limit at infinity positive", "ggmt.u_inf",
              rep.u_infinity, 0.0, rep.u_infinity > 0.0),
    ]
    if (gc["l"], gc["alpha"], gc["p"], gc["theta"],
            gc["w_eps"], gc["w_power"], gc["w_floor"]) == (2, 0.2, 4.0, 0.5,
                                                           0.01, -1.2, 0.02):
        checks.insert(0, acceptance._within(
            "mu against the reference value", "ggmt.mu", rep.mu, 1.9137, 5e-3))
        checks.insert(1, acceptance._within(
            "N against the reference value", "ggmt.bigN", rep.bigN,
            0.8687, 5e-3))
    return checks, rep.to_dict()


def cmd_spectrum(cfg, args):
    s = cfg.values["scan"]
    ladder = spectra.refinement_ladder(n0=s["n0"], rmax0=s["rmax0"],
                                       levels=s["levels"], growth=s["growth"])
    accepted, candidates = spectra.unstable_scan_detailed(
        args.l, threshold=s["threshold"], ladder=ladder)
    expected = {0: [-1.0], 1: [-0.5]}.get(args.l, [])
    checks = [Check(f"class {args.l}: accepted set size",
                    f"spectra.l{args.l}_count", float(len(accepted)),
                    float(len(expected)), len(accepted) == len(expected))]
    for rep, target in zip(accepted, expected):
        checks.append(acceptance._within(
            f"class {args.l}: eigenvalue", f"spectra.l{args.l}_eig",
            rep.lam.real, target, 5e-3))
    rows = [{"l": c.l, "re_lambda": c.lam.real, "im_lambda": c.lam.imag,
             "residual": c.residual, "decay_exp": c.decay_exponent,
             "origin_exp": c.origin_exponent, "converged": c.converged,
             "accepted": c.accepted} for c in candidates]
    out = _out_dir(cfg) / f"spectrum_l{args.l}.csv"
    _write_csv(out, rows, ["l", "re_lambda", "im_lambda", "residual",
                           "decay_exp", "origin_exp", "converged", "accepted"])
    detail = {"accepted": [[r.lam.real, r.lam.imag] for r in accepted],
              "csv": out.name}
    return checks, detail


def cmd_waveop_check(cfg, args):
    checks = acceptance.criterion_waveop()
    ids = waveop.coefficient_identity_residuals(np.linspace(0.05, 50.0, 2000))
    checks.append(acceptance._at_most("drift coefficient identity",
                                      "waveop.coef_drift", ids["drift"], 1e-8))
    checks.append(acceptance._at_most("potential coefficient identity",
                                      "waveop.coef_potential",
                                      ids["potential"], 1e-8))
    nv = waveop.nonvanishing_check(lambda r: profile.q_deriv(r, 1))
    checks.append(Check("weight non-vanishing on the half line",
                        "waveop.nonvanishing", nv.origin_margin, 0.0, nv.passed))
    checks += acceptance.criterion_schrodinger()
    return checks, None


def cmd_coercivity(cfg, args):
    return acceptance.criterion_coercivity(), None


def cmd_evolve_linear(cfg, args):
    grid = cfg.grid()
    r = grid.nodes
    dt = cfg["evolve", "dt"]
    horizon = cfg["evolve", "horizon"]
    checks = []
    rows = []
    for l, mode, rate in ((0, profile.lambda_q(r), 1.0),
                          (1, profile.q_deriv(r, 1), 0.5)):
        op = operators.assemble_Ll(l, grid)
        proj = spectra.build_projection(
            l, [spectra.mode_report(op, -rate, l)], op)
        tr = evolution.linear_evolve(l, RadialFunction(grid, mode), dt,
                                     horizon, op=op, projection=proj)
        fitted = evolution.fit_rate(tr)
        checks.append(acceptance._within(f"class {l} growth rate",
                                         f"evolution.rate_l{l}", fitted, rate,
                                         0.02))
        rows += [{"l": l, "tau": t, "norm": n, "mode_coeff": float(np.real(c[0]))}
                 for t, n, c in zip(tr.times, tr.norms, tr.mode_coeffs)]
    out = _out_dir(cfg) / "evolve_linear_trace.csv"
    _write_csv(out, rows, ["l", "tau", "norm", "mode_coeff"])
    return checks, {"csv": out.name}


def cmd_evolve_nonlinear(cfg, args):
    grid = cfg.grid()
    r = grid.nodes
    dt = cfg["evolve", "dt"]
    horizon = cfg["evolve", "horizon"]
    qv = profile.q(r)
    w = operators.r2_mass_weights(grid)
    tr = evolution.nonlinear_radial_evolve(RadialFunction(grid, qv), dt,
                                           horizon, keep_states=True)
    qn = np.sqrt(np.sum(w * qv ** 2))
    drift = max(np.sqrt(np.sum(w * (s - qv) ** 2)) for s in tr.states) / qn
    h = float(np.max(np.diff(r)))
    checks = [acceptance._at_most("steady-state drift", "evolution.steady_drift",
                                  drift, 10.0 * (h * h + dt * dt))]
    defect = evolution.partial_mass_crosscheck(RadialFunction(grid, qv), 1e-3)
    m = evolution.partial_mass(RadialFunction(grid, qv))
    bound = 10.0 * (h * h + 1e-6) * float(np.max(np.abs(m)))
    checks.append(acceptance._at_most("partial-mass cross-check",
                                      "crossrep.partial_mass", defect, bound))
    rows = [{"tau": t, "norm": n} for t, n in zip(tr.times, tr.norms)]
    out = _out_dir(cfg) / "evolve_nonlinear_trace.csv"
    _write_csv(out, rows, ["tau", "norm"])
    return checks, {"boundary_flag": bool(tr.boundary_flag), "csv": out.name}


def cmd_shoot(cfg, args):
    grid = cfg.grid()
    r = grid.nodes
    amp = cfg["evolve", "amplitude"]
    w = operators.r2_mass_weights(grid)
    qh = evolution.discrete_steady_profile(grid)
    opf = evolution.flow_linearization(grid, qh)
    projf = spectra.build_projection(0, [spectra.mode_report(opf, -1.0, 0)], opf)
    bump = np.real(projf.project_stable(np.exp(-(r - 4.0) ** 2)))
    bump /= np.sqrt(np.sum(w * bump ** 2))
    res = evolution.shoot_stable_manifold(
        RadialFunction(grid, amp * bump), (-4.0 * max(amp, 1e-3), 4.0 * max(amp, 1e-3)),
        projf, dt=0.02, horizon=8.0, base_profile=qh)
    checks = [
        Check("shooting bisection converged", "evolution.shoot_conv",
              res.a_star, 0.0, res.converged),
        acceptance._at_most("matched amplitude", "evolution.shoot_astar",
                            abs(res.a_star), 0.1 * max(amp, 1e-12)),
    ]
    detail = {"a_star": res.a_star, "bracket_width": res.bracket_width,
              "converged": res.converged,
              "departure_sign_low": res.departure_sign_low,
              "departure_sign_high": res.departure_sign_high}
    return checks, detail


def cmd_verify_all(cfg, args):
    checks = []
    detail = {}
    for key, fn in acceptance.CRITERIA.items():
        result = fn()
        ok = all(c.passed for c in result)
        print(f"criterion {key}: {'PASS' if ok else 'FAIL'}")
        checks += result
        detail[key] = "pass" if ok else "fail"
    return checks, detail


def _write_csv(path: Path, rows, fieldnames) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) if isinstance(v, float) else v
                             for k, v in row.items()})


COMMANDS = {
    "profile-check": cmd_profile_check,
    "ggmt": cmd_ggmt,
    "spectrum": cmd_spectrum,
    "waveop-check": cmd_waveop_check,
    "coercivity": cmd_coercivity,
    "evolve-linear": cmd_evolve_linear,
    "evolve-nonlinear": cmd_evolve_nonlinear,
    "shoot": cmd_shoot,
    "verify-all": cmd_verify_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ksmode",
        description="Desk-scale numerical verification of the mode-stability "
                    "analysis for the explicit self-similar chemotaxis "
                    "blowup profile.")
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--output-dir", help="report directory "
                        "(default $KSMODE_OUTDIR or ./reports)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        # accepted both before and after the subcommand; SUPPRESS keeps a
        # value parsed at the top level from being clobbered by the default
        p.add_argument("--config", default=argparse.SUPPRESS)
        p.add_argument("--output-dir", default=argparse.SUPPRESS)
        if name == "spectrum":
            p.add_argument("--l", type=int, required=True,
                           help="spherical class index")
        if name == "ggmt":
            p.add_argument("--l", type=int)
            p.add_argument("--alpha", type=float)
            p.add_argument("--p", type=float)
            p.add_argument("--theta", type=float)
        if name in ("evolve-linear", "evolve-nonlinear", "shoot"):
            p.add_argument("--dt", type=float)
            p.add_argument("--horizon", type=float)
            p.add_argument("--amplitude", type=float)
        p.add_argument("--n", type=int, help="grid nodes")
        p.add_argument("--rmax", type=float, help="outer radius")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        ("grid", "n"): getattr(args, "n", None),
        ("grid", "rmax"): getattr(args, "rmax", None),
        ("output", "dir"): args.output_dir,
        ("ggmt", "l"): getattr(args, "l", None) if args.command == "ggmt" else None,
        ("ggmt", "alpha"): getattr(args, "alpha", None),
        ("ggmt", "p"): getattr(args, "p", None),
        ("ggmt", "theta"): getattr(args, "theta", None),
        ("evolve", "dt"): getattr(args, "dt", None),
        ("evolve", "horizon"): getattr(args, "horizon", None),
        ("evolve", "amplitude"): getattr(args, "amplitude", None),
    }
    try:
        cfg = RunConfig.load(args.config, overrides)
    except (ConfigError, configparser.Error) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        checks, detail = COMMANDS[args.command](cfg, args)
    except (DivergentTailError, evolution.EvolutionError, RuntimeError,
            np.linalg.LinAlgError) as err:
        diag = _out_dir(cfg) / f"{args.command.replace('-', '_')}_diagnostics.txt"
        diag.write_text(f"{err}\n\n{traceback.format_exc()}")
        print(f"numerical error: {err} (diagnostics: {diag})", file=sys.stderr)
        return 3
    path = _write_summary(cfg, args.command, checks, detail, t0)
    _print_checks(checks)
    print(f"summary: {path}")
    return 0 if all(c.passed for c in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
