"""The acceptance suite: every headline quantity of the analysis, checked
at a pinned tolerance.

Each criterion function returns a list of Check records; the CLI
``verify-all`` subcommand aggregates them and the test gate asserts them
one by one.  All tolerances are fixed here, not calibrated at run time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import evolution, ggmt, operators, profile, spectra, waveop
from .radial import RadialFunction, make_grid, weighted_inner

__all__ = ["Check", "CRITERIA", "run_criterion", "run_all"]


@dataclass
class Check:
    name: str
    tag: str
    value: float
    tolerance: float
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "tag": self.tag, "value": float(self.value),
                "tolerance": float(self.tolerance), "pass": bool(self.passed)}


def _within(name, tag, value, target, tol) -> Check:
    return Check(name, tag, float(value), float(tol),
                 bool(abs(value - target) <= tol))


def _at_most(name, tag, value, bound) -> Check:
    return Check(name, tag, float(value), float(bound), bool(value <= bound))


def _at_least(name, tag, value, bound) -> Check:
    return Check(name, tag, float(value), float(bound), bool(value >= bound))


# -- 1: the l=2 certification numbers ---------------------------------------

def criterion_ggmt() -> list[Check]:
    t0 = time.perf_counter()
    rep = ggmt.l2_pipeline()
    elapsed = time.perf_counter() - t0
    return [
        _within("mu(2, 0.2) for the reference weight", "ggmt.mu",
                rep.mu, 1.9137, 5e-3),
        _within("eigenvalue count bound N(4, l_eff)", "ggmt.bigN",
                rep.bigN, 0.8687, 5e-3),
        _at_most("N below the certification threshold", "ggmt.bigN_lt_1",
                 rep.bigN, 1.0 - 1e-12),
        _at_most("pipeline runtime [s]", "ggmt.runtime", elapsed, 30.0),
    ]


# -- 2: interpolation and rational constants --------------------------------

def criterion_constants() -> list[Check]:
    from scipy.integrate import quad

    a4, b4 = ggmt.alpha_beta(4.0)
    consts = ggmt.l3_rational_constants()
    b4_quad, _ = quad(lambda rr: rr / (2.0 + rr * rr) ** 2, 4.0, np.inf,
                      epsabs=1e-14, epsrel=1e-13)
    return [
        Check("beta(4) equals 1/36 exactly", "constants.beta4", b4, 0.0,
              b4 == 1.0 / 36.0),
        _at_most("beta(4) quadrature agreement", "constants.beta4_quad",
                 abs(b4_quad - 1.0 / 36.0), 1e-10),
        _within("alpha(4) value", "constants.alpha4", a4, 0.6542, 1e-4),
        _at_most("alpha(4) below 2/3", "constants.alpha4_lt", a4,
                 2.0 / 3.0 - 1e-12),
        Check("first rational constant", "constants.frac1",
              float(consts.frac1), 0.0, consts.frac1 == Fraction(499, 10584)),
        Check("second rational constant", "constants.frac2",
              float(consts.frac2), 0.0,
              consts.frac2 == Fraction(1, 8) + Fraction(29, 17640)),
    ]


# -- 3: the unstable spectrum per spherical class ----------------------------

def criterion_spectra() -> list[Check]:
    t0 = time.perf_counter()
    ladder = spectra.refinement_ladder(n0=200, rmax0=40.0, levels=3,
                                       rmax_factors=(1, 2))
    checks = []
    for l in range(7):
        accepted = spectra.unstable_scan(l, threshold=0.05, ladder=ladder)
        if l == 0:
            target, mode = -1.0, profile.lambda_q
        elif l == 1:
            target, mode = -0.5, lambda r: profile.q_deriv(r, 1)
        else:
            checks.append(Check(f"class {l}: accepted set empty",
                                f"spectra.l{l}_empty", float(len(accepted)),
                                0.0, len(accepted) == 0))
            continue
        checks.append(Check(f"class {l}: exactly one accepted mode",
                            f"spectra.l{l}_count", float(len(accepted)), 1.0,
                            len(accepted) == 1))
        if len(accepted) == 1:
            rep = accepted[0]
            checks.append(_within(f"class {l}: eigenvalue", f"spectra.l{l}_eig",
                                  rep.lam.real, target, 5e-3))
            checks.append(_at_most(f"class {l}: imaginary part",
                                   f"spectra.l{l}_imag", abs(rep.lam.imag), 5e-3))
            w = operators.r2_mass_weights(rep.grid)
            cos = spectra.cosine_similarity(rep.vector, mode(rep.grid.nodes), w)
            checks.append(_at_least(f"class {l}: mode cosine similarity",
                                    f"spectra.l{l}_cosine", cos, 0.999))
    checks.append(_at_most("scan runtime [s]", "spectra.runtime",
                           time.perf_counter() - t0, 600.0))
    return checks


# -- 4: the intertwining map ---------------------------------------------------

def criterion_waveop() -> list[Check]:
    grid = make_grid(20000, 60.0, "uniform")
    r = grid.nodes
    w = grid.quad_weights * r * r
    dq = profile.q_deriv(r, 1)
    tdq = waveop.apply_T(dq, grid)
    ratio = float(np.sqrt(np.sum(w * tdq ** 2) / np.sum(w * dq ** 2)))
    t_r = waveop.apply_T(r, grid)
    # closed form +4r^3/(5(r^2+2)); the printed sign in the source analysis
    # contradicts its own displayed intermediate step (see decisions ledger)
    t_r_err = float(np.max(np.abs(t_r - 4.0 * r ** 3 / (5.0 * (r * r + 2.0)))))
    checks = [
        _at_most("translation mode annihilated: ||T Q'||/||Q'||",
                 "waveop.t_dq", ratio, 1e-5),
        _at_most("T[r] closed form, pointwise", "waveop.t_r", t_r_err, 1e-8),
    ]
    tests = [("gaussian-odd", lambda rr: rr * np.exp(-rr * rr / 4.0)),
             ("rational-odd", lambda rr: rr / (1.0 + rr * rr) ** 3),
             ("shifted-bump", lambda rr: rr * np.exp(-(rr - 3.0) ** 2))]
    for name, fn in tests:
        res = []
        for n in (2000, 4000, 8000):
            g = make_grid(n, 40.0, "uniform")
            res.append(waveop.commutator_residual(fn(g.nodes), g))
        order = float(np.polyfit(np.log([1.0, 2.0, 4.0]), -np.log(res), 1)[0])
        checks.append(_at_least(f"commutator order ({name})",
                                f"waveop.commutator_{name}", order, 1.8))
    return checks


# -- 5: the l=1 comparison operator ------------------------------------------

def criterion_schrodinger() -> list[Check]:
    grid = make_grid(800, 40.0, ("geometric", 30.0 ** (1.0 / 799.0)))
    ritz = spectra.schrodinger_spectrum_check(
        operators.assemble_tilde_L1_prime(grid))
    argmin, vmin = waveop.potential_min_tilde_L1_prime()
    return [
        _at_least("min Ritz value of the localized comparison operator",
                  "schrodinger.min_ritz", ritz, 0.39),
        _within("potential minimum", "schrodinger.potential_min", vmin,
                0.408, 2e-3),
    ]


# -- 6: coercivity property suite ---------------------------------------------

def random_class_function(rng, grid, l) -> RadialFunction:
    """Smooth random bump vanishing at both grid ends, r^l at the origin."""
    r = grid.nodes
    vals = np.zeros_like(r)
    for _ in range(3):
        c = rng.uniform(3.0, 12.0)
        width = rng.uniform(0.6, 2.5)
        amp = rng.uniform(-1.0, 1.0)
        vals += amp * np.exp(-((r - c) / width) ** 2)
    vals *= (r / (1.0 + r)) ** l
    return RadialFunction(grid, vals)


def criterion_coercivity() -> list[Check]:
    grid = make_grid(400, 40.0, ("geometric", 30.0 ** (1.0 / 399.0)))
    rng = np.random.default_rng(20250809)
    worst_margin = np.inf
    interp_ok = True
    violations = 0
    for l in (3, 4, 5, 6):
        for _ in range(50):
            f = random_class_function(rng, grid, l)
            norm2 = float(np.real(weighted_inner(f, f, "r2")))
            form = ggmt.coercivity_form(f, l)
            margin = form - norm2 / 8.0
            worst_margin = min(worst_margin, margin / norm2)
            if margin < 0.0:
                violations += 1
            lhs, rhs, ok = ggmt.interpolation_check(f, l, 4.0)
            interp_ok = interp_ok and ok
            if not ok:
                violations += 1
    return [
        Check("coercivity/interpolation violations over 200 samples",
              "coercivity.violations", float(violations), 0.0, violations == 0),
        _at_least("worst coercivity margin (relative)", "coercivity.margin",
                  worst_margin, 0.0),
    ]


# -- 7: profile identities ------------------------------------------------------

def criterion_profile() -> list[Check]:
    grid = make_grid(2000, 60.0, "uniform")
    elliptic = profile.profile_residual(grid)
    ids = profile.identity_residuals(grid)
    checks = [
        _at_most("elliptic equation residual", "profile.elliptic", elliptic, 1e-9),
        _at_most("once-integrated identity residual", "profile.first_integral",
                 ids["first_integral"], 1e-9),
        _at_most("wave-density ODE residual", "profile.g_over_g_ode",
                 ids["g_over_g_ode"], 1e-6),
    ]
    ns = (200, 400, 800, 1600)
    for l, mode, lam in ((0, profile.lambda_q, -1.0),
                         (1, lambda r: profile.q_deriv(r, 1), -0.5)):
        res = []
        for n in ns:
            g = make_grid(n, 40.0, "uniform")
            w = operators.r2_mass_weights(g)
            v = mode(g.nodes)
            dev = operators.apply_Ll(l, g, v, tail=True) - lam * v
            res.append(np.sqrt(np.sum(w * dev ** 2) / np.sum(w * v ** 2)))
        order = float(np.polyfit(np.log(ns), -np.log(res), 1)[0])
        checks.append(_at_least(f"class {l} eigen-relation grid-halving order",
                                f"profile.eigen_l{l}_order", order, 1.8))
    return checks


# -- 8: renormalized evolution ---------------------------------------------------

def criterion_evolution() -> list[Check]:
    t0 = time.perf_counter()
    grid = make_grid(400, 40.0, "uniform")
    r = grid.nodes
    dt = 0.01
    checks = []

    op0 = operators.assemble_Ll(0, grid)
    tr = evolution.linear_evolve(0, RadialFunction(grid, profile.lambda_q(r)),
                                 dt, 3.0, op=op0)
    checks.append(_within("scaling-mode growth rate", "evolution.rate_l0",
                          evolution.fit_rate(tr), 1.0, 0.02))
    op1 = operators.assemble_Ll(1, grid)
    tr = evolution.linear_evolve(1, RadialFunction(grid, profile.q_deriv(r, 1)),
                                 dt, 3.0, op=op1)
    checks.append(_within("translation-mode growth rate", "evolution.rate_l1",
                          evolution.fit_rate(tr), 0.5, 0.02))

    proj0 = spectra.build_projection(0, [spectra.mode_report(op0, -1.0, 0)], op0)
    stable = np.real(proj0.project_stable(np.exp(-r * r)))
    tr = evolution.linear_evolve(0, RadialFunction(grid, stable), dt, 6.0, op=op0)
    checks.append(Check("stable-projected data decays", "evolution.stable_decay",
                        -evolution.fit_rate(tr, (1.0, 6.0)), 0.0,
                        evolution.fit_rate(tr, (1.0, 6.0)) < 0.0))

    qv = profile.q(r)
    w = operators.r2_mass_weights(grid)
    qn = np.sqrt(np.sum(w * qv ** 2))
    tr = evolution.nonlinear_radial_evolve(RadialFunction(grid, qv), dt, 5.0,
                                           keep_states=True)
    drift = max(np.sqrt(np.sum(w * (s - qv) ** 2)) for s in tr.states) / qn
    h = r[1] - r[0]
    checks.append(_at_most("steady-state drift over tau <= 5",
                           "evolution.steady_drift", drift,
                           10.0 * (h * h + dt * dt)))

    qh = evolution.discrete_steady_profile(grid)
    opf = evolution.flow_linearization(grid, qh)
    projf = spectra.build_projection(0, [spectra.mode_report(opf, -1.0, 0)], opf)
    bump = np.real(projf.project_stable(np.exp(-(r - 4.0) ** 2)))
    bump /= np.sqrt(np.sum(w * bump ** 2))
    a_stars = {}
    for amp in (1e-3, 2e-3):
        res = evolution.shoot_stable_manifold(
            RadialFunction(grid, amp * bump), (-4e-3, 4e-3), projf, dt=0.02,
            horizon=8.0, base_profile=qh)
        a_stars[amp] = res
        checks.append(Check(f"shooting converged (amplitude {amp})",
                            f"evolution.shoot_conv_{amp}", res.a_star, 0.0,
                            res.converged))
        checks.append(_at_most(f"matched amplitude small (amplitude {amp})",
                               f"evolution.shoot_astar_{amp}",
                               abs(res.a_star), 1e-4))
    expo = float(np.log2(abs(a_stars[2e-3].a_star / a_stars[1e-3].a_star)))
    checks.append(_at_least("matched-amplitude scaling exponent",
                            "evolution.shoot_exponent", expo, 1.5))
    checks.append(_at_most("evolution runtime [s]", "evolution.runtime",
                           time.perf_counter() - t0, 600.0))
    return checks


# -- 9: cross-representation consistency -----------------------------------------

def criterion_cross_representation() -> list[Check]:
    grid = make_grid(400, 40.0, ("geometric", 30.0 ** (1.0 / 399.0)))
    rng = np.random.default_rng(7)
    worst = 0.0
    for l in (0, 1, 2, 3):
        kern = operators.kernel_deltal_inv_matrix(grid, l)
        fact = operators.factorized_deltal_inv_matrix(grid, l)
        for _ in range(10):
            x = rng.standard_normal(grid.n)
            diff = np.max(np.abs((kern - fact) @ x))
            scale = max(1.0, np.max(np.abs(kern @ x)))
            worst = max(worst, diff / scale)
    g_u = make_grid(400, 40.0, "uniform")
    qv = profile.q(g_u.nodes)
    defect = evolution.partial_mass_crosscheck(RadialFunction(g_u, qv), 1e-3)
    m = evolution.partial_mass(RadialFunction(g_u, qv))
    h = g_u.nodes[1] - g_u.nodes[0]
    bound = 10.0 * (h * h + 1e-6) * float(np.max(np.abs(m)))
    return [
        _at_most("kernel vs factorized inverse Laplacian on random data",
                 "crossrep.deltal_inv", worst, 1e-6),
        _at_most("partial-mass one-step defect", "crossrep.partial_mass",
                 defect, bound),
    ]


CRITERIA = {
    "1-ggmt": criterion_ggmt,
    "2-constants": criterion_constants,
    "3-spectra": criterion_spectra,
    "4-waveop": criterion_waveop,
    "5-schrodinger": criterion_schrodinger,
    "6-coercivity": criterion_coercivity,
    "7-profile": criterion_profile,
    "8-evolution": criterion_evolution,
    "9-cross-representation": criterion_cross_representation,
}


def run_criterion(key: str) -> list[Check]:
    return CRITERIA[key]()


def run_all() -> dict:
    """Run every criterion; returns {key: [Check, ...]}."""
    return {key: fn() for key, fn in CRITERIA.items()}
