"""Time integration of the renormalized flow, linear and nonlinear.

Linear runs integrate d_tau eps = -L_l eps with Crank-Nicolson (one LU
factorization, reused every step) and record L^2(r^2 dr) norms plus the
coefficients against supplied left modes; the fitted growth rates reproduce
the eigenvalues +1 and +1/2 of the scaling and translation modes.

Nonlinear runs integrate the radial renormalized equation

    d_tau Psi = Delta_0 Psi - (1/2) Lambda Psi + (1/r^2) d_r(r^2 Psi D_2^{-1} Psi)

with an IMEX scheme: the stiff linear part is Crank-Nicolson (same reused
LU), the flux term second-order Adams-Bashforth after a predictor-corrector
first step.  The blowup profile is the steady state; a shooting experiment
tunes the amplitude of the unstable direction so that stably-perturbed data
relaxes back to the profile, the desk-scale analog of the stable-manifold
matching.

Evolution grids default to uniform spacing: the flux term is explicit, so
node clustering near the origin would only tighten its CFL restriction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import profile
from .operators import assemble_Ll, r2_mass_weights, OperatorMatrix
from .radial import RadialFunction, RadialGrid, cumulative_power_integral, \
    fd_deriv1

__all__ = [
    "EvolutionTrace", "ShootingResult", "EvolutionError", "linear_evolve",
    "nonlinear_radial_evolve", "nonlinear_term", "partial_mass",
    "partial_mass_crosscheck", "shoot_stable_manifold", "fit_rate",
]

_SOLVE_TOL = 1e-10


class EvolutionError(RuntimeError):
    """Step failure; carries the last valid state and its time."""

    def __init__(self, message, tau=None, state=None):
        super().__init__(message)
        self.tau = tau
        self.state = state


@dataclass
class EvolutionTrace:
    """Recorded time series of one run."""
    times: np.ndarray
    norms: np.ndarray
    mode_coeffs: np.ndarray | None
    scheme: str
    dt: float
    l: int | None
    states: np.ndarray | None = field(default=None, repr=False)
    boundary_flag: bool = False


@dataclass
class ShootingResult:
    a_star: float
    bracket_width: float
    converged: bool
    departure_sign_low: int
    departure_sign_high: int


def fit_rate(trace: EvolutionTrace, window=(0.0, None)) -> float:
    """Least-squares exponential rate of the norm history over a tau window."""
    t0, t1 = window
    t1 = trace.times[-1] if t1 is None else t1
    mask = (trace.times >= t0) & (trace.times <= t1) & (trace.norms > 0.0)
    return float(np.polyfit(trace.times[mask], np.log(trace.norms[mask]), 1)[0])


def _check_solve(a_op, x, rhs):
    defect = np.linalg.norm(a_op @ x - rhs)
    denom = np.linalg.norm(a_op, np.inf) * np.linalg.norm(x) + np.linalg.norm(rhs)
    if defect > _SOLVE_TOL * denom:
        raise EvolutionError(f"implicit solve defect {defect:.2e} too large")


def linear_evolve(l: int, eps0: RadialFunction, dt: float, horizon: float,
                  op: OperatorMatrix | None = None, projection=None,
                  keep_states: bool = False) -> EvolutionTrace:
    """Crank-Nicolson integration of d_tau eps = -L_l eps.

    Records the L^2(r^2 dr) norm each step and, when a ProjectionPair is
    supplied, the coefficients against its left modes.
    """
    if dt > 0.05:
        raise ValueError("dt must be <= 0.05")
    grid = eps0.grid
    a = (op or assemble_Ll(l, grid)).entries
    w = r2_mass_weights(grid)
    n_steps = int(round(horizon / dt))
    eye = np.eye(grid.n)
    lhs = eye + 0.5 * dt * a
    rhs_mat = eye - 0.5 * dt * a
    lu = scipy.linalg.lu_factor(lhs)
    eps = eps0.values.astype(complex if np.iscomplexobj(eps0.values) else float)
    times = np.empty(n_steps + 1)
    norms = np.empty(n_steps + 1)
    coeffs = [] if projection is not None else None
    states = [] if keep_states else None

    def record(k, vec):
        times[k] = k * dt
        norms[k] = np.sqrt(np.real(np.sum(w * np.abs(vec) ** 2)))
        if coeffs is not None:
            coeffs.append(projection.coefficients(vec))
        if states is not None:
            states.append(vec.copy())

    record(0, eps)
    for k in range(1, n_steps + 1):
        rhs = rhs_mat @ eps
        eps = scipy.linalg.lu_solve(lu, rhs)
        _check_solve(lhs, eps, rhs)
        record(k, eps)
    return EvolutionTrace(times=times, norms=norms,
                          mode_coeffs=np.array(coeffs) if coeffs else None,
                          scheme="crank-nicolson", dt=dt, l=l,
                          states=np.array(states) if states else None)


def nonlinear_term(psi: RadialFunction) -> RadialFunction:
    """Flux term N(psi) = (1/r^2) d_r ( r^2 psi D_2^{-1} psi ), divergence form."""
    return RadialFunction(psi.grid, _nl_rhs(psi.values, psi.grid))


def _nl_rhs(values, grid):
    """Finite-volume divergence form of the flux term.

    Writes r^2 psi D_2^{-1} psi = psi(r) int_0^r psi s^2 ds =: phi and
    evaluates N_j = 3 (phi_R - phi_L) / (r_R^3 - r_L^3) over the cell
    around node j.  A plain stencil for (1/r^2) d_r phi loses all accuracy
    at the first nodes (the 1/r^2 amplifies its truncation error to O(1));
    the exact cell volumes make the scheme exact for constant psi and
    uniformly O(h^2).  Cell faces at midpoints, [0, .] for the first cell,
    Dirichlet ghost past rmax for the last.
    """
    psi = np.asarray(values)
    r = grid.nodes
    cum = cumulative_power_integral(psi, grid, 2.0, 0.0)
    mids = 0.5 * (r[:-1] + r[1:])
    u, v = r[:-1], r[1:]
    m0 = (mids ** 3 - u ** 3) / 3.0
    m1 = (mids ** 4 - u ** 4) / 4.0
    cv = (m1 - u * m0) / (v - u)
    cu = m0 - cv
    cum_mid = cum[:-1] + cu * psi[:-1] + cv * psi[1:]
    phi_mid = 0.5 * (psi[:-1] + psi[1:]) * cum_mid
    r_out = r[-1] + 0.5 * (r[-1] - r[-2])
    phi = np.concatenate(([0.0], phi_mid, [0.5 * psi[-1] * cum[-1]]))
    faces3 = np.concatenate(([0.0], mids ** 3, [r_out ** 3]))
    return 3.0 * np.diff(phi) / np.diff(faces3)


def nonlinear_radial_evolve(psi0: RadialFunction, dt: float, horizon: float,
                            keep_states: bool = False,
                            negativity_tol: float = 1e-8,
                            stop_when=None) -> EvolutionTrace:
    """IMEX (Crank-Nicolson + AB2) integration of the radial renormalized flow.

    The linear part -Delta_0 + (1/2) Lambda is implicit with one reused LU;
    the quadratic flux is explicit (AB2 after a predictor-corrector start).
    A step driving min(Psi) below -negativity_tol * ||Psi||_inf or blowing
    up the norm raises EvolutionError with the last valid state; the trace
    flags any run whose boundary value exceeds 1e-6 ||Psi||_inf.  An
    optional ``stop_when(state, step_index)`` predicate truncates the run
    (the offending state is kept in the trace).
    """
    grid = psi0.grid
    lin = assemble_Ll(0, grid, zero_profile=True).entries
    eye = np.eye(grid.n)
    lhs = eye + 0.5 * dt * lin
    rhs_mat = eye - 0.5 * dt * lin
    lu = scipy.linalg.lu_factor(lhs)
    w = r2_mass_weights(grid)
    n_steps = int(round(horizon / dt))
    psi = psi0.values.astype(float).copy()
    scale0 = np.max(np.abs(psi))
    times = np.empty(n_steps + 1)
    norms = np.empty(n_steps + 1)
    states = [psi.copy()] if keep_states else None
    boundary_flag = False
    times[0] = 0.0
    norms[0] = np.sqrt(np.sum(w * psi ** 2))

    def advance(current, explicit, k):
        rhs = rhs_mat @ current + dt * explicit
        new = scipy.linalg.lu_solve(lu, rhs)
        _check_solve(lhs, new, rhs)
        scale = np.max(np.abs(new))
        if np.min(new) < -negativity_tol * max(scale, scale0):
            raise EvolutionError(
                f"density negativity {np.min(new):.2e} at tau = {k * dt:.3f}",
                tau=(k - 1) * dt, state=current)
        if not np.isfinite(scale) or scale > 1e6 * max(scale0, 1.0):
            raise EvolutionError(
                f"norm blowup at tau = {k * dt:.3f}", tau=(k - 1) * dt,
                state=current)
        return new

    n_prev = _nl_rhs(psi, grid)
    # predictor-corrector first step keeps the start O(dt^2)
    pred = scipy.linalg.lu_solve(lu, rhs_mat @ psi + dt * n_prev)
    psi = advance(psi, 0.5 * (n_prev + _nl_rhs(pred, grid)), 1)
    n_cur = _nl_rhs(psi, grid)
    last = n_steps
    for k in range(1, n_steps + 1):
        if k > 1:
            psi = advance(psi, 1.5 * n_cur - 0.5 * n_prev, k)
            n_prev, n_cur = n_cur, _nl_rhs(psi, grid)
        times[k] = k * dt
        norms[k] = np.sqrt(np.sum(w * psi ** 2))
        if abs(psi[-1]) > 1e-6 * np.max(np.abs(psi)):
            boundary_flag = True
        if states is not None:
            states.append(psi.copy())
        if stop_when is not None and stop_when(psi, k):
            last = k
            break
    return EvolutionTrace(times=times[:last + 1], norms=norms[:last + 1],
                          mode_coeffs=None, scheme="imex-cnab2", dt=dt, l=None,
                          states=np.array(states) if states is not None else None,
                          boundary_flag=boundary_flag)


def _flux_jacobian(base: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Exact Jacobian of the (quadratic) finite-volume flux at ``base``."""
    n = grid.n
    jac = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        jac[:, j] = 0.5 * (_nl_rhs(base + e, grid) - _nl_rhs(base - e, grid))
        e[j] = 0.0
    return jac


def discrete_steady_profile(grid: RadialGrid, tol: float = 1e-12,
                            max_iter: int = 12) -> np.ndarray:
    """Newton solve for the stepper's own steady state near the profile.

    The IMEX scheme's fixed points are exactly the solutions of
    (-Delta_0 + Lambda/2) Psi = N(Psi) in its discretization; the solution
    differs from the continuum profile by the O(h^2) truncation of the
    grid.  Shooting experiments use it as base point so that the reference
    flow sits still instead of drifting along the scaling instability.
    """
    lin = assemble_Ll(0, grid, zero_profile=True).entries
    psi = profile.q(grid.nodes)
    scale = np.max(np.abs(psi))
    for _ in range(max_iter):
        res = -lin @ psi + _nl_rhs(psi, grid)
        if np.max(np.abs(res)) < tol * scale:
            return psi
        delta = scipy.linalg.solve(lin - _flux_jacobian(psi, grid), res)
        psi = psi + delta
    raise EvolutionError("Newton iteration for the discrete steady state "
                         f"stalled at residual {np.max(np.abs(res)):.2e}")


def flow_linearization(grid: RadialGrid, base: np.ndarray | None = None) -> OperatorMatrix:
    """The nonlinear stepper's own discrete linearization about ``base``.

    Returns the matrix of L = (-Delta_0 + Lambda/2) - N'(base) built from
    the same implicit matrix and finite-volume flux the stepper uses; the
    flux is exactly quadratic, so symmetric differencing with unit
    increments gives its Jacobian without truncation error.  ``base``
    defaults to the discrete steady profile.  Agrees with the assembled
    class-0 operator to O(h^2).
    """
    lin = assemble_Ll(0, grid, zero_profile=True).entries
    if base is None:
        base = discrete_steady_profile(grid)
    return OperatorMatrix(grid=grid, l=0, tag="Ll",
                          entries=lin - _flux_jacobian(base, grid),
                          bc="stepper-consistent linearization")


def partial_mass(psi: RadialFunction) -> np.ndarray:
    """m(r) = 4 pi int_0^r psi s^2 ds on the grid nodes."""
    return 4.0 * np.pi * cumulative_power_integral(psi.values, psi.grid, 2.0, 0.0)


def partial_mass_crosscheck(psi: RadialFunction, dt: float = 1e-3) -> float:
    """Defect between evolving the partial mass and integrating the density.

    The radial flow localizes in the partial mass variable
    mbar(r) = int_0^r Psi s^2 ds as

        d_tau mbar = mbar'' - (2/r + r/2) mbar' + mbar/2 + mbar mbar' / r^2,

    an equation not needed elsewhere in the package, so this cross-check is
    its validation: one explicit Euler step of it must agree with the
    partial mass of one IMEX step of the density to scheme order.  Returns
    the max-norm defect in the 4 pi-scaled mass.
    """
    grid = psi.grid
    r = grid.nodes
    mbar = cumulative_power_integral(psi.values, grid, 2.0, 0.0)
    dm = fd_deriv1(mbar, r)
    d2m = fd_deriv1(dm, r)
    rhs = d2m - (2.0 / r + 0.5 * r) * dm + 0.5 * mbar + mbar * dm / (r * r)
    mbar_step = mbar + dt * rhs
    trace = nonlinear_radial_evolve(psi, dt, dt, keep_states=True)
    psi1 = RadialFunction(grid, trace.states[-1])
    mbar_psi = cumulative_power_integral(psi1.values, grid, 2.0, 0.0)
    return float(4.0 * np.pi * np.max(np.abs(mbar_step - mbar_psi)))


def _departure(psi0_vals, grid, ref_states, size0, projection, dt, horizon,
               tube_factor):
    """Evolve and report (sign of the scaling-mode coefficient, exited?).

    The deviation is measured against the simultaneously evolved
    unperturbed trajectory, so the O(h^2) steady-state residual (which
    seeds the scaling instability identically in both runs) cancels and
    the functional isolates the perturbation's own unstable content.
    """
    w = r2_mass_weights(grid)
    tube = tube_factor * size0

    def outside(state, k):
        return np.sqrt(np.sum(w * (state - ref_states[k]) ** 2)) > tube

    try:
        trace = nonlinear_radial_evolve(RadialFunction(grid, psi0_vals), dt,
                                        horizon, keep_states=True,
                                        stop_when=outside)
        state = trace.states[-1]
        k = len(trace.states) - 1
        exited = bool(outside(state, k))
    except EvolutionError as err:
        # negativity/blowup counts as departure; classify the last valid state
        state = err.state
        k = int(round(err.tau / dt))
        exited = True
    dev = state - ref_states[k]
    coef = float(np.real(projection.coefficients(dev)[0]))
    return (1 if coef >= 0.0 else -1), exited


def shoot_stable_manifold(eps_s0: RadialFunction, bracket, projection,
                          dt: float = 0.01, horizon: float = 8.0,
                          tube_factor: float = 10.0, width_tol: float = 1e-8,
                          base_profile: np.ndarray | None = None) -> ShootingResult:
    """Bisection over the unstable amplitude a in Psi_0 = Q + eps_s0 + a LQ/||LQ||.

    The departure functional is the sign of the scaling-mode coefficient at
    the exit time, the first tau at which the deviation from the reference
    flow (started at the unperturbed base profile) leaves the tube of
    radius ``tube_factor`` times the initial deviation size.  The base
    point defaults to the discrete steady profile, about which the
    reference flow is stationary; ``projection`` should then come from
    ``flow_linearization`` so that the prepared data is stable for the
    discrete dynamics that actually run.  The bracket must produce opposite
    departure signs; bisection stops when its width falls below
    ``width_tol`` times the initial width, and the result is converged when
    the matched amplitude stays in the tube for the whole horizon.
    """
    grid = eps_s0.grid
    r = grid.nodes
    q_vals = discrete_steady_profile(grid) if base_profile is None else base_profile
    w = r2_mass_weights(grid)
    lam_q = profile.lambda_q(r)
    lam_q = lam_q / np.sqrt(np.sum(w * lam_q ** 2))
    ref = nonlinear_radial_evolve(RadialFunction(grid, q_vals), dt, horizon,
                                  keep_states=True).states
    size0 = np.sqrt(np.sum(w * eps_s0.values ** 2))
    if size0 == 0.0:
        size0 = width_tol * (float(bracket[1]) - float(bracket[0]))

    def run(a):
        vals = q_vals + eps_s0.values + a * lam_q
        return _departure(vals, grid, ref, size0, projection, dt, horizon,
                          tube_factor)

    a_lo, a_hi = float(bracket[0]), float(bracket[1])
    width0 = a_hi - a_lo
    sign_lo, _ = run(a_lo)
    sign_hi, _ = run(a_hi)
    if sign_lo == sign_hi:
        raise ValueError(
            f"departure sign {sign_lo} identical at both bracket ends")
    while a_hi - a_lo > width_tol * width0:
        mid = 0.5 * (a_lo + a_hi)
        sign_mid, _ = run(mid)
        if sign_mid == sign_lo:
            a_lo = mid
        else:
            a_hi = mid
    a_star = 0.5 * (a_lo + a_hi)
    _, exited = run(a_star)
    return ShootingResult(a_star=a_star, bracket_width=a_hi - a_lo,
                          converged=not exited,
                          departure_sign_low=sign_lo,
                          departure_sign_high=sign_hi)
