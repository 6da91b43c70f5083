"""Dense eigenanalysis of the class-l operators with spurious-mode filtering.

Truncating and discretizing a half-line operator pollutes the finite
spectrum with artifacts of the mesh and of the artificial outer boundary.
A candidate unstable eigenvalue is accepted only when it survives a triple
filter:

1. grid refinement is Richardson-consistent over an (n, 2n, 4n) ladder,
2. the value is insensitive to doubling the domain radius rmax,
3. the eigenvector carries the far-field decay and near-origin power
   signatures that genuine eigenfunctions must have (decay at least
   r^{-3/2}; origin behaviour ~ r^l).

The expected outcome per class: one mode (the scaling mode, eigenvalue -1)
for l = 0, one mode (the translation mode, eigenvalue -1/2) for l = 1, and
an empty set for every l >= 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .operators import OperatorMatrix, assemble_Ll, r2_mass_weights
from .radial import RadialGrid, make_grid

__all__ = [
    "EigenReport", "ProjectionPair", "eig_dense", "exponent_fits",
    "refinement_ladder", "unstable_scan", "unstable_scan_detailed",
    "build_projection", "schrodinger_spectrum_check",
    "transpose_spectrum_defect", "ScanSettings",
]


@dataclass
class ScanSettings:
    """Tolerances of the spurious-mode filters (defaults per design)."""
    abs_tol: float = 5e-3
    decay_cap: float = -1.5
    origin_slack: float = 0.3
    decay_slack: float = 0.5
    residual_tol: float = 1e-8


@dataclass
class EigenReport:
    """One candidate eigenvalue with its filter diagnostics."""
    l: int
    lam: complex
    residual: float
    converged: bool
    decay_exponent: float
    origin_exponent: float
    exponent_consistent: bool
    accepted: bool
    h_defect: float
    rmax_defect: float
    vector: np.ndarray = field(repr=False)
    grid: RadialGrid = field(repr=False)


def eig_dense(a) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a dense matrix with a residual guarantee.

    Returns (eigenvalues, eigenvectors) sorted by real part; every pair has
    relative residual ||A v - lam v|| / ||v|| below 1e-8 ||A|| or the solve
    is reported as non-converged.
    """
    mat = a.entries if isinstance(a, OperatorMatrix) else np.asarray(a)
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix has non-finite entries")
    lams, vecs = scipy.linalg.eig(mat)
    scale = np.linalg.norm(mat, np.inf)
    res = np.linalg.norm(mat @ vecs - vecs * lams[None, :], axis=0) \
        / np.linalg.norm(vecs, axis=0)
    if np.any(res > 1e-8 * scale):
        bad = int(np.argmax(res))
        raise RuntimeError(
            f"eigen residual {res[bad]:.3e} exceeds 1e-8*||A|| = {1e-8 * scale:.3e} "
            f"for eigenvalue {lams[bad]!r}")
    order = np.argsort(lams.real)
    return lams[order], vecs[:, order]


def exponent_fits(values, lam, l, grid: RadialGrid):
    """Least-squares far-field and near-origin exponents of |v|.

    decay window: r in [rmax/20, rmax/2] (clear of the Dirichlet layer);
    origin window: [r_1, min(0.3, 50 r_1)].  Returns (decay_exponent,
    origin_exponent, consistent, reliable); ``consistent`` compares the
    decay against the resolvent bound -min(2, 2(1 - Re lam)) + 0.5, and an
    underflowing vector marks the fit unreliable instead of erroring.
    """
    r = grid.nodes
    v = np.abs(np.asarray(values))
    scale = v.max()
    reliable = True
    decay = 0.0
    origin = 0.0
    outer = (r >= grid.rmax / 20.0) & (r <= grid.rmax / 2.0) & (v > 1e-13 * scale)
    if np.count_nonzero(outer) < 8:
        reliable = False
        decay = -np.inf
    else:
        decay = float(np.polyfit(np.log(r[outer]), np.log(v[outer]), 1)[0])
    inner = (r <= min(0.3, 50.0 * r[0])) & (v > 1e-13 * scale)
    if np.count_nonzero(inner) < 4:
        reliable = False
    else:
        origin = float(np.polyfit(np.log(r[inner]), np.log(v[inner]), 1)[0])
    bound = -min(2.0, 2.0 * (1.0 - np.real(lam)))
    consistent = bool(decay <= bound + 0.5)
    return decay, origin, consistent, reliable


def refinement_ladder(n0: int = 200, rmax0: float = 40.0, levels: int = 3,
                      rmax_factors=(1, 2), growth: float = 30.0) -> dict:
    """Grid ladder {(n, rmax): RadialGrid} for the convergence filters.

    Node counts double per level; all grids share the same total geometric
    growth h_last/h_first, so refining n halves every spacing and two-grid
    Richardson logic applies cleanly.
    """
    grids = {}
    for fac in rmax_factors:
        rmax = rmax0 * fac
        for lev in range(levels):
            n = n0 * 2 ** lev
            ratio = growth ** (1.0 / (n - 1))
            grids[(n, rmax)] = make_grid(n, rmax, ("geometric", ratio))
    return grids


def _nearest(lams: np.ndarray, target: complex) -> complex:
    return lams[np.argmin(np.abs(lams - target))]


def unstable_scan_detailed(l: int, threshold: float = 0.05, ladder=None,
                           settings: ScanSettings | None = None):
    """Run the filtered scan for one class; returns (accepted, candidates).

    ``candidates`` holds every eigenvalue of the finest grid below the
    threshold with its filter diagnostics; ``accepted`` the survivors.
    """
    settings = settings or ScanSettings()
    if ladder is None:
        ladder = refinement_ladder()
    ns = sorted({k[0] for k in ladder})
    rmaxs = sorted({k[1] for k in ladder})
    if len(ns) < 3 or len(rmaxs) < 2:
        raise ValueError("ladder needs >= 3 node counts and >= 2 domain radii")
    spectra = {}
    vectors = {}
    for key, grid in ladder.items():
        lams, vecs = eig_dense(assemble_Ll(l, grid))
        spectra[key] = lams
        vectors[key] = vecs
    n_hi, rmax_hi = ns[-1], rmaxs[-1]
    fine_key = (n_hi, rmax_hi)
    fine_grid = ladder[fine_key]
    lams = spectra[fine_key]
    mat = assemble_Ll(l, fine_grid).entries
    scale = np.linalg.norm(mat, np.inf)
    candidates = []
    accepted = []
    for idx in np.nonzero(lams.real < threshold)[0]:
        lam = lams[idx]
        v = vectors[fine_key][:, idx]
        lam_mid = _nearest(spectra[(ns[-2], rmax_hi)], lam)
        lam_coarse = _nearest(spectra[(ns[-3], rmax_hi)], lam)
        h_defect = abs(lam_mid - lam)
        richardson_ok = abs(lam_coarse - lam_mid) <= 10.0 * h_defect + settings.abs_tol
        lam_other = _nearest(spectra[(n_hi, rmaxs[0])], lam)
        rmax_defect = abs(lam - lam_other)
        rmax_ok = rmax_defect <= settings.abs_tol
        residual = float(np.linalg.norm(mat @ v - lam * v) / np.linalg.norm(v))
        decay, origin, consistent, reliable = exponent_fits(v, lam, l, fine_grid)
        converged = bool(richardson_ok and rmax_ok)
        ok = (converged and residual <= settings.residual_tol * scale
              and reliable and decay <= settings.decay_cap
              and abs(origin - l) <= settings.origin_slack and consistent)
        report = EigenReport(l=l, lam=complex(lam), residual=residual,
                             converged=converged, decay_exponent=decay,
                             origin_exponent=origin,
                             exponent_consistent=consistent,
                             accepted=bool(ok), h_defect=float(h_defect),
                             rmax_defect=float(rmax_defect), vector=v,
                             grid=fine_grid)
        candidates.append(report)
        if ok:
            accepted.append(report)
    return accepted, candidates


def unstable_scan(l: int, threshold: float = 0.05, ladder=None,
                  settings: ScanSettings | None = None):
    """Accepted unstable eigenvalues of class l (may legitimately be empty)."""
    accepted, _ = unstable_scan_detailed(l, threshold, ladder, settings)
    return accepted


@dataclass
class ProjectionPair:
    """Bi-orthonormal right/left modes defining the discrete Riesz projection."""
    grid: RadialGrid
    right_modes: np.ndarray   # columns
    left_modes: np.ndarray    # columns, L^2(r^2 dr)-paired
    weights: np.ndarray
    biorthogonality_defect: float

    def project_unstable(self, values) -> np.ndarray:
        coeffs = self.coefficients(values)
        return self.right_modes @ coeffs

    def project_stable(self, values) -> np.ndarray:
        return np.asarray(values) - self.project_unstable(values)

    def coefficients(self, values) -> np.ndarray:
        f = np.asarray(values)
        return (self.left_modes.conj() * self.weights[:, None]).T @ f


def build_projection(l: int, reports, a: OperatorMatrix) -> ProjectionPair:
    """Left/right eigenvectors of the operator under the r^2-weighted pairing.

    Left modes are eigenvectors of M^{-1} A^T M (M the lumped L^2(r^2 dr)
    mass), bi-orthonormalized against the right modes; a near-defective
    pairing raises.
    """
    if not reports:
        raise ValueError("no accepted modes to project onto")
    grid = a.grid
    w = r2_mass_weights(grid)
    targets = [rep.lam for rep in reports]
    phi = np.column_stack([rep.vector for rep in reports])
    for j in range(phi.shape[1]):
        phi[:, j] = phi[:, j] / np.sqrt(np.sum(w * np.abs(phi[:, j]) ** 2))
    lams_t, vecs_t = scipy.linalg.eig(a.entries.T)
    psi = np.empty_like(phi)
    for j, lam in enumerate(targets):
        k = int(np.argmin(np.abs(lams_t - lam)))
        if abs(lams_t[k] - lam) > 1e-6 * max(1.0, abs(lam)):
            raise RuntimeError(
                f"transpose spectrum misses eigenvalue {lam!r} "
                f"(nearest {lams_t[k]!r})")
        psi[:, j] = vecs_t[:, k] / w
    gram = (phi.conj() * w[:, None]).T @ psi
    if abs(np.linalg.det(gram)) < 1e-8:
        raise RuntimeError("near-defective left/right pairing")
    psi = psi @ np.linalg.inv(gram).conj().T
    gram2 = (psi.conj() * w[:, None]).T @ phi
    defect = float(np.max(np.abs(gram2 - np.eye(len(targets)))))
    pair = ProjectionPair(grid=grid, right_modes=phi, left_modes=psi,
                          weights=w, biorthogonality_defect=defect)
    if defect > 1e-8:
        raise RuntimeError(f"bi-orthogonality defect {defect:.2e} > 1e-8")
    return pair


def nearest_eigenpair(a: OperatorMatrix, target: complex):
    """(eigenvalue, eigenvector) of the pair closest to ``target``."""
    lams, vecs = eig_dense(a)
    k = int(np.argmin(np.abs(lams - target)))
    return lams[k], vecs[:, k]


def mode_report(a: OperatorMatrix, target: complex, l: int) -> EigenReport:
    """Minimal accepted-mode report for the eigenpair nearest ``target``.

    Convenience for building projections outside a full filtered scan.
    """
    lam, v = nearest_eigenpair(a, target)
    res = float(np.linalg.norm(a.entries @ v - lam * v) / np.linalg.norm(v))
    decay, origin, consistent, _ = exponent_fits(v, lam, l, a.grid)
    return EigenReport(l=l, lam=complex(lam), residual=res, converged=True,
                       decay_exponent=decay, origin_exponent=origin,
                       exponent_consistent=consistent, accepted=True,
                       h_defect=0.0, rmax_defect=0.0, vector=v, grid=a.grid)


def cosine_similarity(values_a, values_b, weights) -> float:
    """|<a, b>| / (||a|| ||b||) in the supplied quadrature weights."""
    a = np.asarray(values_a)
    b = np.asarray(values_b)
    inner = np.abs(np.sum(weights * a * np.conj(b)))
    na = np.sqrt(np.sum(weights * np.abs(a) ** 2))
    nb = np.sqrt(np.sum(weights * np.abs(b) ** 2))
    return float(inner / (na * nb))


def schrodinger_spectrum_check(a: OperatorMatrix) -> float:
    """Smallest Ritz value of a symmetric comparison operator."""
    if a.tag not in ("TildeL1Prime", "HlAlphaW"):
        raise ValueError(f"expected a symmetric comparison operator, got {a.tag}")
    sym_defect = np.max(np.abs(a.entries - a.entries.T))
    if sym_defect > 1e-10 * max(1.0, np.max(np.abs(a.entries))):
        raise ValueError(f"matrix is not symmetric (defect {sym_defect:.2e})")
    return float(scipy.linalg.eigvalsh(a.entries)[0])


def transpose_spectrum_defect(mat: np.ndarray, real_cap: float = 1.0) -> float:
    """Hausdorff-style mismatch between the spectra of A and A^T.

    Restricted to eigenvalues with real part below ``real_cap``: the extreme
    upper eigenvalues of the stiff differentiation block are ill conditioned
    and float around at eps * ||A|| * cond, which says nothing about the
    spectral window the scans use.
    """
    la = scipy.linalg.eigvals(mat)
    lt = scipy.linalg.eigvals(mat.T)
    la_w = la[la.real < real_cap]
    lt_w = lt[lt.real < real_cap]
    if la_w.size == 0 or lt_w.size == 0:
        return 0.0
    return float(max(np.min(np.abs(lt[None, :] - la_w[:, None]), axis=1).max(),
                     np.min(np.abs(la[None, :] - lt_w[:, None]), axis=1).max()))
