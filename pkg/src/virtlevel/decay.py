"""Threshold functions and their decay.

At a virtual level the ground states psi_n of -(1 - 1/n) Delta_0 + V, scaled
to unit H~1 norm, approximate a zero-energy solution phi_0. Whether phi_0 is
square integrable is read from weighted L2 norms and their behaviour when the
box doubles: a weight that keeps the norm box-stable is integrable against
|phi_0|^2, one that makes it grow is not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretize import (GridSpec, PotentialSpec, assemble_hamiltonian, build_laplacian)
from .errors import DomainError, InconsistencyError, ResolutionError
from .geometry import ParticleSystem
from .spectral import lowest_eigenpairs

BALL_RADIUS = 1.0


def h1_tilde_parts(values: np.ndarray, grid: GridSpec) -> tuple[float, float]:
    """(||grad phi||^2, ||phi||^2 on the unit ball) by grid quadrature."""
    lap = build_laplacian(grid).matrix
    grad_sq = float(values @ (lap @ values)) * grid.cell_volume
    ball = grid.radii() <= BALL_RADIUS
    return grad_sq, float(np.sum(values[ball] ** 2)) * grid.cell_volume


def h1_tilde_norm(values: np.ndarray, grid: GridSpec) -> float:
    g, b = h1_tilde_parts(values, grid)
    return float(np.sqrt(g + b))


def _origin_index(grid: GridSpec) -> int:
    return int(np.argmin(grid.radii()))


def _normalize(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    v = values / h1_tilde_norm(values, grid)
    i0 = _origin_index(grid)
    pivot = v[i0] if abs(v[i0]) > 1e-12 * np.max(np.abs(v)) else v[np.argmax(np.abs(v))]
    return -v if pivot < 0 else v


@dataclass
class SequenceMember:
    n: int
    energy: float
    values: np.ndarray
    grid: GridSpec


def resonance_sequence(sys: ParticleSystem, pot: PotentialSpec, grid: GridSpec, n_list=(4, 8, 16, 32),
                       seed: int = 0) -> list[SequenceMember]:
    """Ground pairs of -(1 - 1/n) Delta_0 + V, H~1-normalized, positive at the origin."""
    out = []
    for n in sorted(int(k) for k in n_list):
        if n < 2:
            raise DomainError("sequence index n must be >= 2")
        op = assemble_hamiltonian(sys, pot, grid, epsilon=1.0 / n)
        res = lowest_eigenpairs(op, 1, seed=seed)
        if res.ground >= 0:
            raise InconsistencyError(
                f"ground energy {res.ground:.3e} >= 0 at n={n}: no virtual level at this resolution")
        out.append(SequenceMember(n, res.ground, _normalize(res.ground_vector, grid), grid))
    return out


def local_difference(a: SequenceMember, b: SequenceMember, radius: float = 5.0) -> float:
    """L2 distance of two sequence members on the ball of given radius."""
    mask = a.grid.radii() <= radius
    return float(np.sqrt(np.sum((a.values[mask] - b.values[mask]) ** 2) * a.grid.cell_volume))


def threshold_flag(sys: ParticleSystem) -> tuple[str, float | None]:
    """Eigenvalue versus resonance, decided by the Hardy constant alone."""
    from .hardy import hardy_constant

    if sys.n_particles == 2:
        return "resonance", None
    rep = hardy_constant(sys)
    if rep.regime == "resonance_possible":
        return "resonance_possible", rep.value
    if rep.value > 1 and not rep.is_bound:
        return "eigenvalue", rep.value
    return "undetermined", rep.value


@dataclass
class ThresholdFunction:
    values: np.ndarray
    grid: GridSpec
    origin: str  # direct_threshold_eigenvector | resonance_sequence_limit
    energy: float
    grad_norm: float
    ball_norm: float
    flag: str
    hardy_constant: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.grad_norm ** 2 + self.ball_norm ** 2))


def _as_threshold_function(values, grid, origin, energy, sys=None) -> ThresholdFunction:
    g, b = h1_tilde_parts(values, grid)
    flag, ch = threshold_flag(sys) if sys is not None else ("undetermined", None)
    return ThresholdFunction(values, grid, origin, float(energy), float(np.sqrt(g)), float(np.sqrt(b)), flag, ch)


def threshold_function(sys: ParticleSystem, pot: PotentialSpec, grid: GridSpec, n_max: int = 10**8,
                       seed: int = 0) -> ThresholdFunction:
    """Direct ground vector of H when its energy lies within tau_zero of zero,
    otherwise the largest-n member of the resonance sequence."""
    from .virtual_level import tau_zero

    res = lowest_eigenpairs(assemble_hamiltonian(sys, pot, grid), 1, seed=seed)
    tz = tau_zero(grid)
    if -tz < res.ground < tz:
        values = _normalize(res.ground_vector, grid)
        return _as_threshold_function(values, grid, "direct_threshold_eigenvector", res.ground, sys)
    last = resonance_sequence(sys, pot, grid, [n_max], seed=seed)[-1]
    tf = _as_threshold_function(last.values, grid, "resonance_sequence_limit", last.energy, sys)
    tf.meta["n"] = n_max
    return tf


# ----------------------------------------------------------------- norms

def _unpack(phi, grid):
    if isinstance(phi, (ThresholdFunction, SequenceMember)):
        return np.asarray(phi.values), phi.grid
    if grid is None:
        raise DomainError("a grid is required for raw value arrays")
    return np.asarray(phi, dtype=float), grid


def weight_values(radius: np.ndarray, alpha: float, kind: str = "power", floor: float = 0.0) -> np.ndarray:
    r = np.maximum(radius, floor)
    if kind == "power":
        return (1.0 + r) ** (alpha - 1.0)
    if kind == "log":
        with np.errstate(divide="ignore"):
            return (1.0 + r) ** -1.0 * (1.0 + np.abs(np.log(r))) ** (alpha - 1.0)
    raise DomainError(f"unknown weight kind {kind!r}")


def weighted_norm(phi, alpha: float, kind: str = "power", grid: GridSpec | None = None) -> float:
    """Grid L2 norm of w_alpha * phi.

    power     w = (1 + |x|)^(alpha - 1)
    log       w = (1 + |x|)^-1 (1 + |ln|x||)^(alpha - 1), radius floored at h/2
    gradient  ||grad(|x|^alpha phi)|| through the discrete Dirichlet form
    """
    values, grid = _unpack(phi, grid)
    r = grid.radii()
    if kind == "gradient":
        w = r ** alpha * values
        lap = build_laplacian(grid).matrix
        return float(np.sqrt(max(w @ (lap @ w), 0.0) * grid.cell_volume))
    w = weight_values(r, alpha, kind, floor=0.5 * grid.h if kind == "log" else 0.0)
    return float(np.sqrt(np.sum((w * values) ** 2) * grid.cell_volume))


@dataclass
class TailFit:
    slope: float
    band: float
    radii: np.ndarray
    rms: np.ndarray
    intercept: float = 0.0

    def rows(self):
        return list(zip(self.radii.tolist(), self.rms.tolist()))


def shell_profile(radius: np.ndarray, values: np.ndarray, edges: np.ndarray):
    """Centers and RMS of values over the populated shells edges[k] <= r < edges[k+1]."""
    idx = np.digitize(radius, edges) - 1
    keep = (idx >= 0) & (idx < len(edges) - 1)
    counts = np.bincount(idx[keep], minlength=len(edges) - 1)
    sums = np.bincount(idx[keep], weights=values[keep] ** 2, minlength=len(edges) - 1)
    ok = counts > 0
    centers = 0.5 * (edges[:-1] + edges[1:])[ok]
    return centers, np.sqrt(sums[ok] / counts[ok])


def power_law_fit(centers: np.ndarray, rms: np.ndarray) -> tuple[float, float, float]:
    """Least squares of log rms on log(1 + r): (slope, 2 standard errors, intercept)."""
    x, y = np.log1p(centers), np.log(rms)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    s2 = float(resid @ resid) / max(len(x) - 2, 1)
    se = np.sqrt(s2 / np.sum((x - x.mean()) ** 2))
    return float(coef[0]), float(2 * se), float(coef[1])


def tail_exponent_fit(phi, grid: GridSpec | None = None, lo: float = 0.25, hi: float = 0.75,
                      min_shells: int = 6) -> TailFit:
    """Slope of log shell-RMS against log(1 + r) over shells in [lo L, hi L].

    Shell width is 2 h sqrt(dim). The band is twice the standard error of the
    slope estimated from the fit residuals.
    """
    values, grid = _unpack(phi, grid)
    width = 2.0 * grid.h * np.sqrt(grid.dim_config)
    edges = np.arange(lo * grid.L, hi * grid.L + 0.5 * width, width)
    centers, rms = shell_profile(grid.radii(), values, edges)
    if len(rms) < min_shells:
        raise ResolutionError(f"only {len(rms)} populated far-field shells, need {min_shells}")
    if rms[-1] < 10 * np.finfo(float).eps * np.max(np.abs(values)):
        raise ResolutionError("far-field shells are at rounding level: unusable tail")
    slope, band, icpt = power_law_fit(centers, rms)
    return TailFit(slope, band, centers, rms, icpt)


# ------------------------------------------------------------ box studies

@dataclass
class DecayFitReport:
    alphas: list
    norm_L: list
    norm_2L: list
    kind: str
    grids: tuple
    couplings: tuple
    fit: TailFit | None = None
    flag: str = "undetermined"

    @property
    def ratios(self) -> list:
        return [b / a for a, b in zip(self.norm_L, self.norm_2L)]

    def rows(self):
        return [(a, x, y, y / x) for a, x, y in zip(self.alphas, self.norm_L, self.norm_2L)]


def decay_study(sys: ParticleSystem, shape: PotentialSpec, grid: GridSpec, alphas, kind: str = "power",
                coupling: float | None = None, bracket=None, level: float | None = None,
                rtol: float = 1e-8, source: str = "threshold", n_max: int = 10**8,
                seed: int = 0) -> DecayFitReport:
    """Weighted norms of the threshold function on grid and on the doubled box.

    With coupling=None the threshold coupling is relocated on each box by
    inertia bisection inside bracket (level defaults to -tau_zero of that box),
    so each box sees its own threshold state rather than a continuum value
    that the box shifts above zero.

    source: "threshold" uses threshold_function, "sequence" the H~1-normalized
    ground state psi_n with n = n_max.
    """
    from .virtual_level import coupling_threshold

    grids = (grid, grid.doubled())
    norms, lams, tfs = [], [], []
    for g in grids:
        if coupling is None:
            if bracket is None:
                raise DomainError("bracket is required when the coupling is relocated per box")
            lam = coupling_threshold(sys, shape, g, bracket, rtol=rtol, level=level).coupling
        else:
            lam = float(coupling)
        pot = shape.scaled(lam)
        if source == "sequence":
            m = resonance_sequence(sys, pot, g, [n_max], seed=seed)[-1]
            tf = _as_threshold_function(m.values, g, "resonance_sequence_limit", m.energy, sys)
        elif source == "threshold":
            tf = threshold_function(sys, pot, g, n_max=n_max, seed=seed)
        else:
            raise DomainError(f"unknown source {source!r}")
        lams.append(lam)
        tfs.append(tf)
        norms.append([weighted_norm(tf, a, kind) for a in alphas])
    try:
        fit = tail_exponent_fit(tfs[1])
    except ResolutionError:
        fit = None
    return DecayFitReport(list(alphas), norms[0], norms[1], kind, grids, tuple(lams), fit, tfs[0].flag)
