"""Hardy-type constants: closed forms, sector geometry of three particles on a
line, and numerical Rayleigh-quotient estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ResolutionError
from .geometry import ParticleSystem, mass_inner, mass_norm, orthonormal_frame, pair_difference_matrix, project_X0
from .spectral import lowest_eigenpairs


@dataclass(frozen=True)
class SectorDecomposition:
    angles: tuple[float, float, float]
    directions: np.ndarray  # unit vectors along the three collision lines, frame coordinates
    masses: tuple[float, float, float]

    @property
    def theta0(self) -> float:
        return max(self.angles)


@dataclass
class HardyConstantReport:
    value: float
    method: str
    system: str
    is_bound: bool = False
    regime: str = ""
    residual: float | None = None
    grid: str = ""
    extra: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {
            "system": self.system,
            "method": self.method,
            "value": self.value,
            "bound_flag": int(self.is_bound),
            "grid": self.grid,
            "residual": "" if self.residual is None else self.residual,
        }


def _check_masses(masses):
    m = np.asarray(masses, dtype=float)
    if m.shape != (3,):
        raise DomainError("sector angles need exactly three masses")
    if np.any(~np.isfinite(m)) or np.any(m <= 0):
        raise DomainError("masses must be positive")
    return m


def sector_angle_formula(masses) -> np.ndarray:
    m = _check_masses(masses)
    out = np.empty(3)
    for i in range(3):
        j, k = [a for a in range(3) if a != i]
        c = np.sqrt(m[j] * m[k]) / (np.sqrt(m[i] + m[j]) * np.sqrt(m[i] + m[k]))
        out[i] = np.arccos(c)
    return out


def sector_angle_vectors(masses) -> np.ndarray:
    """Angles of the sectors where particle i sits between the others,
    measured directly in the mass metric (independent of the formula)."""
    m = _check_masses(masses)
    sys = ParticleSystem(tuple(m), 1)
    out = np.empty(3)
    for i in range(3):
        j, k = [a for a in range(3) if a != i]
        # on {x_i = x_j} with x_k to the right, and on {x_i = x_k} with x_j to the left
        u = np.zeros(3)
        u[k] = 1.0
        v = np.zeros(3)
        v[j] = -1.0
        u, v = project_X0(sys, u), project_X0(sys, v)
        c = mass_inner(sys, u, v) / (mass_norm(sys, u) * mass_norm(sys, v))
        out[i] = np.arccos(np.clip(c, -1.0, 1.0))
    return out


def collision_directions(sys: ParticleSystem, frame=None) -> np.ndarray:
    """Unit directions (frame coordinates) of the lines {x_i = x_j}, d = 1."""
    if sys.dim != 1 or sys.dim_config != 2:
        raise DomainError("collision directions are defined here for three particles on a line")
    if frame is None:
        frame = orthonormal_frame(sys)
    dirs = []
    for i in range(3):
        for j in range(i + 1, 3):
            D = pair_difference_matrix(frame, i, j)[0]
            t = np.array([-D[1], D[0]])
            dirs.append(t / np.linalg.norm(t))
    return np.array(dirs)


def sector_angles(masses) -> SectorDecomposition:
    m = _check_masses(masses)
    ang = sector_angle_formula(m)
    sys = ParticleSystem(tuple(m), 1)
    return SectorDecomposition(tuple(float(a) for a in ang), collision_directions(sys), tuple(m))


def sector_hardy_constant(theta: float | None = None, *, eigenvalue: float | None = None,
                          ambient_dim: int = 2) -> float:
    """Hardy constant of a cone.

    For a planar sector of opening theta this is pi / theta. For a cone in
    R^n whose spherical section has Dirichlet eigenvalue Lambda it is
    sqrt(Lambda + ((n - 2) / 2)^2).
    """
    if eigenvalue is not None:
        if eigenvalue < 0:
            raise DomainError("Dirichlet eigenvalue must be nonnegative")
        return float(np.sqrt(eigenvalue + ((ambient_dim - 2) / 2.0) ** 2))
    if theta is None:
        raise DomainError("give an opening angle or a spherical eigenvalue")
    if not 0 < theta < 2 * np.pi:
        raise DomainError(f"sector angle must lie in (0, 2 pi), got {theta}")
    return float(np.pi / theta)


def hardy_constant(sys: ParticleSystem) -> HardyConstantReport:
    """Best constant of |grad psi| >= C |x|_m^-1 |psi| on functions vanishing at
    collisions and near the origin, where a closed form or bound is known."""
    n, d = sys.n_particles, sys.dim
    desc = sys.describe()
    if n < 3 or d not in (1, 2):
        raise DomainError(f"no Hardy constant available for N={n}, d={d}")
    if d == 2:
        if n == 3:
            return HardyConstantReport(1.0, "closed_form", desc, regime="resonance_possible")
        return HardyConstantReport(float(n - 2), "closed_form", desc)
    if n == 3:
        sec = sector_angles(sys.masses)
        return HardyConstantReport(sector_hardy_constant(sec.theta0), "sector_formula", desc,
                                   extra={"theta0": sec.theta0})
    m = np.asarray(sys.masses, dtype=float)
    if n == 4 and np.all(m == m[0]):
        return HardyConstantReport(sector_hardy_constant(eigenvalue=42.0, ambient_dim=3),
                                   "closed_form", desc)
    return HardyConstantReport((n - 1) / 2.0, "closed_form", desc, is_bound=True)


# -------------------------------------------------------- numerical estimates

@dataclass(frozen=True)
class LogPolarGrid:
    """Annulus 1 <= |x| <= r_outer in log-polar coordinates (s, theta).

    In s = ln|x| the quotient |grad psi|^2 / |psi / x|^2 becomes the plain
    Dirichlet quotient on [0, ln r_outer] x circle, so the estimate is the
    square root of a standard Laplacian eigenvalue.
    """

    r_outer: float = float(np.exp(20.0))
    n_s: int = 300
    n_theta: int = 300

    def __post_init__(self):
        if not self.r_outer > 1:
            raise DomainError("outer radius must exceed the inner radius 1")
        if self.n_s < 8 or self.n_theta < 24:
            raise ResolutionError("log-polar grid needs n_s >= 8 and n_theta >= 24")

    def describe(self) -> str:
        return f"annulus[1,{self.r_outer:.4g}] {self.n_s}x{self.n_theta}"


def _arc_blocks(arc_lengths, n_theta):
    """Split n_theta angular cells over arcs between Dirichlet rays."""
    total = float(np.sum(arc_lengths))
    counts = [max(1, int(round(n_theta * a / total))) for a in arc_lengths]
    return counts


def rayleigh_estimate_CH(sys: ParticleSystem, grid: LogPolarGrid | None = None,
                         constrained: bool = True, seed: int = 0) -> HardyConstantReport:
    """Numerical infimum of |grad psi| / | |x|_m^-1 psi | on an annulus of X0.

    Needs a two-dimensional X0. With constrained=True psi vanishes on the
    collision sets {x_i = x_j}; the angular grid is split at the collision
    rays so that every ray is a row of grid nodes.
    """
    if grid is None:
        grid = LogPolarGrid()
    if sys.dim_config != 2:
        raise DomainError("the log-polar estimate needs a two-dimensional X0")
    S = float(np.log(grid.r_outer))
    ds = S / (grid.n_s + 1)
    Ts = sp.diags([-np.ones(grid.n_s - 1), 2 * np.ones(grid.n_s), -np.ones(grid.n_s - 1)],
                  [-1, 0, 1]) / ds**2
    Is = sp.identity(grid.n_s)
    blocks = []
    if constrained:
        rays = []
        frame = orthonormal_frame(sys)
        for i in range(sys.n_particles):
            for j in range(i + 1, sys.n_particles):
                D = pair_difference_matrix(frame, i, j)
                # collision set {D y = 0}; in 2D and d=1 it is a line, in d=2 the origin only
                if D.shape[0] == 1:
                    t = np.array([-D[0, 1], D[0, 0]])
                    a = np.arctan2(t[1], t[0])
                    rays += [a % (2 * np.pi), (a + np.pi) % (2 * np.pi)]
        if not rays:
            constrained = False
    if constrained:
        rays = np.unique(np.round(np.sort(rays), 14))
        arcs = np.diff(np.concatenate([rays, [rays[0] + 2 * np.pi]]))
        counts = _arc_blocks(arcs, grid.n_theta)
        for a, c in zip(arcs, counts):
            if c < 3:
                raise ResolutionError(f"arc of angle {a:.3g} gets only {c} cells; refine n_theta")
            dt = a / c
            m = c - 1
            Tt = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) / dt**2
            blocks.append(sp.kron(Tt, Is) + sp.kron(sp.identity(m), Ts))
        A = sp.block_diag(blocks, format="csr")
        method_grid = f"{grid.describe()} arcs={len(arcs)}"
    else:
        m = grid.n_theta
        dt = 2 * np.pi / m
        Tt = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1], format="lil")
        Tt[0, m - 1] = -1.0
        Tt[m - 1, 0] = -1.0
        Tt = Tt.tocsr() / dt**2
        A = (sp.kron(Tt, Is) + sp.kron(sp.identity(m), Ts)).tocsr()
        method_grid = f"{grid.describe()} periodic"
    res = lowest_eigenpairs(A, 1, seed=seed)
    mu = res.ground
    return HardyConstantReport(float(np.sqrt(mu)), "rayleigh_numeric", sys.describe(),
                               residual=float(res.residuals[0]), grid=method_grid,
                               extra={"eigenvalue": mu, "constrained": constrained,
                                      "log_width": S})


# ------------------------------------------------------ scalar inequalities

SCALAR_KINDS = ("halfline_1d", "log_2d", "exterior_d3", "scalar_2d_radial")


@dataclass
class ScalarHardyReport:
    kind: str
    value: float
    theory: float
    n_nodes: int
    domain: tuple[float, float]
    residual: float | None = None

    @property
    def holds(self) -> bool:
        return self.value >= self.theory - 1e-9


def _p1_pencil(t, stiff_coef, weight, dirichlet_left: bool, dirichlet_right: bool, potential=None):
    """Linear finite elements on nodes t for (int a u'^2 + int V u^2) / int w u^2."""
    gx, gw = np.polynomial.legendre.leggauss(8)
    a, b = t[:-1], t[1:]
    hl = b - a
    q = 0.5 * (a[:, None] + b[:, None]) + 0.5 * hl[:, None] * gx[None, :]
    qw = 0.5 * hl[:, None] * gw[None, :]
    phi_r = (q - a[:, None]) / hl[:, None]
    phi_l = 1.0 - phi_r
    A = stiff_coef(q)
    W = weight(q)
    ka = np.sum(qw * A, axis=1) / hl**2
    m_ll = np.sum(qw * W * phi_l * phi_l, axis=1)
    m_rr = np.sum(qw * W * phi_r * phi_r, axis=1)
    m_lr = np.sum(qw * W * phi_l * phi_r, axis=1)
    n = t.size
    Kd = np.zeros(n)
    Md = np.zeros(n)
    Kd[:-1] += ka
    Kd[1:] += ka
    Md[:-1] += m_ll
    Md[1:] += m_rr
    K = sp.diags([-ka, Kd, -ka], [-1, 0, 1], format="csr")
    M = sp.diags([m_lr, Md, m_lr], [-1, 0, 1], format="csr")
    if potential is not None:
        P = potential(q)
        v_lr = np.sum(qw * P * phi_l * phi_r, axis=1)
        Vd = np.zeros(n)
        Vd[:-1] += np.sum(qw * P * phi_l * phi_l, axis=1)
        Vd[1:] += np.sum(qw * P * phi_r * phi_r, axis=1)
        K = K + sp.diags([v_lr, Vd, v_lr], [-1, 0, 1], format="csr")
    keep = np.ones(n, dtype=bool)
    if dirichlet_left:
        keep[0] = False
    if dirichlet_right:
        keep[-1] = False
    K = K[keep][:, keep]
    M = M[keep][:, keep]
    s = 1.0 / np.sqrt(M.diagonal())
    Ds = sp.diags(s)
    return (Ds @ K @ Ds).tocsr(), (Ds @ M @ Ds).tocsr()


def _geometric_nodes(start: float, first: float, end: float, n: int) -> np.ndarray:
    return np.concatenate([[start], np.geomspace(first, end, n - 1)])


def _mean_on_unit_circle(trial, n: int = 4096) -> float:
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return float(np.mean(trial(np.ones_like(th), th)))


def _trial_quotient_log2d(trial, r_max: float = 1e6, n_r: int = 4000, n_t: int = 256) -> float:
    s = np.linspace(-np.log(r_max), np.log(r_max), n_r)
    th = np.linspace(0, 2 * np.pi, n_t, endpoint=False)
    S, T = np.meshgrid(s, th, indexing="ij")
    u = trial(np.exp(S), T)
    us = np.gradient(u, s, axis=0)
    ut = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2 * (th[1] - th[0]))
    grad = np.sum(us**2 + ut**2)
    wsum = np.sum(u**2 / (1.0 + S**2))
    return float(grad / wsum)


def verify_scalar_hardy(kind: str, n_nodes: int = 10_000, extent: float | None = None,
                        log_range: float | None = None, trial=None, seed: int = 0) -> ScalarHardyReport:
    """Numerical infimum of the Rayleigh quotient of a scalar Hardy inequality.

    halfline_1d       int u'^2 / int u^2 t^-2 on [0, extent], u(0) = 0
    exterior_d3       radial |grad u|^2 / |u / x|^2 outside the unit ball of R^3
    log_2d            |grad u|^2 / int |u|^2 |x|^-2 (1 + ln^2|x|)^-1 in R^2,
                      u with zero mean on the unit circle (radial reduction)
    scalar_2d_radial  int t u'^2 / int u^2 / (t (1 + ln^2 t)) on t >= 1, u(1) = 0
    All have theoretical infimum 1/4. Meshes are geometric so that the long
    logarithmic scales behind the near-optimizers are resolved.
    """
    if kind not in SCALAR_KINDS:
        raise DomainError(f"unknown Hardy inequality kind {kind!r}")
    if n_nodes < 100:
        raise ResolutionError("need at least 100 nodes")
    if trial is not None:
        if kind != "log_2d":
            raise DomainError("trial functions are accepted for log_2d only")
        mean = _mean_on_unit_circle(trial)
        if abs(mean) > 1e-10:
            raise DomainError(f"trial function has mean {mean:.3g} on the unit circle; "
                              "the logarithmic inequality needs mean zero")
        q = _trial_quotient_log2d(trial)
        return ScalarHardyReport(kind, q, 0.25, 0, (0.0, np.inf))
    if kind == "halfline_1d":
        T = 100.0 if extent is None else float(extent)
        lr = 60.0 if log_range is None else float(log_range)
        t = _geometric_nodes(0.0, T * np.exp(-lr), T, n_nodes)
        K, M = _p1_pencil(t, lambda x: np.ones_like(x), lambda x: x**-2.0, True, True)
    elif kind == "exterior_d3":
        lr = 60.0 if log_range is None else float(log_range)
        t = np.geomspace(1.0, np.exp(lr), n_nodes)
        K, M = _p1_pencil(t, lambda x: x**2, lambda x: np.ones_like(x), False, True)
    elif kind == "log_2d":
        S = 1e12 if extent is None else float(extent)
        t = _geometric_nodes(0.0, 1e-3, S, n_nodes)
        K, M = _p1_pencil(t, lambda x: np.ones_like(x), lambda x: 1.0 / (1.0 + x**2), True, True)
    else:
        T = 1e100 if extent is None else float(extent)
        t = 1.0 + _geometric_nodes(0.0, 1e-3, T - 1.0, n_nodes)
        K, M = _p1_pencil(t, lambda x: x, lambda x: 1.0 / (x * (1.0 + np.log(x) ** 2)), True, True)
    res = lowest_eigenpairs(K, 1, B=M, seed=seed)
    return ScalarHardyReport(kind, res.ground, 0.25, n_nodes, (float(t[0]), float(t[-1])),
                             float(res.residuals[0]))
