"""Counting negative eigenvalues and the ingredients of finiteness proofs.

An infinite discrete spectrum below zero shows up on a finite box as a count
that keeps growing when the box grows. A plateau across several doublings is
the finite-box signature of a finite spectrum. Alongside the counting probes
this module checks two kinds of estimates numerically. The first is exterior
positivity of h - eps |x|^-beta, which implies finiteness. The second is the
set of boundary inequalities used to control the interior of the
configuration space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .discretize import GridSpec, PotentialSpec, assemble_hamiltonian
from .errors import DomainError, ResolutionError
from .geometry import ParticleSystem
from .spectral import counting_below, lowest_eigenpairs

STABLE_WINDOW = 3


@dataclass
class CountingCurve:
    system: str
    entries: list  # (L, h, z, count)
    window: int = STABLE_WINDOW

    @property
    def counts(self) -> list:
        return [e[3] for e in self.entries]

    @property
    def stable(self) -> bool:
        c = self.counts
        return len(c) >= self.window and len(set(c[-self.window:])) == 1

    def rows(self):
        return [(L, h, z, n, self.stable) for L, h, z, n in self.entries]


def _check_radial(sys: ParticleSystem, pot: PotentialSpec):
    if sys.dim == 2 and sys.n_particles == 3 and not pot.is_radial:
        raise DomainError("two-dimensional three-body counting needs radial pair potentials")


def counting_curve(sys: ParticleSystem, pot: PotentialSpec, boxes, h: float, z: float | None = None,
                   window: int = STABLE_WINDOW) -> CountingCurve:
    """Eigenvalue counts below z on boxes of increasing half width at spacing h.

    z=None counts below -tau_zero of each box.
    """
    from .virtual_level import tau_zero

    _check_radial(sys, pot)
    boxes = [float(L) for L in boxes]
    if any(b >= a for a, b in zip(boxes[1:], boxes[:-1])):
        raise DomainError("boxes must be strictly increasing")
    entries = []
    for L in boxes:
        grid = GridSpec.from_spacing(sys.dim_config, L, h)
        level = -tau_zero(grid) if z is None else float(z)
        if level > 0:
            raise DomainError("count level must be negative")
        n = counting_below(assemble_hamiltonian(sys, pot, grid), level)
        entries.append((L, grid.h, level, int(n)))
    return CountingCurve(sys.describe(), entries, window)


@dataclass
class CouplingCounts:
    couplings: list
    counts: list
    level: float

    @property
    def monotone(self) -> bool:
        return all(b >= a for a, b in zip(self.counts, self.counts[1:]))


def count_vs_coupling(sys: ParticleSystem, shape: PotentialSpec, grid: GridSpec, couplings,
                      z: float | None = None) -> CouplingCounts:
    from .virtual_level import tau_zero

    _check_radial(sys, shape)
    level = -tau_zero(grid) if z is None else float(z)
    lams = sorted(float(c) for c in couplings)
    counts = [int(counting_below(assemble_hamiltonian(sys, shape.scaled(lam), grid), level)) for lam in lams]
    return CouplingCounts(lams, counts, level)


# ----------------------------------------------------- exterior positivity

@dataclass
class ExteriorReport:
    """margin = inf <h psi, psi> / <|x|^-beta psi, psi> - eps over psi vanishing
    for |x| <= b, so margin >= 0 is exactly h - eps |x|^-beta >= 0 there."""

    margin: float
    min_quotient: float
    min_eigenvalue: float  # lowest eigenvalue of h - eps |x|^-beta on the exterior
    eps: float
    beta: float
    b: float
    method: str
    tau: float

    @property
    def positive(self) -> bool:
        return self.margin >= 0.0


LOG_EXTENT = 40.0


def _halfline_pencil(v, b, beta, n_nodes):
    from .hardy import _p1_pencil

    t = b * np.exp(np.linspace(0.0, LOG_EXTENT, n_nodes))
    return _p1_pencil(t, np.ones_like, lambda x: x ** -beta, True, True, potential=v)


def exterior_positivity_check(sys: ParticleSystem, pot: PotentialSpec, grid: GridSpec, b: float,
                              beta: float, eps: float, n_nodes: int = 4000, seed: int = 0) -> ExteriorReport:
    """Is h - eps |x|^-beta nonnegative on functions supported in |x|_m >= b?

    A one-dimensional configuration space is treated exactly on both half
    lines with logarithmically graded finite elements out to b e^40, since the
    box would cut off the long scales that decide Hardy-type inequalities.
    Higher dimensions use the grid nodes with |x|_m > b (Dirichlet at |x|_m = b
    and at the box walls).
    """
    from .virtual_level import tau_zero

    if not beta > 0:
        raise DomainError("beta must be positive")
    if not 0 < b < grid.L / 2:
        raise DomainError(f"need 0 < b < L/2, got b={b}, L={grid.L}")
    if (grid.L - b) / grid.h < 8:
        raise ResolutionError("exterior region is thinner than 8 cells")
    tau = tau_zero(grid)
    if grid.dim_config == 1:
        if sys.n_particles != 2:
            raise DomainError("a one-dimensional configuration space means a single relative coordinate")
        key = next(iter(pot.pairs)) if pot.pairs else None
        quotients, lowest = [], []
        for side in (1.0, -1.0):
            if key is None:
                v = np.zeros_like
            else:
                v = (lambda s: (lambda x: pot.pair_value(key, (s * x)[..., None])))(side)
            K, M = _halfline_pencil(v, b, beta, n_nodes)
            quotients.append(lowest_eigenpairs(K, 1, B=M, seed=seed).ground)
            lowest.append(lowest_eigenpairs((K - eps * M).tocsr(), 1, seed=seed).ground)
        mu = min(quotients)
        return ExteriorReport(mu - eps, mu, min(lowest), eps, beta, b, "log_fem_halflines", tau)
    H = assemble_hamiltonian(sys, pot, grid).matrix
    r = grid.radii()
    keep = np.flatnonzero(r > b)
    A = H[keep][:, keep].tocsr()
    w = r[keep] ** -beta
    B = sp.diags(w, format="csr")
    mu = lowest_eigenpairs(A, 1, B=B, seed=seed).ground
    low = lowest_eigenpairs((A - eps * B).tocsr(), 1, seed=seed).ground
    return ExteriorReport(mu - eps, mu, low, eps, beta, b, "grid_exterior", tau)


# ------------------------------------------------------- boundary lemmas

LEMMA_KINDS = ("J_1d", "J_2d_radial", "trace_1d", "xi_tail_1d", "xi_tail_2d")


@dataclass
class LemmaReport:
    kind: str
    n_samples: int
    min_margin: float
    constant: float
    constant_name: str
    margins: np.ndarray
    details: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return bool(self.min_margin >= 0)


def _gauss(a, b, panels=64, order=16):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    return (0.5 * (lo + hi) + 0.5 * (hi - lo) * x).ravel(), (0.5 * (hi - lo) * w).ravel()


def _zero_energy_solution(v, a, b, radial2d=False):
    """Solution of -u'' + v u = 0 (or its 2D radial form) with u = 1, u' = 0 at a."""
    if radial2d:
        def rhs(t, y):
            return [y[1], v(t) * y[0] - y[1] / t]
    else:
        def rhs(t, y):
            return [y[1], v(t) * y[0]]
    # the step-size control divides 0/0 where the solution is exactly flat
    with np.errstate(invalid="ignore", divide="ignore"):
        sol = solve_ivp(rhs, (a, b), [1.0, 0.0], method="DOP853", rtol=1e-11, atol=1e-13, dense_output=True)
    return sol.sol


def zero_energy_threshold_1d(shape: PotentialSpec, bracket=(0.0, 20.0), x_max: float | None = None,
                             tol: float = 1e-10) -> float:
    """Coupling at which -u'' + lambda W u = 0 acquires a solution bounded on
    both sides. Below it the solution started flat on the left stays positive
    with u' >= 0 on the right."""
    key = next(iter(shape.pairs))
    X = x_max if x_max is not None else max(12.0, 2 * min(shape.max_range(), 50.0))

    def binds(lam):
        s = _zero_energy_solution(lambda t: lam * shape.pair_value(key, np.array([[t]]), scaled=False)[0],
                                  -X, X)
        tt = np.linspace(-X, X, 4001)
        u, du = s(tt)
        return np.any(u <= 0) or du[-1] < 0

    lo, hi = bracket
    if binds(lo) or not binds(hi):
        from .errors import BracketError

        raise BracketError("bracket does not contain the zero-energy threshold")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if binds(mid) else (mid, hi)
    return lo


def _default_well_1d():
    from .discretize import Gaussian, one_body

    shape = one_body([Gaussian(-4.0, 1.0), Gaussian(3.0, 1.6)])
    return shape.scaled(0.95 * zero_energy_threshold_1d(shape, (0.5, 5.0)))


def _default_well_2d():
    from .discretize import Gaussian, one_body

    return one_body([Gaussian(-1.0, 1.0), Gaussian(2.0, 1.6)], dim=2, coupling=0.5)


def _trig(rng, a, b, modes=6):
    """Random smooth function on [a, b] with its derivative, as callables."""
    k = np.arange(modes)
    c = rng.normal(size=modes) / (1 + k) ** 1.5
    s = rng.normal(size=modes) / (1 + k) ** 1.5
    om = np.pi * k / (b - a)

    def f(t):
        x = np.asarray(t)[..., None] - a
        return np.sum(c * np.cos(om * x) + s * np.sin(om * x), axis=-1)

    def df(t):
        x = np.asarray(t)[..., None] - a
        return np.sum(om * (-c * np.sin(om * x) + s * np.cos(om * x)), axis=-1)

    return f, df


def _check_J_1d(rng, n, params):
    pot = params.get("potential") or _default_well_1d()
    key = next(iter(pot.pairs))
    cert = pot.effective_certificate
    nu = cert.nu
    delta = nu / 2
    A = max(cert.A, 1.0)
    c1 = cert.C * A ** -(nu - delta) / (nu - delta)
    V = lambda t: pot.pair_value(key, np.asarray(t)[..., None])
    b_hi = params.get("b_max", A + 10.0)
    sol = _zero_energy_solution(lambda t: float(V(np.array([t]))[0]), -b_hi - 20.0, b_hi)
    margins = np.empty(n)
    for i in range(n):
        b0 = rng.uniform(A * 1.0001, b_hi)
        f, df = _trig(rng, -b0, b0)
        a = rng.normal() * rng.choice([0.0, 1.0, 5.0])
        t, w = _gauss(-b0, b0)
        u0, du0 = sol(t)
        psi = f(t) + a * u0
        dpsi = df(t) + a * du0
        J = np.sum(w * (dpsi ** 2 + V(t) * psi ** 2))
        ends = sol(np.array([-b0, b0]))[0]
        edge = (f(-b0) + a * ends[0]) ** 2 + (f(b0) + a * ends[1]) ** 2
        margins[i] = J + c1 * b0 ** (-1 - delta) * edge
    return margins, c1, "c1 = C A^-(nu-delta) / (nu-delta), delta = nu/2", {"A": A, "nu": nu}


def _radial_modes(rng, b0, n_modes=4, degree=4):
    """Coefficient polynomials rho^|n| p(rho / b0) for cos and sin parts."""
    return [(m, rng.normal(size=(2, degree)) / (1 + m) ** 2) for m in range(n_modes)]


def _mode_values(coef, m, rho, b0):
    x = rho / b0
    p = np.polynomial.polynomial.polyval(x, coef)
    dp = np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(coef)) / b0
    f = x ** m * p
    df = (m * x ** (m - 1) / b0 if m else 0.0) * p + x ** m * dp
    return f, df


def _check_J_2d(rng, n, params):
    pot = params.get("potential") or _default_well_2d()
    if not pot.is_radial:
        raise DomainError("the two-dimensional boundary inequality needs a radial potential")
    key = next(iter(pot.pairs))
    cert = pot.effective_certificate
    A = max(cert.A, 1.0)
    c = cert.C / cert.nu
    V = lambda rho: pot.pair_value(key, np.stack([rho, np.zeros_like(rho)], axis=-1))
    b_hi = params.get("b_max", A + 10.0)
    sol = _zero_energy_solution(lambda t: float(V(np.array([t]))[0]), 1e-8, b_hi, radial2d=True)
    u_chk = sol(np.linspace(1e-8, b_hi, 2000))
    if np.any(u_chk[0] <= 0):
        raise DomainError("the potential binds: its zero-energy radial solution has a node")
    margins = np.empty(n)
    for i in range(n):
        b0 = rng.uniform(A * 1.0001, b_hi)
        rho, w = _gauss(0.0, b0)
        a = rng.normal() * rng.choice([0.0, 1.0, 5.0])
        J = 0.0
        edge = 0.0
        for m, coef in _radial_modes(rng, b0):
            weight = 2 * np.pi if m == 0 else np.pi
            for part in range(1 if m == 0 else 2):
                f, df = _mode_values(coef[part], m, rho, b0)
                fb, _ = _mode_values(coef[part], m, np.array([b0]), b0)
                if m == 0:
                    u0, du0 = sol(np.maximum(rho, 1e-8))
                    f, df = f + a * u0, df + a * du0
                    fb = fb + a * sol(np.array([b0]))[0]
                J += weight * np.sum(w * (df ** 2 + (m * m / rho ** 2 + V(rho)) * f ** 2) * rho)
                edge += weight * fb[0] ** 2
        margins[i] = J + c * b0 ** -cert.nu * edge
    return margins, c, "c = C / nu", {"A": A, "nu": cert.nu}


def _check_trace(rng, n, params):
    margins = np.empty(n)
    for i in range(n):
        b1 = rng.uniform(-5, 5)
        b2 = b1 + rng.uniform(0.05, 10)
        f, df = _trig(rng, b1, b2, modes=8)
        shift = rng.normal() * rng.choice([0.0, 3.0])
        t, w = _gauss(b1, b2)
        psi = f(t) + shift
        ell = b2 - b1
        rhs = 2 / ell * np.sum(w * psi ** 2) + 2 * ell * np.sum(w * df(t) ** 2)
        left = max((f(b1) + shift) ** 2, (f(b2) + shift) ** 2)
        margins[i] = rhs - left
    return margins, 2.0, "2 (b2-b1)^-1 and 2 (b2-b1)", {}


def _power_sum(rng, lo, hi, k=4):
    return rng.normal(size=k), rng.uniform(lo, hi, size=k)


def _check_xi_1d(rng, n, params):
    C0 = params.get("C0", 1.0)
    nu = params.get("nu", 1.0)
    b_min = (8 * C0) ** (1 / nu)
    margins = np.empty(n)
    for i in range(n):
        b = b_min * rng.uniform(1.0, 4.0)
        a, p = _power_sum(rng, 0.51, 3.0)
        P = p[:, None] + p[None, :]
        aa = a[:, None] * a[None, :]
        grad = np.sum(aa * p[:, None] * p[None, :] / (b * (P + 1)))
        pot = np.sum(aa * b ** (-1 - nu) / (1 + nu + P))
        margins[i] = grad - C0 * pot + 2 * C0 * b ** (-1 - nu) * np.sum(a) ** 2
    return margins, 2 * C0, "2 C0", {"b_min": b_min}


def _check_xi_2d(rng, n, params):
    C0 = params.get("C0", 1.0)
    nu = params.get("nu", 1.0)
    b_min = max(C0, 32 * C0 / (nu ** 2 * np.e ** 2)) ** (1 / nu)
    K = 4 * np.pi * C0 / nu
    margins = np.empty(n)
    literal = np.empty(n)
    for i in range(n):
        b = b_min * rng.uniform(1.0, 4.0)
        lhs = 0.0
        circle = 0.0  # (2 pi)^-1 int |psi(b, theta)|^2 dtheta
        for m in range(4):
            weight = 2 * np.pi if m == 0 else np.pi
            for _ in range(1 if m == 0 else 2):
                a, p = _power_sum(rng, 1.01 if m == 0 else 0.2, 3.0)
                P = p[:, None] + p[None, :]
                aa = a[:, None] * a[None, :]
                grad = np.sum(aa * p[:, None] * p[None, :] / P) + m * m * np.sum(aa / P)
                pot = np.sum(aa * b ** -nu / (P + nu))
                lhs += weight * (grad - C0 * pot)
                circle += weight * np.sum(a) ** 2 / (2 * np.pi)
        margins[i] = lhs + K * b ** -nu * circle
        literal[i] = lhs + 2 * C0 * b ** -nu * circle
    return margins, K, "4 pi C0 / nu", {"b_min": b_min, "min_margin_with_2C0": float(literal.min())}


_CHECKS = {"J_1d": _check_J_1d, "J_2d_radial": _check_J_2d, "trace_1d": _check_trace,
           "xi_tail_1d": _check_xi_1d, "xi_tail_2d": _check_xi_2d}


def boundary_lemma_check(kind: str, params: dict | None = None, samples: int = 200, seed: int = 0) -> LemmaReport:
    """Evaluate both sides of a boundary inequality on seeded random functions.

    J_1d         int_{-b0}^{b0} (psi'^2 + V psi^2) >= -c1 b0^(-1-nu/2) (psi(b0)^2 + psi(-b0)^2)
    J_2d_radial  int_{|x|<=b0} (|grad psi|^2 + V psi^2) >= -c b0^-nu int |psi(b0, .)|^2
    trace_1d     psi(b_i)^2 <= 2/(b2-b1) int psi^2 + 2 (b2-b1) int psi'^2
    xi_tail_1d   int_b^inf (psi'^2 - C0 t^(-2-nu) psi^2) >= -2 C0 b^(-1-nu) psi(b)^2
    xi_tail_2d   int_{|x|>=b} (|grad psi|^2 - C0 |x|^(-2-nu) psi^2) >= -K b^-nu mean |psi(b, .)|^2

    The constants are the ones produced by the proofs, evaluated from the
    potential's decay certificate. Margins are right side subtracted from left.
    """
    if kind not in _CHECKS:
        raise DomainError(f"unknown boundary inequality {kind!r}; choose from {LEMMA_KINDS}")
    rng = np.random.default_rng(seed)
    margins, const, name, details = _CHECKS[kind](rng, int(samples), dict(params or {}))
    return LemmaReport(kind, int(samples), float(margins.min()), float(const), name, margins, details)
