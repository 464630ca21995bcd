"""Independent reference values, computed without the package."""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

# frozen outputs of this package, kept to catch silent numerical drift
FROZEN = {
    "threshold_step_L400_h002": 1.2042372226715088,
    "threshold_three_body_L40_h02_level0": 2.1405271530151366,
    "pair_threshold_gauss": 2.9721470148360822,
    "hardy_equal_masses_log_polar_300": 3.0036,
    "halfline_hardy_10000": 0.25241,
}


def step_family_threshold() -> float:
    """Zero-energy threshold of -u'' + lam W u, W = 4 on 1 < |x| <= 2, -1 on |x| <= 1.

    The even solution is cos(k x) inside, cosh / sinh in the barrier with rate
    2k, and must be flat at |x| = 2: tan k = 2 tanh 2k with k = sqrt(lam).
    """
    k = brentq(lambda k: np.tan(k) - 2 * np.tanh(2 * k), 0.5, 1.5, xtol=1e-15)
    return k * k


def finite_well_levels(depth: float, half_width: float) -> list[float]:
    """Bound-state energies of -u'' - depth 1_{|x| <= a} u."""
    a = half_width
    out = []
    k_max = np.sqrt(depth)
    n_states = int(np.ceil(2 * a * k_max / np.pi))
    for n in range(n_states):
        lo, hi = n * np.pi / (2 * a) + 1e-12, min((n + 1) * np.pi / (2 * a), k_max) - 1e-12
        if n % 2 == 0:
            f = lambda k: k * np.tan(k * a) - np.sqrt(depth - k * k)
        else:
            f = lambda k: -k / np.tan(k * a) - np.sqrt(depth - k * k)
        k = brentq(f, lo, hi, xtol=1e-14)
        out.append(k * k - depth)
    return out


def dirichlet_levels_1d(L: float, h: float, k: int) -> np.ndarray:
    """Lowest k eigenvalues of the 3-point Dirichlet Laplacian on [-L, L]."""
    j = np.arange(1, k + 1)
    return 4 / h**2 * np.sin(j * np.pi * h / (4 * L)) ** 2


def sector_angles_by_arccos(masses) -> np.ndarray:
    """Angle between the collision planes x_j = x_k and x_k = x_i in the mass metric.

    The normals of the planes are the gradients of x_j - x_k in the metric,
    n = (e_j / m_j - e_k / m_k); the sector opposite particle i lies between
    the two planes through particle i's partners.
    """
    m = np.asarray(masses, dtype=float)
    out = []
    for i in range(3):
        j, k = [t for t in range(3) if t != i]
        # planes x_i = x_j and x_i = x_k
        n1 = np.zeros(3)
        n1[i], n1[j] = 1 / m[i], -1 / m[j]
        n2 = np.zeros(3)
        n2[i], n2[k] = 1 / m[i], -1 / m[k]
        c = (n1 * m) @ n2 / np.sqrt((n1 * m) @ n1 * (n2 * m) @ n2)
        out.append(np.arccos(abs(c)))
    return np.array(out)


def zero_energy_solution_1d(v, x0: float, x1: float):
    """Solution of -u'' + v u = 0 with u = 1, u' = 0 at x0."""
    sol = solve_ivp(lambda t, y: [y[1], v(t) * y[0]], (x0, x1), [1.0, 0.0], rtol=1e-11, atol=1e-13,
                    dense_output=True)
    return sol.sol
