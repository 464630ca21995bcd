"""Cutoff functions with logarithmic localization error and the IMS identity.

The scalar cutoff interpolates between 1 at t = alpha and 0 at t = beta with
(u')^2 <= eps t^-2 ln^-2 t. The admissible alpha is doubly exponentially
small, so every quantity is parametrized by s = ln(beta / t) and alpha is
stored through L = ln(beta / alpha), never as a float of its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError
from .geometry import ParticleSystem, Partition, cluster_coords, mass_norm

GAMMA_FRACTION = 0.9


@dataclass(frozen=True)
class ScalarCutoff:
    eps: float
    beta: float
    gamma: float
    log_L: float  # ln ln(beta / alpha)

    @property
    def L(self) -> float:
        """ln(beta / alpha); inf when it exceeds the float range."""
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_L))

    @property
    def log_alpha(self) -> float:
        return float(np.log(self.beta) - self.L)

    @property
    def alpha(self) -> float:
        """May underflow to 0.0; use log_alpha or log_L for computations."""
        return float(np.exp(self.log_alpha))

    @property
    def lnb(self) -> float:
        return float(-np.log(self.beta))

    # s = ln(beta / t) in [0, L]; powers of s / L are taken in logarithms
    def value_s(self, s):
        s = np.asarray(s, dtype=float)
        lnb, g = self.lnb, self.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            ls = np.log(np.maximum(s, 1e-300))
            outer = np.exp(g * (ls - self.log_L))
            inner = np.exp(g * (np.log(lnb) - self.log_L)) * s / lnb
        out = np.where(s >= lnb, outer, inner)
        out = np.where(ls >= self.log_L, 1.0, out)
        return np.clip(np.where(s <= 0, 0.0, out), 0.0, 1.0)

    def dvalue_ds(self, s):
        s = np.asarray(s, dtype=float)
        lnb, g = self.lnb, self.gamma
        ls = np.log(np.maximum(s, 1e-300))
        outer = g * np.exp((g - 1.0) * ls - g * self.log_L)
        inner = np.exp(g * (np.log(lnb) - self.log_L)) / lnb
        out = np.where(s >= lnb, outer, inner)
        return np.where((s <= 0) | (ls >= self.log_L), 0.0, out)

    def value_log(self, log_t):
        return self.value_s(np.log(self.beta) - np.asarray(log_t, dtype=float))

    def t_derivative_log(self, log_t):
        """t u'(t) as a function of ln t (finite even where u' itself overflows)."""
        return -self.dvalue_ds(np.log(self.beta) - np.asarray(log_t, dtype=float))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.value_log(np.log(t))

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.t_derivative_log(np.log(t)) / t

    def bound_margin_s(self, s):
        """eps - (t u')^2 ln^2 t at s: the pointwise bound multiplied by t^2,
        nonnegative exactly where it holds."""
        s = np.asarray(s, dtype=float)
        lt = self.lnb + s
        return self.eps - self.dvalue_ds(s) ** 2 * lt**2

    def sample_s(self, n: int = 10_000) -> np.ndarray:
        """Points log-uniform in s over (0, L) (capped where L overflows),
        covering both branches."""
        lo = np.log(self.lnb * 1e-6)
        hi = min(self.log_L, 690.0) - 1e-12
        return np.exp(np.linspace(lo, hi, n))


def _branch_ok(log_L, eps, gamma, lnb):
    # 4 (ln(1/beta) / L)^(2 gamma) <= eps, in logarithms
    return np.log(4.0) + 2 * gamma * (np.log(lnb) - log_L) <= np.log(eps)


def scalar_cutoff_log_length(eps: float, beta: float, gamma: float) -> float:
    """Closed form of ln ln(beta / alpha) at equality of the branch bound."""
    return float(np.log(-np.log(beta)) + np.log(4.0 / eps) / (2 * gamma))


def build_scalar_cutoff(eps: float, beta: float) -> ScalarCutoff:
    if not eps > 0:
        raise DomainError("eps must be positive")
    if not 0 < beta < 1:
        raise DomainError("beta must lie in (0, 1)")
    gamma = GAMMA_FRACTION * np.sqrt(eps) / 2.0
    lnb = -np.log(beta)
    lo = np.log(lnb)
    hi = lo + 1.0
    while not _branch_ok(hi, eps, gamma, lnb):
        hi = lo + 2 * (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _branch_ok(mid, eps, gamma, lnb):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * abs(hi):
            break
    return ScalarCutoff(float(eps), float(beta), float(gamma), float(hi))


# ---------------------------------------------------------------- cone pair

@dataclass(frozen=True)
class CutoffPair:
    """u_Z^2 + v_Z^2 = 1 with u_Z = 1 on K(Z, kappa') and u_Z = 0 off K(Z, kappa).

    Both depend on tau = |q|_m / |xi|_m only. Outer branch on [kappa'', kappa]
    with kappa'' = kappa / 2: v = cos(A (kappa - tau)^2), so the phase
    derivative v' / sqrt(1 - v^2) vanishes at kappa. Inner branch on
    [kappa', kappa'']: v = c (1 - U) with U a scalar cutoff and c = v(kappa'').
    """

    partition: Partition | None
    kappa: float
    eps: float
    kappa2: float  # kappa''
    A: float
    c: float
    inner: ScalarCutoff

    @property
    def log_kappa_prime(self) -> float:
        return self.inner.log_alpha

    @property
    def kappa_prime(self) -> float:
        return float(np.exp(self.log_kappa_prime))

    def _phase(self, tau):
        return self.A * (self.kappa - np.minimum(tau, self.kappa)) ** 2

    def _inner_v(self, lt):
        return self.c * (1.0 - self.inner.value_log(lt))

    # profiles in ln tau ------------------------------------------------
    def v_profile_log(self, log_tau):
        lt = np.asarray(log_tau, dtype=float)
        tau = np.exp(lt)
        v = np.where(tau >= self.kappa2, np.cos(self._phase(tau)), self._inner_v(lt))
        v = np.where(tau >= self.kappa, 1.0, v)
        return np.where(lt <= self.log_kappa_prime, 0.0, v)

    def u_profile_log(self, log_tau):
        lt = np.asarray(log_tau, dtype=float)
        tau = np.exp(lt)
        vin = self._inner_v(lt)
        u = np.where(tau >= self.kappa2, np.sin(self._phase(tau)), np.sqrt((1.0 - vin) * (1.0 + vin)))
        u = np.where(tau >= self.kappa, 0.0, u)
        return np.where(lt <= self.log_kappa_prime, 1.0, u)

    def v_profile(self, tau):
        with np.errstate(divide="ignore"):
            return self.v_profile_log(np.log(np.asarray(tau, dtype=float)))

    def u_profile(self, tau):
        with np.errstate(divide="ignore"):
            return self.u_profile_log(np.log(np.asarray(tau, dtype=float)))

    def gradient_factor_log(self, log_tau):
        """tau^2 v'^2 / (1 - v^2). Since |grad tau|^2 = (1 + tau^2)^2 / |x|^2,
        |grad u|^2 + |grad v|^2 = factor (1 + tau^2)^2 / (tau^2 |x|^2)."""
        lt = np.asarray(log_tau, dtype=float)
        tau = np.exp(lt)
        outer = (2.0 * self.A * (self.kappa - np.minimum(tau, self.kappa)) * tau) ** 2
        vin = self._inner_v(lt)
        tv = -self.c * self.inner.t_derivative_log(lt)  # tau v'(tau)
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = tv**2 / ((1.0 - vin) * (1.0 + vin))
        f = np.where(tau >= self.kappa2, outer, inner)
        return np.where((tau >= self.kappa) | (lt <= self.log_kappa_prime), 0.0, f)

    # evaluation on X0 --------------------------------------------------
    def _tau(self, sys: ParticleSystem, x):
        frame = cluster_coords(sys, self.partition, x, check=False)
        q = np.asarray(mass_norm(sys, frame.q), dtype=float)
        xi = np.asarray(mass_norm(sys, frame.xi), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lt = np.log(q) - np.log(xi)
        # the origin has no direction; treat it as the diagonal tau = 1
        lt = np.where((q == 0) & (xi == 0), 0.0, lt)
        return q, xi, lt

    def u(self, sys, x):
        return self.u_profile_log(self._tau(sys, x)[2])

    def v(self, sys, x):
        return self.v_profile_log(self._tau(sys, x)[2])

    def gradient_sq(self, sys, x):
        """|grad_0 u_Z|^2 + |grad_0 v_Z|^2 from the closed-form derivatives."""
        q, xi, lt = self._tau(sys, x)
        tau = np.exp(lt)
        r2 = q**2 + xi**2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.gradient_factor_log(lt) * (1 + tau**2) ** 2 / (tau**2 * r2)
        return np.where(np.isfinite(out), out, 0.0)

    def error_bound(self, sys, x):
        """eps [v^2 |x|^-2 + u^2 |q|^-2 ln^-2(|q| / |xi|)]."""
        q, xi, lt = self._tau(sys, x)
        u = self.u_profile_log(lt)
        v = self.v_profile_log(lt)
        r2 = q**2 + xi**2
        with np.errstate(divide="ignore", invalid="ignore"):
            second = np.where(u > 0, u**2 / (q**2 * lt**2), 0.0)
        return self.eps * (v**2 / r2 + second)


def build_cone_partition(Z: Partition | None, kappa: float, eps: float,
                         safety: float = 0.98) -> CutoffPair:
    if not 0 < kappa < 1:
        raise DomainError("kappa must lie in (0, 1)")
    if not eps > 0:
        raise DomainError("eps must be positive")
    k2 = 0.5 * kappa
    # outer branch: (1 + t^2)^2 v'^2 / (1 - v^2) = (2 A (kappa - t) (1 + t^2))^2
    # <= safety eps <= eps v^2 as long as v^2 >= safety on [kappa'', kappa]
    A = np.sqrt(safety * eps) / (2.0 * (1.0 + kappa**2) * (kappa - k2))
    while np.cos(A * (kappa - k2) ** 2) ** 2 < safety:
        A *= 0.5
    c = float(np.cos(A * (kappa - k2) ** 2))
    s1 = np.sin(A * (kappa - k2) ** 2)
    eps_inner = safety * eps * s1**4 / (1 + k2 * k2)
    inner = build_scalar_cutoff(eps_inner, k2)
    return CutoffPair(Z, float(kappa), float(eps), float(k2), float(A), c, inner)


# ------------------------------------------------------------------- IMS

@dataclass
class IMSReport:
    localized: list  # <H J_k phi, J_k phi>
    localization_error: float
    total: float  # <H phi, phi>
    residual: float  # |sum localized - error - total| / scale

    @property
    def u_term(self):
        return self.localized[0]

    @property
    def v_term(self):
        return self.localized[1] if len(self.localized) > 1 else 0.0


def ims_decompose(op, functions, phi, volume: float | None = None, tol: float = 1e-12) -> IMSReport:
    """Exact discrete IMS identity for a partition of unity sum_k J_k^2 = 1.

    <H phi, phi> = sum_k <H J_k phi, J_k phi> - E with
    E = -sum_{a<b} H_ab sum_k (J_k(a) - J_k(b))^2 phi_a phi_b,
    the grid form of int sum_k |grad J_k|^2 |phi|^2.
    """
    H = sp.csr_matrix(getattr(op, "matrix", op))
    if volume is None:
        grid = getattr(op, "grid", None)
        volume = grid.cell_volume if grid is not None else 1.0
    J = np.array([np.asarray(f, dtype=float) for f in functions])
    if np.max(np.abs(np.sum(J**2, axis=0) - 1.0)) > tol:
        raise DomainError("cutoff functions do not square-sum to one")
    phi = np.asarray(phi, dtype=float)
    loc = [float((J[k] * phi) @ (H @ (J[k] * phi))) * volume for k in range(J.shape[0])]
    total = float(phi @ (H @ phi)) * volume
    C = sp.triu(H, k=1).tocoo()
    dj = np.sum((J[:, C.row] - J[:, C.col]) ** 2, axis=0)
    err = float(-np.sum(C.data * dj * phi[C.row] * phi[C.col])) * volume
    scale = max(abs(total), sum(abs(t) for t in loc), 1e-300)
    resid = abs(sum(loc) - err - total) / scale
    return IMSReport(loc, err, total, resid)
