"""Mass-metric linear algebra on configuration space.

A configuration of N particles in R^d is stored as an (N, d) array. The
kinetic energy -sum_i m_i^{-1} Delta_i is isotropic in the metric
<x, y>_m = sum_i m_i <x_i, y_i>, and after removing the center of mass the
reduced Laplacian becomes the plain Laplacian in any mass-orthonormal frame
of X0 = {sum_i m_i x_i = 0}.

Particle indices are 0-based throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

TAU_GEOM = 1e-10


@dataclass(frozen=True)
class ParticleSystem:
    masses: tuple
    dim: int = 1

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        if len(masses) < 2:
            raise DomainError("a particle system needs at least two particles")
        if not all(np.isfinite(m) and m > 0 for m in masses):
            raise DomainError(f"masses must be strictly positive, got {masses}")
        if self.dim not in (1, 2, 3):
            raise DomainError(f"dim must be 1, 2 or 3, got {self.dim}")
        object.__setattr__(self, "masses", masses)

    @property
    def n_particles(self) -> int:
        return len(self.masses)

    @property
    def dim_config(self) -> int:
        """Dimension of X0, d(N-1)."""
        return self.dim * (self.n_particles - 1)

    @property
    def mass_array(self) -> np.ndarray:
        return np.asarray(self.masses)

    def describe(self) -> str:
        ms = ",".join(f"{m:g}" for m in self.masses)
        return f"N={self.n_particles} d={self.dim} masses=({ms})"


def one_particle_system(dim: int = 1) -> ParticleSystem:
    """Two particles of mass 2: the relative motion is exactly -Delta + V(r).

    The reduced mass is 1 and the mass-orthonormal coordinate equals the
    relative coordinate r = x_1 - x_2, so |x|_m = |r|.
    """
    return ParticleSystem((2.0, 2.0), dim)


def _as_config(sys: ParticleSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and sys.dim == 1 and x.shape[0] == sys.n_particles:
        x = x[:, None]
    if x.shape[-2:] != (sys.n_particles, sys.dim):
        raise DomainError(
            f"configuration shape {x.shape} does not match N={sys.n_particles}, d={sys.dim}"
        )
    return x


def _shape_like(template, x: np.ndarray) -> np.ndarray:
    template = np.asarray(template)
    return x.reshape(template.shape) if template.ndim == 1 else x


def mass_inner(sys: ParticleSystem, x, y) -> np.ndarray | float:
    """<x, y>_m = sum_i m_i <x_i, y_i>; broadcasts over leading axes."""
    xa, ya = _as_config(sys, x), _as_config(sys, y)
    val = np.einsum("...id,...id,i->...", xa, ya, sys.mass_array)
    return float(val) if np.ndim(val) == 0 else val


def mass_norm(sys: ParticleSystem, x):
    return np.sqrt(np.maximum(mass_inner(sys, x, x), 0.0))


def center_of_mass(sys: ParticleSystem, x) -> np.ndarray:
    xa = _as_config(sys, x)
    m = sys.mass_array
    return np.einsum("...id,i->...d", xa, m) / m.sum()


def project_X0(sys: ParticleSystem, x) -> np.ndarray:
    """Mass-orthogonal projection onto X0 (subtract the center of mass)."""
    xa = _as_config(sys, x)
    out = xa - center_of_mass(sys, xa)[..., None, :]
    return _shape_like(x, out)


def project_Xc(sys: ParticleSystem, x) -> np.ndarray:
    """Complementary projection onto pure center-of-mass motion."""
    xa = _as_config(sys, x)
    out = np.broadcast_to(center_of_mass(sys, xa)[..., None, :], xa.shape).copy()
    return _shape_like(x, out)


def in_X0(sys: ParticleSystem, x, tol: float = TAU_GEOM) -> bool:
    xa = _as_config(sys, x)
    scale = max(1.0, float(np.max(np.abs(xa))))
    return bool(np.all(np.abs(np.einsum("...id,i->...d", xa, sys.mass_array)) <= tol * scale * sum(sys.masses)))


# ---------------------------------------------------------------- partitions

@dataclass(frozen=True)
class Partition:
    clusters: tuple
    n_particles: int = field(default=0)

    def __post_init__(self):
        clusters = tuple(tuple(sorted(int(i) for i in c)) for c in self.clusters)
        if any(len(c) == 0 for c in clusters):
            raise DomainError("clusters must be nonempty")
        members = [i for c in clusters for i in c]
        if len(members) != len(set(members)):
            raise DomainError("clusters must be pairwise disjoint")
        n = self.n_particles or (max(members) + 1)
        if sorted(members) != list(range(n)):
            raise DomainError(f"clusters must cover particles 0..{n - 1}")
        # canonical order: by smallest member
        clusters = tuple(sorted(clusters, key=lambda c: c[0]))
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "n_particles", n)

    @property
    def order(self) -> int:
        return len(self.clusters)

    def cluster_of(self, i: int) -> int:
        for k, c in enumerate(self.clusters):
            if i in c:
                return k
        raise DomainError(f"particle {i} not in partition")

    def same_cluster(self, i: int, j: int) -> bool:
        return self.cluster_of(i) == self.cluster_of(j)

    def __str__(self):
        return "|".join(",".join(str(i) for i in c) for c in self.clusters)


def two_cluster_partitions(n_particles: int) -> list[Partition]:
    """All partitions of {0..N-1} into exactly two clusters."""
    out = []
    rest = list(range(1, n_particles))
    for r in range(0, n_particles - 1):
        for extra in itertools.combinations(rest, r):
            c1 = (0,) + extra
            c2 = tuple(i for i in range(n_particles) if i not in c1)
            out.append(Partition((c1, c2), n_particles))
    return out


@dataclass(frozen=True)
class ClusterFrame:
    partition: Partition
    q: np.ndarray
    xi: np.ndarray


def cluster_centers(sys: ParticleSystem, Z: Partition, x) -> np.ndarray:
    """Array with row i equal to the center of mass of the cluster holding i."""
    xa = _as_config(sys, x)
    m = sys.mass_array
    xi = np.empty_like(xa)
    for c in Z.clusters:
        idx = list(c)
        cm = np.einsum("...id,i->...d", xa[..., idx, :], m[idx]) / m[idx].sum()
        xi[..., idx, :] = cm[..., None, :]
    return xi


def cluster_coords(sys: ParticleSystem, Z: Partition, x, check: bool = True) -> ClusterFrame:
    """q_i = x_i - x_{C_l}, xi_i = x_{C_l} for the cluster C_l containing i."""
    if Z.n_particles != sys.n_particles:
        raise DomainError("partition does not match the particle system")
    xa = _as_config(sys, x)
    if check and not in_X0(sys, xa):
        raise DomainError("cluster coordinates need a point of X0")
    xi = cluster_centers(sys, Z, xa)
    return ClusterFrame(Z, _shape_like(x, xa - xi), _shape_like(x, xi))


# --------------------------------------------------------------------- frames

def _gram_schmidt(sys: ParticleSystem, vectors) -> list[np.ndarray]:
    basis: list[np.ndarray] = []
    for v in vectors:
        w = np.array(v, dtype=float)
        for _ in range(2):
            for b in basis:
                w = w - mass_inner(sys, w, b) * b
        nrm = mass_norm(sys, w)
        if nrm > 1e-9 * max(1.0, mass_norm(sys, v)):
            basis.append(w / nrm)
    return basis


def orthonormal_frame(sys: ParticleSystem) -> np.ndarray:
    """Mass-orthonormal basis of X0, shape (d(N-1), N, d).

    Gram-Schmidt on the projected differences x_1 - x_i, i = 2..N, one
    vector per coordinate axis, in a fixed order.
    """
    n, d = sys.n_particles, sys.dim
    spanning = []
    for i in range(1, n):
        for a in range(d):
            v = np.zeros((n, d))
            v[0, a] = 1.0
            v[i, a] = -1.0
            spanning.append(project_X0(sys, v))
    basis = _gram_schmidt(sys, spanning)
    assert len(basis) == sys.dim_config
    return np.array(basis)


def adapted_frame(sys: ParticleSystem, Z: Partition) -> tuple[np.ndarray, int]:
    """Mass-orthonormal basis of X0 whose first block spans the internal
    coordinates q(Z) and whose second block spans the inter-cluster
    coordinates xi(Z). Returns (frame, number of internal vectors).
    """
    n, d = sys.n_particles, sys.dim
    internal = []
    for c in Z.clusters:
        for i in c[1:]:
            for a in range(d):
                v = np.zeros((n, d))
                v[c[0], a] = 1.0
                v[i, a] = -1.0
                # project onto {sum_{j in C} m_j x_j = 0} inside the cluster
                internal.append(v - cluster_centers(sys, Z, v))
    ext = []
    for c in Z.clusters[1:]:
        for a in range(d):
            v = np.zeros((n, d))
            v[list(Z.clusters[0]), a] = 1.0
            v[list(c), a] = -1.0
            ext.append(project_X0(sys, v))
    b_int = _gram_schmidt(sys, internal)
    b_all = _gram_schmidt(sys, b_int + ext)
    assert len(b_all) == sys.dim_config
    return np.array(b_all), len(b_int)


def to_frame(sys: ParticleSystem, x, frame: np.ndarray) -> np.ndarray:
    """Frame coordinates y_k = <x, b_k>_m (x is projected onto X0 first)."""
    xa = _as_config(sys, x)
    x0 = xa - center_of_mass(sys, xa)[..., None, :]
    return np.einsum("...id,kid,i->...k", x0, frame, sys.mass_array)


def from_frame(y, frame: np.ndarray) -> np.ndarray:
    return np.einsum("...k,kid->...id", np.asarray(y, dtype=float), frame)


def pair_difference_matrix(frame: np.ndarray, i: int, j: int) -> np.ndarray:
    """Matrix D (d x dim_config) with x_i - x_j = D y."""
    return (frame[:, i, :] - frame[:, j, :]).T


# ---------------------------------------------------------------------- cones

@dataclass(frozen=True)
class ConeSpec:
    partition: Partition
    kappa: float
    kappa_prime: float
    radius: float

    def __post_init__(self):
        if not (0.0 < self.kappa_prime < self.kappa < 1.0):
            raise DomainError("need 0 < kappa' < kappa < 1")
        if not self.radius > 0:
            raise DomainError("cone radius must be positive")


@dataclass(frozen=True)
class ConeMembership:
    in_K: bool
    in_KR: bool
    in_shell: bool


def cone_ratio(sys: ParticleSystem, Z: Partition, x):
    """Returns (|q(Z)|_m, |xi(Z)|_m, |x|_m), broadcasting over leading axes."""
    xa = _as_config(sys, x)
    xi = cluster_centers(sys, Z, xa)
    q = xa - xi
    return mass_norm(sys, q), mass_norm(sys, xi), mass_norm(sys, xa)


def cone_membership(sys: ParticleSystem, spec: ConeSpec, x) -> ConeMembership:
    """Membership in K(Z,k), K_R(Z,k) and the shell K_R(Z,k) minus K_R(Z,k')."""
    if not in_X0(sys, x):
        raise DomainError("cone membership needs a point of X0")
    qn, xn, rn = cone_ratio(sys, spec.partition, x)
    tol = TAU_GEOM * max(1.0, float(rn))
    in_k = bool(qn <= spec.kappa * xn + tol)
    in_kp = bool(qn <= spec.kappa_prime * xn + tol)
    far = bool(rn >= spec.radius - tol)
    return ConeMembership(in_k, in_k and far, in_k and far and not in_kp)


def _sample_in_cone(sys, Z, kappa, radius, n, rng):
    frame, n_int = adapted_frame(sys, Z)
    dim = frame.shape[0]
    n_ext = dim - n_int
    xi_dir = rng.standard_normal((n, n_ext))
    xi_dir /= np.linalg.norm(xi_dir, axis=1, keepdims=True)
    y = np.zeros((n, dim))
    y[:, n_int:] = xi_dir
    if n_int:
        q_dir = rng.standard_normal((n, n_int))
        q_dir /= np.linalg.norm(q_dir, axis=1, keepdims=True)
        # half of the samples sit on the cone boundary, where overlaps start
        frac = rng.random(n)
        frac[: n // 2] = 1.0
        y[:, :n_int] = q_dir * (kappa * frac)[:, None]
    scale = radius * (1.0 + 9.0 * rng.random(n)) / np.linalg.norm(y, axis=1)
    return from_frame(y * scale[:, None], frame)


def cone_overlap_witness(sys: ParticleSystem, kappa: float, radius: float = 1.0,
                         n_samples: int = 100_000, seed: int = 0):
    """Sample points in each two-cluster cone and return one that lies in a
    second cone, or None when no overlap is found."""
    rng = np.random.default_rng(seed)
    parts = two_cluster_partitions(sys.n_particles)
    per = max(1, n_samples // max(1, len(parts)))
    for Z in parts:
        pts = _sample_in_cone(sys, Z, kappa, radius, per, rng)
        for Z2 in parts:
            if Z2 == Z:
                continue
            qn, xn, _ = cone_ratio(sys, Z2, pts)
            hit = np.nonzero(qn <= kappa * xn)[0]
            if hit.size:
                return pts[hit[0]]
    return None


def cone_separation_kappa(sys: ParticleSystem, radius: float = 1.0, n_samples: int = 100_000,
                          seed: int = 0, kappa_min: float = 2.0 ** -20) -> float:
    """Largest kappa on the grid 1/2, 1/4, ... for which no sampled point lies
    in two distinct two-cluster cones K_R(Z, kappa)."""
    kappa = 0.5
    while kappa >= kappa_min:
        if cone_overlap_witness(sys, kappa, radius, n_samples, seed) is None:
            return kappa
        kappa /= 2.0
    raise DomainError("no separating kappa found above kappa_min")
