"""Finite-difference operators on boxed grids of X0 in mass-orthonormal frame
coordinates.

In such a frame the reduced kinetic operator is the plain Laplacian, so every
operator here is a Kronecker sum of 1D Dirichlet second differences plus a
diagonal. Potentials are sampled as cell averages (tensor Gauss-Legendre
inside each grid cell); point sampling puts O(h) errors on thresholds of
discontinuous wells, cell averaging brings them back to O(h^2).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ResourceError
from .geometry import ParticleSystem, Partition, adapted_frame, orthonormal_frame, pair_difference_matrix

DEFAULT_MEMORY_MB = 2048.0
_GAUSS_POINTS = 4


# ---------------------------------------------------------------------- grids

@dataclass(frozen=True)
class GridSpec:
    """Uniform box [-L, L]^dim_config with Dirichlet walls.

    points_per_axis counts the two boundary nodes, so the unknowns are the
    (points_per_axis - 2)^dim_config interior nodes.
    """

    dim_config: int
    L: float
    points_per_axis: int
    memory_mb: float = DEFAULT_MEMORY_MB

    def __post_init__(self):
        if self.dim_config < 1:
            raise DomainError("dim_config must be >= 1")
        if not self.L > 0:
            raise DomainError(f"half width L must be positive, got {self.L}")
        if self.points_per_axis < 8:
            raise DomainError("points_per_axis must be >= 8")
        if self.estimated_bytes() > self.memory_mb * 2**20:
            raise ResourceError(
                f"grid with {self.n_unknowns} unknowns needs ~{self.estimated_bytes() / 2**20:.0f} MB, "
                f"budget is {self.memory_mb:.0f} MB")

    @classmethod
    def from_spacing(cls, dim_config: int, L: float, h: float, **kw) -> "GridSpec":
        pts = int(round(2 * L / h)) + 1
        return cls(dim_config, L, pts, **kw)

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.points_per_axis - 1)

    @property
    def n_axis(self) -> int:
        return self.points_per_axis - 2

    @property
    def n_unknowns(self) -> int:
        return self.n_axis ** self.dim_config

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_axis,) * self.dim_config

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim_config

    def estimated_bytes(self) -> int:
        n = self.n_axis ** self.dim_config
        # stencil storage plus a Krylov basis and factorization fill margin
        return int(n * (2 * self.dim_config + 1) * 12 * 4 + n * 8 * 60)

    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(1, self.points_per_axis - 1)

    def nodes(self) -> np.ndarray:
        """Interior node coordinates, shape (n_unknowns, dim_config), C order."""
        ax = self.axis()
        mesh = np.meshgrid(*([ax] * self.dim_config), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.nodes(), axis=1)

    def refined(self, factor: int = 2) -> "GridSpec":
        """Same box, spacing divided by factor."""
        return replace(self, points_per_axis=(self.points_per_axis - 1) * factor + 1)

    def doubled(self) -> "GridSpec":
        """Twice the box at the same spacing."""
        return replace(self, L=2 * self.L, points_per_axis=2 * (self.points_per_axis - 1) + 1)

    def describe(self) -> str:
        return f"box[-{self.L:g},{self.L:g}]^{self.dim_config} h={self.h:.6g}"


@dataclass(frozen=True)
class DiscreteOperator:
    matrix: sp.csr_matrix
    grid: GridSpec
    descriptor: str
    system: ParticleSystem | None = None
    frame: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def quadratic_form(self, phi: np.ndarray) -> float:
        """Grid quadrature of <H phi, phi>."""
        return float(phi @ (self.matrix @ phi)) * self.grid.cell_volume

    def with_matrix(self, matrix, descriptor: str) -> "DiscreteOperator":
        return DiscreteOperator(sp.csr_matrix(matrix), self.grid, descriptor, self.system, self.frame)


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def axis_laplacians(grid: GridSpec) -> list[sp.csr_matrix]:
    """-d^2/dy_k^2 for each frame axis k, as full-grid matrices."""
    n = grid.n_axis
    T = _second_difference(n, grid.h)
    eye = sp.identity(n, format="csr")
    ops = []
    for k in range(grid.dim_config):
        factors = [eye] * grid.dim_config
        factors[k] = T
        M = factors[0]
        for f in factors[1:]:
            M = sp.kron(M, f, format="csr")
        ops.append(M)
    return ops


def build_laplacian(grid: GridSpec) -> DiscreteOperator:
    """Positive semidefinite -Delta on the box (Dirichlet)."""
    ops = axis_laplacians(grid)
    M = ops[0]
    for o in ops[1:]:
        M = M + o
    return DiscreteOperator(M.tocsr(), grid, "laplacian")


def box_ground_1d(grid: GridSpec) -> float:
    """Lowest eigenvalue of the discrete 1D Dirichlet second difference."""
    h = grid.h
    return float(4.0 / h**2 * np.sin(np.pi * h / (4.0 * grid.L)) ** 2)


# ------------------------------------------------------------------ potentials

def _radius(r: np.ndarray) -> np.ndarray:
    return np.linalg.norm(r, axis=-1)


@dataclass(frozen=True)
class Step:
    """Constant value on the shell r_min < |r| <= r_max (r_min = 0 includes 0)."""

    value: float
    r_max: float
    r_min: float = 0.0

    def __post_init__(self):
        if not 0 <= self.r_min < self.r_max:
            raise DomainError("Step needs 0 <= r_min < r_max")

    radial = True

    def __call__(self, r):
        rho = _radius(r)
        inside = rho <= self.r_max
        if self.r_min > 0:
            inside &= rho > self.r_min
        return np.where(inside, self.value, 0.0)

    def support_radius(self):
        return self.r_max


@dataclass(frozen=True)
class Gaussian:
    amplitude: float
    width: float
    shift: tuple | None = None

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError("Gaussian width must be positive")

    @property
    def radial(self):
        return self.shift is None or not np.any(np.asarray(self.shift, dtype=float))

    def __call__(self, r):
        if self.shift is not None:
            r = r - np.asarray(self.shift, dtype=float)
        return self.amplitude * np.exp(-np.sum(r * r, axis=-1) / self.width**2)

    def support_radius(self):
        return np.inf


@dataclass(frozen=True)
class Bump:
    """Smooth compactly supported amplitude * exp(1 - 1/(1 - (r/R)^2))."""

    amplitude: float
    radius: float

    radial = True

    def __call__(self, r):
        s = (_radius(r) / self.radius) ** 2
        out = np.zeros_like(s)
        m = s < 1.0
        out[m] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - s[m]))
        return out

    def support_radius(self):
        return self.radius


@dataclass(frozen=True)
class DecayCertificate:
    """|V(r)| <= C (1 + |r|)^(-2-nu) for |r| >= A."""

    C: float
    nu: float
    A: float = 0.0

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError("decay exponent nu must be positive")
        if self.C < 0 or self.A < 0:
            raise DomainError("decay certificate needs C >= 0 and A >= 0")

    def bound(self, r):
        return self.C * (1.0 + np.asarray(r, dtype=float)) ** (-2.0 - self.nu)


def _tail_sample(A: float, dim: int, n: int = 400) -> np.ndarray:
    radii = A + np.geomspace(1e-3, 1e4 * (1.0 + A), n)
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
        dirs = np.zeros((16, dim))
        dirs[:, 0], dirs[:, 1] = np.cos(ang), np.sin(ang)
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, dim), np.repeat(radii, len(dirs))


def _pair_key(i, j):
    i, j = int(i), int(j)
    if i == j:
        raise DomainError("pair potential needs two distinct particles")
    return (min(i, j), max(i, j))


@dataclass(frozen=True)
class PotentialSpec:
    """Pair potentials V_ij(x_i - x_j) as sums of bounded analytic pieces.

    pairs maps (i, j) with i < j (0-based) to a tuple of pieces. The overall
    potential is coupling * sum of pieces. The decay certificate refers to the
    unscaled pieces and is checked on a tail sample at construction; when it
    is omitted one is derived from that sample with nu = 1.
    """

    pairs: dict
    dim: int = 1
    coupling: float = 1.0
    decay: DecayCertificate | None = None

    def __post_init__(self):
        clean = {}
        for key, pieces in self.pairs.items():
            if isinstance(pieces, (Step, Gaussian, Bump)):
                pieces = (pieces,)
            clean[_pair_key(*key)] = tuple(pieces)
        object.__setattr__(self, "pairs", clean)
        for key, pieces in clean.items():
            for p in pieces:
                if isinstance(p, Gaussian) and p.shift is not None and len(p.shift) != self.dim:
                    raise DomainError(f"Gaussian shift for pair {key} must have length {self.dim}")
        if self.decay is None:
            object.__setattr__(self, "decay", self._derive_certificate())
        else:
            self._check_certificate(self.decay)

    # pieces -----------------------------------------------------------
    def pair_value(self, key, r, scaled: bool = True) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.dim == 1 and (r.ndim == 0 or r.shape[-1] != 1):
            r = r[..., None]
        out = np.zeros(r.shape[:-1])
        for p in self.pairs.get(_pair_key(*key), ()):
            out = out + p(r)
        return self.coupling * out if scaled else out

    def _tail_max(self, cert: DecayCertificate) -> float:
        pts, radii = _tail_sample(cert.A, self.dim)
        worst = 0.0
        for key in self.pairs:
            v = np.abs(self.pair_value(key, pts, scaled=False))
            worst = max(worst, float(np.max(v * (1.0 + radii) ** (2.0 + cert.nu))))
        return worst

    def _check_certificate(self, cert: DecayCertificate):
        worst = self._tail_max(cert)
        if worst > cert.C * (1 + 1e-12):
            raise DomainError(
                f"decay certificate C={cert.C:g}, nu={cert.nu:g}, A={cert.A:g} fails on the tail "
                f"sample (needs C >= {worst:.6g})")

    def _derive_certificate(self) -> DecayCertificate:
        A = 0.0
        probe = DecayCertificate(1.0, 1.0, A)
        worst = self._tail_max(probe)
        # sup over |r| >= A; include the core, sampled densely
        core = np.linspace(0.0, 1.0 + self.max_range(), 4001)
        for key in self.pairs:
            for sgn in (1.0, -1.0):
                pts = np.zeros((core.size, self.dim))
                pts[:, 0] = sgn * core
                v = np.abs(self.pair_value(key, pts, scaled=False))
                worst = max(worst, float(np.max(v * (1.0 + core) ** 3)))
        return DecayCertificate(worst * 1.05 + 1e-300, 1.0, A)

    def max_range(self) -> float:
        rng = 0.0
        for pieces in self.pairs.values():
            for p in pieces:
                s = p.support_radius()
                if np.isinf(s):
                    s = p.width * np.sqrt(np.log(1e16)) + (np.linalg.norm(p.shift) if p.shift else 0.0)
                rng = max(rng, s)
        return rng

    @property
    def is_radial(self) -> bool:
        return all(getattr(p, "radial") for ps in self.pairs.values() for p in ps)

    @property
    def effective_certificate(self) -> DecayCertificate:
        return DecayCertificate(abs(self.coupling) * self.decay.C, self.decay.nu, self.decay.A)

    def scaled(self, coupling: float) -> "PotentialSpec":
        return PotentialSpec(self.pairs, self.dim, coupling, self.decay)

    def restrict(self, members) -> "PotentialSpec":
        """Potential of a subsystem, with particles renumbered 0..len-1."""
        members = list(members)
        index = {m: k for k, m in enumerate(members)}
        pairs = {(index[i], index[j]): ps for (i, j), ps in self.pairs.items()
                 if i in index and j in index}
        return PotentialSpec(pairs, self.dim, self.coupling, self.decay)

    def is_zero(self) -> bool:
        return self.coupling == 0 or not self.pairs

    def is_nonnegative(self) -> bool:
        """True when every piece is nonnegative and the coupling too."""
        return self.coupling >= 0 and all(p.value >= 0 if isinstance(p, Step) else p.amplitude >= 0
                                          for ps in self.pairs.values() for p in ps)


def one_body(pieces, dim: int = 1, coupling: float = 1.0, decay=None) -> PotentialSpec:
    """Potential of a single particle: pair (0, 1) of the masses (2, 2) system."""
    return PotentialSpec({(0, 1): pieces}, dim, coupling, decay)


def identical_pairs(n_particles: int, pieces, dim: int = 1, coupling: float = 1.0,
                    decay=None) -> PotentialSpec:
    pairs = {(i, j): pieces for i in range(n_particles) for j in range(i + 1, n_particles)}
    return PotentialSpec(pairs, dim, coupling, decay)


# ------------------------------------------------------------------ assembly

def _check_system(sys: ParticleSystem, pot: PotentialSpec | None, grid: GridSpec):
    if grid.dim_config != sys.dim_config:
        raise DomainError(f"grid dimension {grid.dim_config} != configuration dimension {sys.dim_config}")
    if pot is not None:
        if pot.dim != sys.dim:
            raise DomainError("potential and system disagree on the particle dimension")
        for i, j in pot.pairs:
            if j >= sys.n_particles:
                raise DomainError(f"pair ({i}, {j}) outside a {sys.n_particles}-particle system")


def _cell_offsets(dim: int, h: float):
    x, w = np.polynomial.legendre.leggauss(_GAUSS_POINTS)
    pts = np.array(list(itertools.product(x, repeat=dim))) * (h / 2.0)
    wts = np.array([np.prod(c) for c in itertools.product(w, repeat=dim)]) / 2.0**dim
    return pts, wts


def potential_values(sys: ParticleSystem, pot: PotentialSpec, grid: GridSpec, frame=None,
                     pairs=None, average: bool = True) -> np.ndarray:
    """Node values of sum over pairs of V_ij(x_i - x_j).

    With average=True each value is the mean of V over the grid cell around
    the node. pairs restricts the sum to a subset of pair keys.
    """
    _check_system(sys, pot, grid)
    if frame is None:
        frame = orthonormal_frame(sys)
    nodes = grid.nodes()
    out = np.zeros(grid.n_unknowns)
    keys = list(pot.pairs) if pairs is None else [_pair_key(*k) for k in pairs]
    if average:
        offs, wts = _cell_offsets(grid.dim_config, grid.h)
    else:
        offs, wts = np.zeros((1, grid.dim_config)), np.ones(1)
    chunk = max(1, 2_000_000 // len(wts))
    for key in keys:
        if key not in pot.pairs:
            continue
        D = pair_difference_matrix(frame, *key)
        for s in range(0, nodes.shape[0], chunk):
            blk = nodes[s:s + chunk]
            acc = np.zeros(blk.shape[0])
            for off, w in zip(offs, wts):
                acc += w * pot.pair_value(key, (blk + off) @ D.T)
            out[s:s + chunk] += acc
    return out


def assemble_hamiltonian(sys: ParticleSystem, pot: PotentialSpec, grid: GridSpec,
                         epsilon: float = 0.0, frame=None, average: bool = True) -> DiscreteOperator:
    """-(1 - epsilon) Delta_0 + V on the grid."""
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon}")
    _check_system(sys, pot, grid)
    if frame is None:
        frame = orthonormal_frame(sys)
    lap = build_laplacian(grid).matrix
    V = potential_values(sys, pot, grid, frame, average=average)
    kin = lap if epsilon == 0.0 else (1.0 - epsilon) * lap
    M = (kin + sp.diags(V)).tocsr()
    return DiscreteOperator(M, grid, f"H(eps={epsilon:g})", sys, frame)


# -------------------------------------------------------------------- weights

WEIGHT_KINDS = ("inv_sq_1d", "log_2d", "multiparticle_log", "inv_beta_exterior")


@dataclass(frozen=True)
class WeightSpec:
    """Negative perturbation weight U(x) of |x| = mass norm.

    inv_sq_1d          -(1 + |x|)^-2                      (configuration dim 1)
    log_2d             -(1 + |x|^2 ln^2(e + |x|))^-1      (configuration dim 2)
    multiparticle_log  same profile on X0 of an N >= 3 system
    inv_beta_exterior  -|x|^-beta on |x| >= b, 0 inside
    """

    kind: str
    beta: float = 2.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise DomainError(f"unknown weight kind {self.kind!r}; choose from {WEIGHT_KINDS}")
        if self.kind == "inv_beta_exterior" and not (self.beta > 0 and self.b > 0):
            raise DomainError("inv_beta_exterior needs beta > 0 and b > 0")

    def check_compatible(self, sys: ParticleSystem):
        if self.kind == "inv_sq_1d" and sys.dim_config != 1:
            raise DomainError("inv_sq_1d weight needs a one-dimensional configuration space")
        if self.kind == "log_2d" and sys.dim_config != 2:
            raise DomainError("log_2d weight needs a two-dimensional configuration space")
        if self.kind == "multiparticle_log" and sys.n_particles < 3:
            raise DomainError("multiparticle_log weight needs N >= 3")

    def __call__(self, radius) -> np.ndarray:
        r = np.asarray(radius, dtype=float)
        if self.kind == "inv_sq_1d":
            return -1.0 / (1.0 + r) ** 2
        if self.kind in ("log_2d", "multiparticle_log"):
            return -1.0 / (1.0 + r**2 * np.log(np.e + r) ** 2)
        out = np.zeros_like(r)
        m = r >= self.b
        out[m] = -r[m] ** (-self.beta)
        return out


def assemble_perturbed(base: DiscreteOperator, weight: WeightSpec, epsilon: float) -> DiscreteOperator:
    """base + epsilon * diag(U) with U the weight at the grid nodes."""
    if base.system is not None:
        weight.check_compatible(base.system)
    if epsilon == 0.0:
        return base
    U = weight(base.grid.radii())
    M = (base.matrix + sp.diags(epsilon * U)).tocsr()
    return base.with_matrix(M, f"{base.descriptor}+{epsilon:g}*U[{weight.kind}]")


# ---------------------------------------------------------------- clusters

@dataclass(frozen=True)
class ClusterOperators:
    """H = H_Z + K_xi + I_Z, all in the frame adapted to the partition."""

    H: DiscreteOperator
    H_Z: DiscreteOperator
    K_xi: DiscreteOperator
    I_Z: DiscreteOperator
    n_internal: int


def cluster_hamiltonian(sys: ParticleSystem, Z: Partition, pot: PotentialSpec,
                        grid: GridSpec) -> ClusterOperators:
    if Z.order < 2:
        raise DomainError("cluster Hamiltonian needs a partition with at least two clusters")
    if Z.n_particles != sys.n_particles:
        raise DomainError("partition and system disagree on N")
    _check_system(sys, pot, grid)
    frame, n_int = adapted_frame(sys, Z)
    axes = axis_laplacians(grid)
    zero = sp.csr_matrix((grid.n_unknowns, grid.n_unknowns))
    kin_q = sum(axes[:n_int], zero)
    kin_xi = sum(axes[n_int:], zero)
    intra = [k for k in pot.pairs if Z.same_cluster(*k)]
    inter = [k for k in pot.pairs if not Z.same_cluster(*k)]
    V_in = potential_values(sys, pot, grid, frame, pairs=intra)
    V_out = potential_values(sys, pot, grid, frame, pairs=inter)
    V_all = potential_values(sys, pot, grid, frame)
    lap = build_laplacian(grid).matrix
    mk = lambda M, name: DiscreteOperator(sp.csr_matrix(M), grid, name, sys, frame)
    return ClusterOperators(
        H=mk(lap + sp.diags(V_all), "H"),
        H_Z=mk(kin_q + sp.diags(V_in), f"H({Z})"),
        K_xi=mk(kin_xi, f"K_xi({Z})"),
        I_Z=mk(sp.diags(V_out), f"I({Z})"),
        n_internal=n_int,
    )


def subsystem_ground(sys: ParticleSystem, members, pot: PotentialSpec, grid: GridSpec,
                     seed: int = 0, epsilon: float = 0.0) -> float:
    """Ground energy of H[C] + epsilon Delta[C] on a grid of the same L, h."""
    from .spectral import lowest_eigenpairs

    members = sorted(members)
    if len(members) < 2:
        return 0.0
    sub = ParticleSystem(tuple(sys.masses[i] for i in members), sys.dim)
    sub_grid = replace(grid, dim_config=sub.dim_config)
    H = assemble_hamiltonian(sub, pot.restrict(members), sub_grid, epsilon=epsilon)
    return lowest_eigenpairs(H, 1, seed=seed).ground


def hvz_floor(sys: ParticleSystem, pot: PotentialSpec, grid: GridSpec, seed: int = 0,
              epsilon: float = 0.0) -> float:
    """min over two-cluster partitions of the sum of cluster ground energies.

    With epsilon > 0 every cluster kinetic term is scaled by (1 - epsilon).
    """
    from .geometry import two_cluster_partitions

    _check_system(sys, pot, grid)
    cache: dict = {}
    best = np.inf
    for Z in two_cluster_partitions(sys.n_particles):
        total = 0.0
        for c in Z.clusters:
            if c not in cache:
                cache[c] = subsystem_ground(sys, c, pot, grid, seed, epsilon)
            total += cache[c]
        best = min(best, total)
    return float(best)


# ------------------------------------------------------------------- export

def export_coo(op: DiscreteOperator, path) -> None:
    """Write the matrix as 'row col value' lines (0-based) with a header."""
    M = op.matrix.tocoo()
    order = np.lexsort((M.col, M.row))
    with open(path, "w") as fh:
        fh.write(f"# {op.descriptor} n={op.n} {op.grid.describe()}\n")
        for r, c, v in zip(M.row[order], M.col[order], M.data[order]):
            fh.write(f"{r} {c} {v!r}\n")
