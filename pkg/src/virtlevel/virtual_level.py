"""Virtual-level detection on a finite grid.

A finite box has no essential spectrum and no exact zero, so "zero" means
"within tau_zero of zero", where tau_zero is five times the lowest Dirichlet
eigenvalue of the free box Laplacian. Every sign decision is taken from the
inertia of a symmetric factorization, never from an iterative eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .discretize import (GridSpec, PotentialSpec, WeightSpec, assemble_hamiltonian, assemble_perturbed,
                         box_ground_1d, hvz_floor)
from .errors import BracketError, DomainError
from .geometry import ParticleSystem
from .spectral import counting_below, lowest_eigenpairs

DEFAULT_EPS_GRID = (0.5, 0.25, 0.1, 0.05, 0.01)
TAU_FACTOR = 5.0

VERDICTS = ("virtual_level", "bound_states_exist", "strictly_positive_gap", "inconclusive")


def tau_zero(grid: GridSpec) -> float:
    """Five times the ground energy of the free Laplacian on the grid's box."""
    return TAU_FACTOR * grid.dim_config * box_ground_1d(grid)


def _below(op, level: float) -> bool:
    return counting_below(op, level) >= 1


def _floor(sys, pot, grid, epsilon, seed):
    if sys.n_particles == 2:
        return 0.0
    return hvz_floor(sys, pot, grid, seed=seed, epsilon=epsilon)


@dataclass
class VirtualLevelReport:
    verdict: str
    ground_energy: float
    tau_zero: float
    tau_neg: float
    epsilon_grid: list
    ground_eps: list
    below_eps: list
    ess_floor: list
    epsilon0: float | None
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "ground_energy": self.ground_energy,
            "tau_zero": self.tau_zero,
            "tau_neg": self.tau_neg,
            "epsilon_grid": list(self.epsilon_grid),
            "ground_eps": list(self.ground_eps),
            "below_eps": [bool(b) for b in self.below_eps],
            "ess_floor": list(self.ess_floor),
            "epsilon0": self.epsilon0,
            "notes": list(self.notes),
        }


def detect_virtual_level(sys: ParticleSystem, pot: PotentialSpec, grid: GridSpec,
                         eps_grid=DEFAULT_EPS_GRID, box_check: bool = False,
                         seed: int = 0) -> VirtualLevelReport:
    """Classify H = -Delta_0 + V by the behaviour of H + eps Delta_0.

    bound_states_exist     H has spectrum below -tau_zero
    virtual_level          H >= -tau_zero but H + eps Delta_0 < -tau_neg for every eps
                           tested below eps0, the largest eps whose cluster floor stays
                           above -tau_zero
    strictly_positive_gap  H + eps Delta_0 >= -tau_neg for some tested eps
    inconclusive           no admissible eps0, or the verdict changes when the box
                           doubles and h halves (with box_check)
    """
    eps_grid = sorted({float(e) for e in eps_grid}, reverse=True)
    if not eps_grid or any(not 0 < e < 1 for e in eps_grid):
        raise DomainError("eps_grid must be a nonempty subset of (0, 1)")
    tz = tau_zero(grid)
    tn = tz
    H = assemble_hamiltonian(sys, pot, grid)
    ground = lowest_eigenpairs(H, 1, seed=seed).ground
    notes = ["finite box: the essential spectrum is represented by cluster ground energies"]
    if _below(H, -tz):
        return VirtualLevelReport("bound_states_exist", ground, tz, tn, eps_grid, [], [], [], None, notes)
    grounds, below, floors = [], [], []
    for e in eps_grid:
        He = assemble_hamiltonian(sys, pot, grid, epsilon=e)
        grounds.append(lowest_eigenpairs(He, 1, seed=seed).ground)
        below.append(_below(He, -tn))
        floors.append(_floor(sys, pot, grid, e, seed))
    admissible = [i for i, f in enumerate(floors) if f >= -tz]
    eps0 = eps_grid[admissible[0]] if admissible else None
    if eps0 is None:
        verdict = "inconclusive"
        notes.append("every tested eps lets a subsystem bind; no eps0 found")
    else:
        tested = [i for i in range(len(eps_grid)) if eps_grid[i] <= eps0]
        if all(below[i] for i in tested):
            verdict = "virtual_level"
        elif not below[tested[-1]]:
            verdict = "strictly_positive_gap"
        else:
            verdict = "inconclusive"
    report = VirtualLevelReport(verdict, ground, tz, tn, eps_grid, grounds, below, floors, eps0, notes)
    if box_check and verdict in ("virtual_level", "strictly_positive_gap"):
        fine = grid.doubled().refined(2)
        again = detect_virtual_level(sys, pot, fine, eps_grid, box_check=False, seed=seed)
        notes.append(f"box check on {fine.describe()}: {again.verdict}")
        if again.verdict != verdict:
            report.verdict = "inconclusive"
    return report


# ----------------------------------------------------------- perturbation

@dataclass
class PerturbationReport:
    verdict: str  # virtual_level | no_virtual_level | bound_states_exist
    ground_energy: float
    tau_zero: float
    weight: str
    epsilon_grid: list
    ground_eps: list
    below_eps: list
    subordination: tuple | None  # (eps0, eps1) with (1 - eps0)(-Delta) + V + eps1 U >= -tau

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "ground_energy": self.ground_energy,
            "tau_zero": self.tau_zero,
            "weight": self.weight,
            "epsilon_grid": list(self.epsilon_grid),
            "ground_eps": list(self.ground_eps),
            "below_eps": [bool(b) for b in self.below_eps],
            "subordination": None if self.subordination is None else list(self.subordination),
        }


def default_weight(sys: ParticleSystem) -> WeightSpec:
    if sys.n_particles >= 3:
        return WeightSpec("multiparticle_log")
    return WeightSpec("inv_sq_1d" if sys.dim_config == 1 else "log_2d")


def detect_via_perturbation(sys: ParticleSystem, pot: PotentialSpec, grid: GridSpec,
                            weight: WeightSpec | None = None, eps_grid=DEFAULT_EPS_GRID,
                            seed: int = 0) -> PerturbationReport:
    """Virtual level iff H + eps U has spectrum below -tau for every tested eps,
    with U a negative weight of critical decay."""
    if weight is None:
        weight = default_weight(sys)
    weight.check_compatible(sys)
    eps_grid = sorted({float(e) for e in eps_grid}, reverse=True)
    tz = tau_zero(grid)
    H = assemble_hamiltonian(sys, pot, grid)
    ground = lowest_eigenpairs(H, 1, seed=seed).ground
    if _below(H, -tz):
        return PerturbationReport("bound_states_exist", ground, tz, weight.kind, eps_grid, [], [], None)
    grounds, below = [], []
    for e in eps_grid:
        He = assemble_perturbed(H, weight, e)
        grounds.append(lowest_eigenpairs(He, 1, seed=seed).ground)
        below.append(_below(He, -tz))
    if all(below):
        return PerturbationReport("virtual_level", ground, tz, weight.kind, eps_grid, grounds, below, None)
    sub = None
    for e0 in eps_grid:
        Hk = assemble_hamiltonian(sys, pot, grid, epsilon=e0)
        for e1 in eps_grid:
            if not _below(assemble_perturbed(Hk, weight, e1), -tz):
                sub = (e0, e1)
                break
        if sub is not None:
            break
    return PerturbationReport("no_virtual_level", ground, tz, weight.kind, eps_grid, grounds, below, sub)


VERDICT_MATCH = {
    "virtual_level": "virtual_level",
    "strictly_positive_gap": "no_virtual_level",
    "bound_states_exist": "bound_states_exist",
}


def verdicts_agree(direct: VirtualLevelReport, perturbed: PerturbationReport) -> bool | None:
    """None when the direct verdict is inconclusive."""
    if direct.verdict == "inconclusive":
        return None
    return VERDICT_MATCH[direct.verdict] == perturbed.verdict


# ------------------------------------------------------------ threshold

@dataclass
class ThresholdResult:
    coupling: float
    bracket: tuple
    iterations: int
    level: float
    rtol: float


def coupling_threshold(sys: ParticleSystem, shape: PotentialSpec, grid: GridSpec, bracket=(0.0, 10.0),
                       rtol: float = 1e-4, level: float | None = None, max_iter: int = 60) -> ThresholdResult:
    """Smallest coupling lambda with spectrum of -Delta_0 + lambda W below the level.

    level defaults to -tau_zero. Bisection on the inertia count; the returned
    coupling is the lower end of the final bracket (still without spectrum
    below the level).
    """
    if level is None:
        level = -tau_zero(grid)
    lo, hi = (float(b) for b in bracket)
    if not lo < hi:
        raise BracketError("bracket must satisfy lo < hi")

    def binds(lam):
        return _below(assemble_hamiltonian(sys, shape.scaled(lam), grid), level)

    if binds(lo):
        raise BracketError(f"coupling {lo} already has spectrum below {level:.3g}")
    if not binds(hi):
        raise BracketError(f"coupling {hi} has no spectrum below {level:.3g}")
    it = 0
    while hi - lo > rtol * abs(hi) and it < max_iter:
        mid = 0.5 * (lo + hi)
        if binds(mid):
            hi = mid
        else:
            lo = mid
        it += 1
    return ThresholdResult(lo, (lo, hi), it, level, rtol)
