import numpy as np
import pytest

from oracles import finite_well_levels
from virtlevel.discretize import Gaussian, GridSpec, Step, identical_pairs, one_body
from virtlevel.errors import DomainError, ResolutionError
from virtlevel.geometry import ParticleSystem, one_particle_system
from virtlevel.efimov import (LEMMA_KINDS, boundary_lemma_check, count_vs_coupling, counting_curve,
                              exterior_positivity_check, zero_energy_threshold_1d)

SYS = one_particle_system(1)


def test_repulsive_potential_has_no_states():
    curve = counting_curve(SYS, one_body([Step(1.0, 1.0)]), [10, 20, 40], 0.1)
    assert curve.counts == [0, 0, 0]
    assert curve.stable


def test_finite_well_count_matches_oracle():
    # the one-particle kinetic term is -d^2/dx^2
    assert len(finite_well_levels(6.0, 1.0)) == 2
    curve = counting_curve(SYS, one_body([Step(-6.0, 1.0)]), [10, 20, 40], 0.02)
    assert curve.counts == [2, 2, 2]


def test_short_curve_is_not_stable():
    assert not counting_curve(SYS, one_body([Step(1.0, 1.0)]), [10, 20], 0.1).stable


def test_count_grows_with_coupling():
    cc = count_vs_coupling(SYS, one_body([Step(-1.0, 1.0)]), GridSpec.from_spacing(1, 20.0, 0.05),
                           [0.5, 2.0, 6.0, 20.0, 60.0])
    assert cc.monotone
    assert cc.counts[-1] > cc.counts[0]


def test_planar_three_body_requires_radial():
    sys = ParticleSystem((1.0, 1.0, 1.0), 2)
    pot = identical_pairs(3, [Gaussian(-1.0, 1.0, shift=(0.5, 0.0))], dim=2)
    with pytest.raises(DomainError):
        counting_curve(sys, pot, [4], 0.5)


def test_free_halfline_hardy_margin_flips_at_quarter():
    grid = GridSpec.from_spacing(1, 40.0, 0.1)
    pot = one_body([Gaussian(0.0, 1.0)])
    assert exterior_positivity_check(SYS, pot, grid, 1.0, 2.0, 0.2, n_nodes=2000).positive
    assert not exterior_positivity_check(SYS, pot, grid, 1.0, 2.0, 0.3, n_nodes=2000).positive


def test_exterior_barrier_raises_quotient():
    grid = GridSpec.from_spacing(1, 40.0, 0.1)
    free = exterior_positivity_check(SYS, one_body([Gaussian(0.0, 1.0)]), grid, 1.0, 2.0, 0.1, n_nodes=2000)
    wall = exterior_positivity_check(SYS, one_body([Gaussian(2.0, 3.0)]), grid, 1.0, 2.0, 0.1, n_nodes=2000)
    assert wall.min_quotient > free.min_quotient


def test_exterior_argument_checks():
    grid = GridSpec.from_spacing(1, 4.0, 0.5)
    pot = one_body([])
    with pytest.raises(DomainError):
        exterior_positivity_check(SYS, pot, grid, 3.0, 2.0, 0.1)
    with pytest.raises(DomainError):
        exterior_positivity_check(SYS, pot, grid, 1.0, 0.0, 0.1)
    with pytest.raises(ResolutionError):
        exterior_positivity_check(SYS, pot, GridSpec.from_spacing(1, 4.0, 1.0), 1.0, 2.0, 0.1)


def test_zero_energy_threshold_of_square_well():
    lam = zero_energy_threshold_1d(one_body([Step(-1.0, 1.0), Step(4.0, 2.0, 1.0)]), bracket=(0.5, 3.0))
    from oracles import step_family_threshold

    assert lam == pytest.approx(step_family_threshold(), rel=1e-6)


@pytest.mark.parametrize("kind", LEMMA_KINDS)
def test_boundary_lemmas_hold(kind):
    rep = boundary_lemma_check(kind, samples=40, seed=1)
    assert rep.holds, (kind, rep.min_margin)
    assert rep.n_samples == 40 and len(rep.margins) == 40


def test_unknown_lemma():
    with pytest.raises(DomainError):
        boundary_lemma_check("J_3d")
