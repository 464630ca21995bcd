import numpy as np
import pytest

from oracles import FROZEN, step_family_threshold, zero_energy_solution_1d
from virtlevel.decay import (decay_study, h1_tilde_norm, local_difference, resonance_sequence, tail_exponent_fit,
                             threshold_flag, threshold_function, weighted_norm)
from virtlevel.discretize import GridSpec, Step, one_body
from virtlevel.errors import DomainError, InconsistencyError, ResolutionError
from virtlevel.geometry import ParticleSystem, one_particle_system

SYS = one_particle_system(1)
GRID = GridSpec.from_spacing(1, 40.0, 0.05)
SHAPE = one_body([Step(-1.0, 1.0), Step(4.0, 2.0, 1.0)])


@pytest.fixture(scope="module")
def sequence():
    return resonance_sequence(SYS, SHAPE.scaled(FROZEN["threshold_step_L400_h002"]), GRID)


def test_sequence_members_are_normalized(sequence):
    for m in sequence:
        assert h1_tilde_norm(m.values, GRID) == pytest.approx(1.0, abs=1e-6)
        assert m.values[np.argmin(GRID.radii())] > 0


def test_sequence_energies_rise_to_zero(sequence):
    e = [m.energy for m in sequence]
    assert all(x < 0 for x in e)
    assert all(abs(b) < abs(a) for a, b in zip(e, e[1:]))


def test_sequence_converges_locally(sequence):
    d = [local_difference(a, b) for a, b in zip(sequence, sequence[1:])]
    assert all(b < a for a, b in zip(d, d[1:]))


def test_sequence_needs_negative_energy():
    with pytest.raises(InconsistencyError):
        resonance_sequence(SYS, one_body([Step(1.0, 1.0)]), GRID, n_list=(4,))


def test_threshold_function_origin():
    tf = threshold_function(SYS, SHAPE.scaled(FROZEN["threshold_step_L400_h002"]), GRID)
    assert tf.norm == pytest.approx(1.0, abs=1e-6)
    assert tf.flag == "resonance"


def test_weighted_norm_monotone_in_alpha(sequence):
    m = sequence[-1]
    vals = [weighted_norm(m, a) for a in np.linspace(0, 1.5, 7)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_constant_function_power_weights():
    out = {}
    for L in (1000.0, 2000.0):
        g = GridSpec.from_spacing(1, L, 1.0)
        one = np.ones(g.n_unknowns)
        out[L] = [weighted_norm(one, a, grid=g) ** 2 for a in (0.4, 0.6)]
    assert out[2000.0][0] / out[1000.0][0] < 1.05
    exact = ((2001**0.2 - 1) / (1001**0.2 - 1))
    assert out[2000.0][1] / out[1000.0][1] == pytest.approx(exact, rel=2e-2)


def test_weighted_norm_needs_grid():
    with pytest.raises(DomainError):
        weighted_norm(np.ones(3), 0.5)
    with pytest.raises(DomainError):
        weighted_norm(np.ones(GRID.n_unknowns), 0.5, kind="cubic", grid=GRID)


def test_gradient_weight_of_constant_vanishes_at_zero_alpha():
    one = np.ones(GRID.n_unknowns)
    # only the Dirichlet walls contribute
    assert weighted_norm(one, 0.0, "gradient", GRID) ** 2 == pytest.approx(2 / GRID.h, rel=1e-9)


def test_synthetic_power_tail():
    g = GridSpec.from_spacing(2, 40.0, 0.2)
    phi = (1 + g.radii()) ** -3.0
    fit = tail_exponent_fit(phi, g)
    assert abs(fit.slope + 3) < 0.05
    assert fit.band < 0.05


def test_resonance_tail_is_flat():
    lam = step_family_threshold()
    W = lambda x: lam * (4.0 if 1 < abs(x) <= 2 else (-1.0 if abs(x) <= 1 else 0.0))
    sol = zero_energy_solution_1d(W, 0.0, 100.0)
    g = GridSpec.from_spacing(1, 100.0, 0.05)
    phi = sol(g.radii())[0]
    fit = tail_exponent_fit(phi, g)
    assert abs(fit.slope) < 0.01


def test_tail_fit_rejects_vanishing_tail():
    g = GridSpec.from_spacing(1, 40.0, 0.1)
    with pytest.raises(ResolutionError):
        tail_exponent_fit(np.exp(-g.radii() ** 2), g)
    with pytest.raises(ResolutionError):
        tail_exponent_fit(np.ones(GridSpec.from_spacing(1, 2.0, 0.5).n_unknowns), GridSpec.from_spacing(1, 2.0, 0.5))


def test_flags():
    assert threshold_flag(SYS)[0] == "resonance"
    assert threshold_flag(ParticleSystem((1.0,) * 3, 1)) == ("eigenvalue", pytest.approx(3.0))
    assert threshold_flag(ParticleSystem((1.0,) * 3, 2))[0] == "resonance_possible"


def test_decay_study_ratios_on_step():
    rep = decay_study(SYS, SHAPE, GridSpec.from_spacing(1, 200.0, 0.05), [0.45, 1.0], bracket=(1.0, 1.5),
                      rtol=1e-8)
    slow, fast = rep.ratios
    assert abs(slow - 1) < 0.05
    # the box state sags toward the wall, so a short box gives less than the sqrt(2) of a constant
    assert fast > slow + 0.1
    assert rep.flag == "resonance"


def test_decay_study_needs_bracket():
    with pytest.raises(DomainError):
        decay_study(SYS, SHAPE, GRID, [0.5])
