import numpy as np
import pytest

from oracles import FROZEN, sector_angles_by_arccos
from virtlevel.errors import DomainError, ResolutionError
from virtlevel.geometry import ParticleSystem
from virtlevel.hardy import (LogPolarGrid, hardy_constant, rayleigh_estimate_CH, sector_angle_formula,
                             sector_angle_vectors, sector_hardy_constant, verify_scalar_hardy)


def test_equal_masses_give_three():
    rep = hardy_constant(ParticleSystem((1.0, 1.0, 1.0), 1))
    assert rep.value == pytest.approx(3.0, abs=1e-12)
    assert rep.method == "sector_formula"


def test_heavy_particle_limit():
    assert hardy_constant(ParticleSystem((1e6, 1.0, 1.0), 1)).value == pytest.approx(2.0, abs=1e-3)


@pytest.mark.parametrize("n", [4, 5, 6])
def test_planar_many_body(n):
    assert hardy_constant(ParticleSystem((1.0,) * n, 2)).value == n - 2


def test_planar_three_body_flags_resonance():
    assert hardy_constant(ParticleSystem((1.0, 1.0, 1.0), 2)).regime == "resonance_possible"


def test_four_identical_on_line():
    assert hardy_constant(ParticleSystem((1.0,) * 4, 1)).value == 6.5


def test_formula_against_independent_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = rng.uniform(0.01, 100, 3)
        assert np.allclose(sector_angle_formula(m), sector_angles_by_arccos(m), atol=1e-12)
        assert np.allclose(sector_angle_formula(m), sector_angle_vectors(m), atol=1e-12)


def test_sector_constant():
    assert sector_hardy_constant(np.pi / 3) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        sector_angle_formula((1.0, 1.0))


def test_log_polar_estimate_small_grid():
    rep = rayleigh_estimate_CH(ParticleSystem((1.0, 1.0, 1.0), 1), LogPolarGrid(n_s=80, n_theta=120))
    assert 2.9 < rep.value < 3.3


def test_log_polar_needs_enough_angular_cells():
    with pytest.raises(ResolutionError):
        LogPolarGrid(n_s=20, n_theta=12)
    with pytest.raises(DomainError):
        rayleigh_estimate_CH(ParticleSystem((1.0,) * 4, 1), LogPolarGrid(n_s=20, n_theta=24))


def test_unconstrained_quotient_is_small():
    rep = rayleigh_estimate_CH(ParticleSystem((1.0, 1.0, 1.0), 1), LogPolarGrid(n_s=80, n_theta=60),
                               constrained=False)
    assert rep.value < 0.5


def test_halfline_hardy_frozen():
    rep = verify_scalar_hardy("halfline_1d", n_nodes=10_000)
    assert rep.value == pytest.approx(FROZEN["halfline_hardy_10000"], abs=2e-5)
    assert rep.holds


def test_halfline_hardy_is_scale_invariant():
    a = verify_scalar_hardy("halfline_1d", n_nodes=2000, extent=10.0).value
    b = verify_scalar_hardy("halfline_1d", n_nodes=2000, extent=1000.0).value
    assert a == pytest.approx(b, rel=1e-8)


def test_log_hardy_needs_mean_zero_trial():
    with pytest.raises(DomainError):
        verify_scalar_hardy("log_2d", trial=lambda r, t: np.exp(-r * r))
    rep = verify_scalar_hardy("log_2d", trial=lambda r, t: np.exp(-((r - 1) ** 2)) * np.cos(t))
    assert rep.value > 0.25
