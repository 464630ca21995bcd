import numpy as np
import pytest

from virtlevel.discretize import (DecayCertificate, Gaussian, GridSpec, PotentialSpec, Step, WeightSpec,
                                  assemble_hamiltonian, assemble_perturbed, box_ground_1d, cluster_hamiltonian,
                                  export_coo, hvz_floor, identical_pairs, one_body, potential_values,
                                  subsystem_ground)
from virtlevel.errors import DomainError, ResourceError
from virtlevel.geometry import ParticleSystem, Partition, one_particle_system


def test_grid_spacing_and_unknowns():
    g = GridSpec.from_spacing(2, 4.0, 0.5)
    assert g.h == pytest.approx(0.5)
    assert g.n_axis == 15
    assert g.n_unknowns == 225
    assert g.doubled().h == pytest.approx(0.5) and g.doubled().L == 8.0
    assert g.refined(2).h == pytest.approx(0.25)


def test_grid_over_budget_raises_resource_error():
    with pytest.raises(ResourceError):
        GridSpec.from_spacing(4, 20.0, 0.1)


def test_box_ground_matches_lowest_level():
    g = GridSpec.from_spacing(1, 3.0, 0.1)
    H = assemble_hamiltonian(one_particle_system(1), one_body([]), g)
    assert np.linalg.eigvalsh(H.matrix.toarray())[0] == pytest.approx(box_ground_1d(g), rel=1e-12)


def test_cell_average_of_step_is_exact_fraction():
    # the wall at |x| = 1 sits in the middle of a cell
    g = GridSpec(1, 2.0, 41)  # h = 0.1, node at 1.0
    v = potential_values(one_particle_system(1), one_body([Step(-1.0, 1.0)]), g)
    x = g.axis()
    assert v[np.argmin(abs(x - 0.5))] == pytest.approx(-1.0)
    assert v[np.argmin(abs(x - 1.0))] == pytest.approx(-0.5, abs=1e-12)
    assert v[np.argmin(abs(x - 1.5))] == pytest.approx(0.0)


def test_pair_potential_depends_on_relative_coordinate():
    sys = ParticleSystem((1.0, 1.0, 1.0), 1)
    pot = PotentialSpec({(0, 1): [Gaussian(-1.0, 1.0)]})
    g = GridSpec.from_spacing(2, 3.0, 0.25)
    v = potential_values(sys, pot, g, average=False)
    assert v.min() == pytest.approx(-1.0, abs=1e-9)
    assert np.all(v <= 0)


def test_epsilon_zero_is_bitwise_plain_operator():
    sys = ParticleSystem((1.0, 2.0, 3.0), 1)
    pot = identical_pairs(3, [Gaussian(-1.0, 1.0)])
    g = GridSpec.from_spacing(2, 4.0, 0.4)
    a = assemble_hamiltonian(sys, pot, g).matrix
    b = assemble_hamiltonian(sys, pot, g, epsilon=0.0).matrix
    assert (a != b).nnz == 0


def test_certificate_violation_detected():
    with pytest.raises(DomainError):
        PotentialSpec({(0, 1): [Gaussian(-1.0, 1.0)]}, decay=DecayCertificate(1e-9, 1.0, 0.0))


def test_derived_certificate_bounds_tail():
    pot = one_body([Gaussian(-4.0, 1.0), Gaussian(3.0, 1.6)])
    cert = pot.effective_certificate
    r = np.linspace(cert.A, 50, 1000)
    assert np.all(np.abs(pot.pair_value((0, 1), r)) <= cert.bound(r) * (1 + 1e-12))


def test_weight_compatibility():
    with pytest.raises(DomainError):
        WeightSpec("log_2d").check_compatible(one_particle_system(1))
    w = WeightSpec("inv_sq_1d")
    assert np.all(w(np.linspace(0, 10, 11)) < 0)


def test_perturbed_adds_diagonal():
    g = GridSpec.from_spacing(1, 4.0, 0.5)
    H = assemble_hamiltonian(one_particle_system(1), one_body([]), g)
    P = assemble_perturbed(H, WeightSpec("inv_sq_1d"), 0.5)
    d = (P.matrix - H.matrix).diagonal()
    assert np.allclose(d, -0.5 / (1 + np.abs(g.axis())) ** 2)


def test_cluster_decomposition_identity():
    sys = ParticleSystem((1.0, 2.0, 3.0), 1)
    pot = identical_pairs(3, [Gaussian(-1.0, 1.0)])
    g = GridSpec.from_spacing(2, 3.0, 0.3)
    ops = cluster_hamiltonian(sys, Partition(((0, 1), (2,)), 3), pot, g)
    diff = ops.H.matrix - (ops.H_Z.matrix + ops.K_xi.matrix + ops.I_Z.matrix)
    assert abs(diff).max() < 1e-12


def test_hvz_floor_with_repulsion_is_zero_limit():
    sys = ParticleSystem((1.0, 1.0, 1.0), 1)
    pot = identical_pairs(3, [Gaussian(1.0, 1.0)])
    g = GridSpec.from_spacing(2, 6.0, 0.3)
    floor = hvz_floor(sys, pot, g)
    assert 0 <= floor < 0.3
    assert hvz_floor(sys, pot, g, epsilon=0.5) <= floor


def test_subsystem_of_attractive_pair_binds():
    sys = ParticleSystem((1.0, 1.0, 1.0), 1)
    pot = identical_pairs(3, [Gaussian(-2.0, 1.0)])
    g = GridSpec.from_spacing(2, 8.0, 0.2)
    assert subsystem_ground(sys, (0, 1), pot, g) < -0.1


def test_export_coo(tmp_path):
    g = GridSpec.from_spacing(1, 1.0, 0.25)
    H = assemble_hamiltonian(one_particle_system(1), one_body([]), g)
    p = tmp_path / "h.txt"
    export_coo(H, p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("#")
    assert len(lines) - 1 == H.matrix.nnz
