import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from src.autodiff import Tape
from src.errors import InvalidDeformation, ShapeError, UnknownDataset
from src.hyper import (LAWS, BoundCompressible, CompressiblePotential, DeformationState, IncompressiblePotential,
                       Mode, compressible_energy, ground_truth_energy, incompressible_mode_stress, invariants,
                       mode_invariants, second_pk_stress, torsion_torque, trapezoid_nodes)
from src.nets import MonotoneModel


def test_invariants_of_identity():
    assert invariants(np.eye(3)) == pytest.approx((3.0, 3.0, 1.0))


def test_invariants_of_uniaxial_stretch():
    I1, I2, J = invariants(np.diag([1.2, 1.0, 1.0]))
    assert (I1, I2, J) == pytest.approx((1.44 + 2.0, 2 * 1.44 + 1.0, 1.2))


def test_inverted_deformation_is_rejected():
    with pytest.raises(InvalidDeformation):
        DeformationState.from_F(np.diag([-1.0, 1.0, 1.0]))
    with pytest.raises(ShapeError):
        DeformationState.from_F(np.eye(2))


def test_normalized_potential_vanishes_at_reference(icnn):
    pot = CompressiblePotential(icnn)
    assert abs(pot.energy([[3.0, 3.0, 1.0]])[0]) < 1e-12
    assert np.max(np.abs(pot.stress(np.eye(3)))) < 1e-8


def test_tape_energy_vanishes_at_reference(icnn):
    bound = CompressiblePotential(icnn).bind(Tape())
    assert abs(compressible_energy(bound, 3.0, 3.0, 1.0).value) < 1e-12
    with pytest.raises(InvalidDeformation):
        compressible_energy(CompressiblePotential(icnn), 3.0, 3.0, 0.0)


def test_stress_is_objective(icnn, rng):
    pot = CompressiblePotential(icnn)
    for _ in range(10):
        F = np.eye(3) + rng.uniform(-0.2, 0.2, (3, 3))
        Q = Rotation.random(random_state=rng.integers(1 << 31)).as_matrix()
        np.testing.assert_allclose(second_pk_stress(pot, Q @ F), second_pk_stress(pot, F), atol=1e-10)


def test_stress_is_symmetric(icnn):
    S = CompressiblePotential(icnn).stress(np.array([[1.1, 0.05, 0.0], [0.02, 0.95, 0.1], [0.0, -0.03, 1.02]]))
    np.testing.assert_allclose(S, S.T, atol=1e-12)


def test_tape_stress_matches_numpy(icnn):
    F = np.array([[1.1, 0.05, 0.0], [0.02, 0.95, 0.1], [0.0, -0.03, 1.02]])
    bound = BoundCompressible(icnn.bind(Tape()))
    S_tape = np.array([[v.value for v in row] for row in bound.stress(DeformationState.from_F(F))])
    np.testing.assert_allclose(S_tape, CompressiblePotential(icnn).stress(F), rtol=1e-9, atol=1e-12)


def test_stress_is_twice_energy_derivative(icnn):
    """S = 2 dPsi/dC, checked by perturbing C along a symmetric direction."""
    pot = CompressiblePotential(icnn)
    F = np.array([[1.05, 0.02, 0.0], [0.0, 0.97, 0.04], [0.01, 0.0, 1.03]])
    C = F.T @ F
    D = np.array([[0.3, 0.1, 0.0], [0.1, -0.2, 0.05], [0.0, 0.05, 0.1]])

    def psi(Cm):
        I1 = np.trace(Cm)
        I2 = 0.5 * (I1 ** 2 - np.trace(Cm @ Cm))
        return pot.energy([[I1, I2, math.sqrt(np.linalg.det(Cm))]])[0]

    h = 1e-6
    directional = (psi(C + h * D) - psi(C - h * D)) / (2 * h)
    assert directional == pytest.approx(0.5 * np.sum(pot.stress(F) * D), rel=1e-6)


def test_reference_laws_are_stress_free_once_normalized():
    for law in LAWS.values():
        assert np.max(np.abs(law.stress(np.eye(3), normalized=True))) < 1e-12


def test_ground_truth_energy_gradient_matches_finite_differences():
    value, grad = ground_truth_energy("gent-gent", 3.2, 3.1, 1.05)
    h = 1e-6
    fd = [(ground_truth_energy("gent-gent", *(np.array([3.2, 3.1, 1.05]) + h * e))[0]
           - ground_truth_energy("gent-gent", *(np.array([3.2, 3.1, 1.05]) - h * e))[0]) / (2 * h)
          for e in np.eye(3)]
    np.testing.assert_allclose(grad, fd, rtol=1e-6)
    assert np.isfinite(value)


def test_unknown_law():
    with pytest.raises(UnknownDataset):
        ground_truth_energy("neo-hookean", 3.0, 3.0, 1.0)


def test_mode_invariants_match_deformation_gradients():
    lam = 1.3
    cases = {
        Mode.UT: np.diag([lam, lam ** -0.5, lam ** -0.5]),
        Mode.ET: np.diag([lam, lam, lam ** -2]),
        Mode.PS: np.diag([lam, 1.0, 1.0 / lam]),
    }
    for mode, F in cases.items():
        I1, I2, _ = invariants(F)
        assert mode_invariants(mode, lam) == pytest.approx((I1, I2))
    gamma = 0.4
    I1, I2, _ = invariants(np.array([[1.0, gamma, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    assert mode_invariants(Mode.SS, gamma) == pytest.approx((I1, I2))


@pytest.mark.parametrize("mode", ["UT", "ET", "SS"])
def test_mode_stress_vanishes_in_reference_state(icnn2, mode):
    pot = IncompressiblePotential(icnn2)
    value = 0.0 if mode == "SS" else 1.0
    assert incompressible_mode_stress(pot, mode, value) == pytest.approx(0.0, abs=1e-14)


def test_plane_strain_returns_both_components(icnn2):
    p1, p2 = incompressible_mode_stress(IncompressiblePotential(icnn2), "PS", 1.2)
    assert np.isfinite(p1) and np.isfinite(p2)


def test_tape_mode_stress_matches_numpy(icnn2):
    pot = IncompressiblePotential(icnn2)
    bound = pot.bind(Tape())
    for mode, value in [(Mode.UT, 1.4), (Mode.UC, 0.8), (Mode.ET, 1.2), (Mode.SS, 0.3)]:
        assert bound.mode_stress(mode, value).value == pytest.approx(incompressible_mode_stress(pot, mode, value),
                                                                     rel=1e-10)
    assert bound.mode_stress(Mode.PS, 1.2)[0].value == pytest.approx(
        incompressible_mode_stress(pot, Mode.PS, 1.2)[0], rel=1e-10)
    assert bound.mode_stress(Mode.ST, 0.5).value == pytest.approx(pot.torsion(0.5, 32), rel=1e-10)


def test_nonpositive_stretch_is_rejected(icnn2):
    with pytest.raises(InvalidDeformation):
        incompressible_mode_stress(IncompressiblePotential(icnn2), "UT", 0.0)


def test_trapezoid_weights_integrate_cubic():
    rho, w = trapezoid_nodes(1001)
    assert np.sum(w * rho ** 3) == pytest.approx(0.25, rel=1e-5)
    with pytest.raises(ValueError):
        trapezoid_nodes(1)


def test_torsion_quadrature_converges():
    for seed in range(5):
        # Nonnegative derivatives keep the torque away from zero.
        pot = IncompressiblePotential(MonotoneModel.initialize([2, 6, 1], np.random.default_rng(seed)))
        coarse = torsion_torque(pot, 0.8, 100)
        fine = torsion_torque(pot, 0.8, 10_000)
        assert abs(coarse - fine) <= 1e-3 * abs(fine)


def test_torsion_at_zero_twist(icnn2):
    assert torsion_torque(IncompressiblePotential(icnn2), 0.0, 50) == 0.0


def test_potential_shape_checks(icnn, icnn2):
    with pytest.raises(ShapeError):
        CompressiblePotential(icnn2)
    with pytest.raises(ShapeError):
        IncompressiblePotential(icnn)
