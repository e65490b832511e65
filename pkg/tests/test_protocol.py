"""Rotation protocol: switched unitary, statistics, estimator, Monte Carlo."""

import math

import numpy as np
import pytest

from iqpe.protocol import (
    RotationProtocol,
    ShotRecord,
    cfi,
    crb_stddev,
    estimate_alpha,
    indefinite_rotation_unitary,
    monte_carlo_precision,
    projection_probabilities,
    trial_rng,
)
from iqpe.scenarios import modal_ladder
from iqpe.statekit import ContractViolation, PureState, tensor

# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


def test_protocol_validation():
    with pytest.raises(ContractViolation):
        RotationProtocol(0)
    with pytest.raises(ContractViolation):
        RotationProtocol(1, delta_phi=4.0)


def test_shot_record_totals():
    record = ShotRecord(3, 5)
    assert record.nu_total == 8
    with pytest.raises(ContractViolation):
        ShotRecord(-1, 2)


# ---------------------------------------------------------------------------
# switched rotation unitary
# ---------------------------------------------------------------------------


def test_unitary_identity_at_zero():
    u = indefinite_rotation_unitary(RotationProtocol(3), 0.0)
    assert np.array_equal(u.entries, np.eye(8))


def test_unitary_blocks_l1():
    u = indefinite_rotation_unitary(RotationProtocol(1), math.pi / 2.0)
    # basis: (|H,l=1>, |H,l=-1>, |V,l=1>, |V,l=-1>)
    assert u.entries[0, 0] == pytest.approx(-1j, abs=1e-15)
    assert u.entries[2, 2] == pytest.approx(1j, abs=1e-15)


def test_unitary_reproduces_joint_state_amplitudes():
    l, alpha = 4, 0.23
    ladder = modal_ladder(l)
    plus = PureState(np.array([1.0, 1.0]) / math.sqrt(2.0), "HV")
    joint = tensor(plus, ladder.basis_state(l))
    final = indefinite_rotation_unitary(RotationProtocol(l), alpha).entries @ joint.amplitudes
    top = ladder.index_of(l)
    expected = np.zeros(2 * ladder.dim, dtype=complex)
    expected[top] = np.exp(-1j * l * alpha) / math.sqrt(2.0)
    expected[ladder.dim + top] = np.exp(1j * l * alpha) / math.sqrt(2.0)
    assert np.allclose(final, expected, atol=1e-14)


# ---------------------------------------------------------------------------
# projection probabilities
# ---------------------------------------------------------------------------


def test_probabilities_balanced_at_zero():
    assert projection_probabilities(RotationProtocol(5), 0.0) == (0.5, 0.5)


def test_probabilities_saturate():
    proto = RotationProtocol(1)
    p_l, p_r = projection_probabilities(proto, math.pi / 4.0)  # 2*l*alpha = pi/2
    assert p_l == pytest.approx(1.0, abs=1e-15)
    assert p_r == pytest.approx(0.0, abs=1e-15)


def test_probabilities_example_l30():
    # oracle: substitute 2*30*1deg + 0.35deg into the click formula
    proto = RotationProtocol(30, math.radians(0.35))
    p_l, _ = projection_probabilities(proto, math.radians(1.0))
    expected = 0.5 * (1.0 + math.sin(math.radians(60.35)))
    assert p_l == pytest.approx(expected, abs=1e-15)
    assert p_l == pytest.approx(0.9345, abs=5e-5)


def test_probabilities_sum_and_period():
    rng = np.random.default_rng(8)
    for _ in range(25):
        l = int(rng.integers(1, 40))
        proto = RotationProtocol(l, float(rng.uniform(-math.pi / 2, math.pi / 2)))
        alpha = float(rng.uniform(-0.01, 0.01))
        p_l, p_r = projection_probabilities(proto, alpha)
        assert p_l + p_r == 1.0
        assert 0.0 <= p_l <= 1.0
        shifted_l, _ = projection_probabilities(proto, alpha + math.pi / l)
        assert shifted_l == pytest.approx(p_l, abs=1e-9)


# ---------------------------------------------------------------------------
# classical Fisher information
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("l, expected", [(1, 4.0), (150, 90000.0)])
def test_cfi_value(l, expected):
    assert cfi(RotationProtocol(l), 1e-4) == pytest.approx(expected, abs=1e-9 * expected)


def test_cfi_matches_top_oam_switched_qfi():
    from iqpe.qfi import ParameterizedDynamics, iqpe_qfi

    l = 7
    ladder = modal_ladder(l)
    qfi_pole = iqpe_qfi(ParameterizedDynamics(ladder.lz), ladder.basis_state(l))
    assert cfi(RotationProtocol(l), 0.0) == pytest.approx(qfi_pole, rel=1e-12)


def test_cfi_finite_difference_oracle():
    proto = RotationProtocol(9, 0.2)
    alpha, h = 3e-3, 1e-7
    p_plus = projection_probabilities(proto, alpha + h)
    p_minus = projection_probabilities(proto, alpha - h)
    p0 = projection_probabilities(proto, alpha)
    fd = sum(
        ((hi - lo) / (2 * h)) ** 2 / p for hi, lo, p in zip(p_plus, p_minus, p0)
    )
    assert cfi(proto, alpha) == pytest.approx(fd, rel=1e-6)


def test_cfi_degenerate_names_alpha():
    proto = RotationProtocol(1)
    singular = math.pi / 4.0
    with pytest.raises(ContractViolation, match="0.785"):
        cfi(proto, singular)


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------


def test_estimator_balanced_counts():
    assert estimate_alpha(ShotRecord(500, 500), RotationProtocol(10)) == 0.0


def test_estimator_saturated_counts():
    got = estimate_alpha(ShotRecord(1000, 0), RotationProtocol(1))
    assert got == pytest.approx(math.pi / 4.0, abs=1e-15)


def test_estimator_requires_data():
    with pytest.raises(ContractViolation):
        estimate_alpha(ShotRecord(0, 0), RotationProtocol(1))


def test_estimator_inverts_probabilities_noiseless():
    rng = np.random.default_rng(12)
    nu = 10**7
    for _ in range(20):
        l = int(rng.integers(1, 60))
        proto = RotationProtocol(l, float(rng.uniform(-0.3, 0.3)))
        alpha = float(rng.uniform(-1.0, 1.0)) / (4.0 * l)  # keep |2 l a + dphi| < pi/2
        if abs(2 * l * alpha + proto.delta_phi) >= math.pi / 2:
            continue
        p_l, _ = projection_probabilities(proto, alpha)
        record = ShotRecord(round(p_l * nu), nu - round(p_l * nu))
        recovered = estimate_alpha(record, proto)
        assert recovered == pytest.approx(alpha, abs=1.0 / nu)


def test_estimator_monte_carlo_mean():
    proto = RotationProtocol(50)
    mean, stddev = monte_carlo_precision(proto, 1e-4, 10**6, 2000, seed=5)
    standard_error = stddev / math.sqrt(2000)
    assert abs(mean - 1e-4) < 3 * standard_error


# ---------------------------------------------------------------------------
# Monte Carlo precision
# ---------------------------------------------------------------------------


def test_monte_carlo_unbiased_at_null():
    mean, stddev = monte_carlo_precision(RotationProtocol(20), 0.0, 10**5, 1000, seed=3)
    assert abs(mean) < 3 * stddev / math.sqrt(1000)


def test_monte_carlo_reaches_crb():
    proto = RotationProtocol(50)
    _, stddev = monte_carlo_precision(proto, 1e-5, 10**6, 10**4, seed=42)
    assert stddev == pytest.approx(1e-5, rel=0.05)
    assert stddev == pytest.approx(crb_stddev(proto, 10**6), rel=0.05)


def test_monte_carlo_doubling_l_halves_spread():
    _, std_25 = monte_carlo_precision(RotationProtocol(25), 1e-5, 10**5, 4000, seed=9)
    _, std_50 = monte_carlo_precision(RotationProtocol(50), 1e-5, 10**5, 4000, seed=10)
    assert std_25 / std_50 == pytest.approx(2.0, rel=0.05)


@pytest.mark.parametrize("l", [1, 10, 50, 150])
def test_monte_carlo_crb_ratio_band(l):
    proto = RotationProtocol(l)
    _, stddev = monte_carlo_precision(proto, 0.0, 10**5, 2000, seed=100 + l)
    ratio = stddev / crb_stddev(proto, 10**5)
    assert 0.95 <= ratio <= 1.05


def test_monte_carlo_bias_small_in_linear_zone():
    proto = RotationProtocol(10)
    alpha = 0.04  # 2*l*alpha = 0.8 rad < 1
    mean, stddev = monte_carlo_precision(proto, alpha, 10**5, 4000, seed=77)
    assert abs(mean - alpha) < 0.1 * stddev


def test_monte_carlo_poisson_variant():
    proto = RotationProtocol(10)
    _, stddev = monte_carlo_precision(
        proto, 0.0, 10**5, 2000, seed=6, statistics="poisson"
    )
    assert stddev / crb_stddev(proto, 10**5) == pytest.approx(1.0, abs=0.1)
    with pytest.raises(ContractViolation):
        monte_carlo_precision(proto, 0.0, 10**5, 2000, seed=6, statistics="gaussian")


def test_monte_carlo_reproducible():
    proto = RotationProtocol(5)
    first = monte_carlo_precision(proto, 1e-4, 10**4, 500, seed=21)
    second = monte_carlo_precision(proto, 1e-4, 10**4, 500, seed=21)
    assert first == second
    third = monte_carlo_precision(proto, 1e-4, 10**4, 500, seed=22)
    assert first != third


def test_monte_carlo_argument_guards():
    proto = RotationProtocol(5)
    with pytest.raises(ContractViolation):
        monte_carlo_precision(proto, 0.0, 10**4, 50, seed=1)
    with pytest.raises(ContractViolation):
        monte_carlo_precision(proto, 0.0, 100, 500, seed=1)


def test_trial_rng_streams():
    a = trial_rng(7, 0).standard_normal(4)
    b = trial_rng(7, 0).standard_normal(4)
    c = trial_rng(7, 1).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ContractViolation):
        trial_rng(-1, 0)
