"""Indefinite-time-direction rotation measurement protocol.

A beam with orbital angular momentum l rides through a rotation of angle
alpha applied in both directions at once, controlled by the polarization
meter: the |H> component sees exp(-1j*alpha*Lz), the |V> component the
inverse.  Circular-basis projection then reads the rotation out of the meter
as the relative phase Phi = 2*l*alpha + delta_phi, where delta_phi is the
systematic phase offset of the apparatus.

Meter conventions (fixed): basis order (|H>, |V>); the detection states are
|L> = (|H> + 1j|V>)/sqrt(2) and |R> = (|H> - 1j|V>)/sqrt(2), which makes the
|L> click probability (1 + sin(Phi))/2.

Randomness: every stochastic entry point takes an explicit seed and feeds a
counter-based Philox generator keyed as (seed, stream-index), so results are
bit-reproducible and independent of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .scenarios import modal_ladder
from .statekit import ContractViolation, PureState, UnitaryMatrix, tensor

__all__ = [
    "RotationProtocol",
    "ShotRecord",
    "indefinite_rotation_unitary",
    "projection_probabilities",
    "cfi",
    "estimate_alpha",
    "monte_carlo_precision",
    "crb_stddev",
]

_UINT64_MASK = 0xFFFFFFFFFFFFFFFF

# Outcome probabilities closer than this to 0 or 1 are treated as degenerate.
DEGENERATE_PROB_TOL = 1e-12


def trial_rng(seed: int, stream: int) -> np.random.Generator:
    """Philox generator keyed on (seed, stream): reproducible, order-free."""
    if seed < 0:
        raise ContractViolation(f"seed must be >= 0, got {seed}")
    key = np.array([seed & _UINT64_MASK, stream & _UINT64_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class RotationProtocol:
    """Configuration of one rotation measurement: OAM value and phase offset."""

    oam_l: int
    delta_phi: float = 0.0

    def __post_init__(self):
        if self.oam_l < 1:
            raise ContractViolation(f"oam_l must be >= 1, got {self.oam_l}")
        if not (-math.pi < self.delta_phi <= math.pi):
            raise ContractViolation(
                f"delta_phi must lie in (-pi, pi], got {self.delta_phi}"
            )


@dataclass(frozen=True)
class ShotRecord:
    """Photon counts in the two circular detection channels."""

    nu_L: int
    nu_R: int
    nu_total: int = field(init=False)

    def __post_init__(self):
        if self.nu_L < 0 or self.nu_R < 0:
            raise ContractViolation("photon counts must be nonnegative")
        object.__setattr__(self, "nu_total", self.nu_L + self.nu_R)


@lru_cache(maxsize=8)
def _cached_ladder(order: int):
    return modal_ladder(order)


def indefinite_rotation_unitary(proto: RotationProtocol, alpha: float) -> UnitaryMatrix:
    """Joint meter+probe unitary: exp(-1j*alpha*Lz) (+) exp(+1j*alpha*Lz).

    Meter-outer block ordering on the order-l modal space; |H> selects the
    forward rotation, |V> the backward one.
    """
    ladder = _cached_ladder(proto.oam_l)
    oam = ladder.oam_values().astype(float)
    forward = np.exp(-1j * alpha * oam)
    dim = ladder.dim
    joint = np.zeros((2 * dim, 2 * dim), dtype=np.complex128)
    np.fill_diagonal(joint[:dim, :dim], forward)
    np.fill_diagonal(joint[dim:, dim:], forward.conj())
    return UnitaryMatrix(joint)


def _probabilities_state_route(proto: RotationProtocol, alpha: float) -> tuple[float, float]:
    """pL, pR from explicit joint-state evolution and projection."""
    ladder = _cached_ladder(proto.oam_l)
    meter = PureState(np.array([1.0, 1.0]) / np.sqrt(2.0), "HV")
    probe = ladder.basis_state(proto.oam_l)
    joint = tensor(meter, probe)
    evolved = indefinite_rotation_unitary(proto, alpha).entries @ joint.amplitudes
    # systematic phase offset on the |V> branch
    evolved[ladder.dim :] *= np.exp(1j * proto.delta_phi)
    h_branch = evolved[: ladder.dim]
    v_branch = evolved[ladder.dim :]
    # <L| = (<H| - 1j <V|)/sqrt(2), applied on the meter only
    l_component = (h_branch - 1j * v_branch) / math.sqrt(2.0)
    r_component = (h_branch + 1j * v_branch) / math.sqrt(2.0)
    p_l = float(np.sum(np.abs(l_component) ** 2))
    p_r = float(np.sum(np.abs(r_component) ** 2))
    return p_l, p_r


def projection_probabilities(proto: RotationProtocol, alpha: float) -> tuple[float, float]:
    """Click probabilities (pL, pR) of the circular-basis measurement.

    pL = [1 + sin(2*l*alpha + delta_phi)] / 2 and pR = 1 - pL; the closed
    form is cross-checked against explicit state projection within 1e-12.
    """
    total_phase = 2.0 * proto.oam_l * alpha + proto.delta_phi
    p_l = 0.5 * (1.0 + math.sin(total_phase))
    p_r = 1.0 - p_l
    p_l_state, p_r_state = _probabilities_state_route(proto, alpha)
    if abs(p_l - p_l_state) > 1e-12 or abs(p_r - p_r_state) > 1e-12:
        raise ContractViolation(
            f"closed-form probabilities ({p_l}, {p_r}) disagree with the "
            f"state route ({p_l_state}, {p_r_state})"
        )
    return p_l, p_r


def cfi(proto: RotationProtocol, alpha: float) -> float:
    """Classical Fisher information of the two-outcome measurement: 4*l^2.

    Sums (dp/dalpha)^2 / p over both outcomes.  The probabilities are
    evaluated in half-angle form so the sum stays accurate near saturation;
    exactly degenerate statistics raise instead.
    """
    l = proto.oam_l
    total_phase = 2.0 * l * alpha + proto.delta_phi
    # pL = cos^2(pi/4 - Phi/2), pR = sin^2(pi/4 - Phi/2): no cancellation.
    half = math.pi / 4.0 - total_phase / 2.0
    p_l = math.cos(half) ** 2
    p_r = math.sin(half) ** 2
    if min(p_l, p_r) < DEGENERATE_PROB_TOL:
        raise ContractViolation(
            f"degenerate statistics at alpha={alpha}: outcome probability "
            f"within {DEGENERATE_PROB_TOL} of 0 or 1"
        )
    dp = l * math.cos(total_phase)  # dpL/dalpha; dpR/dalpha = -dp
    return dp * dp * (1.0 / p_l + 1.0 / p_r)


def estimate_alpha(record: ShotRecord, proto: RotationProtocol) -> float:
    """Invert the click statistics: [arcsin(dn/n) - delta_phi] / (2*l).

    The count ratio is clamped to [-1, 1] so shot-noise excursions past the
    saturation point stay estimable (at the cost of a bias that grows as
    |2*l*alpha + delta_phi| approaches pi/2).
    """
    if record.nu_total < 1:
        raise ContractViolation("cannot estimate from an empty shot record")
    ratio = (record.nu_L - record.nu_R) / record.nu_total
    ratio = min(1.0, max(-1.0, ratio))
    return (math.asin(ratio) - proto.delta_phi) / (2.0 * proto.oam_l)


def crb_stddev(proto: RotationProtocol, nu: int) -> float:
    """Cramer-Rao limit on the estimator spread: 1 / (2*l*sqrt(nu))."""
    return 1.0 / (2.0 * proto.oam_l * math.sqrt(nu))


def monte_carlo_precision(
    proto: RotationProtocol,
    alpha_true: float,
    nu: int,
    trials: int,
    seed: int,
    statistics: str = "binomial",
) -> tuple[float, float]:
    """Sampled estimator mean and standard deviation at a true rotation angle.

    Each trial draws nu photons split between the two channels (binomial by
    default; ``statistics="poisson"`` draws the two channel counts as
    independent Poisson variables of the same means) and applies
    estimate_alpha.  Trial i uses the Philox stream keyed (seed, i), so
    results do not depend on evaluation order.
    """
    if trials < 100:
        raise ContractViolation(f"trials must be >= 100, got {trials}")
    if nu < 1000:
        raise ContractViolation(f"nu must be >= 1000, got {nu}")
    if statistics not in ("binomial", "poisson"):
        raise ContractViolation(f"unknown statistics model {statistics!r}")
    p_l, _ = projection_probabilities(proto, alpha_true)
    estimates = np.empty(trials)
    for i in range(trials):
        rng = trial_rng(seed, i)
        if statistics == "binomial":
            n_l = int(rng.binomial(nu, p_l))
            record = ShotRecord(n_l, nu - n_l)
        else:
            n_l = int(rng.poisson(nu * p_l))
            n_r = int(rng.poisson(nu * (1.0 - p_l)))
            record = ShotRecord(n_l, n_r)
        estimates[i] = estimate_alpha(record, proto)
    return float(np.mean(estimates)), float(np.std(estimates, ddof=1))
