"""Concrete metrological scenarios.

Three encodings are covered, each with its characteristic operator:

* Kerr-type phase on a truncated Fock space (photon-number operator),
* birefringent phase on the polarization sphere (first Stokes operator),
* beam-profile rotation on the modal sphere of fixed-order transverse modes
  (orbital-angular-momentum operator).

Conventions fixed here and inherited everywhere else:

* Polarization basis is (|R>, |L>) with |R> at the north pole.
* The modal basis of order N is ordered by descending OAM value,
  l = N, N-2, ..., -N, so the north-pole mode is the first basis vector
  (mirroring the polarization convention).
* The LG transverse field carries the azimuthal phase exp(-1j*l*phi); all
  derived phase signs follow from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy.special import eval_genlaguerre, gammaln

from .qfi import ParameterizedDynamics, iqpe_qfi, sqpe_qfi
from .statekit import (
    ContractViolation,
    HermitianOperator,
    PureState,
    apply_unitary,
    expm_herm_generator,
)

__all__ = [
    "SpherePoint",
    "ModalLadder",
    "LgFieldSample",
    "SphereMapRow",
    "stokes_operators",
    "polarization_state",
    "birefringence_qfi_map",
    "modal_ladder",
    "hlg_state",
    "rotation_qfi_map",
    "kerr_qfi",
    "coherent_state",
    "number_operator",
    "kerr_truncation",
    "lg_field",
    "field_rotation_check",
    "sphere_grid",
    "write_sphere_map_csv",
    "save_lg_field",
    "load_lg_field",
]

MAX_LADDER_ORDER = 300

# Fock-space truncation margin for coherent states; asserts a Poisson tail
# below this probability.
COHERENT_TAIL_TOL = 1e-12

# lg_field rejects grids whose boundary intensity exceeds this fraction of
# the peak (aliasing guard for the rotation resampling check).
LG_BOUNDARY_INTENSITY_RATIO = 1e-8


@dataclass(frozen=True)
class SpherePoint:
    """Euler angles addressing a state on the polarization or modal sphere."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= math.pi):
            raise ContractViolation(f"theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "phi", float(self.phi) % (2.0 * math.pi))


class SphereMapRow(NamedTuple):
    theta: float
    phi: float
    qfi_sqpe: float
    qfi_iqpe: float


@dataclass(frozen=True)
class ModalLadder:
    """su(2) ladder operators of the order-N transverse-mode space.

    j1, j2, j3 act on the (N+1)-dimensional space spanned by |N, l> with
    l = N, N-2, ..., -N (descending).  lz = 2*j3 has eigenvalue l on |N, l>.
    """

    order_N: int
    j1: HermitianOperator
    j2: HermitianOperator
    j3: HermitianOperator
    lz: HermitianOperator

    def __post_init__(self):
        dim = self.order_N + 1
        a1, a2, a3 = self.j1.entries, self.j2.entries, self.j3.entries
        for a, b, c, name in (
            (a1, a2, a3, "[j1,j2]=i*j3"),
            (a2, a3, a1, "[j2,j3]=i*j1"),
            (a3, a1, a2, "[j3,j1]=i*j2"),
        ):
            residual = np.linalg.norm(a @ b - b @ a - 1j * c, ord="fro")
            if residual > 1e-10:
                raise ContractViolation(f"commutator {name} residual {residual:.3e}")
        j = self.order_N / 2.0
        casimir = a1 @ a1 + a2 @ a2 + a3 @ a3
        residual = np.max(np.abs(casimir - j * (j + 1.0) * np.eye(dim)))
        if residual > 1e-9:
            raise ContractViolation(f"Casimir residual {residual:.3e}")
        diag = np.diag(self.lz.entries)
        expected = self.oam_values().astype(np.complex128)
        if np.max(np.abs(self.lz.entries - np.diag(diag))) > 1e-12 or np.max(
            np.abs(diag - expected)
        ) > 1e-12:
            raise ContractViolation("lz is not diag(N, N-2, ..., -N)")

    @property
    def dim(self) -> int:
        return self.order_N + 1

    def oam_values(self) -> np.ndarray:
        """OAM value per basis index, descending: N, N-2, ..., -N."""
        return self.order_N - 2 * np.arange(self.order_N + 1)

    def index_of(self, l: int) -> int:
        if (l + self.order_N) % 2 != 0 or abs(l) > self.order_N:
            raise ContractViolation(
                f"l={l} not in the order-{self.order_N} ladder "
                f"(allowed: -N, -N+2, ..., N)"
            )
        return (self.order_N - l) // 2

    def basis_state(self, l: int) -> PureState:
        return PureState.basis_vector(self.dim, self.index_of(l), "N-l ladder")


@dataclass(frozen=True)
class LgFieldSample:
    """LG transverse field sampled on a square grid, discretely normalized.

    ``grid[iy, ix]`` holds the complex amplitude at (x[ix], y[iy]) with both
    axes running over grid_n points spanning [-extent, extent] in waist units.
    """

    grid: np.ndarray
    extent: float
    p: int
    l: int

    def __post_init__(self):
        grid = np.array(self.grid, dtype=np.complex128, copy=True)
        if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
            raise ContractViolation(f"grid must be square, got shape {grid.shape}")
        cell = self.cell_area()
        norm_sq = float(np.sum(np.abs(grid) ** 2) * cell)
        if abs(norm_sq - 1.0) > 2e-6:
            raise ContractViolation(f"discrete norm^2 {norm_sq!r} is not 1 within 1e-6")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def grid_n(self) -> int:
        return self.grid.shape[0]

    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.grid_n)

    def cell_area(self) -> float:
        step = 2.0 * self.extent / (self.grid_n - 1)
        return step * step


def stokes_operators() -> tuple[HermitianOperator, HermitianOperator, HermitianOperator]:
    """The three Stokes operators as Pauli matrices in the (|R>, |L>) basis."""
    s1 = HermitianOperator(np.array([[0, 1], [1, 0]], dtype=np.complex128))
    s2 = HermitianOperator(np.array([[0, -1j], [1j, 0]], dtype=np.complex128))
    s3 = HermitianOperator(np.array([[1, 0], [0, -1]], dtype=np.complex128))
    return s1, s2, s3


def polarization_state(pt: SpherePoint) -> PureState:
    """cos(theta/2)|R> + sin(theta/2) e^{i phi}|L> (global phase dropped)."""
    half = pt.theta / 2.0
    amps = np.array([math.cos(half), math.sin(half) * np.exp(1j * pt.phi)])
    return PureState(amps, "RL")


def sphere_grid(resolution: int) -> list[SpherePoint]:
    """Equiangular grid: ``resolution`` thetas over [0, pi] (inclusive) by
    ``2*resolution`` phis over [0, 2*pi)."""
    if resolution < 2:
        raise ContractViolation(f"resolution must be >= 2, got {resolution}")
    thetas = np.linspace(0.0, math.pi, resolution)
    phis = np.linspace(0.0, 2.0 * math.pi, 2 * resolution, endpoint=False)
    return [SpherePoint(t, p) for t in thetas for p in phis]


def _cross_check(label, pt, closed, engine, rtol, atol):
    if abs(closed - engine) > rtol * max(abs(closed), abs(engine)) + atol:
        raise ContractViolation(
            f"{label} closed form {closed!r} vs engine {engine!r} at "
            f"theta={pt.theta}, phi={pt.phi}"
        )


def birefringence_qfi_map(grid_resolution: int) -> list[SphereMapRow]:
    """QFI of the birefringent phase over the polarization sphere.

    Closed forms: 4 - 4 sin^2(theta) cos^2(phi) for the standard procedure
    and a flat 4 for the switched one.  Every grid point is cross-checked
    against the generic engine within 1e-8.
    """
    s1, _, _ = stokes_operators()
    dyn = ParameterizedDynamics(s1)
    rows = []
    for pt in sphere_grid(grid_resolution):
        probe = polarization_state(pt)
        closed_s = 4.0 - 4.0 * math.sin(pt.theta) ** 2 * math.cos(pt.phi) ** 2
        closed_i = 4.0
        _cross_check("birefringence standard QFI", pt, closed_s, sqpe_qfi(dyn, probe), 0.0, 1e-8)
        _cross_check("birefringence switched QFI", pt, closed_i, iqpe_qfi(dyn, probe), 0.0, 1e-8)
        rows.append(SphereMapRow(pt.theta, pt.phi, closed_s, closed_i))
    return rows


def modal_ladder(order_N: int) -> ModalLadder:
    """Angular-momentum matrices of the spin-(N/2) representation.

    Built from the standard raising/lowering matrix elements on the basis
    |N, l>, l descending from N to -N (so m = l/2 descends from j to -j).
    """
    if not (0 <= order_N <= MAX_LADDER_ORDER):
        raise ContractViolation(
            f"order must lie in [0, {MAX_LADDER_ORDER}], got {order_N}"
        )
    j = order_N / 2.0
    dim = order_N + 1
    m = j - np.arange(dim)  # descending: j, j-1, ..., -j
    # raising: <m+1|J+|m> = sqrt(j(j+1) - m(m+1)); with descending basis the
    # raising operator populates the superdiagonal.
    raise_elems = np.sqrt(j * (j + 1.0) - m[1:] * (m[1:] + 1.0))
    j_plus = np.zeros((dim, dim), dtype=np.complex128)
    j_plus[np.arange(dim - 1), np.arange(1, dim)] = raise_elems
    j_minus = j_plus.conj().T
    j1 = HermitianOperator(0.5 * (j_plus + j_minus))
    j2 = HermitianOperator(-0.5j * (j_plus - j_minus))
    j3 = HermitianOperator(np.diag(m.astype(np.complex128)))
    lz = HermitianOperator(np.diag((2.0 * m).astype(np.complex128)))
    return ModalLadder(order_N, j1, j2, j3, lz)


def hlg_state(ladder: ModalLadder, l: int, pt: SpherePoint) -> PureState:
    """Euler-rotated mode exp(-1j*j3*phi) exp(-1j*j2*theta)|N, l>."""
    start = ladder.basis_state(l)
    tilted = apply_unitary(expm_herm_generator(ladder.j2, pt.theta), start)
    return apply_unitary(expm_herm_generator(ladder.j3, pt.phi), tilted)


def rotation_qfi_map(order_N: int, grid_resolution: int) -> list[SphereMapRow]:
    """QFI of the rotation angle over the modal sphere, top-OAM start mode.

    Closed forms for the l=N start state: 4 N sin^2(theta) and
    4 N^2 cos^2(theta) + 4 N sin^2(theta).  Each grid point is cross-checked
    against the matrix engine within 1e-6 relative.  Other start modes have
    no closed form here; use the engine directly for those.
    """
    ladder = modal_ladder(order_N)
    dyn = ParameterizedDynamics(ladder.lz)
    n = float(order_N)
    rows = []
    for pt in sphere_grid(grid_resolution):
        probe = hlg_state(ladder, order_N, pt)
        sin_sq = math.sin(pt.theta) ** 2
        closed_s = 4.0 * n * sin_sq
        closed_i = 4.0 * n * n * (1.0 - sin_sq) + 4.0 * n * sin_sq
        _cross_check("rotation standard QFI", pt, closed_s, sqpe_qfi(dyn, probe), 1e-6, 1e-8)
        _cross_check("rotation switched QFI", pt, closed_i, iqpe_qfi(dyn, probe), 1e-6, 1e-8)
        rows.append(SphereMapRow(pt.theta, pt.phi, closed_s, closed_i))
    return rows


def kerr_truncation(nbar: float) -> int:
    """Default Fock truncation for a coherent state of mean photon number nbar."""
    return int(16 * math.ceil(nbar) + 32)


def _coherent_amplitudes(nbar: float, truncation: int) -> np.ndarray:
    # log-domain Poisson weights; amplitude phase irrelevant for number
    # statistics, so the coherent amplitude is taken real and positive.
    n = np.arange(truncation)
    if nbar == 0.0:
        amps = np.zeros(truncation)
        amps[0] = 1.0
        return amps
    log_p = n * math.log(nbar) - nbar - gammaln(n + 1.0)
    return np.exp(0.5 * log_p)


def coherent_state(nbar: float, truncation: int | None = None) -> PureState:
    """Coherent state on a truncated Fock space, tail below COHERENT_TAIL_TOL."""
    if nbar < 0.0:
        raise ContractViolation(f"mean photon number must be >= 0, got {nbar}")
    if truncation is None:
        truncation = kerr_truncation(nbar)
    amps = _coherent_amplitudes(nbar, truncation)
    tail = 1.0 - float(np.sum(amps**2))
    if tail >= COHERENT_TAIL_TOL:
        raise ContractViolation(
            f"insufficient truncation {truncation} for nbar={nbar}: "
            f"tail probability {tail:.3e}"
        )
    return PureState.normalized(amps, "fock")


def number_operator(truncation: int) -> HermitianOperator:
    return HermitianOperator(np.diag(np.arange(truncation, dtype=np.complex128)))


def kerr_qfi(nbar: float, truncation: int | None = None) -> tuple[float, float]:
    """QFI pair (standard, switched) for a Kerr-type phase on a coherent probe.

    Expected values 4*nbar and 4*nbar^2 + 4*nbar within 1e-4 relative.
    """
    if truncation is None:
        truncation = kerr_truncation(nbar)
    probe = coherent_state(nbar, truncation)
    dyn = ParameterizedDynamics(number_operator(truncation))
    return sqpe_qfi(dyn, probe), iqpe_qfi(dyn, probe)


def lg_field(p: int, l: int, grid_n: int, extent: float) -> LgFieldSample:
    """Sample the focal-plane LG transverse field on a square grid.

    Radial index p, topological charge l; azimuthal phase exp(-1j*l*phi).
    Lengths are in waist units (w = 1).  The printed normalization prefactor
    is applied and then superseded by exact discrete normalization.
    """
    if grid_n < 64:
        raise ContractViolation(f"grid_n must be >= 64, got {grid_n}")
    if p < 0:
        raise ContractViolation(f"radial index must be >= 0, got {p}")
    if extent < 4.0:
        raise ContractViolation(f"extent must be >= 4 waists, got {extent}")
    axis = np.linspace(-extent, extent, grid_n)
    x, y = np.meshgrid(axis, axis)
    r_sq = x * x + y * y
    phi = np.arctan2(y, x)
    al = abs(l)
    log_prefactor = 0.5 * (
        (al + 1.0) * math.log(2.0)
        + gammaln(p + 1.0)
        - math.log(math.pi)
        - gammaln(p + al + 1.0)
    )
    radial = (
        math.exp(log_prefactor)
        * eval_genlaguerre(p, al, 2.0 * r_sq)
        * np.sqrt(r_sq) ** al
        * np.exp(-r_sq)
    )
    field = radial * np.exp(-1j * l * phi)
    peak = float(np.max(np.abs(field) ** 2))
    boundary = float(
        max(
            np.max(np.abs(field[0, :]) ** 2),
            np.max(np.abs(field[-1, :]) ** 2),
            np.max(np.abs(field[:, 0]) ** 2),
            np.max(np.abs(field[:, -1]) ** 2),
        )
    )
    if boundary > LG_BOUNDARY_INTENSITY_RATIO * peak:
        raise ContractViolation(
            f"extent {extent} too small for p={p}, l={l}: boundary intensity "
            f"{boundary / peak:.3e} of peak exceeds {LG_BOUNDARY_INTENSITY_RATIO}"
        )
    step = 2.0 * extent / (grid_n - 1)
    norm = math.sqrt(float(np.sum(np.abs(field) ** 2)) * step * step)
    return LgFieldSample(field / norm, extent, p, l)


def rotate_field(field: LgFieldSample, alpha: float) -> np.ndarray:
    """Rotate the sampled profile by alpha via bilinear resampling.

    The rotated field samples the original at azimuth (phi - alpha); points
    resampled from outside the grid are zero-padded.
    """
    n = field.grid_n
    center = (n - 1) / 2.0
    step = 2.0 * field.extent / (n - 1)
    idx = np.arange(n)
    col, row = np.meshgrid(idx, idx)
    x = (col - center) * step
    y = (row - center) * step
    cos_a, sin_a = math.cos(alpha), math.sin(alpha)
    x_src = cos_a * x + sin_a * y
    y_src = -sin_a * x + cos_a * y
    coords = np.stack([y_src / step + center, x_src / step + center])
    real = ndimage.map_coordinates(field.grid.real, coords, order=1, mode="constant", cval=0.0)
    imag = ndimage.map_coordinates(field.grid.imag, coords, order=1, mode="constant", cval=0.0)
    return real + 1j * imag


def field_rotation_check(field: LgFieldSample, alpha: float) -> complex:
    """Overlap <rotated|original> of a p=0 LG sample with its rotated copy.

    For a pure charge-l mode the overlap is exp(-1j*l*alpha) up to resampling
    error (modulus within 5e-3 of 1, phase within 5e-3 rad).
    """
    if field.p != 0:
        raise ContractViolation("rotation check requires a pure p=0 LG field")
    rotated = rotate_field(field, alpha)
    return complex(np.sum(rotated.conj() * field.grid) * field.cell_area())


def write_sphere_map_csv(rows: list[SphereMapRow], path) -> None:
    """CSV with header theta,phi,qfi_sqpe,qfi_iqpe (radians, engine units)."""
    lines = ["theta,phi,qfi_sqpe,qfi_iqpe"]
    for row in rows:
        lines.append(
            f"{row.theta:.17g},{row.phi:.17g},{row.qfi_sqpe:.17g},{row.qfi_iqpe:.17g}"
        )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


_LG_MAGIC = "lgfield v1"


def save_lg_field(field: LgFieldSample, path) -> None:
    """Flat binary dump: ASCII header, then grid_n^2 little-endian complex128.

    Header lines: magic, grid_n, extent, p, l, dtype, then ``end``.  The grid
    is row-major with the y index slow, matching LgFieldSample.grid.
    """
    header = (
        f"{_LG_MAGIC}\n"
        f"grid_n {field.grid_n}\n"
        f"extent {field.extent:.17g}\n"
        f"p {field.p}\n"
        f"l {field.l}\n"
        f"dtype complex128-le\n"
        f"end\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(field.grid, dtype="<c16").tobytes())


def load_lg_field(path) -> LgFieldSample:
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii").strip()
        if first != _LG_MAGIC:
            raise ContractViolation(f"not a {_LG_MAGIC} file: {first!r}")
        meta = {}
        while True:
            line = fh.readline().decode("ascii").strip()
            if line == "end":
                break
            if not line:
                raise ContractViolation("truncated field-file header")
            key, value = line.split(maxsplit=1)
            meta[key] = value
        grid_n = int(meta["grid_n"])
        raw = fh.read(grid_n * grid_n * 16)
        grid = np.frombuffer(raw, dtype="<c16").reshape(grid_n, grid_n)
    return LgFieldSample(grid, float(meta["extent"]), int(meta["p"]), int(meta["l"]))
