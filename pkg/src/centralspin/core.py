"""Dense complex linear algebra for small spin registers.

State layout
------------
A register holds one central spin (readable sensor qubit) plus ``n`` dark
spins.  Basis states are indexed little-endian: bit ``k`` of the basis index
gives the state of spin ``k``, with spin 0 the central spin and spins
``1..n`` the dark spins.  Bit value 0 means ``|0>`` for the central spin and
``|up>`` for a dark spin; bit value 1 means ``|1>`` / ``|down>``.

All propagators are computed exactly through Hermitian eigendecomposition;
there is no Trotterization anywhere.  Rotations follow the half-angle
convention ``exp(-i * angle * sigma_axis / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PAULI_X",
    "PAULI_Y",
    "PAULI_Z",
    "IDENTITY_2",
    "StateVector",
    "OperatorMatrix",
    "embed_single_spin_op",
    "evolve",
    "rotation_matrix",
    "apply_rotation",
    "probability_central_one",
    "central_coherence",
    "fidelity",
]

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

_AXES = {
    "x": PAULI_X,
    "y": PAULI_Y,
    "z": PAULI_Z,
    "-x": -PAULI_X,
    "-y": -PAULI_Y,
    "-z": -PAULI_Z,
}

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class StateVector:
    """Pure state of a (1 + n_dark)-spin register.

    ``amplitudes`` has length ``2**n_spins`` and unit Euclidean norm.
    """

    n_spins: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size != 2**self.n_spins:
            raise ValueError(
                f"amplitude vector must have length 2**{self.n_spins}, got {amps.shape}"
            )
        nrm = np.linalg.norm(amps)
        if abs(nrm - 1.0) > _NORM_TOL:
            raise ValueError(f"state norm {nrm!r} deviates from 1 beyond tolerance")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def basis_state(cls, n_spins: int, index: int) -> "StateVector":
        """Computational basis state with the given little-endian index."""
        amps = np.zeros(2**n_spins, dtype=complex)
        amps[index] = 1.0
        return cls(n_spins, amps)


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense operator on a power-of-two Hilbert space.

    When ``hermitian`` is set the matrix is checked against its conjugate
    transpose at construction, and ``eigensystem()`` caches the
    eigendecomposition used by the exact propagator.
    """

    dim: int
    entries: np.ndarray
    hermitian: bool = False
    _eig: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        mat = np.asarray(self.entries, dtype=complex)
        if mat.shape != (self.dim, self.dim):
            raise ValueError(f"matrix shape {mat.shape} != ({self.dim}, {self.dim})")
        if self.dim & (self.dim - 1):
            raise ValueError(f"dimension {self.dim} is not a power of two")
        if self.hermitian and not np.allclose(mat, mat.conj().T, atol=1e-12):
            raise ValueError("hermitian flag set but matrix is not self-adjoint")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "entries", mat)

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (eigenvalues, eigenvectors); Hermitian input only. Cached."""
        if not self.hermitian:
            raise ValueError("eigensystem requires the hermitian flag")
        if not self._eig:
            w, v = np.linalg.eigh(self.entries)
            self._eig.append((w, v))
        return self._eig[0]


def embed_single_spin_op(local_op: np.ndarray, site: int, n_spins: int) -> OperatorMatrix:
    """Embed a 2x2 operator on one spin into the full register.

    Returns identity on every other factor, ordered so that spin 0 occupies
    the least significant bit of the basis index.
    """
    local = np.asarray(local_op, dtype=complex)
    if local.shape != (2, 2):
        raise ValueError(f"local operator must be 2x2, got {local.shape}")
    if not 0 <= site < n_spins:
        raise ValueError(f"site {site} out of range for {n_spins} spins")
    mat = np.eye(1, dtype=complex)
    for k in range(n_spins):
        factor = local if k == site else IDENTITY_2
        mat = np.kron(factor, mat)  # spin k lands on bit k
    hermitian = bool(np.allclose(local, local.conj().T, atol=1e-12))
    return OperatorMatrix(2**n_spins, mat, hermitian=hermitian)


def evolve(state: StateVector, hamiltonian: OperatorMatrix, t: float) -> StateVector:
    """Propagate ``state`` by ``exp(-i H t)`` (hbar = 1), exactly.

    Uses the cached Hermitian eigendecomposition of ``hamiltonian``; raises on
    a non-Hermitian operator or a dimension mismatch.
    """
    if not hamiltonian.hermitian:
        raise ValueError("evolve requires a Hermitian operator")
    if hamiltonian.dim != state.dim:
        raise ValueError(
            f"dimension mismatch: state {state.dim}, operator {hamiltonian.dim}"
        )
    w, v = hamiltonian.eigensystem()
    coeff = v.conj().T @ state.amplitudes
    coeff *= np.exp(-1j * w * t)
    return StateVector(state.n_spins, v @ coeff)


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """2x2 rotation ``exp(-i * angle * sigma_axis / 2)``."""
    try:
        sigma = _AXES[axis]
    except KeyError:
        raise ValueError(f"unknown rotation axis {axis!r}") from None
    half = 0.5 * angle
    return np.cos(half) * IDENTITY_2 - 1j * np.sin(half) * sigma


def _target_sites(target, n_spins: int) -> list[int]:
    """Resolve a pulse target to absolute spin sites.

    Accepted targets: ``'central'`` (site 0), ``'dark'`` / ``'dark_all'``
    (every dark spin, collective pulse), ``'dark[i]'`` with dark index i
    (site i + 1).
    """
    if target == "central":
        return [0]
    if target in ("dark", "dark_all"):
        return list(range(1, n_spins))
    if isinstance(target, str) and target.startswith("dark[") and target.endswith("]"):
        idx = int(target[5:-1])
        site = idx + 1
        if not 1 <= site < n_spins:
            raise ValueError(f"dark spin index {idx} out of range (n_dark={n_spins - 1})")
        return [site]
    raise ValueError(f"invalid rotation target {target!r}")


def _apply_one_site(amps: np.ndarray, gate: np.ndarray, site: int, n_spins: int) -> np.ndarray:
    """Contract a 2x2 gate into one tensor factor of a flat amplitude array."""
    resh = amps.reshape([2] * n_spins)
    # little-endian: spin k is reshape axis (n_spins - 1 - k)
    axis = n_spins - 1 - site
    moved = np.moveaxis(resh, axis, -1)
    moved = moved @ gate.T
    return np.moveaxis(moved, -1, axis).reshape(-1)


def apply_rotation(state: StateVector, target, axis: str, angle: float) -> StateVector:
    """Rotate the targeted spin(s) by ``exp(-i * angle * sigma_axis / 2)``.

    A collective target applies the same rotation to every dark spin
    simultaneously.
    """
    gate = rotation_matrix(axis, angle)
    amps = np.array(state.amplitudes)
    for site in _target_sites(target, state.n_spins):
        amps = _apply_one_site(amps, gate, site, state.n_spins)
    return StateVector(state.n_spins, amps)


def probability_central_one(state: StateVector) -> float:
    """Probability of finding the central spin in ``|1>``."""
    # bit 0 is the fastest-varying index
    pairs = state.amplitudes.reshape(-1, 2)
    return float(np.sum(np.abs(pairs[:, 1]) ** 2))


def central_coherence(state: StateVector) -> complex:
    """Off-diagonal central-spin coherence ``<a1|a0>``.

    For a state ``(|0>|a0> + |1>|a1>)/sqrt(2)`` with normalized branch
    states, returns the branch overlap; its imaginary part is the mid-fringe
    signal ``2*P1 - 1`` after a final pi/2 readout pulse about x, its real
    part the fringe-top signal after a readout about y.
    """
    pairs = state.amplitudes.reshape(-1, 2)
    return 2.0 * complex(np.vdot(pairs[:, 1], pairs[:, 0]))


def fidelity(a: StateVector, b: StateVector) -> float:
    """Squared overlap ``|<a|b>|**2``; symmetric, global-phase insensitive."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
