"""Physical system definition: couplings, geometry, field waveforms, Hamiltonians.

Operator conventions
--------------------
The central spin enters through ``Sz = |1><1| - 1/2`` (traceless, so spin-echo
cancellation is exact).  Dark-spin operators ``Iz``, ``Ix`` are Pauli matrices
(eigenvalues +-1, with ``|up>`` the +1 eigenstate of Iz).  The full Hamiltonian
assembled by :func:`build_hamiltonian` is::

    H = b * (kappa_s * Sz + xi * sum_i Iz_i)          (field term)
      + |1><1| * sum_i lam_i * I_axis(i)_i            (sensor-bath coupling)
      + sum_{i<j} kappa_ij * (3 Iz_i Iz_j - I_i.I_j)  (optional dipolar bath)

With this normalization a dc field b applied for a time tau winds the
up/down relative phase of each dark spin by ``2*xi*b*tau``, and the ideal
entangling gate of angle phi maps ``|up> -> cos(phi)|up> - i sin(phi)|down>``.
All couplings are angular frequencies in units where g*mu_B = 1.

Dipolar couplings derived from positions carry a unit prefactor:
``lam_i = (1 - 3 cos^2 theta_i) / r_i^3`` for the sensor-spin vector and
``kappa_ij = (1 - 3 cos^2 theta_ij) / (2 r_ij^3)`` between dark spins (the
1/2 absorbs the i<j pair counting).  Alternative unit conventions are a
one-line change in :func:`dipolar_couplings`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import OperatorMatrix, StateVector

__all__ = [
    "EXACT_DARK_SPIN_CAP",
    "GeometryError",
    "SimulationSizeError",
    "SpinSystem",
    "FieldWaveform",
    "Geometry",
    "sample_geometry",
    "dipolar_couplings",
    "build_hamiltonian",
    "sample_initial_state",
]

# Largest n_dark accepted for exact dense evolution (dim 2^(n+1) = 2048).
EXACT_DARK_SPIN_CAP = 10


class GeometryError(ValueError):
    """Raised when random placement cannot satisfy the exclusion radius."""


class SimulationSizeError(ValueError):
    """Raised when a register exceeds the exact-simulation cap."""


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SpinSystem:
    """Central spin plus ``n_dark`` dark spins and their couplings.

    ``lam[i]`` couples the sensor to dark spin i, ``xi`` and ``kappa_s``
    couple dark spins and the sensor to the external field, ``kappa_bath``
    is the symmetric zero-diagonal matrix of intra-bath couplings, and
    ``polarization`` is the probability bias of the initial dark-spin
    ensemble (each spin up with probability (1 + P)/2).
    """

    n_dark: int
    lam: np.ndarray
    xi: float = 0.0
    kappa_s: float = 0.0
    kappa_bath: np.ndarray | None = None
    polarization: float = 1.0
    positions: np.ndarray | None = None

    def __post_init__(self):
        lam = _frozen(self.lam)
        if lam.shape != (self.n_dark,):
            raise ValueError(f"lam must have shape ({self.n_dark},), got {lam.shape}")
        object.__setattr__(self, "lam", lam)
        kb = self.kappa_bath
        kb = np.zeros((self.n_dark, self.n_dark)) if kb is None else np.array(kb, dtype=float)
        if kb.shape != (self.n_dark, self.n_dark):
            raise ValueError(f"kappa_bath must be {self.n_dark}x{self.n_dark}, got {kb.shape}")
        if not np.allclose(kb, kb.T, atol=1e-12):
            raise ValueError("kappa_bath must be symmetric")
        if np.any(np.abs(np.diag(kb)) > 1e-12):
            raise ValueError("kappa_bath must have zero diagonal")
        object.__setattr__(self, "kappa_bath", _frozen(kb))
        if not -1.0 <= self.polarization <= 1.0:
            raise ValueError(f"polarization {self.polarization} outside [-1, 1]")
        if self.positions is not None:
            pos = _frozen(self.positions)
            if pos.shape != (self.n_dark, 3):
                raise ValueError(f"positions must be ({self.n_dark}, 3), got {pos.shape}")
            object.__setattr__(self, "positions", pos)

    @property
    def n_spins(self) -> int:
        return self.n_dark + 1

    def with_bath(self, enabled: bool) -> "SpinSystem":
        if enabled:
            return self
        return replace(self, kappa_bath=np.zeros((self.n_dark, self.n_dark)))

    def pair_subsystem(self, i: int, j: int) -> "SpinSystem":
        """Central spin plus dark spins i and j only, keeping their couplings."""
        kb = np.zeros((2, 2))
        kb[0, 1] = kb[1, 0] = self.kappa_bath[i, j]
        return SpinSystem(
            n_dark=2,
            lam=self.lam[[i, j]],
            xi=self.xi,
            kappa_s=self.kappa_s,
            kappa_bath=kb,
            polarization=self.polarization,
        )

    def single_subsystem(self, i: int) -> "SpinSystem":
        """Central spin plus dark spin i only."""
        return SpinSystem(
            n_dark=1,
            lam=self.lam[[i]],
            xi=self.xi,
            kappa_s=self.kappa_s,
            polarization=self.polarization,
        )

    @classmethod
    def from_geometry(
        cls,
        geometry: "Geometry",
        xi: float = 0.0,
        kappa_s: float = 0.0,
        polarization: float = 1.0,
    ) -> "SpinSystem":
        lam, kappa_bath = dipolar_couplings(geometry)
        return cls(
            n_dark=len(lam),
            lam=lam,
            xi=xi,
            kappa_s=kappa_s,
            kappa_bath=kappa_bath,
            polarization=polarization,
            positions=geometry.positions,
        )


@dataclass(frozen=True)
class FieldWaveform:
    """Piecewise-constant field profile ``b(t) = amplitude * shape(t/tau)``.

    Kinds: ``dc`` (shape 1 throughout), ``echo_square`` (+1 on the first half
    of the sequence, -1 on the second, exactly), ``piecewise`` (shape takes
    the value attached to the most recent breakpoint; 0 before the first).
    Breakpoint times are fractions of the total duration.
    """

    kind: str
    amplitude: float = 0.0
    breakpoints: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("dc", "echo_square", "piecewise"):
            raise ValueError(f"unknown waveform kind {self.kind!r}")
        if self.kind == "piecewise":
            ts = [t for t, _ in self.breakpoints]
            if any(not 0.0 <= t <= 1.0 for t in ts):
                raise ValueError("piecewise breakpoints must lie in [0, 1]")
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("piecewise breakpoints must be strictly increasing")
            object.__setattr__(
                self, "breakpoints", tuple((float(t), float(v)) for t, v in self.breakpoints)
            )
        elif self.breakpoints:
            raise ValueError(f"{self.kind} waveform takes no breakpoints")

    def with_amplitude(self, b: float) -> "FieldWaveform":
        return replace(self, amplitude=float(b))

    def shape_segments(self) -> list[tuple[float, float, float]]:
        """Cover [0, 1] with (start_frac, end_frac, shape_value) pieces."""
        if self.kind == "dc":
            return [(0.0, 1.0, 1.0)]
        if self.kind == "echo_square":
            return [(0.0, 0.5, 1.0), (0.5, 1.0, -1.0)]
        segs = []
        prev_t, prev_v = 0.0, 0.0
        for t, v in self.breakpoints:
            if t > prev_t:
                segs.append((prev_t, t, prev_v))
            prev_t, prev_v = t, v
        if prev_t < 1.0:
            segs.append((prev_t, 1.0, prev_v))
        return segs or [(0.0, 1.0, 0.0)]

    def breakpoint_fracs(self) -> list[float]:
        return sorted({a for a, _, _ in self.shape_segments()} - {0.0})

    def shape_at(self, frac: float) -> float:
        for a, b, v in self.shape_segments():
            if a <= frac < b:
                return v
        return self.shape_segments()[-1][2]

    def integral(self, frac0: float, frac1: float, tau: float) -> float:
        """Exact ``integral of b(t) dt`` over ``[frac0 * tau, frac1 * tau]``."""
        total = 0.0
        for a, b, v in self.shape_segments():
            lo, hi = max(a, frac0), min(b, frac1)
            if hi > lo:
                total += v * (hi - lo)
        return self.amplitude * tau * total


@dataclass(frozen=True)
class Geometry:
    """Dark-spin positions in a cube of the given side, sensor at the origin."""

    side: float
    positions: np.ndarray
    exclusion: float = 0.0

    def __post_init__(self):
        pos = _frozen(np.asarray(self.positions, dtype=float).reshape(-1, 3))
        if np.any(np.abs(pos) > self.side / 2 + 1e-12):
            raise ValueError("positions must lie inside the cube centered at the origin")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def sample_geometry(n: int, side: float, exclusion: float, rng: np.random.Generator) -> Geometry:
    """Place ``n`` spins i.i.d. uniform in the cube, rejecting crowded draws.

    Every sensor-spin and spin-spin distance ends up >= ``exclusion``;
    a bounded number of rejections guards against overcrowded cubes.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if side <= 0:
        raise ValueError("side must be positive")
    if not 0 <= exclusion < side / 4:
        raise ValueError(f"exclusion {exclusion} must satisfy 0 <= exclusion < side/4")
    accepted: list[np.ndarray] = []
    attempts_left = 10_000 + 1_000 * n
    while len(accepted) < n:
        if attempts_left <= 0:
            raise GeometryError(
                f"could not place {n} spins with exclusion {exclusion} in cube side {side}"
            )
        attempts_left -= 1
        p = (rng.random(3) - 0.5) * side
        if np.linalg.norm(p) < exclusion:
            continue
        if any(np.linalg.norm(p - q) < exclusion for q in accepted):
            continue
        accepted.append(p)
    pos = np.array(accepted).reshape(n, 3)
    return Geometry(side=side, positions=pos, exclusion=exclusion)


def dipolar_couplings(geometry: Geometry) -> tuple[np.ndarray, np.ndarray]:
    """Secular dipolar couplings from positions (unit prefactor, z quantization).

    Returns ``(lam, kappa_bath)`` with ``lam_i = (1 - 3 cos^2 theta_i)/r_i^3``
    and ``kappa_ij = (1 - 3 cos^2 theta_ij)/(2 r_ij^3)``.
    """
    pos = geometry.positions
    n = geometry.n
    lam = np.zeros(n)
    for i in range(n):
        r = np.linalg.norm(pos[i])
        if r == 0.0:
            raise GeometryError("dark spin coincides with the sensor")
        cos2 = (pos[i, 2] / r) ** 2
        lam[i] = (1.0 - 3.0 * cos2) / r**3
    kappa = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = pos[i] - pos[j]
            r = np.linalg.norm(d)
            if r == 0.0:
                raise GeometryError(f"dark spins {i} and {j} coincide")
            cos2 = (d[2] / r) ** 2
            kappa[i, j] = kappa[j, i] = (1.0 - 3.0 * cos2) / (2.0 * r**3)
    return lam, kappa


def _dark_frames(dark_frame, n_dark: int) -> list[str]:
    if isinstance(dark_frame, str):
        frames = [dark_frame] * n_dark
    else:
        frames = list(dark_frame)
    if len(frames) != n_dark:
        raise ValueError(f"dark_frame must have length {n_dark}")
    if any(f not in ("z", "x") for f in frames):
        raise ValueError("dark_frame entries must be 'z' or 'x'")
    return frames


def build_hamiltonian(
    system: SpinSystem,
    b: float,
    dark_frame="z",
    include_bath: bool = False,
    cap: int = EXACT_DARK_SPIN_CAP,
) -> OperatorMatrix:
    """Assemble the dense register Hamiltonian (see module docstring).

    ``dark_frame`` selects the sensor-coupling axis per dark spin ('z' or
    'x', a single string broadcasts); the field term always points along z.
    ``include_bath`` adds the secular dipolar bath.  Registers beyond
    ``cap`` dark spins are refused rather than silently thrashing memory.
    """
    n = system.n_dark
    if n > cap:
        raise SimulationSizeError(f"n_dark={n} exceeds exact-simulation cap {cap}")
    frames = _dark_frames(dark_frame, n)
    dim = 2 ** (n + 1)
    idx = np.arange(dim)
    central = (idx & 1).astype(float)  # 1 on |1> states
    zval = np.empty((n, dim))
    for k in range(n):
        zval[k] = 1.0 - 2.0 * ((idx >> (k + 1)) & 1)

    diag = b * system.kappa_s * (central - 0.5)
    mat = np.zeros((dim, dim), dtype=complex)
    for k in range(n):
        diag = diag + b * system.xi * zval[k]
        if frames[k] == "z":
            diag = diag + system.lam[k] * central * zval[k]
        else:
            rows = idx[(idx & 1) == 1]
            mat[rows, rows ^ (1 << (k + 1))] += system.lam[k]

    if include_bath:
        for i in range(n):
            for j in range(i + 1, n):
                kij = system.kappa_bath[i, j]
                if kij == 0.0:
                    continue
                diag = diag + 2.0 * kij * zval[i] * zval[j]
                differ = ((idx >> (i + 1)) & 1) != ((idx >> (j + 1)) & 1)
                rows = idx[differ]
                mask = (1 << (i + 1)) | (1 << (j + 1))
                mat[rows, rows ^ mask] += -2.0 * kij

    mat[idx, idx] += diag
    return OperatorMatrix(dim, mat, hermitian=True)


def sample_initial_state(system: SpinSystem, rng: np.random.Generator) -> StateVector:
    """Draw one product initial state: central ``|0>``, dark spins polarized.

    Each dark spin is ``|up>`` with probability (1 + P)/2 independently;
    averaging over draws realizes the polarization-P mixed bath.
    """
    p_down = 0.5 * (1.0 - system.polarization)
    down = rng.random(system.n_dark) < p_down
    index = 0
    for k in range(system.n_dark):
        if down[k]:
            index |= 1 << (k + 1)
    return StateVector.basis_state(system.n_spins, index)
