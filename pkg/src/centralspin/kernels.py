"""Hot propagation kernels: numba-jitted with a pure-numpy fallback.

The only performance-critical loop in the package is stepping a batch of
small state vectors through a pulse sequence: alternate exact free-flight
segments (diagonal in a precomputed eigenbasis) with instantaneous pulse
unitaries.  The pair-cluster decay expansion executes millions of these
8-dimensional steps, where Python call overhead dominates plain numpy.

Backend selection: the numba path is used when numba imports successfully,
unless the environment variable ``CENTRALSPIN_NUMBA`` is set to ``0`` /
``false`` / ``off``, which forces the numpy fallback.  Both implementations
are kept in sync and compared by the test suite and by
``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["BACKEND", "HAVE_NUMBA", "propagate_schedule", "propagate_schedule_numpy"]

_flag = os.environ.get("CENTRALSPIN_NUMBA", "").strip().lower()
_DISABLED = _flag in ("0", "false", "off", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled via CENTRALSPIN_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def propagate_schedule_numpy(evals, evecs, evecs_h, seg_ham, seg_frac, seg_pulse, pulses, psi0, taus):
    """Reference implementation of the segment/pulse propagation loop.

    Parameters
    ----------
    evals : (n_ham, d) float64
        Eigenvalues of each distinct segment Hamiltonian.
    evecs, evecs_h : (n_ham, d, d) complex128
        Eigenvector matrices and their conjugate transposes.
    seg_ham : (n_seg,) int64
        Hamiltonian index per segment.
    seg_frac : (n_seg,) float64
        Segment duration as a fraction of the per-column total duration.
    seg_pulse : (n_seg,) int64
        Index into ``pulses`` applied after each segment, -1 for none.
    pulses : (n_pulse, d, d) complex128
    psi0 : (d, m) complex128
        Initial states, one column per (duration, initial-state) combination.
    taus : (m,) float64
        Total duration per column.

    Returns the propagated (d, m) states.
    """
    psi = psi0.copy()
    for k in range(seg_ham.shape[0]):
        f = seg_frac[k]
        if f > 0.0:
            h = seg_ham[k]
            coeff = evecs_h[h] @ psi
            coeff *= np.exp(-1j * np.outer(evals[h], f * taus))
            psi = evecs[h] @ coeff
        p = seg_pulse[k]
        if p >= 0:
            psi = pulses[p] @ psi
    return psi


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _propagate_numba(evals, evecs, evecs_h, seg_ham, seg_frac, seg_pulse, pulses, psi0, taus):
        d, m = psi0.shape
        psi = psi0.copy()
        for k in range(seg_ham.shape[0]):
            f = seg_frac[k]
            if f > 0.0:
                h = seg_ham[k]
                coeff = np.dot(evecs_h[h], psi)
                w = evals[h]
                for i in range(d):
                    for j in range(m):
                        coeff[i, j] *= np.exp(-1j * (w[i] * f * taus[j]))
                psi = np.dot(evecs[h], coeff)
            p = seg_pulse[k]
            if p >= 0:
                psi = np.dot(pulses[p], psi)
        return psi

    def propagate_schedule(evals, evecs, evecs_h, seg_ham, seg_frac, seg_pulse, pulses, psi0, taus):
        return _propagate_numba(
            np.ascontiguousarray(evals),
            np.ascontiguousarray(evecs),
            np.ascontiguousarray(evecs_h),
            np.ascontiguousarray(seg_ham),
            np.ascontiguousarray(seg_frac),
            np.ascontiguousarray(seg_pulse),
            np.ascontiguousarray(pulses),
            np.ascontiguousarray(psi0),
            np.ascontiguousarray(taus),
        )

    BACKEND = "numba"
else:
    propagate_schedule = propagate_schedule_numpy
    BACKEND = "numpy"
