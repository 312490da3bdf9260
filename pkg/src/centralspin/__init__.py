"""Central-spin simulator for environment-assisted magnetometry.

Exact pulse-sequence evolution on small spin registers, a textual pulse
language, closed-form phase/sensitivity/fidelity predictors, and a
pair-cluster expansion for signal decay, driven by a reproducible
experiment runner (``simulate`` CLI).
"""

from .core import (
    IDENTITY_2,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    OperatorMatrix,
    StateVector,
    apply_rotation,
    central_coherence,
    embed_single_spin_op,
    evolve,
    fidelity,
    probability_central_one,
    rotation_matrix,
)
from .model import (
    EXACT_DARK_SPIN_CAP,
    FieldWaveform,
    Geometry,
    GeometryError,
    SimulationSizeError,
    SpinSystem,
    build_hamiltonian,
    dipolar_couplings,
    sample_geometry,
    sample_initial_state,
)
from .seqlang import (
    PulseEvent,
    Schedule,
    ScheduleParseError,
    expand_wahuha,
    parse,
    serialize,
)
from .protocol import (
    DegenerateSlopeError,
    ProtocolResult,
    ProtocolSpec,
    builtin_schedule,
    response_slope,
    run_ideal_circuit,
    run_schedule,
    run_schedule_batch,
)

__version__ = "0.1.0"
