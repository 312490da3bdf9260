"""Textual pulse-program language compiled to executable schedules.

Grammar (line oriented, ``#`` starts a comment)::

    pulse <t_frac> <target> <axis> <angle_deg>
    wahuha <t_start_frac> <t_end_frac> cycles=<n_c>
    echo

Targets are ``central``, ``dark`` (collective pulse on every dark spin) or
``dark[i]`` with a zero-based dark index.  Axes are ``x``, ``y``, ``z``,
``-x``, ``-y``.  Times are fractions of the total sequence duration, so one
schedule serves every sweep over the sensing time.  ``echo`` is sugar for a
central pi pulse about x at mid-sequence.  ``wahuha`` expands to four
collective pi/2 pulses per cycle with the delay pattern t,t,2t,t,t and axes
x, -y, y, -x, whose zeroth-order average Hamiltonian cancels the secular
dipolar coupling within the bath.

Every input either yields a :class:`Schedule` or raises
:class:`ScheduleParseError` carrying the offending line number.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

__all__ = [
    "AXES",
    "PulseEvent",
    "Schedule",
    "ScheduleParseError",
    "parse",
    "expand_wahuha",
    "serialize",
]

AXES = ("x", "y", "z", "-x", "-y")

# cycle offsets (sixths of the cycle) and axes of the four-pulse block
_WAHUHA_OFFSETS = (1, 2, 4, 5)
_WAHUHA_AXES = ("x", "-y", "y", "-x")


class ScheduleParseError(ValueError):
    """Schedule source diagnostic, carrying the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def _check_target(target: str) -> str:
    if target in ("central", "dark"):
        return target
    if target.startswith("dark[") and target.endswith("]"):
        inner = target[5:-1]
        try:
            idx = int(inner)
        except ValueError:
            raise ValueError(f"bad dark-spin index {inner!r}") from None
        if idx < 0:
            raise ValueError(f"dark-spin index must be non-negative, got {idx}")
        return f"dark[{idx}]"
    raise ValueError(f"unknown target {target!r}")


@dataclass(frozen=True, order=False)
class PulseEvent:
    """One instantaneous rotation at a fractional time of the sequence."""

    t_frac: float
    target: str
    axis: str
    angle_deg: float

    def __post_init__(self):
        if not 0.0 <= self.t_frac <= 1.0:
            raise ValueError(f"t_frac {self.t_frac} outside [0, 1]")
        object.__setattr__(self, "target", _check_target(self.target))
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}")
        if not math.isfinite(self.angle_deg):
            raise ValueError("angle must be finite")


@dataclass(frozen=True)
class Schedule:
    """Time-sorted pulse events over a unit fractional duration."""

    events: tuple[PulseEvent, ...]
    name: str = field(default="<anonymous>", compare=False)
    source_hash: str = field(default="", compare=False)

    duration_frac = 1.0

    @classmethod
    def from_events(cls, events, name: str = "<anonymous>", source_hash: str = "") -> "Schedule":
        ordered = tuple(sorted(events, key=lambda e: e.t_frac))  # stable: ties keep listing order
        return cls(events=ordered, name=name, source_hash=source_hash)


def expand_wahuha(t_start: float, t_end: float, n_c: int) -> list[PulseEvent]:
    """Expand ``n_c`` WAHUHA cycles on [t_start, t_end] into pulse events.

    Each cycle of length (t_end - t_start)/n_c holds four collective dark
    pi/2 pulses at offsets {1, 2, 4, 5}/6 of the cycle, axes x, -y, y, -x.
    The composition of the four ideal pulses is the identity, so every cycle
    returns the dark spins to their initial frame.
    """
    if not t_end > t_start:
        raise ValueError(f"empty wahuha interval [{t_start}, {t_end}]")
    if n_c < 1:
        raise ValueError(f"cycle count must be >= 1, got {n_c}")
    t_cyc = (t_end - t_start) / n_c
    events = []
    for c in range(n_c):
        base = t_start + c * t_cyc
        for k, axis in zip(_WAHUHA_OFFSETS, _WAHUHA_AXES):
            events.append(PulseEvent(base + k * t_cyc / 6.0, "dark", axis, 90.0))
    return events


def _parse_float(token: str, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ValueError(f"bad {what} {token!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"{what} must be finite, got {token!r}")
    return value


def parse(text: str, name: str = "<string>") -> Schedule:
    """Compile schedule source text; diagnostics carry line numbers."""
    events: list[PulseEvent] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            if tokens[0] == "pulse":
                if len(tokens) != 5:
                    raise ValueError("expected: pulse <t_frac> <target> <axis> <angle_deg>")
                t = _parse_float(tokens[1], "t_frac")
                angle = _parse_float(tokens[4], "angle")
                events.append(PulseEvent(t, tokens[2], tokens[3], angle))
            elif tokens[0] == "wahuha":
                if len(tokens) != 4 or not tokens[3].startswith("cycles="):
                    raise ValueError("expected: wahuha <t_start> <t_end> cycles=<n>")
                t0 = _parse_float(tokens[1], "t_start")
                t1 = _parse_float(tokens[2], "t_end")
                try:
                    n_c = int(tokens[3][len("cycles="):])
                except ValueError:
                    raise ValueError(f"bad cycle count {tokens[3]!r}") from None
                if not 0.0 <= t0 <= 1.0 or not 0.0 <= t1 <= 1.0:
                    raise ValueError("wahuha interval must lie in [0, 1]")
                events.extend(expand_wahuha(t0, t1, n_c))
            elif tokens[0] == "echo":
                if len(tokens) != 1:
                    raise ValueError("echo takes no arguments")
                events.append(PulseEvent(0.5, "central", "x", 180.0))
            else:
                raise ValueError(f"unknown directive {tokens[0]!r}")
        except ValueError as exc:
            raise ScheduleParseError(lineno, str(exc)) from None
    digest = hashlib.sha256(text.encode()).hexdigest()[:16]
    return Schedule.from_events(events, name=name, source_hash=digest)


def serialize(schedule: Schedule) -> str:
    """Canonical source text; ``parse(serialize(s))`` restores the event list."""
    lines = [f"# schedule: {schedule.name}", "# times are fractions of the total duration"]
    for e in schedule.events:
        lines.append(f"pulse {e.t_frac!r} {e.target} {e.axis} {e.angle_deg!r}")
    return "\n".join(lines) + "\n"
