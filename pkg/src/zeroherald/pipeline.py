"""Turn raw tag streams into per-pulse event tables.

The chain is: rebuild the pulse train from reference tags, assign each
detector tag to a pulse through a virtual gate window, enforce detector
dead time on the assigned clicks, and emit a dense per-pulse table with
one tri-state entry per detector (no-click / click / dead). Analysis
then reduces that table to rates.

Gating arithmetic is exact: a tag at timestamp t inside reference
segment i with spacing s is compared through integers only,
(t - ref_i) * divider vs. pulse_offset * s, so no tag ever migrates
across a pulse boundary through float rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import (
    ClockGlitchError,
    InsufficientReferenceError,
    ValidationError,
)
from .tags import Channel, TagStream

__all__ = [
    "PulseState",
    "PulseGrid",
    "GateResult",
    "PulseEventTable",
    "reconstruct_pulse_train",
    "virtual_gate",
    "apply_dead_time",
    "build_event_table",
    "table_from_stream",
]

PS_PER_SECOND = 1e12


class PulseState(IntEnum):
    """Per-pulse detector outcome in an event table."""

    NOCLICK = 0
    CLICK = 1
    DEAD = 2


STATE_NAMES = {PulseState.NOCLICK: "no-click", PulseState.CLICK: "click",
               PulseState.DEAD: "dead"}


@dataclass
class PulseGrid:
    """Pulse train rebuilt from reference tags.

    Pulse k lives in reference segment k // divider; its time is the
    linear interpolation between the bracketing references. period_tb
    is the median pulse spacing in timebins.
    """

    ref_times: np.ndarray
    divider: int
    n_pulses: int
    period_tb: float

    def pulse_times(self, k) -> np.ndarray:
        """Times (in timebins, float) of pulse indices k."""
        k = np.asarray(k, dtype=np.int64)
        if np.any(k < 0) or np.any(k >= self.n_pulses):
            raise ValidationError("pulse index out of range")
        refs = self.ref_times.astype(np.int64)
        seg = np.minimum(k // self.divider, refs.size - 2)
        j = k - seg * self.divider
        spacing = refs[seg + 1] - refs[seg]
        return refs[seg] + j * spacing / self.divider

    def __len__(self) -> int:
        return self.n_pulses


def reconstruct_pulse_train(stream: TagStream) -> PulseGrid:
    """Rebuild the pulse grid from a stream's reference tags.

    Needs at least two references. Any reference spacing deviating from
    the median by more than half a timebin per synthesized pulse (0.5 *
    divider timebins) is treated as a clock glitch and reported with the
    offending gap indices.
    """
    refs = stream.channel_timestamps(Channel.REF)
    if refs.size < 2:
        raise InsufficientReferenceError(
            f"need at least 2 reference tags to rebuild the pulse train, got {refs.size}"
        )
    diffs = (refs[1:] - refs[:-1]).astype(np.float64)
    median = float(np.median(diffs))
    if median <= 0:
        raise ClockGlitchError("reference tags do not advance", indices=[0])
    bad = np.flatnonzero(np.abs(diffs - median) > 0.5 * stream.divider)
    if bad.size:
        raise ClockGlitchError(
            f"{bad.size} reference gap(s) deviate from the median period "
            f"{median!r} by more than {0.5 * stream.divider} timebins",
            indices=bad.tolist(),
        )
    n_pulses = (refs.size - 1) * stream.divider + 1
    return PulseGrid(
        ref_times=refs.copy(),
        divider=stream.divider,
        n_pulses=n_pulses,
        period_tb=median / stream.divider,
    )


@dataclass
class GateResult:
    """Detector tags assigned to pulses by the virtual gate.

    assigned maps each detector channel to the pulse index of every
    in-gate tag (stream order, so non-decreasing); n_rejected counts
    tags that fell outside every gate window.
    """

    grid: PulseGrid
    window_tb: float
    assigned: dict
    n_rejected: dict


def virtual_gate(stream: TagStream, grid: PulseGrid, window: float) -> GateResult:
    """Assign detector tags to pulses; window is in seconds.

    A tag belongs to pulse k when pulse_time(k) <= t < pulse_time(k) +
    window. Windows must not overlap (window < pulse period), so each
    tag lands in at most one pulse; everything else is rejected.
    """
    window_tb = window * PS_PER_SECOND / stream.timebin_ps
    if not 0 < window_tb < grid.period_tb:
        raise ValidationError(
            f"gate window of {window_tb!r} timebins must sit in (0, period "
            f"{grid.period_tb!r})"
        )
    refs = grid.ref_times.astype(np.int64)
    spacings = refs[1:] - refs[:-1]
    divider = grid.divider
    threshold = window_tb * divider
    assigned: dict[Channel, np.ndarray] = {}
    n_rejected: dict[Channel, int] = {}
    for ch in (Channel.D1, Channel.D2):
        t = stream.channel_timestamps(ch).astype(np.int64)
        if t.size == 0:
            assigned[ch] = np.empty(0, dtype=np.int64)
            n_rejected[ch] = 0
            continue
        seg = np.searchsorted(refs, t, side="right") - 1
        pulse = np.full(t.size, -1, dtype=np.int64)
        in_gate = np.zeros(t.size, dtype=bool)

        mid = (seg >= 0) & (seg < refs.size - 1)
        if np.any(mid):
            s = seg[mid]
            rel = t[mid] - refs[s]
            sp = spacings[s]
            j = (rel * divider) // sp
            pulse[mid] = s * divider + j
            in_gate[mid] = (rel * divider - j * sp) < threshold

        last = seg == refs.size - 1
        if np.any(last):
            rel = t[last] - refs[-1]
            pulse[last] = (refs.size - 1) * divider
            # float compare: far-out strays would overflow the scaled int test
            in_gate[last] = rel.astype(np.float64) < window_tb

        assigned[ch] = pulse[in_gate]
        n_rejected[ch] = int(t.size - in_gate.sum())
    return GateResult(grid=grid, window_tb=window_tb, assigned=assigned,
                      n_rejected=n_rejected)


def apply_dead_time(click_pulses, dead_pulses: int) -> np.ndarray:
    """Thin a click list through a non-paralyzable dead window.

    After an accepted click at pulse k the next dead_pulses pulses are
    blind; clicks there are dropped and do not extend the window. Input
    order does not matter; duplicates collapse. Idempotent.
    """
    if dead_pulses < 0:
        raise ValidationError(f"dead_pulses must be >= 0, got {dead_pulses!r}")
    clicks = np.unique(np.asarray(click_pulses, dtype=np.int64))
    if dead_pulses == 0 or clicks.size < 2:
        return clicks
    accepted = []
    next_live = clicks[0]
    for k in clicks.tolist():
        if k >= next_live:
            accepted.append(k)
            next_live = k + dead_pulses + 1
    return np.asarray(accepted, dtype=np.int64)


def _channel_states(n_pulses: int, raw_clicks: np.ndarray, dead_pulses: int) -> np.ndarray:
    state = np.zeros(n_pulses, dtype=np.uint8)
    accepted = apply_dead_time(raw_clicks, dead_pulses)
    if accepted.size and (accepted[0] < 0 or accepted[-1] >= n_pulses):
        raise ValidationError("click pulse index outside the pulse grid")
    state[accepted] = PulseState.CLICK
    if dead_pulses > 0 and accepted.size:
        # accepted clicks are > dead_pulses apart, so windows cannot
        # reach the next click or each other
        dead = (accepted[:, None] + np.arange(1, dead_pulses + 1)).ravel()
        dead = dead[dead < n_pulses]
        state[dead] = PulseState.DEAD
    return state


@dataclass
class PulseEventTable:
    """Dense per-pulse outcome table for both detectors.

    d1 and d2 hold PulseState codes, one entry per pulse. A pulse is
    "live" when neither detector is dead there.
    """

    d1: np.ndarray
    d2: np.ndarray

    def __post_init__(self):
        d1 = np.asarray(self.d1, dtype=np.uint8)
        d2 = np.asarray(self.d2, dtype=np.uint8)
        if d1.shape != d2.shape or d1.ndim != 1:
            raise ValidationError("detector state arrays must be 1-d and equal length")
        if d1.size and (d1.max() > 2 or d2.max() > 2):
            raise ValidationError("state codes must be 0, 1 or 2")
        self.d1 = d1
        self.d2 = d2

    @property
    def n_pulses(self) -> int:
        return self.d1.size

    def live_mask(self) -> np.ndarray:
        return (self.d1 != PulseState.DEAD) & (self.d2 != PulseState.DEAD)

    def cell_counts(self) -> np.ndarray:
        """3x3 matrix counting pulses by (d1 state, d2 state)."""
        combined = self.d1.astype(np.int64) * 3 + self.d2
        return np.bincount(combined, minlength=9).reshape(3, 3)

    def to_csv(self, sink, chunk: int = 1 << 16) -> None:
        """Write pulse_index,d1,d2 rows with named states.

        Meant for heralded subsets and diagnostics; a full table at
        realistic pulse counts is enormous.
        """
        pair_names = [
            f"{STATE_NAMES[PulseState(a)]},{STATE_NAMES[PulseState(b)]}"
            for a in range(3) for b in range(3)
        ]
        combined = self.d1.astype(np.int16) * 3 + self.d2

        def _write(fh):
            fh.write("pulse_index,d1,d2\n")
            for start in range(0, self.n_pulses, chunk):
                block = combined[start:start + chunk]
                fh.write("".join(
                    f"{start + i},{pair_names[c]}\n" for i, c in enumerate(block.tolist())
                ))

        if hasattr(sink, "write"):
            _write(sink)
        else:
            with open(sink, "w", newline="") as fh:
                _write(fh)


def build_event_table(gate: GateResult, dead_pulses1: int, dead_pulses2: int) -> PulseEventTable:
    """Apply per-detector dead time to gated clicks; emit the table."""
    n = gate.grid.n_pulses
    d1 = _channel_states(n, gate.assigned[Channel.D1], dead_pulses1)
    d2 = _channel_states(n, gate.assigned[Channel.D2], dead_pulses2)
    return PulseEventTable(d1=d1, d2=d2)


def table_from_stream(
    stream: TagStream,
    window: float,
    dead_pulses1: int,
    dead_pulses2: int,
) -> tuple[PulseGrid, GateResult, PulseEventTable]:
    """Full chain: reconstruct, gate, and tabulate one stream."""
    grid = reconstruct_pulse_train(stream)
    gate = virtual_gate(stream, grid, window)
    table = build_event_table(gate, dead_pulses1, dead_pulses2)
    return grid, gate, table
