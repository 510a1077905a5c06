"""Waiting-time-based adaptive signal controller.

Green is granted to the movement with the maximum per-vehicle average waiting
time, re-evaluated every 5 s from the start of green. A warranted change runs
yellow for exactly 2 s and all-red for exactly 1 s; when the incumbent movement
still holds the maximum, the change interval is skipped and green continues.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .errors import DataError
from .roadnet import MOVEMENT_ORDER, Movement, Stream, right_turn_of

YELLOW_DURATION = 2.0
ALL_RED_DURATION = 1.0
CHECKPOINT_INTERVAL = 5.0


class PhaseKind(Enum):
    GREEN = "green"
    YELLOW = "yellow"
    ALL_RED = "all_red"


def compute_aawt(awt_sum: float, count: int) -> float:
    """Average waiting time per vehicle; zero for an empty movement."""
    return awt_sum / count if count > 0 else 0.0


def select_green(aawt: Mapping[Movement, float],
                 current: Movement | None = None) -> Movement:
    """Argmax over the eight movements.

    Ties go to the incumbent green if it is among the maxima, else to the
    first movement in the fixed order.
    """
    best = max(aawt[m] for m in MOVEMENT_ORDER)
    if current is not None and aawt[current] == best:
        return current
    for m in MOVEMENT_ORDER:
        if aawt[m] == best:
            return m
    raise AssertionError("unreachable")


def right_of_way(kind: PhaseKind, movement: Movement | None) -> frozenset[Stream]:
    if kind is not PhaseKind.GREEN or movement is None:
        return frozenset()
    if movement.is_through:
        return frozenset({movement, right_turn_of(movement.approach)})
    return frozenset({movement})


@dataclass
class PhaseRecord:
    t: float
    node: str
    kind: PhaseKind
    movement: Movement | None
    seconds_in_phase: float


class SignalController:
    """One controller per signalized node; tick exactly once per second."""

    def __init__(self, node: str, t0: float = 0.0) -> None:
        self.node = node
        self.kind = PhaseKind.ALL_RED
        self.movement: Movement | None = None      # green target / incumbent
        self.from_movement: Movement | None = None
        self.phase_entry = t0
        self.green_start: float | None = None
        self.next_checkpoint: float | None = None
        self._last_tick: float | None = None

    def tick(self, aawt: Mapping[Movement, float], t: float) -> frozenset[Stream]:
        if self._last_tick is not None and t <= self._last_tick:
            raise DataError(f"controller {self.node}: non-monotonic tick at t={t}")
        self._last_tick = t

        if self.kind is PhaseKind.YELLOW:
            if t - self.phase_entry >= YELLOW_DURATION:
                self.kind = PhaseKind.ALL_RED
                self.phase_entry = t
        elif self.kind is PhaseKind.ALL_RED:
            if t - self.phase_entry >= ALL_RED_DURATION:
                # winner re-evaluated at green onset, from the latest sample
                self.kind = PhaseKind.GREEN
                self.movement = select_green(aawt, None)
                self.from_movement = None
                self.phase_entry = t
                self.green_start = t
                self.next_checkpoint = t + CHECKPOINT_INTERVAL
        elif self.kind is PhaseKind.GREEN:
            assert self.next_checkpoint is not None
            if t >= self.next_checkpoint:
                winner = select_green(aawt, self.movement)
                if winner is self.movement:
                    self.next_checkpoint = t + CHECKPOINT_INTERVAL
                else:
                    self.kind = PhaseKind.YELLOW
                    self.from_movement = self.movement
                    self.phase_entry = t
                    self.next_checkpoint = None
        return right_of_way(self.kind, self.movement)

    def record(self, t: float) -> PhaseRecord:
        movement = self.movement if self.kind is PhaseKind.GREEN else self.from_movement
        return PhaseRecord(t=t, node=self.node, kind=self.kind,
                           movement=movement, seconds_in_phase=t - self.phase_entry)
