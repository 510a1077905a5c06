"""Deterministic fixed-timestep microscopic simulation with Krauss car following.

Single through lane per approach plus a left-turn pocket lane; lane choice is
fixed at edge entry from the vehicle's next turn, so there is no mid-edge lane
changing. Red/yellow signals act as a stationary virtual leader at the stop line.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .roadnet import Heading, Movement, RightTurn, RoadNetwork, Stream

WAITING_SPEED = 0.1     # m/s; at or below this a vehicle accrues waiting time
LOOKAHEAD = 100.0       # m; leader search horizon past the current position
THROUGH_LANE = 0
POCKET_LANE = 1

REAL = "real"
FAKE = "fake"


@dataclass
class CarFollowingParams:
    max_accel: float = 2.6        # m/s^2
    max_decel: float = 4.5        # m/s^2
    reaction_time: float = 1.0    # s
    dawdle: float = 0.5           # sigma in [0, 1]
    vehicle_length: float = 5.0   # m
    min_gap: float = 2.5          # m

    def __post_init__(self) -> None:
        if self.max_accel <= 0 or self.max_decel <= 0 or self.reaction_time <= 0:
            raise ConfigError("accel, decel and reaction time must be positive")
        if not 0.0 <= self.dawdle <= 1.0:
            raise ConfigError("dawdle factor must lie in [0, 1]")
        if self.vehicle_length <= 0 or self.min_gap < 0:
            raise ConfigError("bad vehicle dimensions")


def krauss_safe_speed(v_follower: float, v_leader: float, gap: float,
                      params: CarFollowingParams) -> float:
    """Maximum speed that still lets the follower stop behind the leader.

    `gap` is the available headway (already net of any minimum gap the caller
    wants to preserve). Clamped to >= 0.
    """
    v_bar = 0.5 * (v_follower + v_leader)
    tau = params.reaction_time
    v_safe = v_leader + (gap - v_leader * tau) / (v_bar / params.max_decel + tau)
    return max(0.0, v_safe)


@dataclass
class Vehicle:
    vid: str
    provenance: str               # REAL or FAKE; immutable by convention
    route: list[str]              # ordered edge ids
    route_index: int
    lane: int
    pos: float                    # front-bumper longitudinal position, m
    speed: float
    entry_time: float
    length: float = 5.0
    min_gap: float = 2.5
    waiting: float = 0.0          # resetting waiting timer, s
    cumulative_waiting: float = 0.0

    @property
    def edge_id(self) -> str:
        return self.route[self.route_index]

    @property
    def next_edge_id(self) -> str | None:
        if self.route_index + 1 < len(self.route):
            return self.route[self.route_index + 1]
        return None


def update_waiting(vehicle: Vehicle, dt: float, cumulative_mode: bool = False) -> None:
    """Accrue waiting at speeds <= 0.1 m/s (inclusive); reset the timer on movement.

    With `cumulative_mode` the per-vehicle timer never resets.
    """
    if vehicle.speed <= WAITING_SPEED:
        vehicle.waiting += dt
        vehicle.cumulative_waiting += dt
    elif not cumulative_mode:
        vehicle.waiting = 0.0


@dataclass
class _Deferred:
    route: list[str]
    lane: int


class World:
    """Mutable simulation state; `step` advances one timestep."""

    def __init__(self, net: RoadNetwork, params: CarFollowingParams,
                 demand_vph: float, turn_split: dict[str, float] | None,
                 seed: int, dt: float = 1.0,
                 cumulative_waiting_mode: bool = False) -> None:
        if dt <= 0:
            raise ConfigError("timestep must be positive")
        if demand_vph < 0:
            raise ConfigError("demand must be non-negative")
        self.net = net
        self.params = params
        self.demand_vph = demand_vph
        self.turn_split = dict(turn_split or {"through": 0.70, "left": 0.15, "right": 0.15})
        if abs(sum(self.turn_split.values()) - 1.0) > 1e-9:
            raise ConfigError("turn split must sum to 1")
        self.dt = dt
        self.cumulative_waiting_mode = cumulative_waiting_mode
        self.rng = np.random.default_rng(seed)
        self.clock = 0.0
        self.vehicles: dict[str, Vehicle] = {}
        self.deferred: dict[str, deque[_Deferred]] = {e: deque() for e in net.entries}
        self.entered = 0
        self.exited = 0
        self._next_id = 0
        self.exited_this_step: list[str] = []

    # -- helpers -------------------------------------------------------------

    def _new_id(self, provenance: str) -> str:
        self._next_id += 1
        return f"{provenance[0]}{self._next_id:05d}"

    def lane_for(self, vehicle_edge: str, next_edge: str | None) -> int:
        """Lane taken on `vehicle_edge`: pocket for left turns when one exists."""
        edge = self.net.edges[vehicle_edge]
        if next_edge is None or edge.pocket_length <= 0:
            return THROUGH_LANE
        stream = self.net.stream_of(vehicle_edge, next_edge)
        if isinstance(stream, Movement) and not stream.is_through:
            return POCKET_LANE
        return THROUGH_LANE

    def occupancy(self) -> dict[tuple[str, int], list[Vehicle]]:
        """Vehicles per (edge, lane), sorted front (largest pos) first."""
        occ: dict[tuple[str, int], list[Vehicle]] = {}
        for v in self.vehicles.values():
            occ.setdefault((v.edge_id, v.lane), []).append(v)
        for vs in occ.values():
            vs.sort(key=lambda v: (-v.pos, v.vid))
        return occ

    def stream_at_node(self, vehicle: Vehicle) -> Stream | None:
        nxt = vehicle.next_edge_id
        if nxt is None:
            return None
        return self.net.stream_of(vehicle.edge_id, nxt)

    def leader_of(self, vehicle: Vehicle,
                  occ: dict[tuple[str, int], list[Vehicle]],
                  row_map: dict[str, frozenset[Stream]]) -> tuple[float, float] | None:
        """(leader speed, net gap) for the nearest constraint ahead, or None.

        Net gap is bumper-to-bumper minus the follower's minimum gap for
        physical leaders; for a signal stop it is the distance to the stop line.
        """
        same = occ.get((vehicle.edge_id, vehicle.lane), ())
        ahead = None
        for w in same:
            if w.pos > vehicle.pos or (w.pos == vehicle.pos and w.vid < vehicle.vid):
                ahead = w  # list is front-first, so the last qualifying one is nearest
            else:
                break
        if ahead is not None:
            gap = ahead.pos - ahead.length - vehicle.pos - vehicle.min_gap
            return ahead.speed, gap

        edge = self.net.edges[vehicle.edge_id]
        dist_end = edge.length - vehicle.pos
        if dist_end > LOOKAHEAD:
            return None
        node = edge.to
        if node is None:
            return None  # free run off the exit edge
        stream = self.stream_at_node(vehicle)
        if stream is None:
            return 0.0, dist_end
        if self.net.nodes[node].signalized and stream not in row_map.get(node, frozenset()):
            return 0.0, dist_end  # stationary virtual leader at the stop line
        nxt = vehicle.next_edge_id
        nxt_lane = self.lane_for(nxt, self._edge_after(vehicle, nxt))
        downstream = occ.get((nxt, nxt_lane), ())
        if downstream:
            w = downstream[-1]  # nearest to that edge's start
            gap = dist_end + w.pos - w.length - vehicle.min_gap
            return w.speed, gap
        return None

    def _edge_after(self, vehicle: Vehicle, edge: str) -> str | None:
        i = vehicle.route.index(edge, vehicle.route_index)
        if i + 1 < len(vehicle.route):
            return vehicle.route[i + 1]
        return None

    # -- per-step dynamics ---------------------------------------------------

    def step(self, row_map: dict[str, frozenset[Stream]]) -> None:
        """Advance one timestep under the given per-node right-of-way map."""
        dt = self.dt
        p = self.params
        occ = self.occupancy()
        order = sorted(self.vehicles.values(),
                       key=lambda v: (v.edge_id, v.lane, -v.pos, v.vid))
        new_speed: dict[str, float] = {}
        for v in order:
            edge = self.net.edges[v.edge_id]
            v_next = min(v.speed + p.max_accel * dt, edge.speed_limit)
            lead = self.leader_of(v, occ, row_map)
            if lead is not None:
                v_next = min(v_next, krauss_safe_speed(v.speed, lead[0], lead[1], p))
            if p.dawdle > 0:
                eta = self.rng.random()
                v_next -= p.dawdle * p.max_accel * eta * dt
            new_speed[v.vid] = max(0.0, v_next)

        self.exited_this_step = []
        for v in order:
            v.speed = new_speed[v.vid]
            v.pos += v.speed * dt
            edge = self.net.edges[v.edge_id]
            while v.pos >= edge.length:
                if v.next_edge_id is None:
                    self.exited += 1
                    self.exited_this_step.append(v.vid)
                    del self.vehicles[v.vid]
                    break
                node = edge.to
                stream = self.stream_at_node(v)
                if (node is not None and self.net.nodes[node].signalized
                        and stream not in row_map.get(node, frozenset())):
                    v.pos = edge.length  # held at the stop line
                    break
                v.pos -= edge.length
                v.route_index += 1
                v.lane = self.lane_for(v.edge_id, v.next_edge_id)
                edge = self.net.edges[v.edge_id]

        for v in self.vehicles.values():
            update_waiting(v, dt, self.cumulative_waiting_mode)

        self.clock += dt
        self.spawn_arrivals()

    # -- demand --------------------------------------------------------------

    def sample_route(self, entry: str) -> list[str]:
        """Random route from an entry edge to a peripheral exit via the turn split."""
        route = [entry]
        labels = ("through", "left", "right")
        probs = np.array([self.turn_split[k] for k in labels])
        while self.net.edges[route[-1]].to is not None:
            conns = self.net.connections_from(route[-1])
            choice = labels[int(self.rng.choice(len(labels), p=probs))]
            for c in conns:
                s = c.stream
                kind = ("right" if isinstance(s, RightTurn)
                        else "through" if s.is_through else "left")
                if kind == choice:
                    route.append(c.out_edge)
                    break
        return route

    def entry_cell_clear(self, edge: str, lane: int,
                         occ: dict[tuple[str, int], list[Vehicle]] | None = None) -> bool:
        occ = occ if occ is not None else self.occupancy()
        cell = self.params.vehicle_length + self.params.min_gap
        for w in occ.get((edge, lane), ()):
            if w.pos - w.length < cell:
                return False
        return True

    def _insert(self, entry: str, route: list[str], lane: int,
                occ: dict[tuple[str, int], list[Vehicle]],
                provenance: str = REAL) -> Vehicle:
        edge = self.net.edges[entry]
        speed = edge.speed_limit
        vs = occ.get((entry, lane), ())
        if vs:
            w = vs[-1]
            gap = w.pos - w.length - self.params.min_gap
            speed = min(speed, krauss_safe_speed(speed, w.speed, gap, self.params))
        v = Vehicle(vid=self._new_id(provenance), provenance=provenance,
                    route=route, route_index=0, lane=lane, pos=0.0,
                    speed=speed, entry_time=self.clock,
                    length=self.params.vehicle_length, min_gap=self.params.min_gap)
        self.vehicles[v.vid] = v
        occ.setdefault((entry, lane), []).append(v)
        occ[(entry, lane)].sort(key=lambda x: (-x.pos, x.vid))
        self.entered += 1
        return v

    def spawn_arrivals(self) -> None:
        """Bernoulli arrivals per entry; blocked insertions are deferred, never dropped."""
        lam = self.demand_vph / 3600.0 * self.dt
        occ = self.occupancy()
        for entry in self.net.entries:
            q = self.deferred[entry]
            if q:
                head = q[0]
                if self.entry_cell_clear(entry, head.lane, occ):
                    q.popleft()
                    self._insert(entry, head.route, head.lane, occ)
            if lam > 0 and self.rng.random() < lam:
                route = self.sample_route(entry)
                lane = self.lane_for(entry, route[1] if len(route) > 1 else None)
                if not q and self.entry_cell_clear(entry, lane, occ):
                    self._insert(entry, route, lane, occ)
                else:
                    q.append(_Deferred(route=route, lane=lane))

    # -- attacker-facing -----------------------------------------------------

    def inject_vehicle(self, route: list[str], speed: float, vid: str | None = None) -> Vehicle:
        """Place a fake vehicle at the start of `route[0]` (physical attack mode)."""
        entry = route[0]
        lane = self.lane_for(entry, route[1] if len(route) > 1 else None)
        v = Vehicle(vid=vid or self._new_id(FAKE), provenance=FAKE,
                    route=route, route_index=0, lane=lane, pos=0.0, speed=speed,
                    entry_time=self.clock, length=self.params.vehicle_length,
                    min_gap=self.params.min_gap)
        self.vehicles[v.vid] = v
        self.entered += 1
        return v
