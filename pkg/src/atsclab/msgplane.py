"""Telemetry boundary: per-second BSM records and the per-node feature samples
derived from them. The controller and detector only ever see this stream, which
makes it the attack surface — fake records are indistinguishable from real ones.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError
from .microsim import Vehicle
from .roadnet import (Approach, Heading, Movement, MOVEMENT_ORDER, RightTurn,
                      RoadNetwork, Stream, through_movement_of, upstream_feeders)

APPROACH_LABELS = ("EB", "WB", "NB", "SB")
_HEADING_OF_LABEL = {"EB": Heading.EAST, "WB": Heading.WEST,
                     "NB": Heading.NORTH, "SB": Heading.SOUTH}


@dataclass(frozen=True)
class BsmRecord:
    """One vehicle's broadcast at one sampling instant.

    `next_edge` stands in for the turn intent a real BSM conveys through lane
    and pocket occupancy; it carries no provenance information.
    """
    t: float
    vehicle_id: str
    edge_id: str
    lane_pos: float
    speed: float
    waiting: float
    next_edge: str = ""


def emit_bsm(vehicle: Vehicle, t: float) -> BsmRecord:
    return BsmRecord(t=t, vehicle_id=vehicle.vid, edge_id=vehicle.edge_id,
                     lane_pos=vehicle.pos, speed=vehicle.speed,
                     waiting=vehicle.waiting,
                     next_edge=vehicle.next_edge_id or "")


@dataclass
class NodeStreamStats:
    """Per-turn-stream vehicle counts and waiting-time sums at one node."""
    node: str
    counts: dict[Stream, int]
    awt: dict[Stream, float]

    def movement_counts(self) -> dict[Movement, int]:
        """Counts per signal movement; right-turners ride with their through phase."""
        out = {m: self.counts[m] for m in MOVEMENT_ORDER}
        for r in RightTurn:
            out[through_movement_of(r.approach)] += self.counts[r]
        return out

    def movement_awt(self) -> dict[Movement, float]:
        out = {m: self.awt[m] for m in MOVEMENT_ORDER}
        for r in RightTurn:
            out[through_movement_of(r.approach)] += self.awt[r]
        return out

    def movement_aawt(self) -> dict[Movement, float]:
        counts = self.movement_counts()
        awt = self.movement_awt()
        return {m: (awt[m] / counts[m] if counts[m] > 0 else 0.0) for m in MOVEMENT_ORDER}

    def approach_count(self, label: str) -> int:
        h = _HEADING_OF_LABEL[label]
        return sum(n for s, n in self.counts.items() if s.approach is h)

    def approach_awt(self, label: str) -> float:
        h = _HEADING_OF_LABEL[label]
        return sum(w for s, w in self.awt.items() if s.approach is h)

    def approach_aawt(self, label: str) -> float:
        n = self.approach_count(label)
        return self.approach_awt(label) / n if n > 0 else 0.0


def node_stream_stats(records: list[BsmRecord], net: RoadNetwork,
                      node: str) -> NodeStreamStats:
    """Aggregate a single second's records over the approaches of `node`."""
    counts: dict[Stream, int] = {s: 0 for s in (*Movement, *RightTurn)}
    awt: dict[Stream, float] = {s: 0.0 for s in (*Movement, *RightTurn)}
    for rec in records:
        edge = net.edges.get(rec.edge_id)
        if edge is None:
            raise DataError(f"BSM {rec.vehicle_id}@{rec.t}: unknown edge {rec.edge_id!r}")
        if edge.to != node:
            continue
        if not rec.next_edge:
            raise DataError(f"BSM {rec.vehicle_id}@{rec.t}: no turn intent on an approach")
        stream = net.stream_of(rec.edge_id, rec.next_edge)
        counts[stream] += 1
        awt[stream] += rec.waiting
    return NodeStreamStats(node=node, counts=counts, awt=awt)


def feeder_streams(net: RoadNetwork) -> tuple[tuple[str, Stream], ...]:
    """Canonically ordered upstream feeders of the subject EB approach."""
    approach = net.approach(net.subject_node, Heading.EAST)
    feeders = upstream_feeders(net, approach)
    return tuple(sorted(feeders, key=lambda f: (f[0], f[1].value)))


@dataclass(frozen=True)
class FeatureSample:
    """One second of controller/detector-visible features at the subject node.

    `attack_active` is ground truth for evaluation only; it is never an input
    to the controller or the detector.
    """
    t: float
    movement_counts: tuple[int, ...]       # 8, MOVEMENT_ORDER
    movement_awt: tuple[float, ...]        # 8
    approach_aawt: tuple[float, ...]       # 4, APPROACH_LABELS order
    upstream_counts: tuple[int, ...]       # per feeder_streams(net)
    upstream_awt: tuple[float, ...]
    attack_active: bool

    @property
    def eb_count(self) -> int:
        """Vehicles on the subject EB approach (through + left + right streams)."""
        return self.movement_counts[0] + self.movement_counts[1]

    @property
    def eb_aawt(self) -> float:
        return self.approach_aawt[0]

    def movement_aawt(self) -> dict[Movement, float]:
        return {m: (self.movement_awt[i] / self.movement_counts[i]
                    if self.movement_counts[i] > 0 else 0.0)
                for i, m in enumerate(MOVEMENT_ORDER)}


def sample_features(records: list[BsmRecord], net: RoadNetwork, t: float,
                    attack_active: bool = False) -> FeatureSample:
    """Build the subject-centric per-second feature sample from one second's BSMs."""
    for rec in records:
        if rec.t != t:
            raise DataError(f"record {rec.vehicle_id} at t={rec.t}, expected {t}")
    subject = node_stream_stats(records, net, net.subject_node)
    feeders = feeder_streams(net)
    up_counts: list[int] = []
    up_awt: list[float] = []
    if feeders:
        up_node = feeders[0][0]
        up = node_stream_stats(records, net, up_node)
        for _, stream in feeders:
            up_counts.append(up.counts[stream])
            up_awt.append(up.awt[stream])
    mcounts = subject.movement_counts()
    mawt = subject.movement_awt()
    return FeatureSample(
        t=t,
        movement_counts=tuple(mcounts[m] for m in MOVEMENT_ORDER),
        movement_awt=tuple(mawt[m] for m in MOVEMENT_ORDER),
        approach_aawt=tuple(subject.approach_aawt(a) for a in APPROACH_LABELS),
        upstream_counts=tuple(up_counts),
        upstream_awt=tuple(up_awt),
        attack_active=attack_active,
    )


def feature_header(net: RoadNetwork) -> list[str]:
    cols = ["t"]
    cols += [f"n_{m.value}" for m in MOVEMENT_ORDER]
    cols += [f"awt_{m.value}" for m in MOVEMENT_ORDER]
    cols += [f"aawt_{a}" for a in APPROACH_LABELS]
    for node, stream in feeder_streams(net):
        cols.append(f"up_n_{node}_{stream.value}")
    for node, stream in feeder_streams(net):
        cols.append(f"up_awt_{node}_{stream.value}")
    cols.append("attack")
    return cols


def feature_row(sample: FeatureSample, float_fmt) -> list[str]:
    row = [float_fmt(sample.t)]
    row += [str(n) for n in sample.movement_counts]
    row += [float_fmt(x) for x in sample.movement_awt]
    row += [float_fmt(x) for x in sample.approach_aawt]
    row += [str(n) for n in sample.upstream_counts]
    row += [float_fmt(x) for x in sample.upstream_awt]
    row.append("1" if sample.attack_active else "0")
    return row


def parse_feature_rows(header: list[str], rows: list[list[str]],
                       n_feeders: int = 3) -> list[FeatureSample]:
    """Inverse of feature_row for the fixed column layout."""
    expected = 1 + 8 + 8 + 4 + 2 * n_feeders + 1
    if len(header) != expected:
        raise DataError(f"feature log has {len(header)} columns, expected {expected}")
    out = []
    for r in rows:
        if len(r) != expected:
            raise DataError(f"feature row with {len(r)} fields, expected {expected}")
        i = 1
        counts = tuple(int(x) for x in r[i:i + 8]); i += 8
        awt = tuple(float(x) for x in r[i:i + 8]); i += 8
        aawt = tuple(float(x) for x in r[i:i + 4]); i += 4
        ucounts = tuple(int(x) for x in r[i:i + n_feeders]); i += n_feeders
        uawt = tuple(float(x) for x in r[i:i + n_feeders]); i += n_feeders
        out.append(FeatureSample(t=float(r[0]), movement_counts=counts,
                                 movement_awt=awt, approach_aawt=aawt,
                                 upstream_counts=ucounts, upstream_awt=uawt,
                                 attack_active=r[i] == "1"))
    return out
