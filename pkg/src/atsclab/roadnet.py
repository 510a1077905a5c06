"""Static arterial road network: nodes, directed edges, turn connections, signal movements.

The network is a short east-west arterial of signalized 4-leg intersections.
The east-most intersection is the "subject" whose east-bound approach is fed
by the intersection immediately to its west.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import ConfigError, DataError


class Heading(Enum):
    """Direction of travel."""
    NORTH = "N"
    EAST = "E"
    SOUTH = "S"
    WEST = "W"

    @property
    def left(self) -> "Heading":
        return _LEFT[self]

    @property
    def right(self) -> "Heading":
        return _RIGHT[self]

    @property
    def reverse(self) -> "Heading":
        return _REVERSE[self]

    @property
    def vector(self) -> tuple[int, int]:
        return _VECTOR[self]

    @property
    def approach_label(self) -> str:
        """Approach name by travel direction, e.g. EAST -> 'EB'."""
        return {"N": "NB", "E": "EB", "S": "SB", "W": "WB"}[self.value]


_LEFT = {Heading.EAST: Heading.NORTH, Heading.NORTH: Heading.WEST,
         Heading.WEST: Heading.SOUTH, Heading.SOUTH: Heading.EAST}
_RIGHT = {v: k for k, v in _LEFT.items()}
_REVERSE = {Heading.EAST: Heading.WEST, Heading.WEST: Heading.EAST,
            Heading.NORTH: Heading.SOUTH, Heading.SOUTH: Heading.NORTH}
_VECTOR = {Heading.EAST: (1, 0), Heading.WEST: (-1, 0),
           Heading.NORTH: (0, 1), Heading.SOUTH: (0, -1)}


class Movement(Enum):
    """The eight signalized turn streams at a 4-leg intersection.

    Named by travel direction: EBL is east-bound traffic turning left.
    """
    EBL = "EBL"
    EBT = "EBT"
    WBL = "WBL"
    WBT = "WBT"
    NBL = "NBL"
    NBT = "NBT"
    SBL = "SBL"
    SBT = "SBT"

    @property
    def approach(self) -> Heading:
        return {"EB": Heading.EAST, "WB": Heading.WEST,
                "NB": Heading.NORTH, "SB": Heading.SOUTH}[self.value[:2]]

    @property
    def is_through(self) -> bool:
        return self.value.endswith("T")


class RightTurn(Enum):
    """Unsignalized right-turn streams; they move with their approach's through phase."""
    EBR = "EBR"
    WBR = "WBR"
    NBR = "NBR"
    SBR = "SBR"

    @property
    def approach(self) -> Heading:
        return {"EB": Heading.EAST, "WB": Heading.WEST,
                "NB": Heading.NORTH, "SB": Heading.SOUTH}[self.value[:2]]


Stream = Movement | RightTurn

# Fixed controller tie-break order.
MOVEMENT_ORDER: tuple[Movement, ...] = (
    Movement.EBL, Movement.EBT, Movement.WBL, Movement.WBT,
    Movement.NBL, Movement.NBT, Movement.SBL, Movement.SBT,
)

APPROACH_HEADINGS: tuple[Heading, ...] = (
    Heading.EAST, Heading.WEST, Heading.NORTH, Heading.SOUTH,
)


def through_movement_of(heading: Heading) -> Movement:
    return Movement(heading.approach_label + "T")


def right_turn_of(heading: Heading) -> RightTurn:
    return RightTurn(heading.approach_label + "R")


def stream_for_headings(in_heading: Heading, out_heading: Heading) -> Stream:
    """Classify a turn by compass geometry of the in/out edge headings."""
    label = in_heading.approach_label
    if out_heading is in_heading:
        return Movement(label + "T")
    if out_heading is in_heading.left:
        return Movement(label + "L")
    if out_heading is in_heading.right:
        return RightTurn(label + "R")
    raise DataError(f"u-turn connection {in_heading} -> {out_heading} is not modelled")


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    signalized: bool = True


@dataclass(frozen=True)
class Edge:
    id: str
    frm: str | None       # None at a peripheral entry
    to: str | None        # None at a peripheral exit
    length: float
    speed_limit: float
    heading: Heading
    through_lanes: int = 1
    pocket_length: float = 0.0


@dataclass(frozen=True)
class Connection:
    in_edge: str
    out_edge: str
    stream: Stream


@dataclass(frozen=True)
class Approach:
    """Inbound edges feeding a node from one travel direction."""
    node: str
    heading: Heading
    edges: tuple[str, ...]

    @property
    def label(self) -> str:
        return self.heading.approach_label

    @property
    def first_edge(self) -> str:
        return self.edges[0]


@dataclass(frozen=True)
class GeometryConfig:
    intersections: int = 2
    leg_length: float = 300.0
    link_length: float = 300.0
    speed_limit: float = 13.89
    through_lanes: int = 1
    pocket_length: float = 50.0

    def validate(self) -> None:
        if self.intersections < 1:
            raise ConfigError("need at least one intersection")
        if self.leg_length <= 0 or self.link_length <= 0:
            raise ConfigError("edge lengths must be positive")
        if self.speed_limit <= 0:
            raise ConfigError("speed limit must be positive")
        if self.through_lanes < 1:
            raise ConfigError("need at least one through lane")
        if self.pocket_length < 0:
            raise ConfigError("pocket length must be non-negative")


@dataclass
class RoadNetwork:
    nodes: dict[str, Node]
    edges: dict[str, Edge]
    connections: list[Connection]
    entries: tuple[str, ...]
    exits: tuple[str, ...]
    subject_node: str
    _conn_index: dict[tuple[str, str], Connection] = field(init=False, repr=False)
    _out_by_in: dict[str, list[Connection]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._conn_index = {(c.in_edge, c.out_edge): c for c in self.connections}
        self._out_by_in = {}
        for c in self.connections:
            self._out_by_in.setdefault(c.in_edge, []).append(c)
        self.validate()

    def validate(self) -> None:
        for e in self.edges.values():
            if e.length <= 0:
                raise ConfigError(f"edge {e.id} has non-positive length")
            if e.speed_limit <= 0:
                raise ConfigError(f"edge {e.id} has non-positive speed limit")
        for c in self.connections:
            tail = self.edges[c.in_edge].to
            head = self.edges[c.out_edge].frm
            if tail is None or tail != head:
                raise ConfigError(f"connection {c.in_edge}->{c.out_edge} is not contiguous")
        for nid, node in self.nodes.items():
            if not node.signalized:
                continue
            streams = {c.stream for c in self.connections
                       if self.edges[c.in_edge].to == nid}
            missing = (set(Movement) | set(RightTurn)) - streams
            if missing:
                raise ConfigError(f"node {nid} lacks streams: {sorted(s.value for s in missing)}")

    # -- lookups -------------------------------------------------------------

    def stream_of(self, in_edge: str, out_edge: str) -> Stream:
        try:
            return self._conn_index[(in_edge, out_edge)].stream
        except KeyError:
            raise DataError(f"no connection {in_edge} -> {out_edge}") from None

    def connections_from(self, in_edge: str) -> list[Connection]:
        return self._out_by_in.get(in_edge, [])

    def connections_into_node(self, node: str) -> list[Connection]:
        return [c for c in self.connections if self.edges[c.in_edge].to == node]

    def in_edges(self, node: str) -> list[Edge]:
        return [e for e in self.edges.values() if e.to == node]

    def approach(self, node: str, heading: Heading) -> Approach:
        edges = tuple(e.id for e in self.in_edges(node) if e.heading is heading)
        if not edges:
            raise DataError(f"node {node} has no {heading.approach_label} approach")
        return Approach(node=node, heading=heading, edges=edges)

    def approaches(self, node: str) -> list[Approach]:
        return [self.approach(node, h) for h in APPROACH_HEADINGS]

    @property
    def signalized_nodes(self) -> list[str]:
        return [nid for nid, n in self.nodes.items() if n.signalized]


def movement_of(net: RoadNetwork, in_edge: str, out_edge: str) -> Stream:
    """Compass classification of a connection into a Movement or RightTurn."""
    if (in_edge, out_edge) not in net._conn_index:
        raise DataError(f"no connection {in_edge} -> {out_edge}")
    return stream_for_headings(net.edges[in_edge].heading, net.edges[out_edge].heading)


def upstream_feeders(net: RoadNetwork, approach: Approach) -> set[tuple[str, Stream]]:
    """Turn streams at the upstream signalized node whose out-edge starts this approach.

    Empty when the approach begins at a peripheral entry.
    """
    first = net.edges[approach.first_edge]
    if first.frm is None or not net.nodes[first.frm].signalized:
        return set()
    return {(first.frm, c.stream) for c in net.connections if c.out_edge == first.id}


def build_arterial_network(cfg: GeometryConfig | None = None) -> RoadNetwork:
    """Instantiate the arterial: k signalized 4-leg intersections joined east-west,
    left-turn pockets at every approach, peripheral entry/exit edges elsewhere.
    """
    cfg = cfg or GeometryConfig()
    cfg.validate()
    k = cfg.intersections

    nodes: dict[str, Node] = {}
    edges: dict[str, Edge] = {}

    def add_edge(eid, frm, to, length, heading):
        edges[eid] = Edge(id=eid, frm=frm, to=to, length=length,
                          speed_limit=cfg.speed_limit, heading=heading,
                          through_lanes=cfg.through_lanes,
                          pocket_length=cfg.pocket_length if to is not None else 0.0)

    node_ids = [f"I{i}" for i in range(k)]
    for i, nid in enumerate(node_ids):
        nodes[nid] = Node(id=nid, x=i * cfg.link_length, y=0.0, signalized=True)
        # north/south legs
        add_edge(f"{nid}_in_S", None, nid, cfg.leg_length, Heading.SOUTH)
        add_edge(f"{nid}_out_N", nid, None, cfg.leg_length, Heading.NORTH)
        add_edge(f"{nid}_in_N", None, nid, cfg.leg_length, Heading.NORTH)
        add_edge(f"{nid}_out_S", nid, None, cfg.leg_length, Heading.SOUTH)
    # west periphery
    add_edge(f"{node_ids[0]}_in_E", None, node_ids[0], cfg.leg_length, Heading.EAST)
    add_edge(f"{node_ids[0]}_out_W", node_ids[0], None, cfg.leg_length, Heading.WEST)
    # east periphery
    add_edge(f"{node_ids[-1]}_in_W", None, node_ids[-1], cfg.leg_length, Heading.WEST)
    add_edge(f"{node_ids[-1]}_out_E", node_ids[-1], None, cfg.leg_length, Heading.EAST)
    # arterial links
    for i in range(k - 1):
        a, b = node_ids[i], node_ids[i + 1]
        add_edge(f"link_{a}_{b}_E", a, b, cfg.link_length, Heading.EAST)
        add_edge(f"link_{b}_{a}_W", b, a, cfg.link_length, Heading.WEST)

    connections: list[Connection] = []
    for nid in node_ids:
        ins = [e for e in edges.values() if e.to == nid]
        outs = [e for e in edges.values() if e.frm == nid]
        for ein in ins:
            for eout in outs:
                if eout.heading is ein.heading.reverse:
                    continue  # no u-turns
                connections.append(Connection(
                    in_edge=ein.id, out_edge=eout.id,
                    stream=stream_for_headings(ein.heading, eout.heading)))

    entries = tuple(sorted(e.id for e in edges.values() if e.frm is None))
    exits = tuple(sorted(e.id for e in edges.values() if e.to is None))
    return RoadNetwork(nodes=nodes, edges=edges, connections=connections,
                       entries=entries, exits=exits, subject_node=node_ids[-1])
