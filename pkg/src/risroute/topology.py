"""Node geometry and directional neighborhood queries.

Every routing step scans the half-disc of radius r facing the destination
(the forward half circle) and orders candidates by least remaining
distance (LRD). Nodes sitting exactly on the perpendicular through the
scan center count as zero progress and are excluded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import SimConfig


class NodeKind(Enum):
    SOURCE = "source"
    DEST = "dest"
    IU = "iu"
    RIS = "ris"


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def distance_to(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array((self.x, self.y))


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    position: Position
    ris_elements: int = 0  # RIS nodes only
    ordinal: int = 0  # 1-based index within its kind (U3, R7, ...)

    def __post_init__(self):
        if self.kind is NodeKind.RIS and self.ris_elements < 1:
            raise ValueError("RIS node needs ris_elements >= 1")

    @property
    def traffic_index(self) -> int:
        """Row of this IU in the run's traffic state arrays."""
        return self.ordinal - 1

    @property
    def label(self) -> str:
        if self.kind is NodeKind.SOURCE:
            return "S"
        if self.kind is NodeKind.DEST:
            return "D"
        prefix = "U" if self.kind is NodeKind.IU else "R"
        return f"{prefix}{self.ordinal}"


class Topology:
    """Immutable node registry with per-kind position caches."""

    def __init__(self, nodes: list[Node], coverage_radius: float, arena: tuple[float, float]):
        if coverage_radius <= 0:
            raise ValueError("coverage_radius must be positive")
        sources = [n for n in nodes if n.kind is NodeKind.SOURCE]
        dests = [n for n in nodes if n.kind is NodeKind.DEST]
        if len(sources) != 1 or len(dests) != 1:
            raise ValueError("scenario needs exactly one source and one destination")
        w, h = arena
        for n in nodes:
            if not (0.0 <= n.position.x <= w and 0.0 <= n.position.y <= h):
                raise ValueError(f"node {n.id} at ({n.position.x}, {n.position.y}) lies outside the arena")
        self.nodes = tuple(sorted(nodes, key=lambda n: n.id))
        self.coverage_radius = float(coverage_radius)
        self.arena = (float(w), float(h))
        self.source = sources[0]
        self.dest = dests[0]
        self.ius = tuple(n for n in self.nodes if n.kind is NodeKind.IU)
        self.riss = tuple(n for n in self.nodes if n.kind is NodeKind.RIS)
        self._by_kind: dict[NodeKind, tuple[Node, ...]] = {
            NodeKind.SOURCE: (self.source,),
            NodeKind.DEST: (self.dest,),
            NodeKind.IU: self.ius,
            NodeKind.RIS: self.riss,
        }
        self._pos_by_kind = {
            kind: np.array([(n.position.x, n.position.y) for n in group]).reshape(-1, 2)
            for kind, group in self._by_kind.items()
        }

    def of_kind(self, kind: NodeKind) -> tuple[Node, ...]:
        return self._by_kind[kind]

    def positions_of(self, kind: NodeKind, moved: np.ndarray | None = None) -> np.ndarray:
        """(n, 2) positions; ``moved`` overrides the IU cache (mobility)."""
        if moved is not None and kind is NodeKind.IU:
            return moved
        return self._pos_by_kind[kind]


def half_circle_scan(
    topo: Topology,
    center: Position,
    target: Position,
    kinds: NodeKind | tuple[NodeKind, ...],
    iu_positions: np.ndarray | None = None,
) -> list[Node]:
    """Nodes within coverage of ``center`` in the half-disc facing ``target``.

    Keeps nodes with strictly positive projection onto the center->target
    axis and distance <= r from the center, ordered by ascending remaining
    distance to the target, ties broken by lower node id. The center itself
    never qualifies (zero projection). Empty result is valid.
    """
    if center == target:
        raise ValueError("scan center must differ from target")
    if isinstance(kinds, NodeKind):
        kinds = (kinds,)
    c = np.array((center.x, center.y))
    t = np.array((target.x, target.y))
    axis = t - c
    axis = axis / np.linalg.norm(axis)
    r = topo.coverage_radius
    found: list[tuple[float, int, Node]] = []
    for kind in kinds:
        group = topo.of_kind(kind)
        if not group:
            continue
        pos = topo.positions_of(kind, moved=iu_positions)
        rel = pos - c
        dist_c = np.hypot(rel[:, 0], rel[:, 1])
        proj = rel @ axis
        mask = (proj > 0.0) & (dist_c <= r)
        if not mask.any():
            continue
        remaining = np.hypot(pos[:, 0] - t[0], pos[:, 1] - t[1])
        for idx in np.nonzero(mask)[0]:
            node = group[idx]
            found.append((float(remaining[idx]), node.id, node))
    found.sort(key=lambda item: (item[0], item[1]))
    return [node for _, _, node in found]


def min_hops(l: float, r: float) -> int:
    """Minimum hop count to span distance l with per-hop reach r."""
    if l <= 0 or r <= 0:
        raise ValueError("distance and coverage must be positive")
    return int(math.ceil(l / r))


def hops_consumed(s_pos: Position, u_pos: Position, r: float) -> int:
    """Nominal hops already spent reaching u_pos from s_pos: floor(|S-U|/r)."""
    if r <= 0:
        raise ValueError("coverage must be positive")
    return int(math.floor(s_pos.distance_to(u_pos) / r))


def ris_grid_positions(arena: tuple[float, float], spacing: float) -> list[Position]:
    """Uniform grid covering the arena, first row/column offset by spacing/2."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    w, h = arena
    xs = np.arange(spacing / 2.0, w, spacing)
    ys = np.arange(spacing / 2.0, h, spacing)
    return [Position(float(x), float(y)) for y in ys for x in xs]


def generate_topology(
    cfg: SimConfig,
    rng: np.random.Generator,
    source: Position | None = None,
    dest: Position | None = None,
) -> Topology:
    """Random IU placement plus a deterministic RIS grid.

    IUs are uniform over the arena; RISs sit on a grid with spacing
    <= coverage so a forward half-disc always holds a reflector. The
    source and destination default to config positions, else are drawn
    uniformly (redrawn until distinct).
    """
    arena = (cfg.arena_m, cfg.arena_m)
    if source is None:
        source = Position(*cfg.source_xy) if cfg.source_xy else None
    if dest is None:
        dest = Position(*cfg.dest_xy) if cfg.dest_xy else None
    if source is None or dest is None:
        while True:
            draw = rng.uniform(0.0, cfg.arena_m, size=4)
            s = source or Position(float(draw[0]), float(draw[1]))
            d = dest or Position(float(draw[2]), float(draw[3]))
            if s.distance_to(d) > 1e-9:
                source, dest = s, d
                break
    nodes = [Node(0, NodeKind.SOURCE, source), Node(1, NodeKind.DEST, dest)]
    next_id = 2
    iu_xy = rng.uniform(0.0, cfg.arena_m, size=(cfg.iu_count, 2))
    for j in range(cfg.iu_count):
        nodes.append(
            Node(next_id, NodeKind.IU, Position(float(iu_xy[j, 0]), float(iu_xy[j, 1])), ordinal=j + 1)
        )
        next_id += 1
    for k, pos in enumerate(ris_grid_positions(arena, cfg.ris_spacing)):
        nodes.append(Node(next_id, NodeKind.RIS, pos, ris_elements=cfg.ris_elements, ordinal=k + 1))
        next_id += 1
    return Topology(nodes, cfg.coverage_m, arena)
