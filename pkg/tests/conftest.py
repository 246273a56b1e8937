"""Shared builders for constructed-topology router tests."""

import numpy as np

from risroute.config import SimConfig
from risroute.topology import Node, NodeKind, Position, Topology
from risroute.traffic import TrafficProfile


def build_topology(iu_xy, ris_xy=(), src=(0.0, 200.0), dst=(400.0, 200.0),
                   r=60.0, arena=(400.0, 400.0), ris_elements=250):
    nodes = [Node(0, NodeKind.SOURCE, Position(*src)), Node(1, NodeKind.DEST, Position(*dst))]
    next_id = 2
    for j, (x, y) in enumerate(iu_xy):
        nodes.append(Node(next_id, NodeKind.IU, Position(x, y), ordinal=j + 1))
        next_id += 1
    for k, (x, y) in enumerate(ris_xy):
        nodes.append(Node(next_id, NodeKind.RIS, Position(x, y), ris_elements=ris_elements, ordinal=k + 1))
        next_id += 1
    return Topology(nodes, r, arena)


def idle_profiles(count, slot=1e-4):
    """Profiles whose stationary law is essentially always idle."""
    return [TrafficProfile(lambda_off=1e6, mu_on=4e-3, slot=slot)] * count


def line_config(**overrides):
    base = dict(delta=0.3, packets=2, bits_per_packet=8)
    base.update(overrides)
    return SimConfig(**base)


def rng_for(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))
