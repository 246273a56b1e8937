"""Hop-by-hop route construction under a total delay budget.

At each position the transmitter scans the forward half-disc for idle
relays, keeps the (relay, constellation) pairs whose transfer fits inside
the relay's estimated idle window (the availability constraint), and takes
the pair with the smallest slot count, ties broken by least remaining
distance then lower id. With no qualifying relay it defers once — waiting
the minimum estimated turn-idle time of the busy relays in sight, budget
permitting — rescans, and only then falls back to a reflector: the
surface whose best reachable idle relay makes the most forward progress,
extended to exactly one adjacent surface (a double reflection) when no
single reflection finds anyone, after which the attempt stops.

Reflected hops carry the short-packet achievable rate instead of a
constellation (no rate adaptation through a surface), and the relay
reached harvests energy from the received signal on every hop.

Baseline policies restrict the reflector stage (single-only /
double-only), pin the constellation (no rate adaptation), or swap the
reflected rate for its infinite-blocklength limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import channel, delaymodel, linkbudget, topology, traffic
from .config import SimConfig
from .linkbudget import ModeTable, TransferDemand, TransmissionMode
from .topology import Node, NodeKind, Position, Topology

LEDGER_SCHEMA_VERSION = 1


class HopKind(Enum):
    DIRECT_IU = "direct_iu"
    SINGLE_RIS = "single_ris"
    DOUBLE_RIS = "double_ris"
    WAIT = "wait"


class FailureReason(Enum):
    NO_IU_NO_RIS = "no_iu_no_ris"
    DELAY_EXCEEDED = "delay_exceeded"
    DEAD_END_AFTER_DOUBLE_RIS = "dead_end_after_double_ris"
    OUTAGE = "outage"  # counterpart moved out of coverage mid-transfer


@dataclass(frozen=True)
class HopChoice:
    kind: HopKind
    via: tuple[int, ...]  # node ids: (iu,) | (ris, endpoint) | (ris_i, ris_j, endpoint)
    labels: tuple[str, ...]
    slots_used: int
    rate: float  # bits/symbol on direct hops, bits/use on reflected hops
    constellation: int  # m_q on direct hops, 0 on reflected hops and waits
    harvested_j: float
    remaining_m: float  # distance endpoint -> destination after the hop


@dataclass
class RouteLedger:
    hops: list[HopChoice] = field(default_factory=list)
    total_slots: int = 0
    success: bool = False
    failure_reason: FailureReason | None = None
    total_delay_s: float = 0.0
    slot_s: float = 0.0
    psi: int = 0

    @property
    def transmission_hops(self) -> list[HopChoice]:
        return [h for h in self.hops if h.kind is not HopKind.WAIT]

    @property
    def hop_count(self) -> int:
        return len(self.transmission_hops)

    @property
    def ris_count(self) -> int:
        """Reflectors engaged along the route (a double reflection uses two)."""
        total = 0
        for h in self.hops:
            if h.kind is HopKind.SINGLE_RIS:
                total += 1
            elif h.kind is HopKind.DOUBLE_RIS:
                total += 2
        return total

    def trace(self) -> str:
        """Route in hop notation, e.g. ``S → R1 → U3 → R3+R4 → U5 → D``."""
        parts = ["S"]
        for h in self.transmission_hops:
            if h.kind is HopKind.DIRECT_IU:
                parts.append(h.labels[-1])
            elif h.kind is HopKind.SINGLE_RIS:
                parts.extend([h.labels[0], h.labels[-1]])
            else:
                parts.append("+".join(h.labels[:-1]))
                parts.append(h.labels[-1])
        return " → ".join(parts)

    def to_rows(self) -> list[dict]:
        """One dict per hop plus a summary row (schema v1)."""
        rows = []
        for i, h in enumerate(self.hops):
            rows.append(
                {
                    "index": i,
                    "kind": h.kind.value,
                    "ids": "+".join(h.labels) if h.labels else "",
                    "slots": h.slots_used,
                    "rate": h.rate,
                    "harvested_J": h.harvested_j,
                    "remaining_distance_m": h.remaining_m,
                }
            )
        rows.append(
            {
                "index": "summary",
                "kind": "success" if self.success else f"fail:{self.failure_reason.value}",
                "ids": self.trace(),
                "slots": self.total_slots,
                "rate": "",
                "harvested_J": sum(h.harvested_j for h in self.hops),
                "remaining_distance_m": self.hops[-1].remaining_m if self.hops else "",
            }
        )
        return rows


@dataclass(frozen=True)
class RoutePolicy:
    ris_mode: str = "both"  # "both" | "single_only" | "double_only"
    adaptive: bool = True
    fixed_rate_bits: int = 2
    shannon: bool = False

    def __post_init__(self):
        if self.ris_mode not in ("both", "single_only", "double_only"):
            raise ValueError(f"unknown ris_mode {self.ris_mode!r}")


BASELINE_POLICIES = {
    "full": RoutePolicy(),
    "shannon": RoutePolicy(shannon=True),
    "single_ris": RoutePolicy(ris_mode="single_only"),
    "double_ris": RoutePolicy(ris_mode="double_only"),
    "fixed_mod": RoutePolicy(adaptive=False),
}


@dataclass(frozen=True)
class CandidateLink:
    node: Node
    snr_db: float
    snr_linear: float
    remaining_m: float
    nu_idle_slots: float


def availability_set(
    links: list[CandidateLink],
    table: ModeTable,
    demand: TransferDemand,
    adaptive: bool = True,
    fixed_rate_bits: int = 2,
) -> list[tuple[CandidateLink, TransmissionMode, int]]:
    """All (relay, constellation, slot-count) triples passing the
    availability constraint tau_req <= nu_I for the relay.

    With adaptation every channel-feasible constellation of a relay is
    enumerated (cost |idle| x |modes|); without it only the pinned one.
    """
    out = []
    for link in links:
        best = table.select(link.snr_db)
        if best.rate == 0:
            continue
        if adaptive:
            usable = [m for m in table.modes[1:] if m.rate <= best.rate]
        else:
            usable = [m for m in table.modes[1:] if m.rate == fixed_rate_bits and best.rate >= m.rate]
        for mode in usable:
            tau = linkbudget.transfer_slots(demand, mode)
            if tau <= link.nu_idle_slots:
                out.append((link, mode, tau))
    return out


def select_iu(
    aset: list[tuple[CandidateLink, TransmissionMode, int]],
) -> tuple[CandidateLink, TransmissionMode, int]:
    """argmin of the slot count; ties by least remaining distance, then id."""
    if not aset:
        raise ValueError("availability set is empty")
    return min(aset, key=lambda entry: (entry[2], entry[0].remaining_m, entry[0].node.id))


class Router:
    """Single-route state machine: one topology, one traffic field, one clock."""

    def __init__(
        self,
        topo: Topology,
        profiles: list[traffic.TrafficProfile],
        cfg: SimConfig,
        rng: np.random.Generator,
        policy: RoutePolicy | None = None,
        mobility=None,
    ):
        if len(profiles) != len(topo.ius):
            raise ValueError("need one traffic profile per IU")
        self.topo = topo
        self.profiles = profiles
        self.cfg = cfg
        self.rng = rng
        self.policy = policy or RoutePolicy()
        self.mobility = mobility
        self.params = channel.LinkBudgetParams.from_config(cfg)
        self.table = linkbudget.build_mode_table(cfg.target_ber, rule=cfg.threshold_rule)
        self.demand = TransferDemand.from_config(cfg)
        self.harvester = linkbudget.HarvesterParams.from_config(cfg)
        self.field = traffic.TrafficField(profiles, rng)
        self.clock = 0  # slots elapsed
        self._nu_idle = np.array(
            [traffic.duration_of_idleness(p, cfg.delta) for p in profiles]
        ) if profiles else np.empty(0)

    # -- geometry/time helpers -------------------------------------------------

    def _iu_positions(self) -> np.ndarray | None:
        if self.mobility is None:
            return None
        return self.mobility.positions_at(self.clock * self.cfg.slot_s)

    def _position_of(self, node: Node, iu_pos: np.ndarray | None) -> Position:
        if node.kind is NodeKind.IU and iu_pos is not None:
            x, y = iu_pos[node.traffic_index]
            return Position(float(x), float(y))
        return node.position

    def _elapsed_s(self) -> float:
        return self.clock * self.cfg.slot_s

    def _remaining_s(self) -> float:
        return self.cfg.total_delay_s - self._elapsed_s()

    # -- link evaluation -------------------------------------------------------

    def _direct_candidates(self, origin: Position, nodes: list[Node], iu_pos) -> list[CandidateLink]:
        """Fresh fading and SNR for each node on a direct device-device link."""
        if not nodes:
            return []
        fading = channel.sample_fading(len(nodes), self.params.rician_k_db, self.rng)
        dest = self.topo.dest.position
        links = []
        for node, amp in zip(nodes, fading.amplitudes):
            pos = self._position_of(node, iu_pos)
            d = origin.distance_to(pos)
            snr = channel.direct_snr(self.params, complex(amp), d)
            nu = self._nu_idle[node.traffic_index] if node.kind is NodeKind.IU else math.inf
            links.append(
                CandidateLink(
                    node=node,
                    snr_db=10.0 * math.log10(snr) if snr > 0 else -math.inf,
                    snr_linear=snr,
                    remaining_m=pos.distance_to(dest),
                    nu_idle_slots=float(nu),
                )
            )
        return links

    def _reflected_rate(self, gamma: float) -> float:
        if self.policy.shannon:
            return channel.shannon_rate(gamma)
        return channel.finite_blocklength_rate(gamma, self.cfg.blocklength, self.cfg.epsilon)

    # -- traffic helpers -------------------------------------------------------

    def _split_idle_busy(self, ius: list[Node]) -> tuple[list[Node], list[Node]]:
        idx = np.array([n.traffic_index for n in ius], dtype=np.intp)
        states = self.field.states_at(self.clock, idx, self.rng)
        idle = [n for n, s in zip(ius, states) if s == traffic.IDLE]
        busy = [n for n, s in zip(ius, states) if s == traffic.BUSY]
        return idle, busy

    # -- route steps -----------------------------------------------------------

    def _try_position(self, origin: Position):
        """One scan at the current epoch: destination shortcut, then relays.

        Returns (entry | None, busy_nodes); ``entry`` is a commit-ready
        (link, mode-or-None, tau, rate, kind-specific payload) tuple.
        """
        dest = self.topo.dest
        iu_pos = self._iu_positions()
        found = topology.half_circle_scan(
            self.topo, origin, dest.position, (NodeKind.DEST, NodeKind.IU), iu_positions=iu_pos
        )
        dest_hit = [n for n in found if n.kind is NodeKind.DEST]
        ius = [n for n in found if n.kind is NodeKind.IU]
        if dest_hit:
            link = self._direct_candidates(origin, dest_hit, iu_pos)[0]
            mode = self.table.select(link.snr_db)
            if self.policy.adaptive:
                usable = mode if mode.rate > 0 else None
            else:
                usable = next(
                    (m for m in self.table.modes[1:] if m.rate == self.policy.fixed_rate_bits), None
                )
                if usable is not None and mode.rate < usable.rate:
                    usable = None
            if usable is not None:
                tau = linkbudget.transfer_slots(self.demand, usable)
                return (link, usable, tau), []
        origin_remaining = origin.distance_to(dest.position)
        idle, busy = self._split_idle_busy(ius)
        links = self._direct_candidates(origin, idle, iu_pos)
        # forward progress is required of a hop, not just half-disc membership
        links = [ln for ln in links if ln.remaining_m < origin_remaining]
        busy = [
            n for n in busy
            if self._position_of(n, iu_pos).distance_to(dest.position) < origin_remaining
        ]
        aset = availability_set(
            links, self.table, self.demand, self.policy.adaptive, self.policy.fixed_rate_bits
        )
        if aset:
            return select_iu(aset), busy
        return None, busy

    def _reflector_endpoints(self, ris: Node, origin: Position, gamma_of) -> list[tuple]:
        """Qualifying endpoints behind ``ris``: (link, tau, rate, gamma)."""
        iu_pos = self._iu_positions()
        dest = self.topo.dest
        origin_remaining = origin.distance_to(dest.position)
        found = topology.half_circle_scan(
            self.topo, ris.position, dest.position, (NodeKind.DEST, NodeKind.IU), iu_positions=iu_pos
        )
        dest_hits = [n for n in found if n.kind is NodeKind.DEST]
        ius = [n for n in found if n.kind is NodeKind.IU]
        idle, _ = self._split_idle_busy(ius)
        out = []
        for node in dest_hits + idle:
            pos = self._position_of(node, iu_pos)
            remaining = pos.distance_to(dest.position)
            if remaining >= origin_remaining:
                continue  # a reflector hop must still make forward progress
            gamma = gamma_of(node, pos)
            rate = self._reflected_rate(gamma)
            if rate <= 0.0:
                continue
            tau = linkbudget.transfer_slots_at_rate(self.demand, rate)
            if node.kind is NodeKind.IU and tau > self._nu_idle[node.traffic_index]:
                continue
            link = CandidateLink(
                node=node,
                snr_db=10.0 * math.log10(gamma) if gamma > 0 else -math.inf,
                snr_linear=gamma,
                remaining_m=remaining,
                nu_idle_slots=float(
                    self._nu_idle[node.traffic_index] if node.kind is NodeKind.IU else math.inf
                ),
            )
            out.append((link, tau, rate, gamma))
        return out

    def ris_fallback(self, origin: Position):
        """Reflector stage; returns a commit-ready tuple or a FailureReason.

        Single reflection: every visible surface is scored by the forward
        progress of its best qualifying endpoint. Double reflection: the
        surface nearest the destination extends to exactly one adjacent
        surface; no third. "single_only" skips the extension,
        "double_only" skips the single stage.
        """
        dest_pos = self.topo.dest.position
        candidates = topology.half_circle_scan(self.topo, origin, dest_pos, NodeKind.RIS)
        if not candidates:
            return FailureReason.NO_IU_NO_RIS
        incoming: dict[int, channel.FadingVector] = {}

        if self.policy.ris_mode in ("both", "single_only"):
            best = None  # (progress, ris_id, ris, entry)
            for ris in candidates:
                h_in = channel.sample_fading(ris.ris_elements, self.params.rician_k_db, self.rng)
                incoming[ris.id] = h_in
                d_in = origin.distance_to(ris.position)

                def gamma_of(node, pos, _ris=ris, _h_in=h_in, _d_in=d_in):
                    h_out = channel.sample_fading(_ris.ris_elements, self.params.rician_k_db, self.rng)
                    return channel.optimal_single_reflection_snr(
                        self.params, _h_in, h_out, _d_in, _ris.position.distance_to(pos)
                    )

                endpoints = self._reflector_endpoints(ris, origin, gamma_of)
                if not endpoints:
                    continue
                entry = self._select_reflector_endpoint(endpoints)
                progress = min(e[0].remaining_m for e in endpoints)
                key = (progress, ris.id)
                if best is None or key < best[0]:
                    best = (key, ris, entry)
            if best is not None:
                _, ris, (link, tau, rate, gamma) = best
                return ("single", ris, link, tau, rate, gamma)

        if self.policy.ris_mode in ("both", "double_only"):
            first = candidates[0]  # nearest the destination (LRD scan order)
            adjacent = topology.half_circle_scan(self.topo, first.position, dest_pos, NodeKind.RIS)
            adjacent = [r for r in adjacent if r.id != first.id]
            if not adjacent:
                return FailureReason.DEAD_END_AFTER_DOUBLE_RIS
            second = adjacent[0]
            h_in = incoming.get(first.id)
            if h_in is None:
                h_in = channel.sample_fading(first.ris_elements, self.params.rician_k_db, self.rng)
            h_mid = channel.sample_fading(
                (second.ris_elements, first.ris_elements), self.params.rician_k_db, self.rng
            )
            d_in = origin.distance_to(first.position)
            d_mid = first.position.distance_to(second.position)

            def gamma_of(node, pos):
                h_out = channel.sample_fading(second.ris_elements, self.params.rician_k_db, self.rng)
                phase_i, phase_j = channel.alternating_double_phases(h_in, h_mid, h_out)
                return channel.double_reflection_sinr(
                    self.params,
                    h_in,
                    phase_i,
                    h_mid,
                    phase_j,
                    h_out,
                    d_in,
                    d_mid,
                    second.position.distance_to(pos),
                )

            endpoints = self._reflector_endpoints(second, origin, gamma_of)
            if endpoints:
                link, tau, rate, gamma = self._select_reflector_endpoint(endpoints)
                return ("double", first, second, link, tau, rate, gamma)
        return FailureReason.DEAD_END_AFTER_DOUBLE_RIS

    @staticmethod
    def _select_reflector_endpoint(endpoints: list[tuple]) -> tuple:
        for entry in endpoints:
            if entry[0].node.kind is NodeKind.DEST:
                return entry
        return min(endpoints, key=lambda e: (e[1], e[0].remaining_m, e[0].node.id))

    # -- main loop ---------------------------------------------------------------

    def run(self) -> RouteLedger:
        cfg = self.cfg
        topo = self.topo
        src = topo.source.position
        dst = topo.dest.position
        l = src.distance_to(dst)
        psi = topology.min_hops(l, topo.coverage_radius)
        ledger = RouteLedger(total_delay_s=cfg.total_delay_s, slot_s=cfg.slot_s, psi=psi)
        if cfg.total_delay_s < cfg.slot_s:
            ledger.failure_reason = FailureReason.DELAY_EXCEEDED
            return ledger
        budget = delaymodel.DelayBudget.start(cfg.total_delay_s, psi)
        current: Node = topo.source
        current_pos = src

        while True:
            wait_slots = 0
            entry, busy = self._try_position(current_pos)
            if entry is None:
                wait_slots = self._deferral(busy, budget)
                if wait_slots > 0:
                    self.clock += wait_slots
                    ledger.hops.append(
                        HopChoice(
                            kind=HopKind.WAIT,
                            via=(),
                            labels=(),
                            slots_used=wait_slots,
                            rate=0.0,
                            constellation=0,
                            harvested_j=0.0,
                            remaining_m=current_pos.distance_to(dst),
                        )
                    )
                    entry, _ = self._try_position(current_pos)
            if entry is not None:
                link, mode, tau = entry
                hop = self._commit_direct(current_pos, link, mode, tau, ledger)
                is_d2d_wait = True
            else:
                # reflector decision epoch costs one slot
                self.clock += 1
                if self._remaining_s() < 0:
                    ledger.failure_reason = FailureReason.DELAY_EXCEEDED
                    ledger.total_slots = self.clock
                    return ledger
                outcome = self.ris_fallback(current_pos)
                if isinstance(outcome, FailureReason):
                    ledger.failure_reason = outcome
                    ledger.total_slots = self.clock
                    return ledger
                hop = self._commit_reflected(current_pos, outcome, ledger)
                is_d2d_wait = False
                wait_slots += 1  # the decision slot joins the t'' tally
            if hop is None:  # commit failed on time or outage; reason already set
                ledger.total_slots = self.clock
                return ledger
            endpoint_node, endpoint_pos = hop
            if endpoint_node.kind is NodeKind.DEST:
                ledger.success = True
                ledger.total_slots = self.clock
                return ledger
            # budget the next position, carrying this position's wait forward
            psi_next = topology.hops_consumed(src, endpoint_pos, topo.coverage_radius)
            wait_s = wait_slots * cfg.slot_s
            try:
                budget.advance(wait_s, is_d2d_wait, psi_next)
            except delaymodel.HopOvershootError:
                budget.pin_next(wait_s, is_d2d_wait, self._remaining_s())
            current = endpoint_node
            current_pos = endpoint_pos

    # -- commit helpers ----------------------------------------------------------

    def _deferral(self, busy: list[Node], budget: delaymodel.DelayBudget) -> int:
        """Slots to wait at this position, honoring the wait caps; 0 = skip."""
        if not busy:
            return 0
        profiles = [self.profiles[n.traffic_index] for n in busy]
        eta = traffic.deferral_window(profiles, self.cfg.p_th)
        cap = min(budget.current_limit, self._remaining_s())
        if eta * self.cfg.slot_s > cap:
            return 0
        return eta

    def _check_transfer_time(self, tau: int, ledger: RouteLedger) -> bool:
        if (self.clock + tau) * self.cfg.slot_s > self.cfg.total_delay_s:
            ledger.failure_reason = FailureReason.DELAY_EXCEEDED
            return False
        return True

    def _outage(self, tx_pos: Position | None, ris_pos: Position | None, node: Node, end_clock: int) -> bool:
        """Counterpart out of coverage at transfer end (mobile runs only)."""
        if self.mobility is None or node.kind is not NodeKind.IU:
            return False
        moved = self.mobility.positions_at(end_clock * self.cfg.slot_s)
        pos = Position(float(moved[node.traffic_index][0]), float(moved[node.traffic_index][1]))
        anchor = ris_pos if ris_pos is not None else tx_pos
        return anchor.distance_to(pos) > self.topo.coverage_radius

    def _commit_direct(self, origin, link: CandidateLink, mode, tau, ledger):
        if not self._check_transfer_time(tau, ledger):
            return None
        end_clock = self.clock + tau
        if self._outage(origin, None, link.node, end_clock):
            ledger.failure_reason = FailureReason.OUTAGE
            self.clock = end_clock
            return None
        self.clock = end_clock
        harvested = 0.0
        if link.node.kind is NodeKind.IU:
            received = link.snr_linear * self.params.noise_power
            harvested = linkbudget.harvested_energy_for_transfer(
                self.harvester, received, tau, self.cfg.slot_s
            )
        assert link.remaining_m < origin.distance_to(self.topo.dest.position)
        ledger.hops.append(
            HopChoice(
                kind=HopKind.DIRECT_IU,
                via=(link.node.id,),
                labels=(link.node.label,),
                slots_used=tau,
                rate=float(mode.rate),
                constellation=mode.constellation,
                harvested_j=harvested,
                remaining_m=link.remaining_m,
            )
        )
        iu_pos = self._iu_positions()
        return link.node, self._position_of(link.node, iu_pos)

    def _commit_reflected(self, origin, outcome, ledger):
        if outcome[0] == "single":
            _, ris, link, tau, rate, gamma = outcome
            via = (ris.id, link.node.id)
            labels = (ris.label, link.node.label)
            anchor = ris.position
            kind = HopKind.SINGLE_RIS
        else:
            _, first, second, link, tau, rate, gamma = outcome
            via = (first.id, second.id, link.node.id)
            labels = (first.label, second.label, link.node.label)
            anchor = second.position
            kind = HopKind.DOUBLE_RIS
        if not self._check_transfer_time(tau, ledger):
            return None
        end_clock = self.clock + tau
        if self._outage(origin, anchor, link.node, end_clock):
            ledger.failure_reason = FailureReason.OUTAGE
            self.clock = end_clock
            return None
        self.clock = end_clock
        harvested = 0.0
        if link.node.kind is NodeKind.IU:
            received = gamma * self.params.noise_power
            harvested = linkbudget.harvested_energy_for_transfer(
                self.harvester, received, tau, self.cfg.slot_s
            )
        assert link.remaining_m < origin.distance_to(self.topo.dest.position)
        ledger.hops.append(
            HopChoice(
                kind=kind,
                via=via,
                labels=labels,
                slots_used=tau,
                rate=float(rate),
                constellation=0,
                harvested_j=harvested,
                remaining_m=link.remaining_m,
            )
        )
        iu_pos = self._iu_positions()
        return link.node, self._position_of(link.node, iu_pos)


def route(
    topo: Topology,
    profiles: list[traffic.TrafficProfile],
    cfg: SimConfig,
    rng: np.random.Generator,
    policy: RoutePolicy | None = None,
    mobility=None,
) -> RouteLedger:
    """Run the full decision procedure once and return its ledger."""
    return Router(topo, profiles, cfg, rng, policy=policy, mobility=mobility).run()


def baseline_route(
    variant: str,
    topo: Topology,
    profiles: list[traffic.TrafficProfile],
    cfg: SimConfig,
    rng: np.random.Generator,
    mobility=None,
) -> RouteLedger:
    """Route under a named comparison policy (see BASELINE_POLICIES)."""
    if variant not in BASELINE_POLICIES:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(BASELINE_POLICIES)}")
    policy = BASELINE_POLICIES[variant]
    if variant == "fixed_mod":
        policy = RoutePolicy(adaptive=False, fixed_rate_bits=cfg.fixed_rate_bits)
    return route(topo, profiles, cfg, rng, policy=policy, mobility=mobility)
