import math

import numpy as np
import pytest
from conftest import build_topology, idle_profiles, line_config, rng_for

from risroute import traffic
from risroute.config import SimConfig
from risroute.linkbudget import TransferDemand, build_mode_table
from risroute.router import (
    CandidateLink,
    FailureReason,
    HopChoice,
    HopKind,
    RouteLedger,
    Router,
    availability_set,
    baseline_route,
    route,
    select_iu,
)
from risroute.experiments import MobilityField
from risroute.topology import Node, NodeKind, Position


def make_link(node_id, snr_db, remaining, nu, ordinal=1):
    node = Node(node_id, NodeKind.IU, Position(0.0, 0.0), ordinal=ordinal)
    return CandidateLink(node=node, snr_db=snr_db, snr_linear=10 ** (snr_db / 10),
                         remaining_m=remaining, nu_idle_slots=nu)


class TestAvailabilitySet:
    table = build_mode_table(1e-6)
    demand = TransferDemand(packets=3, bits_per_packet=8, proc_power=0.01)  # 24 bits

    def test_fitting_transfer_included(self):
        # 24 bits at 8 bits/symbol -> 3 slots <= nu=4.21
        links = [make_link(2, 25.0, 300.0, 4.21)]
        aset = availability_set(links, self.table, self.demand)
        assert any(mode.rate == 8 and tau == 3 for _, mode, tau in aset)

    def test_oversized_transfer_excluded(self):
        # best is 6 bits/symbol at 18 dB -> 4 slots > nu=3.9; lower rates worse
        links = [make_link(2, 18.0, 300.0, 3.9)]
        aset = availability_set(links, self.table, self.demand)
        assert aset == []

    def test_no_idle_no_entries(self):
        assert availability_set([], self.table, self.demand) == []

    def test_enumerates_all_feasible_modes(self):
        # nu huge: every channel-usable constellation appears
        links = [make_link(2, 25.0, 300.0, 1e9)]
        aset = availability_set(links, self.table, self.demand)
        assert len(aset) == 8  # rates 1..8 all usable at 25 dB

    def test_non_adaptive_keeps_only_pinned_mode(self):
        links = [make_link(2, 25.0, 300.0, 1e9)]
        aset = availability_set(links, self.table, self.demand, adaptive=False, fixed_rate_bits=2)
        assert len(aset) == 1
        assert aset[0][1].rate == 2

    def test_non_adaptive_needs_channel_support(self):
        links = [make_link(2, 10.0, 300.0, 1e9)]  # only BPSK feasible
        aset = availability_set(links, self.table, self.demand, adaptive=False, fixed_rate_bits=2)
        assert aset == []


class TestSelectIu:
    table = build_mode_table(1e-6)

    def entries(self, taus_remainings):
        out = []
        for i, (tau, rem) in enumerate(taus_remainings):
            mode = next(m for m in self.table if m.rate == 8)
            out.append((make_link(2 + i, 25.0, rem, 100.0, ordinal=i + 1), mode, tau))
        return out

    def test_argmin_slots(self):
        aset = self.entries([(5, 100.0), (3, 300.0), (7, 50.0)])
        assert select_iu(aset)[2] == 3

    def test_tie_break_least_remaining(self):
        aset = self.entries([(3, 250.0), (3, 200.0)])
        assert select_iu(aset)[0].remaining_m == 200.0

    def test_tie_break_lower_id(self):
        aset = self.entries([(3, 200.0), (3, 200.0)])
        assert select_iu(aset)[0].node.id == 2

    def test_singleton(self):
        aset = self.entries([(4, 100.0)])
        assert select_iu(aset)[2] == 4

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            select_iu([])


class TestDirectRouting:
    def test_dense_idle_line_uses_zero_reflectors(self):
        xs = [(50.0 * k, 200.0) for k in range(1, 8)]  # 50..350
        topo = build_topology(xs)
        cfg = line_config()
        led = route(topo, idle_profiles(len(xs)), cfg, rng_for(100))
        assert led.success
        assert led.ris_count == 0
        assert all(h.kind is HopKind.DIRECT_IU for h in led.hops)
        assert led.trace().startswith("S → ") and led.trace().endswith(" → D")

    def test_budget_below_one_slot_fails_immediately(self):
        topo = build_topology([(50.0, 200.0)])
        cfg = line_config(total_delay_ms=0.05)  # half a slot
        led = route(topo, idle_profiles(1), cfg, rng_for(101))
        assert not led.success
        assert led.failure_reason is FailureReason.DELAY_EXCEEDED
        assert led.hops == []

    def test_no_iu_no_ris_failure(self):
        topo = build_topology([])
        cfg = line_config()
        led = route(topo, [], cfg, rng_for(102))
        assert led.failure_reason is FailureReason.NO_IU_NO_RIS

    def test_direct_termination_at_destination(self):
        topo = build_topology([], src=(350.0, 200.0))
        cfg = line_config()
        led = route(topo, [], cfg, rng_for(103))
        assert led.success
        assert led.hop_count == 1
        assert led.hops[0].labels == ("D",)

    def test_fixed_modulation_needs_more_slots(self):
        topo = build_topology([], src=(360.0, 200.0))
        cfg = line_config(packets=4)  # 32 bits
        full = baseline_route("full", topo, [], cfg, rng_for(104))
        fixed = baseline_route("fixed_mod", topo, [], cfg, rng_for(104))
        assert full.success and fixed.success
        assert full.hops[0].slots_used == 4  # 256-QAM
        assert fixed.hops[0].slots_used == 16  # pinned QPSK
        assert fixed.hops[0].rate == 2.0


class TestReflectorFallback:
    def setup_single(self):
        # no relay reachable from S; R1 alone has qualifying idle users
        ius = [(90.0, 200.0), (100.0, 200.0), (150.0, 200.0), (200.0, 200.0),
               (250.0, 200.0), (300.0, 200.0), (350.0, 200.0)]
        riss = [(50.0, 200.0), (30.0, 240.0), (30.0, 160.0)]
        return build_topology(ius, riss)

    def test_single_reflection_chooses_lrd_endpoint(self):
        topo = self.setup_single()
        cfg = line_config()
        led = route(topo, idle_profiles(7), cfg, rng_for(105))
        assert led.success
        first = led.hops[0]
        assert first.kind is HopKind.SINGLE_RIS
        assert first.labels[0] == "R1"
        # equal slot counts: least remaining distance wins -> the 100 m IU
        assert first.labels[1] == "U2"
        assert first.rate > 0 and first.constellation == 0

    def test_double_reflection_bridges_gap(self):
        ius = [(150.0, 200.0), (200.0, 200.0), (250.0, 200.0), (300.0, 200.0), (350.0, 200.0)]
        riss = [(50.0, 200.0), (100.0, 200.0)]
        topo = build_topology(ius, riss)
        cfg = line_config()
        led = route(topo, idle_profiles(5), cfg, rng_for(106))
        assert led.success
        first = led.hops[0]
        assert first.kind is HopKind.DOUBLE_RIS
        assert first.labels[:2] == ("R1", "R2")
        assert first.labels[2] == "U1"
        assert led.trace().startswith("S → R1+R2 → U1")

    def test_single_only_fails_on_double_gap(self):
        ius = [(150.0, 200.0), (200.0, 200.0), (250.0, 200.0), (300.0, 200.0), (350.0, 200.0)]
        riss = [(50.0, 200.0), (100.0, 200.0)]
        topo = build_topology(ius, riss)
        cfg = line_config()
        led = baseline_route("single_ris", topo, idle_profiles(5), cfg, rng_for(107))
        assert not led.success
        assert led.failure_reason is FailureReason.DEAD_END_AFTER_DOUBLE_RIS
        full = baseline_route("full", topo, idle_profiles(5), cfg, rng_for(107))
        assert full.success

    def test_double_only_fails_without_adjacent_reflector(self):
        ius = [(100.0, 200.0), (150.0, 200.0), (200.0, 200.0), (250.0, 200.0),
               (300.0, 200.0), (350.0, 200.0)]
        riss = [(50.0, 200.0)]
        topo = build_topology(ius, riss)
        cfg = line_config()
        led = baseline_route("double_ris", topo, idle_profiles(6), cfg, rng_for(108))
        assert not led.success
        assert led.failure_reason is FailureReason.DEAD_END_AFTER_DOUBLE_RIS
        full = baseline_route("full", topo, idle_profiles(6), cfg, rng_for(108))
        assert full.success
        assert full.hops[0].kind is HopKind.SINGLE_RIS

    def test_variants_identical_on_relay_only_topology(self):
        xs = [(50.0 * k, 200.0) for k in range(1, 8)]
        topo = build_topology(xs)
        cfg = line_config(packets=1)  # 8 bits: QPSK transfer fits the idle window
        traces = set()
        for variant in ("full", "shannon", "single_ris", "double_ris", "fixed_mod"):
            led = baseline_route(variant, topo, idle_profiles(7), cfg, rng_for(109))
            assert led.success
            traces.add(led.trace())
        assert len(traces) == 1


class TestDeferral:
    def test_wait_then_transmit(self):
        # lone busy relay with a short ON mean: wait, rescan, use it
        ius = [(50.0, 200.0)] + [(50.0 * k, 200.0) for k in range(2, 8)]
        topo = build_topology(ius)
        cfg = line_config()
        profiles = [traffic.TrafficProfile(4e-3, 0.6e-3, 1e-4)] + list(idle_profiles(6))
        r = Router(topo, profiles, cfg, rng_for(110))
        r.field.state[:] = 0
        r.field.state[0] = 1  # force the gatekeeper busy
        led = r.run()
        assert led.hops[0].kind is HopKind.WAIT
        eta = traffic.deferral_window([profiles[0]], cfg.p_th)
        assert led.hops[0].slots_used == eta
        assert led.hops[1].kind is HopKind.DIRECT_IU
        assert led.hops[1].labels == ("U1",)
        assert led.success

    def test_no_second_wait_at_same_position(self):
        # deferral happens at most once per position: never two consecutive
        # WAIT entries in any ledger
        cfg = SimConfig(delta=0.1, iu_count=60)
        for seed in range(6):
            rng = rng_for(111, seed)
            from risroute.topology import generate_topology
            topo = generate_topology(cfg, rng, Position(20, 200), Position(380, 200))
            profiles = [traffic.TrafficProfile(4e-3, 4e-3, 1e-4)] * 60
            led = route(topo, profiles, cfg, rng)
            kinds = [h.kind for h in led.hops]
            assert not any(a is HopKind.WAIT and b is HopKind.WAIT for a, b in zip(kinds, kinds[1:]))


class TestSafetyInvariants:
    def ledgers(self):
        cfg = SimConfig(delta=0.3, iu_count=150, coverage_m=45.0)
        from risroute.topology import generate_topology
        out = []
        for seed in range(25):
            rng = rng_for(112, seed)
            topo = generate_topology(cfg, rng, Position(20, 200), Position(380, 200))
            profiles = [traffic.TrafficProfile(4e-3, 4e-3, 1e-4)] * 150
            out.append((cfg, route(topo, profiles, cfg, rng)))
        return out

    def test_monotone_progress_and_delay_safety(self):
        saw_success = 0
        for cfg, led in self.ledgers():
            rem = [h.remaining_m for h in led.hops if h.kind is not HopKind.WAIT]
            assert all(a > b for a, b in zip(rem, rem[1:]))
            if led.success:
                saw_success += 1
                assert led.total_slots * cfg.slot_s <= cfg.total_delay_s + 1e-12
                assert rem[-1] == 0.0
        assert saw_success >= 15

    def test_no_triple_reflections(self):
        for _, led in self.ledgers():
            for h in led.hops:
                assert len(h.via) <= 3
                if h.kind is HopKind.DOUBLE_RIS:
                    assert len(h.via) == 3

    def test_byte_determinism(self):
        cfg = SimConfig(delta=0.3, iu_count=150, coverage_m=45.0)
        from risroute.topology import generate_topology
        rows = []
        for _ in range(2):
            rng = rng_for(113)
            topo = generate_topology(cfg, rng, Position(20, 200), Position(380, 200))
            profiles = [traffic.TrafficProfile(4e-3, 4e-3, 1e-4)] * 150
            rows.append(route(topo, profiles, cfg, rng).to_rows())
        assert rows[0] == rows[1]


class TestMobilityOutage:
    def test_counterpart_leaving_coverage_aborts(self):
        topo = build_topology([(59.5, 200.0)], dst=(400.0, 200.0))
        cfg = line_config()
        found = False
        for seed in range(12):
            r = Router(topo, idle_profiles(1), cfg, rng_for(114, seed),
                       mobility=MobilityField(np.array([[59.5, 200.0]]), (400.0, 400.0),
                                              20000.0, rng_for(115, seed)))
            led = r.run()
            if led.failure_reason is FailureReason.OUTAGE:
                found = True
                break
        assert found

    def test_zero_speed_field_is_static(self):
        topo = build_topology([(50.0, 200.0), (100.0, 200.0), (150.0, 200.0),
                               (200.0, 200.0), (250.0, 200.0), (300.0, 200.0), (350.0, 200.0)])
        cfg = line_config()
        static = route(topo, idle_profiles(7), cfg, rng_for(116))
        mob = MobilityField(topo.positions_of(NodeKind.IU), (400.0, 400.0), 0.0, rng_for(117))
        moving = route(topo, idle_profiles(7), cfg, rng_for(116), mobility=mob)
        assert static.to_rows() == moving.to_rows()


class TestLedgerOutput:
    def sample(self):
        led = RouteLedger(total_delay_s=0.05, slot_s=1e-4, psi=7)
        led.hops = [
            HopChoice(HopKind.SINGLE_RIS, (9, 4), ("R1", "U3"), 3, 11.2, 0, 1e-9, 300.0),
            HopChoice(HopKind.WAIT, (), (), 14, 0.0, 0, 0.0, 300.0),
            HopChoice(HopKind.DOUBLE_RIS, (10, 11, 6), ("R3", "R4", "U5"), 3, 9.8, 0, 1e-9, 200.0),
            HopChoice(HopKind.DIRECT_IU, (7,), ("U7",), 4, 8.0, 256, 2e-9, 100.0),
            HopChoice(HopKind.DIRECT_IU, (8,), ("U9",), 4, 8.0, 256, 2e-9, 50.0),
            HopChoice(HopKind.DIRECT_IU, (1,), ("D",), 4, 8.0, 256, 0.0, 0.0),
        ]
        led.success = True
        led.total_slots = 32
        return led

    def test_trace_notation(self):
        assert self.sample().trace() == "S → R1 → U3 → R3+R4 → U5 → U7 → U9 → D"

    def test_counts(self):
        led = self.sample()
        assert led.ris_count == 3  # one single + one double
        assert led.hop_count == 5

    def test_rows_schema(self):
        rows = self.sample().to_rows()
        assert rows[0]["kind"] == "single_ris"
        assert rows[-1]["index"] == "summary"
        assert rows[-1]["kind"] == "success"
        assert rows[-1]["slots"] == 32
        for row in rows:
            assert set(row) == {"index", "kind", "ids", "slots", "rate",
                                "harvested_J", "remaining_distance_m"}
