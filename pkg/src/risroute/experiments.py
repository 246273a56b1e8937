"""Seeded Monte Carlo studies emitting CSV results and a run manifest.

Kinds:
  trajectory         one or more seeded routes, ledger CSV per replication
  coverage_sweep     mean reflector usage vs coverage radius, per IU density
  density_sweep      mean reflector usage vs IU density, per coverage radius
  traffic_validation analytic idle/busy-duration estimators vs Monte Carlo
  comparison         policy variants across the coverage grid
  mobility           throughput vs maximum waypoint speed

Replication streams derive deterministically from (seed, indices) via
SeedSequence, so outputs are byte-identical across runs and thread
counts; comparison variants and mobility grid points reuse the same
replication streams (common random numbers) so differences between
curves are driven by the policies, not by sampling noise.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import metrics, router, topology, traffic
from .config import SimConfig
from .topology import Position

EXPERIMENT_KINDS = (
    "trajectory",
    "coverage_sweep",
    "density_sweep",
    "traffic_validation",
    "comparison",
    "mobility",
)

DETAIL_COLUMNS = [
    "scenario_id",
    "seed",
    "variant",
    "coverage_m",
    "density",
    "D_T",
    "D_T_normalized",
    "E_eff",
    "ris_count",
    "hops",
    "success",
]

# Sweeps pin one endpoint pair so grid points differ only in the topology draw.
SWEEP_SOURCE = (20.0, 200.0)
SWEEP_DEST = (380.0, 200.0)


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic child stream for (seed, indices)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass(frozen=True)
class ExperimentPlan:
    kind: str
    seed: int = 1
    replications: int = 500
    coverage_grid: tuple[float, ...] | None = None
    density_grid: tuple[int, ...] | None = None
    deltas: tuple[float, ...] = (0.1, 0.2, 0.3)
    xi_grid: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    chains: int = 100_000
    batches: int = 20
    vmax_grid: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    variants: tuple[str, ...] = ("full", "shannon", "fixed_mod", "single_ris", "double_ris")
    threads: int = 1

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.replications < 1 or self.chains < 1 or self.batches < 2:
            raise ValueError("replications and chains must be >= 1, batches >= 2")

    def resolved_coverage_grid(self) -> tuple[float, ...]:
        if self.coverage_grid is not None:
            return self.coverage_grid
        if self.kind == "density_sweep":
            return (30.0, 45.0, 60.0)
        if self.kind == "mobility":
            return (50.0,)
        return (30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)

    def resolved_density_grid(self) -> tuple[int, ...]:
        if self.density_grid is not None:
            return self.density_grid
        if self.kind == "density_sweep":
            return (100, 200, 400, 600, 900)
        return (100, 400, 900)


@dataclass
class ExperimentResult:
    kind: str
    files: list[Path] = field(default_factory=list)
    attempted: int = 0
    succeeded: int = 0
    summary_rows: list[dict] = field(default_factory=list)
    traces: list[str] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.succeeded / self.attempted if self.attempted else 1.0


# --------------------------------------------------------------------------
# Random-waypoint mobility
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MobilityState:
    """One node's waypoint-walk state (model: random waypoint, no pauses)."""

    position: Position
    waypoint: Position
    velocity: float  # m/s, in [0, v_max]


def mobility_step(
    state: MobilityState,
    dt: float,
    arena: tuple[float, float],
    v_max: float,
    rng: np.random.Generator,
) -> MobilityState:
    """Advance one node ``dt`` seconds; redraw waypoint and speed on arrival."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    pos, wp, v = state.position, state.waypoint, state.velocity
    remaining = dt
    while True:
        dist = pos.distance_to(wp)
        if v <= 0.0:
            break
        time_to_wp = dist / v
        if time_to_wp > remaining:
            frac = v * remaining / dist
            pos = Position(pos.x + (wp.x - pos.x) * frac, pos.y + (wp.y - pos.y) * frac)
            break
        pos = wp
        remaining -= time_to_wp
        wp = Position(rng.uniform(0.0, arena[0]), rng.uniform(0.0, arena[1]))
        v = rng.uniform(0.0, 1.0) * v_max
    return MobilityState(position=pos, waypoint=wp, velocity=v)


class MobilityField:
    """Lazy random-waypoint walk for all IUs of one run.

    Speeds are a shared uniform fraction times v_max, so runs that differ
    only in v_max scale the same displacements (and v_max=0 is exactly
    static). Owns its RNG: the route's streams are never touched.
    """

    def __init__(
        self,
        initial_xy: np.ndarray,
        arena: tuple[float, float],
        v_max: float,
        rng: np.random.Generator,
    ):
        self.arena = arena
        self.v_max = float(v_max)
        self.rng = rng
        self.xy = np.array(initial_xy, dtype=float).reshape(-1, 2).copy()
        m = self.xy.shape[0]
        self.waypoints = np.column_stack(
            [rng.uniform(0.0, arena[0], size=m), rng.uniform(0.0, arena[1], size=m)]
        )
        self.speeds = rng.uniform(0.0, 1.0, size=m) * self.v_max
        self.t = 0.0

    def positions_at(self, t: float) -> np.ndarray:
        if t < self.t - 1e-12:
            raise ValueError("mobility clock moved backwards")
        dt = t - self.t
        if dt > 0 and self.v_max > 0 and self.xy.size:
            delta = self.waypoints - self.xy
            dist = np.hypot(delta[:, 0], delta[:, 1])
            step = self.speeds * dt
            arriving = step >= dist
            moving = ~arriving & (self.speeds > 0)
            if np.any(moving):
                frac = (step[moving] / dist[moving])[:, None]
                self.xy[moving] += delta[moving] * frac
            for i in np.nonzero(arriving)[0]:
                state = MobilityState(
                    position=Position(*self.xy[i]),
                    waypoint=Position(*self.waypoints[i]),
                    velocity=float(self.speeds[i]),
                )
                state = mobility_step(state, dt, self.arena, self.v_max, self.rng)
                self.xy[i] = (state.position.x, state.position.y)
                self.waypoints[i] = (state.waypoint.x, state.waypoint.y)
                self.speeds[i] = state.velocity
        self.t = t
        return self.xy.copy()


# --------------------------------------------------------------------------
# Shared replication machinery
# --------------------------------------------------------------------------


def _profiles_for(cfg: SimConfig) -> list[traffic.TrafficProfile]:
    lam = cfg.lambda_off_ms
    mu = cfg.mu_on_ms
    lams = list(lam) if isinstance(lam, tuple) else [lam] * cfg.iu_count
    mus = list(mu) if isinstance(mu, tuple) else [mu] * cfg.iu_count
    if len(lams) != cfg.iu_count or len(mus) != cfg.iu_count:
        raise ValueError("per-IU traffic lists must match iu_count")
    return [traffic.TrafficProfile(l * 1e-3, m * 1e-3, cfg.slot_s) for l, m in zip(lams, mus)]


def run_one_route(
    cfg: SimConfig,
    rng: np.random.Generator,
    variant: str = "full",
    mobility_rng: np.random.Generator | None = None,
    v_max: float = 0.0,
) -> router.RouteLedger:
    """One replication: topology draw, traffic, route under the variant policy."""
    src = Position(*cfg.source_xy) if cfg.source_xy else None
    dst = Position(*cfg.dest_xy) if cfg.dest_xy else None
    topo = topology.generate_topology(cfg, rng, src, dst)
    profiles = _profiles_for(cfg)
    mobility = None
    if mobility_rng is not None and v_max > 0:
        initial = topo.positions_of(topology.NodeKind.IU)
        mobility = MobilityField(initial, topo.arena, v_max, mobility_rng)
    return router.baseline_route(variant, topo, profiles, cfg, rng, mobility=mobility)


def _detail_row(scenario_id, seed, variant, coverage, density, ledger, cfg) -> dict:
    if ledger.success:
        m = metrics.compute_route_metrics(ledger, cfg)
        return {
            "scenario_id": scenario_id,
            "seed": seed,
            "variant": variant,
            "coverage_m": coverage,
            "density": density,
            "D_T": m.throughput,
            "D_T_normalized": m.throughput_normalized,
            "E_eff": m.energy_efficiency,
            "ris_count": m.ris_count,
            "hops": m.hop_count,
            "success": 1,
        }
    return {
        "scenario_id": scenario_id,
        "seed": seed,
        "variant": variant,
        "coverage_m": coverage,
        "density": density,
        "D_T": 0.0,
        "D_T_normalized": 0.0,
        "E_eff": 0.0,
        "ris_count": "",
        "hops": "",
        "success": 0,
    }


def _mean_se(values: list[float]) -> tuple[float | str, float | str]:
    if not values:
        return "", ""
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, se


def _aggregate(details: list[dict]) -> dict:
    """Grid-point statistics; throughput means count failures as zero."""
    succ = [d for d in details if d["success"] == 1]
    dt_all = [d["D_T"] for d in details]
    dt_mean, dt_se = _mean_se(dt_all)
    dtn_mean, _ = _mean_se([d["D_T_normalized"] for d in details])
    ris_mean, ris_se = _mean_se([d["ris_count"] for d in succ])
    eeff_mean, eeff_se = _mean_se([d["E_eff"] for d in succ])
    return {
        "replications": len(details),
        "success_rate": len(succ) / len(details) if details else 0.0,
        "ris_mean": ris_mean,
        "ris_se": ris_se,
        "dt_mean": dt_mean,
        "dt_se": dt_se,
        "dtn_mean": dtn_mean,
        "eeff_mean": eeff_mean,
        "eeff_se": eeff_se,
    }


def _sweep_point(payload: tuple) -> tuple[int, list[dict], dict]:
    """One (coverage, density) grid point; module-level for process pools."""
    grid_index, plan_kind, seed, replications, coverage, density, cfg_dict = payload
    cfg = SimConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg_dict.items()})
    cfg = cfg.with_overrides(
        coverage_m=coverage,
        iu_count=density,
        source_xy=SWEEP_SOURCE,
        dest_xy=SWEEP_DEST,
    )
    scenario = f"{plan_kind}-r{coverage:g}-m{density}"
    details = []
    for rep in range(replications):
        rng = derive_rng(seed, grid_index, rep)
        ledger = run_one_route(cfg, rng)
        details.append(_detail_row(scenario, seed, "full", coverage, density, ledger, cfg))
    summary = {"scenario_id": scenario, "coverage_m": coverage, "density": density}
    summary.update(_aggregate(details))
    return grid_index, details, summary


# --------------------------------------------------------------------------
# CSV / manifest output
# --------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col, "")) for col in columns])
    return path


def write_manifest(path: Path, plan: ExperimentPlan, cfg: SimConfig) -> Path:
    payload = {
        "schema": 1,
        "plan": asdict(plan),
        "config": cfg.to_dict(),
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# Experiment kinds
# --------------------------------------------------------------------------


def _run_trajectory(plan: ExperimentPlan, cfg: SimConfig, out: Path, result: ExperimentResult):
    for rep in range(plan.replications):
        rng = derive_rng(plan.seed, rep)
        ledger = run_one_route(cfg, rng)
        result.attempted += 1
        result.succeeded += ledger.success
        result.traces.append(ledger.trace())
        path = out / f"route_{rep + 1:04d}.csv"
        with open(path, "w", newline="") as fh:
            fh.write(f"# ledger-schema v{router.LEDGER_SCHEMA_VERSION}\n")
            writer = csv.writer(fh, lineterminator="\n")
            cols = ["index", "kind", "ids", "slots", "rate", "harvested_J", "remaining_distance_m"]
            writer.writerow(cols)
            for row in ledger.to_rows():
                writer.writerow([_fmt(row[c]) for c in cols])
        result.files.append(path)


def _run_sweep(plan: ExperimentPlan, cfg: SimConfig, out: Path, result: ExperimentResult):
    stem = "coverage" if plan.kind == "coverage_sweep" else "density"
    coverages = plan.resolved_coverage_grid()
    densities = plan.resolved_density_grid()
    points = []
    grid_index = 0
    for density in densities:
        for coverage in coverages:
            points.append(
                (grid_index, plan.kind, plan.seed, plan.replications, coverage, density, cfg.to_dict())
            )
            grid_index += 1
    if plan.threads > 1:
        with ProcessPoolExecutor(max_workers=plan.threads) as pool:
            outcomes = list(pool.map(_sweep_point, points))
        outcomes.sort(key=lambda item: item[0])
    else:
        outcomes = [_sweep_point(p) for p in points]
    details, summaries = [], []
    for _, point_details, summary in outcomes:
        details.extend(point_details)
        summaries.append(summary)
        result.attempted += len(point_details)
        result.succeeded += sum(d["success"] for d in point_details)
    result.files.append(write_csv(out / f"{stem}_detail.csv", DETAIL_COLUMNS, details))
    summary_cols = ["scenario_id", "coverage_m", "density", "replications", "success_rate",
                    "ris_mean", "ris_se", "dt_mean", "dt_se", "dtn_mean", "eeff_mean", "eeff_se"]
    result.files.append(write_csv(out / f"{stem}_summary.csv", summary_cols, summaries))
    result.summary_rows = summaries


def estimate_duration_quantiles(
    scales_slots: np.ndarray, deltas: tuple[float, ...], chains: int, batches: int, rng: np.random.Generator
) -> dict[tuple[int, int], tuple[float, float]]:
    """Batched Monte Carlo quantiles of exponential durations in slots.

    One shared Exp(1) draw serves every scale (common random numbers), so
    estimates move together across the grid. Returns (mean, se) keyed by
    (scale index, delta index).
    """
    base = rng.exponential(1.0, size=chains)
    per_batch = chains // batches
    batched = base[: per_batch * batches].reshape(batches, per_batch)
    out = {}
    for si, scale in enumerate(scales_slots):
        durations = batched * scale
        for di, delta in enumerate(deltas):
            q = np.quantile(durations, delta, axis=1)
            out[(si, di)] = (float(q.mean()), float(q.std(ddof=1) / np.sqrt(batches)))
    return out


def _run_traffic_validation(plan: ExperimentPlan, cfg: SimConfig, out: Path, result: ExperimentResult):
    slot = cfg.slot_s
    rng = derive_rng(plan.seed, 0)
    ln_terms = {d: np.log(1.0 / (1.0 - d)) for d in plan.deltas}
    for figure, fixed_ms in (("nu_b", cfg.lambda_off_ms), ("nu_i", cfg.mu_on_ms)):
        fixed_s = (fixed_ms if not isinstance(fixed_ms, tuple) else fixed_ms[0]) * 1e-3
        rows = []
        scales = []
        for xi in plan.xi_grid:
            if figure == "nu_b":
                mu = xi * fixed_s / (1.0 - xi)  # lambda fixed
                scales.append(mu / slot)
            else:
                lam = fixed_s * (1.0 - xi) / xi  # mu fixed
                scales.append(lam / slot)
        quantiles = estimate_duration_quantiles(
            np.asarray(scales), plan.deltas, plan.chains, plan.batches, rng
        )
        for si, xi in enumerate(plan.xi_grid):
            for di, delta in enumerate(plan.deltas):
                analytic = scales[si] * ln_terms[delta]
                mc_mean, mc_se = quantiles[(si, di)]
                rows.append(
                    {"xi": xi, "delta": delta, "analytic": analytic, "mc_mean": mc_mean, "mc_se": mc_se}
                )
        result.files.append(write_csv(out / f"{figure}.csv", ["xi", "delta", "analytic", "mc_mean", "mc_se"], rows))
        result.summary_rows.extend({"figure": figure, **r} for r in rows)
    result.attempted = len(plan.xi_grid) * len(plan.deltas) * 2
    result.succeeded = result.attempted


def _run_comparison(plan: ExperimentPlan, cfg: SimConfig, out: Path, result: ExperimentResult):
    coverages = plan.resolved_coverage_grid()
    details, summaries = [], []
    for ci, coverage in enumerate(coverages):
        point_cfg = cfg.with_overrides(
            coverage_m=coverage, source_xy=SWEEP_SOURCE, dest_xy=SWEEP_DEST
        )
        per_variant = {v: [] for v in plan.variants}
        for rep in range(plan.replications):
            for variant in plan.variants:
                rng = derive_rng(plan.seed, ci, rep)  # shared across variants
                ledger = run_one_route(point_cfg, rng, variant=variant)
                scenario = f"comparison-r{coverage:g}-{variant}"
                row = _detail_row(
                    scenario, plan.seed, variant, coverage, point_cfg.iu_count, ledger, point_cfg
                )
                per_variant[variant].append(row)
        for variant in plan.variants:
            rows = per_variant[variant]
            details.extend(rows)
            summary = {
                "scenario_id": f"comparison-r{coverage:g}-{variant}",
                "coverage_m": coverage,
                "density": point_cfg.iu_count,
                "variant": variant,
            }
            summary.update(_aggregate(rows))
            summaries.append(summary)
            result.attempted += len(rows)
            result.succeeded += sum(d["success"] for d in rows)
    result.files.append(write_csv(out / "comparison_detail.csv", DETAIL_COLUMNS, details))
    summary_cols = ["scenario_id", "coverage_m", "density", "variant", "replications",
                    "success_rate", "ris_mean", "ris_se", "dt_mean", "dt_se", "dtn_mean",
                    "eeff_mean", "eeff_se"]
    result.files.append(write_csv(out / "comparison_summary.csv", summary_cols, summaries))
    result.summary_rows = summaries


def _run_mobility(plan: ExperimentPlan, cfg: SimConfig, out: Path, result: ExperimentResult):
    coverage = plan.resolved_coverage_grid()[0]
    point_cfg = cfg.with_overrides(coverage_m=coverage, source_xy=SWEEP_SOURCE, dest_xy=SWEEP_DEST)
    details, summaries = [], []
    for vi, v_max in enumerate(plan.vmax_grid):
        rows = []
        for rep in range(plan.replications):
            rng = derive_rng(plan.seed, rep, 0)  # shared across the v_max grid
            mob_rng = derive_rng(plan.seed, rep, 1)
            ledger = run_one_route(point_cfg, rng, mobility_rng=mob_rng, v_max=v_max)
            scenario = f"mobility-v{v_max:g}"
            rows.append(
                _detail_row(scenario, plan.seed, f"v{v_max:g}", coverage, point_cfg.iu_count, ledger, point_cfg)
            )
        details.extend(rows)
        summary = {
            "scenario_id": f"mobility-v{v_max:g}",
            "coverage_m": coverage,
            "density": point_cfg.iu_count,
            "v_max": v_max,
        }
        summary.update(_aggregate(rows))
        summaries.append(summary)
        result.attempted += len(rows)
        result.succeeded += sum(d["success"] for d in rows)
    result.files.append(write_csv(out / "mobility_detail.csv", DETAIL_COLUMNS, details))
    summary_cols = ["scenario_id", "coverage_m", "density", "v_max", "replications",
                    "success_rate", "ris_mean", "ris_se", "dt_mean", "dt_se", "dtn_mean",
                    "eeff_mean", "eeff_se"]
    result.files.append(write_csv(out / "mobility_summary.csv", summary_cols, summaries))
    result.summary_rows = summaries


def run(plan: ExperimentPlan, cfg: SimConfig, out_dir: str | Path) -> ExperimentResult:
    """Execute a plan, writing CSVs plus a manifest into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = ExperimentResult(kind=plan.kind)
    result.files.append(write_manifest(out / f"manifest_{plan.kind}.json", plan, cfg))
    if plan.kind == "trajectory":
        _run_trajectory(plan, cfg, out, result)
    elif plan.kind in ("coverage_sweep", "density_sweep"):
        _run_sweep(plan, cfg, out, result)
    elif plan.kind == "traffic_validation":
        _run_traffic_validation(plan, cfg, out, result)
    elif plan.kind == "comparison":
        _run_comparison(plan, cfg, out, result)
    else:
        _run_mobility(plan, cfg, out, result)
    return result
