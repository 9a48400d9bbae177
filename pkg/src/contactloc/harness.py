"""Closed-loop plan-execute harness with a ground-truth contact simulator.

An episode runs the coarse volumetric phase until the residual volume is
small, converts it into pose particles, then runs the fine phase until the
probe parks on the agreed docking cell. Observations come from a perfect
simulator that evaluates the same deterministic contact model against the
hidden true pose. Each episode yields a metrics record; suites aggregate
records into tables of per-planner means relative to the proposed planner.
"""

from __future__ import annotations

import csv
import random
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Callable, Sequence

from .baselines import frontier_step, tbl_step
from .errors import (
    ContactLocError,
    DeadEnd,
    InconsistentObservation,
    MismatchedScenarioSets,
    NoFeasiblePose,
    NoInformativeAction,
    ScenarioError,
)
from .geometry import ActionSpec, Coord, DiscretizedAction, Geometry
from .particles import (
    ParticleBelief,
    PoseHypothesis,
    PoseTable,
    dock_action,
    expected_observation,
    generate_hypotheses,
    is_goal,
    shared_dock,
)
from .planner import PlannerConfig, ValueTable, plan_with_table
from .scenario import Scenario, resolve_scenario, with_overrides
from .spaces import Phase1Space, Phase2Space
from .volumetric import (
    VolumetricBelief,
    apply_collision,
    apply_no_collision,
    initial_belief,
    is_phase1_terminal,
)

PROPOSED = "rtdp"
PLANNERS = ("rtdp", "rtdp-inad", "tbl", "frontier")
METRICS = ("cost", "total_effort", "plan_iterations", "effort_per_iteration")


@dataclass(frozen=True)
class RunRecord:
    """Metrics of one episode; every field is deterministic given the inputs."""

    scenario: str
    planner: str
    seed: int
    success: bool
    cost: int
    phase1_cost: int
    phase2_cost: int
    phase1_actions: int
    phase2_actions: int
    plan_iterations: int
    total_effort: int
    effort_per_iteration: float
    final_hypotheses: int
    failure: str = ""


@dataclass
class EpisodeTrace:
    """Execution log: per step the phase, the push taken and the observation."""

    steps: list[tuple[int, tuple, int | None]]
    truth: PoseHypothesis | None = None


def simulate_observation(
    geometry: Geometry, poses: PoseTable, truth: PoseHypothesis, action: DiscretizedAction
) -> int | None:
    """Ground-truth observation: the deterministic contact model evaluated at
    the true pose. Shares its implementation with the particle predictor."""
    return expected_observation(geometry, poses, truth, action)


class _EpisodeFailed(ContactLocError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class _RtdpDriver:
    """Closed-loop partial-policy execution: replan whenever the current
    belief has no precomputed action."""

    def __init__(self, config: PlannerConfig):
        self.config = config
        self.table = ValueTable()
        self.policy = None
        self.iterations = 0
        self.effort = 0

    def next_action(self, space, belief, geometry: Geometry) -> DiscretizedAction:
        spec = self.policy.get(belief) if self.policy is not None else None
        if spec is None:
            self.policy = plan_with_table(space, belief, self.config, self.table)
            self.iterations += 1
            self.effort += self.policy.backups_used
            spec = self.policy.get(belief)
            if spec is None:
                raise DeadEnd("planning produced no action for the current belief")
        return geometry.discretize(belief.position, spec)


class _GreedyDriver:
    """One planning iteration per executed action."""

    def __init__(self, kind: str, scenario: Scenario, rng: random.Random):
        self.kind = kind
        self.config = scenario.baseline
        self.rng = rng
        self.iterations = 0
        self.effort = 0

    def next_action(self, space, belief, geometry: Geometry) -> DiscretizedAction:
        self.iterations += 1
        candidates = space.actions(belief)
        if self.kind == "tbl":
            self.effort += min(self.config.sample_count, len(candidates))
            return tbl_step(space, belief, self.config, self.rng)
        self.effort += len(candidates)
        return frontier_step(space, belief, self.config)


def _make_driver(planner: str, scenario: Scenario, rng: random.Random):
    if planner == "rtdp":
        return _RtdpDriver(scenario.planner)
    if planner == "rtdp-inad":
        return _RtdpDriver(replace(scenario.planner, explore_fraction=0.0))
    if planner in ("tbl", "frontier"):
        return _GreedyDriver(planner, scenario, rng)
    raise ScenarioError(f"unknown planner {planner!r}; have {PLANNERS}")


class _Episode:
    def __init__(self, scenario: Scenario, planner: str, seed: int):
        scenario.validate()
        self.scenario = scenario
        self.planner = planner
        self.seed = seed
        self.geometry = scenario.geometry()
        self.template = scenario.template()
        self.params = scenario.volumetric_params()
        self.poses = PoseTable(self.geometry.grid, self.template)
        self.truth = scenario.resolve_truth(seed)
        self.truth_mask = self.poses.mask(self.truth)
        self.rng = random.Random(seed * 7_919 + 101)
        self.driver = _make_driver(planner, scenario, self.rng)
        self.cost = [0, 0]  # per phase
        self.actions = [0, 0]
        self.executed = 0
        self.trace = EpisodeTrace(steps=[], truth=self.truth)

    # -- plumbing --------------------------------------------------------------

    def _spend(self, phase: int, steps: int) -> None:
        self.cost[phase] += steps
        self.actions[phase] += 1
        self.executed += 1
        if self.executed > self.scenario.max_steps:
            raise _EpisodeFailed("step-limit")

    def _observe(self, action: DiscretizedAction) -> int | None:
        return simulate_observation(self.geometry, self.poses, self.truth, action)

    # -- phase 1 ----------------------------------------------------------------

    def run_phase1(self) -> VolumetricBelief:
        belief = initial_belief(
            self.geometry, self.scenario.start, self.scenario.prior_box()
        )
        if self.truth_mask & ~belief.possible.mask:
            raise ScenarioError("true pose is not inside the initial volume")
        space = Phase1Space(
            self.geometry,
            self.params,
            self.scenario.action_lengths,
            greed_weight=self.scenario.planner.greed_weight,
            placement_offsets=self.template.rotations,
        )
        while not is_phase1_terminal(belief, self.params):
            try:
                action = self.driver.next_action(space, belief, self.geometry)
            except NoInformativeAction:
                belief = self._approach_volume(belief)
                continue
            belief = self._execute_volumetric(belief, action)
        return belief

    def _execute_volumetric(self, belief, action: DiscretizedAction) -> VolumetricBelief:
        observed = self._observe(action)
        self._spend(0, action.n if observed is None else observed)
        self.trace.steps.append((1, (action.direction, action.n), observed))
        if observed is None:
            belief = apply_no_collision(self.geometry, belief, action)
        else:
            belief = apply_collision(self.geometry, belief, action, observed, self.params)
        if self.truth_mask & ~belief.possible.mask:
            raise _EpisodeFailed("soundness")
        if not belief.possible.mask:
            raise _EpisodeFailed("belief-empty")
        return belief

    def _approach_volume(self, belief: VolumetricBelief) -> VolumetricBelief:
        """Guarded walk toward the residual volume for greedy planners whose
        in-range actions are all uninformative. Moves hug proven-empty cells,
        so only arrival contacts can interrupt the walk."""
        avoid = belief.possible.mask

        def informative(config: Coord) -> bool:
            for direction in self.geometry.grid.directions():
                surface = self.geometry.surface(config, direction)
                if surface is not None and surface.mask & avoid:
                    return True
            return False

        path = self._bfs_path(belief.position, avoid, informative)
        if not path:
            raise _EpisodeFailed("no-informative-action")
        for step in path:
            direction = tuple(a - b for a, b in zip(step, belief.position))
            action = self.geometry.discretize(belief.position, ActionSpec(direction, 1))
            contacts = len(belief.contacts)
            belief = self._execute_volumetric(belief, action)
            if len(belief.contacts) != contacts:
                break  # contact en route; let the greedy step reassess
        return belief

    # -- phase 2 ----------------------------------------------------------------

    def run_phase2(self, handoff: VolumetricBelief) -> ParticleBelief:
        hypotheses = generate_hypotheses(
            self.geometry, handoff.possible, handoff.contacts, self.template
        )
        belief = ParticleBelief(handoff.position, hypotheses)
        if self.truth not in belief.hypotheses:
            raise _EpisodeFailed("soundness")
        space = Phase2Space(
            self.geometry,
            self.template,
            self.scenario.action_lengths,
            greed_weight=self.scenario.planner.greed_weight,
        )
        greedy = isinstance(self.driver, _GreedyDriver)
        while not is_goal(belief, self.template):
            if greedy and shared_dock(belief, self.template) is not None:
                belief = self._dock_endgame(space, belief)
                break
            try:
                action = self.driver.next_action(space, belief, self.geometry)
            except NoInformativeAction:
                belief = self._approach_particles(space, belief)
                continue
            belief = self._execute_particle(space, belief, action)
        moves = dock_action(belief, self.template)
        for spec in moves:  # defensive: both exits already park on the dock
            action = self.geometry.discretize(belief.position, spec)
            belief = self._execute_particle(space, belief, action)
        if not is_goal(belief, self.template):
            raise _EpisodeFailed("dock-miss")
        if shared_dock(belief, self.template) != self.template.dock_of(self.truth):
            raise _EpisodeFailed("soundness")
        return belief

    def _execute_particle(self, space, belief, action: DiscretizedAction) -> ParticleBelief:
        observed = self._observe(action)
        self._spend(1, action.n if observed is None else observed)
        self.trace.steps.append((2, (action.direction, action.n), observed))
        for outcome in space.outcomes(belief, action):
            if outcome.collision_index == observed:
                successor = outcome.successor
                if self.truth not in successor.hypotheses:
                    raise _EpisodeFailed("soundness")
                return successor
        raise _EpisodeFailed("inconsistent-observation")

    def _hypothesis_union(self, belief: ParticleBelief) -> int:
        union = 0
        for h in belief.hypotheses:
            union |= self.poses.mask(h)
        return union

    def _dock_endgame(self, space, belief: ParticleBelief) -> ParticleBelief:
        """Greedy planners cannot navigate once nothing is informative; walk
        the shortest hypothesis-avoiding path to the agreed dock."""
        dock = shared_dock(belief, self.template)
        while belief.position != dock:
            union = self._hypothesis_union(belief)
            path = self._bfs_path(belief.position, union, lambda c: c == dock)
            if not path:
                raise _EpisodeFailed("no-endgame-path")
            for step in path:
                direction = tuple(a - b for a, b in zip(step, belief.position))
                action = self.geometry.discretize(belief.position, ActionSpec(direction, 1))
                belief = self._execute_particle(space, belief, action)
        return belief

    def _approach_particles(self, space, belief: ParticleBelief) -> ParticleBelief:
        """Guarded walk toward the hypothesis region for greedy planners whose
        in-range actions are all uninformative."""
        union = self._hypothesis_union(belief)

        def informative(config: Coord) -> bool:
            candidate = ParticleBelief(config, belief.hypotheses)
            return any(
                len(space.outcomes(candidate, action)) > 1
                for action in space.actions(candidate)
            )

        path = self._bfs_path(belief.position, union, informative)
        if not path:
            raise _EpisodeFailed("no-informative-action")
        for step in path:
            direction = tuple(a - b for a, b in zip(step, belief.position))
            action = self.geometry.discretize(belief.position, ActionSpec(direction, 1))
            count = len(belief.hypotheses)
            belief = self._execute_particle(space, belief, action)
            if len(belief.hypotheses) != count:
                break  # observation en route; let the greedy step reassess
        return belief

    def _bfs_path(self, start: Coord, avoid_mask: int, is_target) -> list[Coord] | None:
        """Shortest config path whose footprints avoid ``avoid_mask`` cells.

        Returns the configs after ``start`` (empty when ``start`` is already
        the nearest target, None when no target is reachable). Neighbor order
        follows the sorted direction list, so ties are deterministic.
        """
        if is_target(start):
            return []
        frontier = [start]
        parents: dict[Coord, Coord | None] = {start: None}
        while frontier:
            nxt: list[Coord] = []
            for q in frontier:
                for direction in self.geometry.grid.directions():
                    step = tuple(a + d for a, d in zip(q, direction))
                    if step in parents or not self.geometry.fits(step):
                        continue
                    if self.geometry.footprint(step).mask & avoid_mask:
                        continue
                    parents[step] = q
                    if is_target(step):
                        path = [step]
                        cur = q
                        while parents[cur] is not None:
                            path.append(cur)
                            cur = parents[cur]
                        return list(reversed(path))
                    nxt.append(step)
            frontier = nxt
        return None

    # -- record -----------------------------------------------------------------

    def record(self, success: bool, final_h: int, failure: str = "") -> RunRecord:
        iters = self.driver.iterations
        effort = self.driver.effort
        return RunRecord(
            scenario=self.scenario.name,
            planner=self.planner,
            seed=self.seed,
            success=success,
            cost=self.cost[0] + self.cost[1],
            phase1_cost=self.cost[0],
            phase2_cost=self.cost[1],
            phase1_actions=self.actions[0],
            phase2_actions=self.actions[1],
            plan_iterations=iters,
            total_effort=effort,
            effort_per_iteration=effort / iters if iters else 0.0,
            final_hypotheses=final_h,
            failure=failure,
        )


def run_episode(
    scenario: Scenario, planner: str, seed: int | None = None
) -> RunRecord:
    record, _ = run_episode_detailed(scenario, planner, seed)
    return record


def run_episode_detailed(
    scenario: Scenario, planner: str, seed: int | None = None
) -> tuple[RunRecord, EpisodeTrace]:
    """Run one closed-loop episode; failures are recorded, not raised."""
    seed = scenario.seed if seed is None else seed
    episode = _Episode(scenario, planner, seed)
    final_h = 0
    try:
        handoff = episode.run_phase1()
        final = episode.run_phase2(handoff)
        final_h = len(final.hypotheses)
        return episode.record(True, final_h), episode.trace
    except _EpisodeFailed as exc:
        return episode.record(False, final_h, exc.reason), episode.trace
    except NoFeasiblePose:
        return episode.record(False, 0, "no-feasible-pose"), episode.trace
    except NoInformativeAction:
        return episode.record(False, 0, "no-informative-action"), episode.trace
    except InconsistentObservation:
        return episode.record(False, 0, "inconsistent-observation"), episode.trace


# -- aggregation ----------------------------------------------------------------


@dataclass(frozen=True)
class AggregateTable:
    """Per-planner metric means and their ratios to the reference planner."""

    reference: str
    episodes: dict
    means: dict
    ratios: dict

    def render(self) -> str:
        headers = ["planner", "episodes", "success"] + [f"{m}(rel)" for m in METRICS]
        rows = []
        for planner in sorted(self.means, key=lambda p: (p != self.reference, p)):
            row = [
                planner,
                str(self.episodes[planner]),
                f"{self.means[planner]['success']:.2f}",
            ]
            row += [f"{self.ratios[planner][m]:.3f}" for m in METRICS]
            rows.append(row)
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
        lines = [
            "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
            "  ".join("-" * w for w in widths),
        ]
        lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        return "\n".join(lines) + "\n"


def aggregate(records: Sequence[RunRecord], reference: str = PROPOSED) -> AggregateTable:
    """Per-planner means, normalized by the reference planner's means.

    Every planner must cover the same (scenario, seed) set; otherwise the
    comparison is meaningless and :class:`MismatchedScenarioSets` is raised.
    """
    if not records:
        raise MismatchedScenarioSets("no records to aggregate")
    by_planner: dict[str, list[RunRecord]] = {}
    for r in records:
        by_planner.setdefault(r.planner, []).append(r)
    if reference not in by_planner:
        raise MismatchedScenarioSets(f"no records for reference planner {reference!r}")
    keysets = {
        p: sorted((r.scenario, r.seed) for r in rs) for p, rs in by_planner.items()
    }
    expected = keysets[reference]
    for planner, keys in keysets.items():
        if keys != expected:
            raise MismatchedScenarioSets(
                f"planner {planner!r} ran a different scenario/seed set"
            )
    means = {}
    for planner, rs in by_planner.items():
        entry = {m: sum(getattr(r, m) for r in rs) / len(rs) for m in METRICS}
        entry["success"] = sum(r.success for r in rs) / len(rs)
        means[planner] = entry
    ratios = {}
    for planner, entry in means.items():
        ratios[planner] = {
            m: _safe_ratio(entry[m], means[reference][m]) for m in METRICS
        }
    episodes = {p: len(rs) for p, rs in by_planner.items()}
    return AggregateTable(reference=reference, episodes=episodes, means=means, ratios=ratios)


def _safe_ratio(value: float, ref: float) -> float:
    if ref == 0.0:
        return 1.0 if value == 0.0 else float("inf")
    return value / ref


def phase_cost_ratios(
    records: Sequence[RunRecord], reference: str = PROPOSED
) -> dict[str, dict[str, float]]:
    """Mean per-phase cost of each planner relative to the reference."""
    by_planner: dict[str, list[RunRecord]] = {}
    for r in records:
        by_planner.setdefault(r.planner, []).append(r)
    out = {}
    ref_rs = by_planner[reference]
    ref1 = sum(r.phase1_cost for r in ref_rs) / len(ref_rs)
    ref2 = sum(r.phase2_cost for r in ref_rs) / len(ref_rs)
    for planner, rs in by_planner.items():
        out[planner] = {
            "phase1": _safe_ratio(sum(r.phase1_cost for r in rs) / len(rs), ref1),
            "phase2": _safe_ratio(sum(r.phase2_cost for r in rs) / len(rs), ref2),
        }
    return out


# -- suites and persistence -------------------------------------------------------


_CSV_FIELDS = ["run_id", "scenario_ref", "budget", "budget_kind"] + [
    f.name for f in fields(RunRecord)
]


def record_to_row(record: RunRecord, run_id: int, scenario_ref: str, scenario: Scenario) -> dict:
    row = {
        "run_id": run_id,
        "scenario_ref": scenario_ref,
        "budget": scenario.planner.budget,
        "budget_kind": scenario.planner.budget_kind,
    }
    row.update(asdict(record))
    return row


def next_run_id(path: Path) -> int:
    if not path.exists():
        return 1
    last = 0
    with path.open() as fh:
        for row in csv.DictReader(fh):
            try:
                last = max(last, int(row["run_id"]))
            except (KeyError, ValueError):
                continue
    return last + 1


class ResultsWriter:
    """Appends one CSV row per episode, flushing eagerly so an interrupted
    suite keeps everything finished so far."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.run_id = next_run_id(self.path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        new = not self.path.exists()
        self._fh = self.path.open("a", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=_CSV_FIELDS)
        if new:
            self._writer.writeheader()
            self._fh.flush()

    def write(self, record: RunRecord, scenario_ref: str, scenario: Scenario) -> None:
        self._writer.writerow(record_to_row(record, self.run_id, scenario_ref, scenario))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def run_suite(
    scenario_refs: Sequence[str],
    planners: Sequence[str],
    seeds: Sequence[int],
    results_path: str | Path | None = None,
    reference: str = PROPOSED,
    progress: Callable[[RunRecord], None] | None = None,
) -> tuple[list[RunRecord], AggregateTable]:
    """Cross product of scenarios, planners and seeds, with per-row flushing."""
    writer = ResultsWriter(results_path) if results_path is not None else None
    records = []
    try:
        for ref in scenario_refs:
            scenario = resolve_scenario(ref)
            for planner in planners:
                for seed in seeds:
                    record = run_episode(scenario, planner, seed)
                    records.append(record)
                    if writer is not None:
                        writer.write(record, str(ref), scenario)
                    if progress is not None:
                        progress(record)
    finally:
        if writer is not None:
            writer.close()
    table = aggregate(records, reference=reference if reference in planners else planners[0])
    return records, table


def ablation_heuristics(
    scenario_refs: Sequence[str],
    seeds: Sequence[int],
    results_path: str | Path | None = None,
    progress: Callable[[RunRecord], None] | None = None,
) -> tuple[list[RunRecord], AggregateTable]:
    """Proposed dual-heuristic schedule against the greedy-only variant."""
    return run_suite(
        scenario_refs,
        ["rtdp", "rtdp-inad"],
        seeds,
        results_path=results_path,
        reference="rtdp",
        progress=progress,
    )


def replay_row(row: dict) -> tuple[RunRecord, RunRecord, bool]:
    """Re-run the episode a results row describes; returns (recorded,
    replayed, matches)."""
    scenario = resolve_scenario(row["scenario_ref"])
    scenario = with_overrides(scenario, budget=int(row["budget"]))
    replayed = run_episode(scenario, row["planner"], int(row["seed"]))
    recorded = _record_from_row(row)
    return recorded, replayed, recorded == replayed


def _record_from_row(row: dict) -> RunRecord:
    kwargs = {}
    for f in fields(RunRecord):
        raw = row[f.name]
        if f.type in ("int", int):
            kwargs[f.name] = int(raw)
        elif f.type in ("float", float):
            kwargs[f.name] = float(raw)
        elif f.type in ("bool", bool):
            kwargs[f.name] = raw in ("True", "true", "1", True)
        else:
            kwargs[f.name] = raw
    return RunRecord(**kwargs)
