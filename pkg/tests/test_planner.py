from __future__ import annotations

import time
from dataclasses import dataclass, field

import pytest

import oracles
from contactloc.errors import DeadEnd
from contactloc.geometry import (
    ActionSpec,
    Geometry,
    GridWorkspace,
    ProbeShape,
    VoxelSet,
)
from contactloc.particles import ObjectTemplate, ParticleBelief, PoseHypothesis, generate_hypotheses
from contactloc.planner import (
    ADMISSIBLE,
    INADMISSIBLE,
    PlannerConfig,
    ValueTable,
    action_cost,
    backup,
    belief_fingerprint,
    most_likely_successor,
    plan,
    q_value,
    rtdp_trial,
)
from contactloc.spaces import Phase1Space, Phase2Space
from contactloc.volumetric import Outcome, VolumetricBelief, VolumetricParams


@dataclass
class StubAction:
    name: str
    length: int
    direction: tuple

    @property
    def spec(self) -> ActionSpec:
        return ActionSpec(self.direction, self.length)


@dataclass
class StubSpace:
    """Hand-built belief MDP: beliefs are strings, tables drive everything."""

    transitions: dict  # (belief, action name) -> list[(kind, prob, steps, successor)]
    terminals: set
    heuristics_ad: dict = field(default_factory=dict)
    heuristics_inad: dict = field(default_factory=dict)
    acts: dict = field(default_factory=dict)

    def __post_init__(self):
        for belief, name in self.transitions:
            self.acts.setdefault(belief, [])
        for (belief, name) in sorted(self.transitions, key=lambda k: k[1]):
            self.acts[belief].append(StubAction(name, 1, (1, 0)))

    def is_terminal(self, belief):
        return belief in self.terminals

    def actions(self, belief):
        return tuple(self.acts.get(belief, ()))

    def outcomes(self, belief, action):
        rows = self.transitions[(belief, action.name)]
        return [
            Outcome(kind, (0, 0), prob, steps, successor)
            for kind, prob, steps, successor in rows
        ]

    def uncertainty_size(self, belief):
        return 1

    def heuristic_admissible(self, belief):
        return self.heuristics_ad.get(belief, 0.0)

    def heuristic_inadmissible(self, belief):
        return self.heuristics_inad.get(belief, 0.0)


def chain_space():
    # b0 -(advance, cost 1)-> b1 -> b2 (terminal); a "stall" wastes 2
    transitions = {
        ("b0", "advance"): [(None, 1.0, 1, "b1")],
        ("b0", "stall"): [(None, 1.0, 2, "b0x")],
        ("b0x", "advance"): [(None, 1.0, 2, "b1")],
        ("b1", "advance"): [(None, 1.0, 1, "b2")],
        ("b1", "stall"): [(None, 1.0, 3, "b2")],
    }
    return StubSpace(transitions=transitions, terminals={"b2"})


class TestActionCost:
    def test_single_outcome_move(self, geom10):
        params = VolumetricParams(1, 2.0, handoff_threshold=1)
        space = Phase1Space(geom10, params, (3,))
        b = VolumetricBelief((0, 0), VoxelSet.from_cells(geom10.grid, [(9, 9), (9, 8)]), ())
        action = geom10.discretize((0, 0), ActionSpec((1, 0), 3))
        assert action_cost(space, b, action) == pytest.approx(3.0)

    def test_expectation_with_stub(self):
        transitions = {
            ("b", "push"): [(0, 0.5, 1, "hit"), (None, 0.5, 4, "clear")],
        }
        space = StubSpace(transitions=transitions, terminals={"hit", "clear"})
        action = space.actions("b")[0]
        assert action_cost(space, "b", action) == pytest.approx(0.5 * 1 + 0.5 * 4)

    def test_zero_length_dock(self):
        transitions = {("b", "noop"): [(None, 1.0, 0, "done")]}
        space = StubSpace(transitions=transitions, terminals={"done"})
        assert action_cost(space, "b", space.actions("b")[0]) == 0.0


class TestQValue:
    def test_terminal_successors_cost_only(self):
        space = chain_space()
        table = ValueTable()
        action = [a for a in space.actions("b1") if a.name == "advance"][0]
        assert q_value(space, table, "b1", action, ADMISSIBLE) == pytest.approx(1.0)

    def test_stored_value_composition(self):
        space = chain_space()
        table = ValueTable()
        table.admissible["b1"] = 5.0
        action = [a for a in space.actions("b0") if a.name == "advance"][0]
        assert q_value(space, table, "b0", action, ADMISSIBLE) == pytest.approx(6.0)

    def test_weighted_sum(self):
        transitions = {
            ("b", "push"): [(0, 0.25, 0, "s1"), (None, 0.75, 0, "s2")],
        }
        space = StubSpace(transitions=transitions, terminals=set())
        table = ValueTable()
        table.inadmissible["s1"] = 4.0
        table.inadmissible["s2"] = 8.0
        got = q_value(space, "b" and table, "b", space.actions("b")[0], INADMISSIBLE)
        assert got == pytest.approx(0.0 + 0.25 * 4 + 0.75 * 8)


class TestBackup:
    def test_single_action(self):
        space = chain_space()
        table = ValueTable()
        best_ad, best_inad = backup(space, table, "b1")
        assert best_ad.name == "advance" and best_inad.name == "advance"
        assert table.admissible["b1"] == pytest.approx(1.0)

    def test_min_selection(self):
        space = chain_space()
        table = ValueTable()
        table.admissible["b1"] = 0.0
        table.inadmissible["b1"] = 0.0
        table.admissible["b0x"] = 10.0
        table.inadmissible["b0x"] = 10.0
        best_ad, _ = backup(space, table, "b0")
        assert best_ad.name == "advance"
        assert table.admissible["b0"] == pytest.approx(1.0)

    def test_tie_breaks_to_canonical_first(self):
        transitions = {
            ("b", "a_long"): [(None, 1.0, 2, "t")],
            ("b", "b_short"): [(None, 1.0, 2, "t")],
        }
        space = StubSpace(transitions=transitions, terminals={"t"})
        space.acts["b"] = [StubAction("b_short", 1, (1, 0)), StubAction("a_long", 2, (1, 0))]
        table = ValueTable()
        best_ad, best_inad = backup(space, table, "b")
        assert best_ad.name == "b_short"
        assert best_inad.name == "b_short"

    def test_dead_end(self):
        space = StubSpace(transitions={}, terminals=set())
        with pytest.raises(DeadEnd):
            backup(space, ValueTable(), "nowhere")


class TestMostLikelySuccessor:
    def test_max_probability(self):
        transitions = {
            ("b", "push"): [(0, 0.2, 0, "s0"), (2, 0.5, 2, "s2"), (None, 0.3, 4, "sc")],
        }
        space = StubSpace(transitions=transitions, terminals=set())
        assert most_likely_successor(space, "b", space.actions("b")[0]) == "s2"

    def test_tie_prefers_clear_run(self):
        transitions = {
            ("b", "push"): [(1, 0.5, 1, "s1"), (None, 0.5, 4, "sc")],
        }
        space = StubSpace(transitions=transitions, terminals=set())
        assert most_likely_successor(space, "b", space.actions("b")[0]) == "sc"

    def test_tie_among_contacts_prefers_lowest_index(self):
        transitions = {
            ("b", "push"): [(3, 0.4, 3, "s3"), (1, 0.4, 1, "s1"), (None, 0.2, 4, "sc")],
        }
        space = StubSpace(transitions=transitions, terminals=set())
        assert most_likely_successor(space, "b", space.actions("b")[0]) == "s1"


class TestTrial:
    def test_terminal_start_is_empty(self):
        space = chain_space()
        got = rtdp_trial(space, ValueTable(), "b2", PlannerConfig(budget=10))
        assert got == []

    def test_horizon_one_single_backup(self):
        space = chain_space()
        table = ValueTable()
        got = rtdp_trial(space, table, "b0", PlannerConfig(budget=10, horizon=1))
        assert got == ["b0"]
        assert "b0" in table.admissible

    def test_chain_converges_to_exact_values(self):
        space = chain_space()
        values = oracles.exact_values(space, {"b0", "b0x", "b1", "b2"})
        assert values["b0"] == pytest.approx(2.0)
        table = ValueTable()
        config = PlannerConfig(budget=100, horizon=10, stop_on_converged=False)
        for _ in range(3):
            visited = rtdp_trial(space, table, "b0", config)
            assert visited == ["b0", "b1"]  # descends the chain in order
        assert table.admissible["b0"] == pytest.approx(values["b0"])
        assert table.admissible["b1"] == pytest.approx(values["b1"])

    def test_descends_most_likely_branch(self):
        transitions = {
            ("b0", "push"): [(0, 0.7, 1, "likely"), (None, 0.3, 3, "rare")],
            ("likely", "fin"): [(None, 1.0, 1, "done")],
            ("rare", "fin"): [(None, 1.0, 1, "done")],
        }
        space = StubSpace(transitions=transitions, terminals={"done"})
        seen = []
        rtdp_trial(space, ValueTable(), "b0", PlannerConfig(budget=10, horizon=5),
                   on_step=lambda b, a: seen.append((b, a.name)))
        assert seen == [("b0", "push"), ("likely", "fin")]


def tiny_phase2_space(dims=(7, 7), block=(1, 1), block_size=(2, 2), start=(5, 5), lengths=(1, 2)):
    grid = GridWorkspace(dims)
    geometry = Geometry(grid, ProbeShape.single(2))
    template = ObjectTemplate(
        rotations=(((0, 0), (1, 0)), ((0, 0), (0, 1))),
        docks=((-1, 0), (0, -1)),
    )
    cells = [
        (block[0] + dx, block[1] + dy)
        for dx in range(block_size[0])
        for dy in range(block_size[1])
    ]
    possible = VoxelSet.from_cells(grid, cells)
    hypotheses = generate_hypotheses(geometry, possible, (), template)
    start_belief = ParticleBelief(start, hypotheses)
    return Phase2Space(geometry, template, lengths), start_belief


class TestPlanOptimality:
    def test_policy_reaches_expected_cost_of_exact_optimum(self):
        space, start = tiny_phase2_space()
        reachable = oracles.enumerate_reachable(space, start, limit=2000)
        values = oracles.exact_values(space, reachable)
        config = PlannerConfig(budget=4000, horizon=40)
        policies = {}

        def decide(belief):
            for policy in policies.values():
                spec = policy.get(belief)
                if spec is not None:
                    return space.geometry.discretize(belief.position, spec)
            policy = plan(space, belief, config)
            policies[len(policies)] = policy
            return space.geometry.discretize(belief.position, policy.get(belief))

        got = oracles.policy_expected_cost(space, start, decide)
        assert got <= values[start] * 1.05 + 1e-9

    def test_admissible_values_never_exceed_optimum(self):
        space, start = tiny_phase2_space()
        reachable = oracles.enumerate_reachable(space, start, limit=2000)
        values = oracles.exact_values(space, reachable)
        for belief in reachable:
            if not space.is_terminal(belief):
                assert space.heuristic_admissible(belief) <= values[belief] + 1e-9
        table = ValueTable()
        config = PlannerConfig(budget=3000, horizon=40, stop_on_converged=False)
        from contactloc.planner import plan_with_table

        plan_with_table(space, start, config, table)
        for belief, value in table.admissible.items():
            assert value <= values[belief] + 1e-9

    def test_phase1_admissible_below_any_executed_suffix(self):
        """The lower bound can never exceed an upper bound: on real episodes,
        the heuristic at each visited belief stays below the cost the rest of
        that episode actually paid."""
        from contactloc import builtin_scenario
        from contactloc.harness import _Episode
        from contactloc.volumetric import (
            apply_collision,
            apply_no_collision,
            initial_belief,
            is_phase1_terminal,
        )
        from contactloc.harness import simulate_observation

        scenario = builtin_scenario("tiny2d")
        for seed in range(8):
            episode = _Episode(scenario, "frontier", seed)
            space = Phase1Space(
                episode.geometry,
                episode.params,
                scenario.action_lengths,
                placement_offsets=episode.template.rotations,
            )
            belief = initial_belief(episode.geometry, scenario.start, scenario.prior_box())
            visited = [(belief, 0)]
            spent = 0
            import random as _random

            rng = _random.Random(seed)
            from contactloc.baselines import frontier_step

            while not is_phase1_terminal(belief, episode.params) and spent < 200:
                try:
                    action = frontier_step(space, belief, scenario.baseline)
                except Exception:
                    break
                observed = simulate_observation(
                    episode.geometry, episode.poses, episode.truth, action
                )
                spent += action.n if observed is None else observed
                if observed is None:
                    belief = apply_no_collision(episode.geometry, belief, action)
                else:
                    belief = apply_collision(
                        episode.geometry, belief, action, observed, episode.params
                    )
                visited.append((belief, spent))
            if not is_phase1_terminal(belief, episode.params):
                continue
            total = visited[-1][1]
            for b, already in visited:
                suffix_cost = total - already
                assert space.heuristic_admissible(b) <= suffix_cost + 1e-9


class TestPlanBudgetAndDeterminism:
    def test_minimal_budget_covers_start_only(self):
        space = chain_space()
        policy = plan(space, "b0", PlannerConfig(budget=1))
        assert len(policy) == 1
        assert policy.get("b0") is not None

    def test_identical_runs_identical_policies(self):
        space1, start1 = tiny_phase2_space()
        space2, start2 = tiny_phase2_space()
        cfg = PlannerConfig(budget=500)
        p1 = plan(space1, start1, cfg)
        p2 = plan(space2, start2, cfg)
        assert p1.actions == p2.actions
        assert p1.backups_used == p2.backups_used

    def test_wall_clock_budget_respected(self):
        space, start = tiny_phase2_space(dims=(11, 11), block=(4, 4), start=(1, 1))
        budget_ms = 40.0
        for _ in range(20):
            t0 = time.perf_counter()
            policy = plan(space, start, PlannerConfig(budget=int(budget_ms), budget_kind="time_ms",
                                                      stop_on_converged=False))
            elapsed = time.perf_counter() - t0
            allowed = (
                budget_ms / 1000.0
                + policy.max_backup_seconds
                + policy.extract_seconds
                + 0.03
            )
            assert elapsed <= allowed

    def test_anytime_improvement_on_average(self):
        # statistical: mean executed cost does not rise with backup budget
        from contactloc import builtin_scenario, run_episode
        from contactloc.scenario import with_overrides

        base = builtin_scenario("tiny2d")
        lean = sum(
            run_episode(with_overrides(base, budget=40), "rtdp", seed=s).cost
            for s in range(30)
        )
        rich = sum(
            run_episode(with_overrides(base, budget=600), "rtdp", seed=s).cost
            for s in range(30)
        )
        assert rich <= lean * 1.02


class TestValueTableDump:
    def test_dump_lists_digests(self):
        space = chain_space()
        table = ValueTable()
        backup(space, table, "b0")
        text = table.dump()
        assert text.startswith("contactloc/value-table v1")
        assert belief_fingerprint("b0") in text
