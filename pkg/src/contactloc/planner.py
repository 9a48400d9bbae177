"""Anytime trial-based value iteration over belief states.

The solver keeps two value tables per belief, one seeded from a cost lower
bound and one from a greedy overestimate. Each trial walks from the start
belief, backing up both tables at every step, picking the action that is
best under the lower bound early in the budget and best under the greedy
estimate later, and descending into the most probable observation branch.
Planning stops when the budget runs out or when consecutive trials leave
every visited value unchanged; the returned partial policy maps each
visited belief to its greedy-value argmin action.

Beliefs are immutable values with exact equality, so they key the tables
directly; no belief discretization is needed. A planning session owns its
table: backups are applied serially, and concurrent readers would need a
snapshot.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from typing import Callable, Hashable

from .errors import DeadEnd
from .geometry import ActionSpec, DiscretizedAction
from .spaces import BeliefSpace

ADMISSIBLE = "admissible"
INADMISSIBLE = "inadmissible"


@dataclass(frozen=True)
class PlannerConfig:
    """Solver knobs.

    budget: backups allowed per planning call (or milliseconds when
        budget_kind is "time_ms"; backup counts keep runs reproducible).
    horizon: maximum trial depth.
    explore_fraction: share of the budget during which the action taken in
        a trial follows the lower-bound values; afterwards the greedy ones.
    greed_weight: scale of the greedy heuristic's uncertainty charge.
    stop_on_converged: end planning early after ``patience`` consecutive
        trials that change no stored value.
    """

    budget: int = 400
    budget_kind: str = "backups"
    horizon: int = 50
    explore_fraction: float = 0.5
    greed_weight: float = 1.0
    stop_on_converged: bool = True
    patience: int = 2
    value_tolerance: float = 1e-12

    def __post_init__(self) -> None:
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 <= self.explore_fraction <= 1.0:
            raise ValueError("explore_fraction must lie in [0, 1]")
        if self.greed_weight <= 0:
            raise ValueError("greed_weight must be positive")
        if self.budget_kind not in ("backups", "time_ms"):
            raise ValueError("budget_kind must be 'backups' or 'time_ms'")


class ValueTable:
    """Stored cost estimates per belief, one map per heuristic kind."""

    def __init__(self) -> None:
        self.admissible: dict[Hashable, float] = {}
        self.inadmissible: dict[Hashable, float] = {}

    def value(self, kind: str, belief, space: BeliefSpace) -> float:
        """Stored value, falling back to the matching heuristic."""
        store = self.admissible if kind == ADMISSIBLE else self.inadmissible
        got = store.get(belief)
        if got is not None:
            return got
        if kind == ADMISSIBLE:
            return space.heuristic_admissible(belief)
        return space.heuristic_inadmissible(belief)

    def dump(self) -> str:
        """Structured text: one line per belief digest with both values."""
        rows = {}
        for kind, store in ((ADMISSIBLE, self.admissible), (INADMISSIBLE, self.inadmissible)):
            for belief, value in store.items():
                rows.setdefault(belief_fingerprint(belief), {})[kind] = value
        lines = ["contactloc/value-table v1"]
        for digest in sorted(rows):
            vals = rows[digest]
            ad = vals.get(ADMISSIBLE)
            inad = vals.get(INADMISSIBLE)
            lines.append(
                f"{digest} admissible={'-' if ad is None else f'{ad:.9g}'}"
                f" inadmissible={'-' if inad is None else f'{inad:.9g}'}"
            )
        return "\n".join(lines) + "\n"


def belief_fingerprint(belief) -> str:
    """Stable short digest of a belief value, for dumps and logs."""
    return hashlib.blake2b(repr(belief).encode(), digest_size=12).hexdigest()


@dataclass(frozen=True)
class PartialPolicy:
    """Action map over the beliefs visited while planning.

    ``max_backup_seconds`` and ``extract_seconds`` are wall-clock
    diagnostics (a time-budgeted call returns within budget plus one backup
    plus extraction); they are not part of the deterministic planning state.
    """

    actions: dict
    backups_used: int = 0
    trials: int = 0
    converged: bool = False
    max_backup_seconds: float = 0.0
    extract_seconds: float = 0.0

    def get(self, belief) -> ActionSpec | None:
        return self.actions.get(belief)

    def __contains__(self, belief) -> bool:
        return belief in self.actions

    def __len__(self) -> int:
        return len(self.actions)


class _Budget:
    """Tracks backups or wall-clock spend within one planning call."""

    def __init__(self, config: PlannerConfig):
        self.config = config
        self.backups = 0
        self.started = time.monotonic()
        self.last_spend = self.started
        self.max_backup_seconds = 0.0
        self.last_trial_delta = float("inf")

    def spend_backup(self) -> None:
        self.backups += 1
        now = time.monotonic()
        self.max_backup_seconds = max(self.max_backup_seconds, now - self.last_spend)
        self.last_spend = now

    def exhausted(self) -> bool:
        if self.config.budget_kind == "backups":
            return self.backups >= self.config.budget
        return (time.monotonic() - self.started) * 1000.0 >= self.config.budget

    def fraction_used(self) -> float:
        if self.config.budget_kind == "backups":
            return self.backups / self.config.budget
        return (time.monotonic() - self.started) * 1000.0 / self.config.budget


def action_cost(space: BeliefSpace, belief, action: DiscretizedAction) -> float:
    """Expected cells traveled: each branch moves the probe to its stop."""
    return sum(o.probability * o.steps for o in space.outcomes(belief, action))


def q_value(
    space: BeliefSpace, table: ValueTable, belief, action: DiscretizedAction, kind: str
) -> float:
    """One-step lookahead: travel cost plus probability-weighted successor values."""
    total = action_cost(space, belief, action)
    for o in space.outcomes(belief, action):
        if space.is_terminal(o.successor):
            continue
        total += o.probability * table.value(kind, o.successor, space)
    return total


def backup(
    space: BeliefSpace, table: ValueTable, belief
) -> tuple[DiscretizedAction, DiscretizedAction]:
    """Set both stored values of ``belief`` to their best one-step lookahead.

    Returns the argmin action per kind. Ties resolve to the shorter action,
    then the lexicographically first direction; the candidate list is
    already in that order, so first-strict-improvement wins.
    """
    actions = space.actions(belief)
    if not actions:
        raise DeadEnd(f"no valid action from {belief}")
    best: dict[str, tuple[float, DiscretizedAction]] = {}
    for kind in (ADMISSIBLE, INADMISSIBLE):
        best_q, best_a = None, None
        for action in actions:
            q = q_value(space, table, belief, action, kind)
            if best_q is None or q < best_q:
                best_q, best_a = q, action
        store = table.admissible if kind == ADMISSIBLE else table.inadmissible
        store[belief] = best_q
        best[kind] = (best_q, best_a)
    return best[ADMISSIBLE][1], best[INADMISSIBLE][1]


def most_likely_successor(space: BeliefSpace, belief, action: DiscretizedAction):
    """Highest-probability branch; ties prefer the clear run, then the
    earliest contact stop."""
    outs = space.outcomes(belief, action)
    best = min(
        outs,
        key=lambda o: (
            -o.probability,
            o.collision_index is not None,
            o.collision_index if o.collision_index is not None else 0,
        ),
    )
    return best.successor


def rtdp_trial(
    space: BeliefSpace,
    table: ValueTable,
    start,
    config: PlannerConfig,
    budget: _Budget | None = None,
    on_step: Callable | None = None,
) -> list:
    """One greedy descent from ``start``; returns the beliefs visited.

    Each step backs up the current belief, follows the schedule's argmin
    action and moves to that action's most probable branch. Stops at a
    terminal belief, at the horizon, or when the budget runs dry.
    """
    budget = budget or _Budget(config)
    visited = []
    belief = start
    depth = 0
    max_delta = 0.0
    while not space.is_terminal(belief) and depth < config.horizon:
        if budget.exhausted():
            break
        old_ad = table.admissible.get(belief)
        old_inad = table.inadmissible.get(belief)
        best_ad, best_inad = backup(space, table, belief)
        budget.spend_backup()
        max_delta = max(
            max_delta,
            _value_change(old_ad, table.admissible[belief]),
            _value_change(old_inad, table.inadmissible[belief]),
        )
        visited.append(belief)
        explore = budget.fraction_used() < config.explore_fraction
        action = best_ad if explore else best_inad
        if on_step is not None:
            on_step(belief, action)
        belief = most_likely_successor(space, belief, action)
        depth += 1
    budget.last_trial_delta = max_delta
    return visited


def _value_change(old: float | None, new: float) -> float:
    # A first backup always counts as a change.
    return abs(new - old) if old is not None else float("inf")


def plan(space: BeliefSpace, start, config: PlannerConfig) -> PartialPolicy:
    """Run trials until the budget is spent or values stop changing, then
    map every visited belief to its greedy-value argmin action."""
    table = ValueTable()
    return plan_with_table(space, start, config, table)


def plan_with_table(
    space: BeliefSpace, start, config: PlannerConfig, table: ValueTable
) -> PartialPolicy:
    budget = _Budget(config)
    visited: dict = {}
    trials = 0
    stagnant = 0
    converged = False
    while not budget.exhausted():
        path = rtdp_trial(space, table, start, config, budget)
        trials += 1
        for b in path:
            visited.setdefault(b, None)
        if not path:
            break
        if config.stop_on_converged:
            stagnant = stagnant + 1 if budget.last_trial_delta <= config.value_tolerance else 0
            if stagnant >= config.patience:
                converged = True
                break
    extract_started = time.monotonic()
    actions = {}
    for belief in visited:
        candidates = space.actions(belief)
        if not candidates:
            continue
        best_q, best_a = None, None
        for action in candidates:
            q = q_value(space, table, belief, action, INADMISSIBLE)
            if best_q is None or q < best_q:
                best_q, best_a = q, action
        actions[belief] = best_a.spec
    return PartialPolicy(
        actions=actions,
        backups_used=budget.backups,
        trials=trials,
        converged=converged,
        max_backup_seconds=budget.max_backup_seconds,
        extract_seconds=time.monotonic() - extract_started,
    )
