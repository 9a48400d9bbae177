"""Greedy one-step baselines: sampled max-gain and nearest-gain planners.

Both score candidate pushes by the expected drop in log-cardinality of the
belief (residual cells in the coarse phase, particles in the fine phase).
The sampled planner executes the highest-gain candidate from a random
subset; the nearest-gain planner executes the cheapest candidate with any
gain at all.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .errors import NoInformativeAction
from .geometry import DiscretizedAction
from .planner import action_cost
from .spaces import BeliefSpace


@dataclass(frozen=True)
class BaselineConfig:
    """sample_count bounds the candidate subset; min_gain is the smallest
    expected log-cardinality drop still considered informative."""

    sample_count: int = 32
    min_gain: float = 1e-9

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.min_gain <= 0:
            raise ValueError("min_gain must be positive")


def information_gain(space: BeliefSpace, belief, action: DiscretizedAction) -> float:
    """Expected drop in log2 belief size from executing ``action``.

    Belief updates only shrink the size, so the gain is never negative.
    Branches that empty the belief contribute zero residual entropy.
    """
    size = max(1, space.uncertainty_size(belief))
    after = 0.0
    for o in space.outcomes(belief, action):
        after += o.probability * math.log2(max(1, space.uncertainty_size(o.successor)))
    return math.log2(size) - after


def tbl_step(
    space: BeliefSpace, belief, config: BaselineConfig, rng: random.Random
) -> DiscretizedAction:
    """Highest-gain action among a sampled candidate subset.

    Falls back to scoring the full action set once when no sample clears
    the gain threshold; raises :class:`NoInformativeAction` if nothing does.
    """
    candidates = space.actions(belief)
    if not candidates:
        raise NoInformativeAction("no valid action to sample")
    if len(candidates) > config.sample_count:
        picks = rng.sample(range(len(candidates)), config.sample_count)
        sampled = [candidates[i] for i in sorted(picks)]
    else:
        sampled = list(candidates)
    best = _argmax_gain(space, belief, sampled, config.min_gain)
    if best is None:
        best = _argmax_gain(space, belief, candidates, config.min_gain)
    if best is None:
        raise NoInformativeAction("every candidate action is uninformative")
    return best


def _argmax_gain(space, belief, actions, min_gain) -> DiscretizedAction | None:
    best_key, best_action = None, None
    for action in actions:
        gain = information_gain(space, belief, action)
        if gain < min_gain:
            continue
        key = (-gain, action_cost(space, belief, action), action.spec.sort_key)
        if best_key is None or key < best_key:
            best_key, best_action = key, action
    return best_action


def frontier_step(space: BeliefSpace, belief, config: BaselineConfig) -> DiscretizedAction:
    """Cheapest action with any information gain; ties favor higher gain.

    Raises :class:`NoInformativeAction` when no action qualifies.
    """
    best_key, best_action = None, None
    for action in space.actions(belief):
        gain = information_gain(space, belief, action)
        if gain < config.min_gain:
            continue
        key = (action_cost(space, belief, action), -gain, action.spec.sort_key)
        if best_key is None or key < best_key:
            best_key, best_action = key, action
    if best_action is None:
        raise NoInformativeAction("no action clears the gain threshold")
    return best_action
