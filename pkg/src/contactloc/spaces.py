"""Planner-facing adapters over the two belief phases.

A space exposes the handful of queries the solver and the greedy baselines
need: terminal test, valid actions, observation branches, an uncertainty
size, and the two heuristics. Everything is memoized per space instance;
beliefs are immutable values, so they key the caches directly.
"""

from __future__ import annotations

import math
from typing import Protocol, Sequence

from .geometry import Coord, DiscretizedAction, Geometry, set_distance
from .particles import (
    ObjectTemplate,
    ParticleBelief,
    PoseTable,
    is_goal,
    partition_by_observation,
)
from .volumetric import (
    Outcome,
    VolumetricBelief,
    VolumetricParams,
    enumerate_outcomes,
    is_phase1_terminal,
)


class BeliefSpace(Protocol):
    """What the solver needs from a belief phase."""

    def is_terminal(self, belief) -> bool: ...

    def actions(self, belief) -> Sequence[DiscretizedAction]: ...

    def outcomes(self, belief, action: DiscretizedAction) -> Sequence[Outcome]: ...

    def uncertainty_size(self, belief) -> int: ...

    def heuristic_admissible(self, belief) -> float: ...

    def heuristic_inadmissible(self, belief) -> float: ...


def _filter_noops(space, belief, candidates) -> tuple[DiscretizedAction, ...]:
    # An action whose only branch reproduces the belief can never help and
    # would let the solver spin in place.
    kept = []
    for action in candidates:
        outs = space.outcomes(belief, action)
        if len(outs) == 1 and outs[0].successor == belief:
            continue
        kept.append(action)
    return tuple(kept)


class Phase1Space:
    """Volumetric phase: shrink the possibly-occupied set below the handoff.

    The greedy heuristic can charge remaining uncertainty either per cell
    (the residual set's size) or per placement the residual set still
    admits. Placements capture that sweeping far-apart lanes rules out more
    poses than re-sweeping next to a cleared lane, so they are the default;
    the template is only consulted for its footprint, never for updates.
    """

    def __init__(
        self,
        geometry: Geometry,
        params: VolumetricParams,
        action_lengths: Sequence[int],
        greed_weight: float = 1.0,
        placement_offsets: Sequence[Sequence[Coord]] | None = None,
    ):
        self.geometry = geometry
        self.params = params
        self.action_lengths = tuple(action_lengths)
        self.greed_weight = greed_weight
        self.placement_offsets = (
            None
            if placement_offsets is None
            else tuple(tuple(tuple(o) for o in rot) for rot in placement_offsets)
        )
        self._outcomes: dict = {}
        self._actions: dict = {}
        self._distance: dict = {}
        self._placements: dict = {}
        self._face_area = max(
            geometry.shape.face_area(d) for d in geometry.grid.directions()
        )

    def is_terminal(self, belief: VolumetricBelief) -> bool:
        return is_phase1_terminal(belief, self.params)

    def actions(self, belief: VolumetricBelief) -> tuple[DiscretizedAction, ...]:
        out = self._actions.get(belief)
        if out is None:
            candidates = self.geometry.candidate_actions(belief.position, self.action_lengths)
            out = _filter_noops(self, belief, candidates)
            self._actions[belief] = out
        return out

    def outcomes(self, belief: VolumetricBelief, action: DiscretizedAction) -> list[Outcome]:
        key = (belief, action)
        out = self._outcomes.get(key)
        if out is None:
            out = enumerate_outcomes(self.geometry, belief, action, self.params)
            self._outcomes[key] = out
        return out

    def uncertainty_size(self, belief: VolumetricBelief) -> int:
        return belief.possible.cardinality

    def heuristic_admissible(self, belief: VolumetricBelief) -> float:
        """Cost lower bound: the probe face must reach the residual volume.

        Any update to the volume needs either a sweep cell inside it
        (distance d of travel) or a leading-face cell inside it (d - 1),
        so d - 1 never overestimates.
        """
        if self.is_terminal(belief):
            return 0.0
        key = (belief.position, belief.possible.mask)
        out = self._distance.get(key)
        if out is None:
            fp = self.geometry.footprint(belief.position)
            out = max(0.0, set_distance(fp, belief.possible) - 1.0)
            self._distance[key] = out
        return out

    def placement_count(self, belief: VolumetricBelief) -> int:
        """Placements of the target still fitting inside the residual set."""
        count = self._placements.get(belief.possible.mask)
        if count is None:
            count = sum(
                self.geometry.placement_count(belief.possible, rot)
                for rot in self.placement_offsets or ()
            )
            self._placements[belief.possible.mask] = count
        return count

    def heuristic_inadmissible(self, belief: VolumetricBelief) -> float:
        """Greedy pull toward uncertainty reduction.

        With placement offsets, charges for the poses the residual set still
        admits; otherwise for the excess cells, as if each push could clear
        at most one face worth of them.
        """
        if self.is_terminal(belief):
            return 0.0
        base = self.heuristic_admissible(belief)
        if self.placement_offsets is not None:
            charge = self.placement_count(belief) / self.params.object_voxel_count
        else:
            excess = max(0, belief.possible.cardinality - self.params.handoff_threshold)
            charge = excess / self._face_area
        return base + self.greed_weight * charge


class Phase2Space:
    """Particle phase: collapse hypotheses and park the probe on the dock."""

    def __init__(
        self,
        geometry: Geometry,
        template: ObjectTemplate,
        action_lengths: Sequence[int],
        greed_weight: float = 1.0,
    ):
        self.geometry = geometry
        self.template = template
        self.poses = PoseTable(geometry.grid, template)
        self.action_lengths = tuple(action_lengths)
        self.greed_weight = greed_weight
        self._outcomes: dict = {}
        self._actions: dict = {}

    def is_terminal(self, belief: ParticleBelief) -> bool:
        return is_goal(belief, self.template)

    def actions(self, belief: ParticleBelief) -> tuple[DiscretizedAction, ...]:
        out = self._actions.get(belief)
        if out is None:
            candidates = self.geometry.candidate_actions(belief.position, self.action_lengths)
            out = _filter_noops(self, belief, candidates)
            self._actions[belief] = out
        return out

    def outcomes(self, belief: ParticleBelief, action: DiscretizedAction) -> list[Outcome]:
        key = (belief, action)
        out = self._outcomes.get(key)
        if out is None:
            out = partition_by_observation(self.geometry, self.poses, belief, action)
            self._outcomes[key] = out
        return out

    def uncertainty_size(self, belief: ParticleBelief) -> int:
        return len(belief.hypotheses)

    def heuristic_admissible(self, belief: ParticleBelief) -> float:
        """Cost lower bound: the probe must end on some hypothesis's dock."""
        if self.is_terminal(belief):
            return 0.0
        q = belief.position
        return float(
            min(
                sum(abs(a - b) for a, b in zip(q, self.template.dock_of(h)))
                for h in belief.hypotheses
            )
        )

    def heuristic_inadmissible(self, belief: ParticleBelief) -> float:
        """Greedy pull: dock distance plus a per-bit charge for ambiguity."""
        if self.is_terminal(belief):
            return 0.0
        return self.heuristic_admissible(belief) + self.greed_weight * math.log2(
            len(belief.hypotheses)
        )
