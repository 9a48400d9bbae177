"""Fine contact belief over discrete object pose hypotheses.

Once the residual volume is small, every grid-aligned placement of the
known object shape that fits inside it (and touches every recorded contact
face) becomes a hypothesis particle. Observations are deterministic per
particle, so a push partitions the particle set by predicted outcome and
the chance of an outcome is simply its share of particles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product

from .errors import AmbiguousGoal, NoFeasiblePose, StartInCollision
from .geometry import (
    ActionSpec,
    Coord,
    DiscretizedAction,
    Geometry,
    GridWorkspace,
    VoxelSet,
    _add,
)
from .volumetric import CollisionRecord, Outcome


@dataclass(frozen=True)
class ObjectTemplate:
    """Known object shape: voxel offsets per discrete orientation plus the
    probe cell that completes the task for each orientation."""

    rotations: tuple[tuple[Coord, ...], ...]
    docks: tuple[Coord, ...]

    def __post_init__(self) -> None:
        rotations = tuple(tuple(tuple(int(v) for v in cell) for cell in rot) for rot in self.rotations)
        docks = tuple(tuple(int(v) for v in d) for d in self.docks)
        if not rotations:
            raise ValueError("template needs at least one rotation")
        if len(docks) != len(rotations):
            raise ValueError("one docking offset per rotation required")
        sizes = {len(rot) for rot in rotations}
        if len(sizes) != 1:
            raise ValueError("all rotations must occupy the same number of voxels")
        for rot, dock in zip(rotations, docks):
            if len(set(rot)) != len(rot):
                raise ValueError("rotation offsets must be unique")
            if dock in rot:
                raise ValueError("docking cell must not lie inside the object")
        object.__setattr__(self, "rotations", rotations)
        object.__setattr__(self, "docks", docks)

    @property
    def ndim(self) -> int:
        return len(self.rotations[0][0])

    @property
    def voxel_count(self) -> int:
        return len(self.rotations[0])

    @cached_property
    def extent(self) -> int:
        """Largest bounding-box side over all rotations."""
        best = 1
        for rot in self.rotations:
            for axis in range(self.ndim):
                vals = [c[axis] for c in rot]
                best = max(best, max(vals) - min(vals) + 1)
        return best

    @cached_property
    def max_span(self) -> float:
        """Largest center-to-center distance between two object cells."""
        best = 0.0
        for rot in self.rotations:
            for a in rot:
                for b in rot:
                    d = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
                    best = max(best, d)
        return best

    def cells_of(self, pose: "PoseHypothesis") -> tuple[Coord, ...]:
        return tuple(_add(pose.translation, o) for o in self.rotations[pose.rotation])

    def dock_of(self, pose: "PoseHypothesis") -> Coord:
        return _add(pose.translation, self.docks[pose.rotation])


@dataclass(frozen=True)
class PoseHypothesis:
    """A candidate object placement: integer translation plus rotation index."""

    translation: Coord
    rotation: int


@dataclass(frozen=True)
class ParticleBelief:
    """Probe position and the surviving pose hypotheses (uniform weights)."""

    position: Coord
    hypotheses: tuple[PoseHypothesis, ...]

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.hypotheses, key=lambda h: (h.translation, h.rotation)))
        object.__setattr__(self, "hypotheses", ordered)


class PoseTable:
    """Per-episode cache of pose voxel masks on one grid."""

    def __init__(self, grid: GridWorkspace, template: ObjectTemplate):
        self.grid = grid
        self.template = template
        self._masks: dict[PoseHypothesis, int] = {}

    def mask(self, pose: PoseHypothesis) -> int:
        out = self._masks.get(pose)
        if out is None:
            out = 0
            for cell in self.template.cells_of(pose):
                out |= 1 << self.grid.index(cell)
            self._masks[pose] = out
        return out


def generate_hypotheses(
    geometry: Geometry,
    possible: VoxelSet,
    contacts: tuple[CollisionRecord, ...],
    template: ObjectTemplate,
) -> tuple[PoseHypothesis, ...]:
    """All placements that fit inside the residual volume and touch every
    recorded contact face.

    Candidate translations scan the residual volume's bounding box padded by
    the template extent. Raises :class:`NoFeasiblePose` when nothing fits.
    """
    if not possible.mask:
        raise NoFeasiblePose("residual volume is empty")
    grid = possible.grid
    mins, maxs = possible.bounding_box()
    pad = template.extent
    surfaces = []
    for rec in contacts:
        surf = geometry.surface(rec.config, rec.action.direction)
        if surf is not None:
            surfaces.append(surf.mask)
    out = []
    ranges = [
        range(mins[a] - pad, maxs[a] + pad + 1) for a in range(grid.ndim)
    ]
    for rotation in range(len(template.rotations)):
        offsets = template.rotations[rotation]
        for translation in product(*ranges):
            cells = [_add(translation, o) for o in offsets]
            if not all(grid.contains(c) for c in cells):
                continue
            mask = 0
            for c in cells:
                mask |= 1 << grid.index(c)
            if mask & ~possible.mask:
                continue
            if any(not mask & s for s in surfaces):
                continue
            out.append(PoseHypothesis(tuple(translation), rotation))
    if not out:
        raise NoFeasiblePose("no placement is consistent with the observations")
    return tuple(sorted(out, key=lambda h: (h.translation, h.rotation)))


def expected_observation(
    geometry: Geometry,
    poses: PoseTable,
    pose: PoseHypothesis,
    action: DiscretizedAction,
) -> int | None:
    """Deterministic outcome of a push against one hypothesized placement.

    Returns the resting step count of the contact stop (0 means blocked
    before leaving the start) or None for a clear run: the probe advances
    cell layer by cell layer and halts one step short of the first
    configuration that would overlap the object.
    """
    obj = poses.mask(pose)
    start_fp = geometry.footprint(action.start).mask
    if start_fp & obj:
        raise StartInCollision(f"probe at {action.start} overlaps hypothesis {pose}")
    for i in range(1, action.n + 1):
        if geometry.footprint(action.config_at(i)).mask & obj:
            return i - 1
    return None


def partition_by_observation(
    geometry: Geometry,
    poses: PoseTable,
    belief: ParticleBelief,
    action: DiscretizedAction,
) -> list[Outcome]:
    """Group hypotheses by predicted outcome of a push.

    Each group's probability is its particle share; the successor keeps
    exactly that group and rests where the outcome stops the probe. Groups
    are ordered by ascending contact index with the clear run last.
    """
    groups: dict[int | None, list[PoseHypothesis]] = {}
    for pose in belief.hypotheses:
        kind = expected_observation(geometry, poses, pose, action)
        groups.setdefault(kind, []).append(pose)
    total = len(belief.hypotheses)
    ordered = sorted(groups, key=lambda k: (k is None, k if k is not None else 0))
    out = []
    for kind in ordered:
        members = groups[kind]
        steps = action.n if kind is None else kind
        config = action.config_at(steps)
        out.append(
            Outcome(
                collision_index=kind,
                config=config,
                probability=len(members) / total,
                steps=steps,
                successor=ParticleBelief(config, tuple(members)),
            )
        )
    return out


def is_goal(belief: ParticleBelief, template: ObjectTemplate) -> bool:
    """Done when every hypothesis shares one docking cell and the probe is on it."""
    if not belief.hypotheses:
        return False
    docks = {template.dock_of(h) for h in belief.hypotheses}
    return len(docks) == 1 and belief.position == next(iter(docks))


def shared_dock(belief: ParticleBelief, template: ObjectTemplate) -> Coord | None:
    """The docking cell all hypotheses agree on, if any."""
    docks = {template.dock_of(h) for h in belief.hypotheses}
    if len(docks) == 1:
        return next(iter(docks))
    return None


def dock_action(belief: ParticleBelief, template: ObjectTemplate) -> tuple[ActionSpec, ...]:
    """Axis-ordered moves taking the probe to the agreed docking cell.

    Decomposes the displacement axis by axis (x, then y, then z) for
    reproducible costs. Raises :class:`AmbiguousGoal` when hypotheses
    disagree on the dock.
    """
    dock = shared_dock(belief, template)
    if dock is None:
        raise AmbiguousGoal("hypotheses disagree on the docking configuration")
    moves = []
    for axis in range(len(dock)):
        delta = dock[axis] - belief.position[axis]
        if delta:
            direction = tuple(
                (1 if delta > 0 else -1) if a == axis else 0 for a in range(len(dock))
            )
            moves.append(ActionSpec(direction, abs(delta)))
    return tuple(moves)
