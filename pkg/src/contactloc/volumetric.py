"""Coarse contact belief over a possibly-occupied voxel set.

Phase 1 tracks, besides the probe position, the set of cells the hidden
object may still occupy and the contacts sensed so far. A push through
free space proves the swept cells empty; a push that ends in contact pins
the object near the touched face, so every cell farther than the object
could span is proved empty as well.

An executed push of n steps has n + 1 possible observations: a contact
stop after i steps for i in 0..n-1 (0 means the probe was blocked before
leaving its start, n-1 that it was blocked entering the final cell), or a
clear run to the end. A stop after i steps pins the object to the face the
probe failed to enter; its likelihood combines how much of the residual
volume that face covers with how compatible the face is with every
previously sensed contact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import InconsistentObservation
from .geometry import (
    ActionSpec,
    Coord,
    DiscretizedAction,
    Geometry,
    GridWorkspace,
    VoxelSet,
)

SNAPSHOT_HEADER = "contactloc/volumetric-belief v1"


@dataclass(frozen=True)
class CollisionRecord:
    """One sensed contact: the resting configuration and the push that caused it."""

    config: Coord
    action: ActionSpec


@dataclass(frozen=True)
class VolumetricParams:
    """Tunables of the volumetric observation model.

    object_voxel_count: cells occupied by the (known-shape) target.
    max_object_span: farthest two object cells can be apart; bounds how far
        the object extends from a touched face.
    overlap_smoothing: additive smoothing for face-overlap ratios.
    handoff_threshold: residual-volume size at which the coarse phase ends.
    """

    object_voxel_count: int
    max_object_span: float
    overlap_smoothing: float = 0.1
    handoff_threshold: int = 1

    def __post_init__(self) -> None:
        if self.object_voxel_count < 1:
            raise ValueError("object_voxel_count must be >= 1")
        if self.max_object_span <= 0:
            raise ValueError("max_object_span must be positive")
        if self.overlap_smoothing <= 0:
            raise ValueError("overlap_smoothing must be positive")
        if self.handoff_threshold < self.object_voxel_count:
            raise ValueError("handoff_threshold must be >= object_voxel_count")


@dataclass(frozen=True)
class VolumetricBelief:
    """Probe position, residual possibly-occupied set, and contact history."""

    position: Coord
    possible: VoxelSet
    contacts: tuple[CollisionRecord, ...] = ()


@dataclass(frozen=True)
class Outcome:
    """One observation branch of a push.

    ``collision_index`` is the resting step count for a contact stop
    (0 means blocked at the start) or None for a clear run. ``steps`` is
    the distance actually traveled.
    """

    collision_index: int | None
    config: Coord
    probability: float
    steps: int
    successor: object


def _record_key(record: CollisionRecord) -> tuple[Coord, Coord]:
    # Two contacts at the same configuration and direction share a surface,
    # so they carry identical evidence regardless of push length.
    return (record.config, record.action.direction)


def _append_contact(
    contacts: tuple[CollisionRecord, ...], record: CollisionRecord
) -> tuple[CollisionRecord, ...]:
    key = _record_key(record)
    if any(_record_key(r) == key for r in contacts):
        return contacts
    return contacts + (record,)


def apply_no_collision(
    geometry: Geometry, belief: VolumetricBelief, action: DiscretizedAction
) -> VolumetricBelief:
    """Clear-run update: the swept cells are proved empty, the probe advances."""
    swept_mask = geometry.swept_prefixes(action)[-1]
    possible = VoxelSet(belief.possible.grid, belief.possible.mask & ~swept_mask)
    return VolumetricBelief(action.waypoints[-1], possible, belief.contacts)


def apply_collision(
    geometry: Geometry,
    belief: VolumetricBelief,
    action: DiscretizedAction,
    index: int,
    params: VolumetricParams,
) -> VolumetricBelief:
    """Contact-stop update after ``index`` steps (0 means blocked at start).

    Cells swept before the stop and cells farther than the object span from
    the touched face are proved empty; the contact joins the history.
    """
    if not 0 <= index <= action.n:
        raise ValueError(f"collision index {index} outside 0..{action.n}")
    rest = action.config_at(index)
    surface = geometry.surface(rest, action.direction)
    if surface is None:
        raise InconsistentObservation(f"contact at {rest} has no in-grid leading face")
    swept_mask = 0 if index == 0 else geometry.swept_prefixes(action)[index - 1]
    removed = swept_mask | geometry.elimination(surface, params.max_object_span).mask
    possible = VoxelSet(belief.possible.grid, belief.possible.mask & ~removed)
    if not possible.mask & surface.mask:
        raise InconsistentObservation(
            f"contact at {rest} touches no cell the object could occupy"
        )
    record = CollisionRecord(rest, ActionSpec(action.direction, max(1, index)))
    return VolumetricBelief(rest, possible, _append_contact(belief.contacts, record))


def volume_collision_likelihood(
    geometry: Geometry,
    belief: VolumetricBelief,
    q: Coord,
    action: ActionSpec,
    params: VolumetricParams,
) -> float:
    """Chance the leading face at ``q`` presses something, from volume overlap.

    min(1, overlap / max(1, residual - object size)); zero when the face
    leaves the grid or misses the residual volume entirely.
    """
    surface = geometry.surface(q, action.direction)
    if surface is None:
        return 0.0
    overlap = (surface.mask & belief.possible.mask).bit_count()
    if overlap == 0:
        return 0.0
    denom = max(1, belief.possible.cardinality - params.object_voxel_count)
    return min(1.0, overlap / denom)


def history_collision_likelihood(
    geometry: Geometry,
    q: Coord,
    action: ActionSpec,
    record: CollisionRecord,
    params: VolumetricParams,
) -> float:
    """Chance the face at ``q`` presses the object already touched at ``record``.

    Grows with the overlap between the two faces (smoothed), falls linearly
    with their separation, and is zero beyond the object span.
    """
    surface = geometry.surface(q, action.direction)
    recorded = geometry.surface(record.config, record.action.direction)
    if surface is None or recorded is None:
        return 0.0
    eps = params.overlap_smoothing
    overlap = ((surface.mask & recorded.mask).bit_count() + eps) / (
        recorded.cardinality + eps
    )
    distance = geometry.surface_distance(surface, recorded)
    proximity = 1.0 - max(0.0, distance) / params.max_object_span
    return min(1.0, max(0.0, overlap * proximity))


def combined_collision_prob(
    geometry: Geometry,
    belief: VolumetricBelief,
    q: Coord,
    action: ActionSpec,
    params: VolumetricParams,
) -> float:
    """Contact probability at one configuration, fusing volume and history cues.

    The contact and no-contact weights are each a product of the per-cue
    likelihoods; the pair is normalized to a distribution. When both weights
    vanish the configuration is treated as certainly contact-free.
    """
    p_volume = volume_collision_likelihood(geometry, belief, q, action, params)
    contact = p_volume
    clear = 1.0 - p_volume
    for record in belief.contacts:
        p_rec = history_collision_likelihood(geometry, q, action, record, params)
        contact *= p_rec
        clear *= 1.0 - p_rec
    total = contact + clear
    if total <= 0.0:
        return 0.0
    return contact / total


def enumerate_outcomes(
    geometry: Geometry,
    belief: VolumetricBelief,
    action: DiscretizedAction,
    params: VolumetricParams,
) -> list[Outcome]:
    """All positive-probability observation branches of a push.

    Collision branches exist for rest indices 0..n-1 (the probe cannot be
    blocked once it stands on the final waypoint). Branch probabilities
    chain sequentially: stopping after i steps requires a clear pass of
    every earlier face. Probabilities sum to one; zero-probability branches
    are dropped and successors are only built for surviving branches.
    """
    spec = action.spec
    p_contact = [
        combined_collision_prob(geometry, belief, action.config_at(i), spec, params)
        for i in range(action.n)
    ]
    outcomes: list[Outcome] = []
    prefix_clear = 1.0
    for i, p in enumerate(p_contact):
        prob = prefix_clear * p
        if prob > 0.0:
            outcomes.append(
                Outcome(
                    collision_index=i,
                    config=action.config_at(i),
                    probability=prob,
                    steps=i,
                    successor=apply_collision(geometry, belief, action, i, params),
                )
            )
        prefix_clear *= 1.0 - p
        if prefix_clear <= 0.0:
            break
    if prefix_clear > 0.0:
        outcomes.append(
            Outcome(
                collision_index=None,
                config=action.waypoints[-1],
                probability=prefix_clear,
                steps=action.n,
                successor=apply_no_collision(geometry, belief, action),
            )
        )
    return outcomes


def is_phase1_terminal(belief: VolumetricBelief, params: VolumetricParams) -> bool:
    """The coarse phase ends once the residual volume is small enough."""
    return belief.possible.cardinality <= params.handoff_threshold


def initial_belief(geometry: Geometry, start: Coord, prior: VoxelSet) -> VolumetricBelief:
    """Belief before any push: the prior volume minus the verified start footprint."""
    return VolumetricBelief(start, prior - geometry.footprint(start), ())


# -- text snapshots -----------------------------------------------------------
#
# Schema (one "key: value" pair per line, after the versioned header line):
#   dims:          grid extents, space separated
#   position:      probe reference cell
#   possible_rle:  run lengths of the flat cell bitmask, alternating runs of
#                  zeros and ones, starting with zeros (a leading 0 run may
#                  be empty)
#   contacts:      number of contact records, followed by one line each:
#   contact <k>:   config=<cells> direction=<unit vector> length=<int>


def snapshot(belief: VolumetricBelief) -> str:
    grid = belief.possible.grid
    lines = [
        SNAPSHOT_HEADER,
        "dims: " + " ".join(str(d) for d in grid.dims),
        "position: " + " ".join(str(c) for c in belief.position),
        "possible_rle: " + " ".join(str(r) for r in _rle_encode(belief.possible)),
        f"contacts: {len(belief.contacts)}",
    ]
    for k, rec in enumerate(belief.contacts):
        lines.append(
            f"contact {k}: config=" + " ".join(str(c) for c in rec.config)
            + " direction=" + " ".join(str(c) for c in rec.action.direction)
            + f" length={rec.action.length}"
        )
    return "\n".join(lines) + "\n"


def parse_snapshot(text: str) -> VolumetricBelief:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SNAPSHOT_HEADER:
        raise ValueError("not a volumetric belief snapshot")
    fields: dict[str, str] = {}
    contact_lines: list[str] = []
    for ln in lines[1:]:
        key, _, value = ln.partition(":")
        if key.startswith("contact "):
            contact_lines.append(value.strip())
        else:
            fields[key.strip()] = value.strip()
    grid = GridWorkspace(tuple(int(v) for v in fields["dims"].split()))
    position = tuple(int(v) for v in fields["position"].split())
    runs = [int(v) for v in fields["possible_rle"].split()]
    possible = _rle_decode(grid, runs)
    contacts = []
    for raw in contact_lines:
        contacts.append(_parse_contact(raw, grid.ndim))
    if len(contacts) != int(fields["contacts"]):
        raise ValueError("contact count mismatch in snapshot")
    return VolumetricBelief(position, possible, tuple(contacts))


def _parse_contact(raw: str, ndim: int) -> CollisionRecord:
    def grab(name: str) -> list[int]:
        start = raw.index(name + "=") + len(name) + 1
        rest = raw[start:]
        vals = []
        for tok in rest.split():
            if "=" in tok:
                break
            vals.append(int(tok))
        return vals

    config = tuple(grab("config")[:ndim])
    direction = tuple(grab("direction")[:ndim])
    length = grab("length")[0]
    return CollisionRecord(config, ActionSpec(direction, length))


def _rle_encode(voxels: VoxelSet) -> list[int]:
    runs = []
    current = 0  # runs alternate starting with zeros
    count = 0
    mask = voxels.mask
    for i in range(voxels.grid.ncells):
        bit = mask >> i & 1
        if bit == current:
            count += 1
        else:
            runs.append(count)
            current = bit
            count = 1
    runs.append(count)
    return runs


def _rle_decode(grid: GridWorkspace, runs: Iterable[int]) -> VoxelSet:
    mask = 0
    pos = 0
    bit = 0
    for run in runs:
        if bit:
            mask |= ((1 << run) - 1) << pos
        pos += run
        bit ^= 1
    if pos != grid.ncells:
        raise ValueError(f"run lengths cover {pos} cells, grid has {grid.ncells}")
    return VoxelSet(grid, mask)
