"""Finite voxel-grid geometry for an axis-moving probe.

Cells are integer coordinate tuples on a 2D or 3D unit grid. A probe is a
set of cell offsets anchored at a reference cell; it moves along straight
axis-aligned pushes of whole cells. Voxel sets are stored as bitmasks over
flat cell indices, so set algebra, equality and hashing are exact.

All module functions are pure. :class:`Geometry` wraps a grid and a probe
shape and memoizes the queries that planners hammer (footprints, swept
prefixes, contact surfaces, elimination sets, pairwise distances).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInput, EmptySurface, InvalidAction

Coord = tuple[int, ...]


def _as_coord(values: Iterable[int]) -> Coord:
    return tuple(int(v) for v in values)


def _add(a: Coord, b: Coord) -> Coord:
    return tuple(x + y for x, y in zip(a, b))


def _scale(a: Coord, k: int) -> Coord:
    return tuple(x * k for x in a)


def _min_sqdist(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-row minimum squared Euclidean distance from ``points`` to ``targets``.

    Integer coordinates only; every intermediate value is an exactly
    representable integer in float64, so threshold comparisons are exact.
    """
    a = points.astype(np.float64)
    b = targets.astype(np.float64)
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return sq.min(axis=1)


@dataclass(frozen=True)
class GridWorkspace:
    """Axis-aligned grid of unit voxels with 2 or 3 axes."""

    dims: Coord

    def __post_init__(self) -> None:
        dims = _as_coord(self.dims)
        if len(dims) not in (2, 3) or any(d < 1 for d in dims):
            raise ValueError(f"grid dims must be 2 or 3 positive extents, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @cached_property
    def ncells(self) -> int:
        n = 1
        for d in self.dims:
            n *= d
        return n

    @cached_property
    def strides(self) -> Coord:
        # C order: the last axis varies fastest.
        s = [1] * self.ndim
        for i in range(self.ndim - 2, -1, -1):
            s[i] = s[i + 1] * self.dims[i + 1]
        return tuple(s)

    @cached_property
    def coords(self) -> np.ndarray:
        """(ncells, ndim) int64 array; row i is the cell with flat index i."""
        grids = np.indices(self.dims).reshape(self.ndim, -1).T
        return np.ascontiguousarray(grids, dtype=np.int64)

    @cached_property
    def diagonal(self) -> float:
        return math.sqrt(sum((d - 1) ** 2 for d in self.dims))

    def contains(self, cell: Coord) -> bool:
        return len(cell) == self.ndim and all(0 <= c < d for c, d in zip(cell, self.dims))

    def index(self, cell: Coord) -> int:
        return sum(c * s for c, s in zip(cell, self.strides))

    def cell(self, index: int) -> Coord:
        out = []
        for s in self.strides:
            out.append(index // s)
            index %= s
        return tuple(out)

    def directions(self) -> tuple[Coord, ...]:
        """All 2*ndim signed unit axis vectors, lexicographically sorted."""
        dirs = []
        for axis in range(self.ndim):
            for sign in (-1, 1):
                d = [0] * self.ndim
                d[axis] = sign
                dirs.append(tuple(d))
        return tuple(sorted(dirs))


@dataclass(frozen=True)
class VoxelSet:
    """Immutable voxel set backed by a bitmask over flat cell indices."""

    grid: GridWorkspace
    mask: int = 0

    @classmethod
    def empty(cls, grid: GridWorkspace) -> "VoxelSet":
        return cls(grid, 0)

    @classmethod
    def full(cls, grid: GridWorkspace) -> "VoxelSet":
        return cls(grid, (1 << grid.ncells) - 1)

    @classmethod
    def from_cells(cls, grid: GridWorkspace, cells: Iterable[Coord]) -> "VoxelSet":
        mask = 0
        for cell in cells:
            cell = _as_coord(cell)
            if not grid.contains(cell):
                raise ValueError(f"cell {cell} outside grid {grid.dims}")
            mask |= 1 << grid.index(cell)
        return cls(grid, mask)

    @classmethod
    def from_array(cls, grid: GridWorkspace, arr: np.ndarray) -> "VoxelSet":
        flat = np.ascontiguousarray(arr, dtype=bool).reshape(-1)
        if flat.size != grid.ncells:
            raise ValueError("array shape does not match grid")
        packed = np.packbits(flat, bitorder="little")
        return cls(grid, int.from_bytes(packed.tobytes(), "little"))

    def _check(self, other: "VoxelSet") -> None:
        if self.grid.dims != other.grid.dims:
            raise ValueError("voxel sets live on different grids")

    def __or__(self, other: "VoxelSet") -> "VoxelSet":
        self._check(other)
        return VoxelSet(self.grid, self.mask | other.mask)

    def __and__(self, other: "VoxelSet") -> "VoxelSet":
        self._check(other)
        return VoxelSet(self.grid, self.mask & other.mask)

    def __sub__(self, other: "VoxelSet") -> "VoxelSet":
        self._check(other)
        return VoxelSet(self.grid, self.mask & ~other.mask)

    def __contains__(self, cell: Coord) -> bool:
        cell = _as_coord(cell)
        return self.grid.contains(cell) and bool(self.mask >> self.grid.index(cell) & 1)

    def __bool__(self) -> bool:
        return self.mask != 0

    @property
    def cardinality(self) -> int:
        return self.mask.bit_count()

    def intersects(self, other: "VoxelSet") -> bool:
        self._check(other)
        return bool(self.mask & other.mask)

    def issubset(self, other: "VoxelSet") -> bool:
        self._check(other)
        return self.mask & ~other.mask == 0

    def cells(self) -> list[Coord]:
        """Member cells sorted by flat index."""
        return [self.grid.cell(i) for i in self.indices()]

    def indices(self) -> list[int]:
        out = []
        mask = self.mask
        while mask:
            low = mask & -mask
            out.append(low.bit_length() - 1)
            mask ^= low
        return out

    def to_array(self) -> np.ndarray:
        nbytes = (self.grid.ncells + 7) // 8
        raw = np.frombuffer(self.mask.to_bytes(nbytes, "little"), dtype=np.uint8)
        bits = np.unpackbits(raw, count=self.grid.ncells, bitorder="little")
        return bits.astype(bool).reshape(self.grid.dims)

    def coords_array(self) -> np.ndarray:
        """(k, ndim) int64 coordinates of member cells, flat-index order."""
        return self.grid.coords[np.array(self.indices(), dtype=np.int64)]

    def bounding_box(self) -> tuple[Coord, Coord]:
        """Inclusive (mins, maxs) of member cells."""
        if not self.mask:
            raise EmptyInput("bounding box of empty voxel set")
        pts = self.coords_array()
        return tuple(int(v) for v in pts.min(axis=0)), tuple(int(v) for v in pts.max(axis=0))


@dataclass(frozen=True)
class ProbeShape:
    """Probe footprint as unique integer offsets from the reference cell."""

    offsets: tuple[Coord, ...]

    def __post_init__(self) -> None:
        offsets = tuple(_as_coord(o) for o in self.offsets)
        if not offsets:
            raise ValueError("probe shape needs at least one offset")
        if len(set(offsets)) != len(offsets):
            raise ValueError("probe offsets must be unique")
        ndims = {len(o) for o in offsets}
        if len(ndims) != 1:
            raise ValueError("probe offsets must share one dimensionality")
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def single(cls, ndim: int) -> "ProbeShape":
        return cls(((0,) * ndim,))

    @classmethod
    def box(cls, extents: Sequence[int]) -> "ProbeShape":
        ranges = [range(e) for e in extents]
        out: list[Coord] = [()]
        for r in ranges:
            out = [prefix + (v,) for prefix in out for v in r]
        return cls(tuple(out))

    @property
    def ndim(self) -> int:
        return len(self.offsets[0])

    @cached_property
    def bounds(self) -> tuple[Coord, Coord]:
        mins = tuple(min(o[a] for o in self.offsets) for a in range(self.ndim))
        maxs = tuple(max(o[a] for o in self.offsets) for a in range(self.ndim))
        return mins, maxs

    def face_area(self, direction: Coord) -> int:
        """Number of leading-face cells when pushing along ``direction``."""
        fp = set(self.offsets)
        return len({_add(o, direction) for o in self.offsets} - fp)


@dataclass(frozen=True)
class ActionSpec:
    """Straight push: a signed unit axis direction and an integer length."""

    direction: Coord
    length: int

    def __post_init__(self) -> None:
        direction = _as_coord(self.direction)
        if sum(abs(c) for c in direction) != 1:
            raise ValueError(f"direction must be a signed unit axis vector, got {direction}")
        if self.length < 1:
            raise ValueError("action length must be >= 1")
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "length", int(self.length))

    @property
    def sort_key(self) -> tuple[int, Coord]:
        return (self.length, self.direction)


@dataclass(frozen=True)
class DiscretizedAction:
    """A push expanded into the configuration sequence it visits.

    ``waypoints[i-1]`` is the configuration after i unit steps; the start
    itself is not a waypoint.
    """

    start: Coord
    direction: Coord
    waypoints: tuple[Coord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", _as_coord(self.start))
        object.__setattr__(self, "direction", _as_coord(self.direction))
        object.__setattr__(self, "waypoints", tuple(_as_coord(w) for w in self.waypoints))

    @property
    def n(self) -> int:
        return len(self.waypoints)

    @property
    def spec(self) -> ActionSpec:
        return ActionSpec(self.direction, self.n)

    def config_at(self, steps: int) -> Coord:
        """Configuration after ``steps`` unit steps (0 is the start)."""
        return self.start if steps == 0 else self.waypoints[steps - 1]


def fits(grid: GridWorkspace, q: Coord, shape: ProbeShape) -> bool:
    """True when the probe footprint anchored at ``q`` lies inside the grid."""
    mins, maxs = shape.bounds
    return all(0 <= q[a] + mins[a] and q[a] + maxs[a] < grid.dims[a] for a in range(grid.ndim))


def probe_voxels(grid: GridWorkspace, q: Coord, shape: ProbeShape) -> VoxelSet:
    """Footprint cells of the probe anchored at ``q``."""
    if not fits(grid, q, shape):
        raise ValueError(f"probe footprint at {q} leaves the grid")
    mask = 0
    for o in shape.offsets:
        mask |= 1 << grid.index(_add(q, o))
    return VoxelSet(grid, mask)


def discretize_action(
    grid: GridWorkspace, shape: ProbeShape, start: Coord, spec: ActionSpec
) -> DiscretizedAction:
    """Expand a push into its waypoint sequence, clipping at the grid wall.

    Raises :class:`InvalidAction` when not even the first step stays inside.
    """
    if not fits(grid, start, shape):
        raise InvalidAction(f"start {start} out of bounds")
    waypoints = []
    for i in range(1, spec.length + 1):
        q = _add(start, _scale(spec.direction, i))
        if not fits(grid, q, shape):
            break
        waypoints.append(q)
    if not waypoints:
        raise InvalidAction(f"no in-bounds waypoint for {spec} from {start}")
    return DiscretizedAction(start, spec.direction, tuple(waypoints))


def swept_voxels(grid: GridWorkspace, action: DiscretizedAction, shape: ProbeShape) -> VoxelSet:
    """Union of probe footprints over the waypoints (start footprint excluded)."""
    mask = 0
    for q in action.waypoints:
        mask |= probe_voxels(grid, q, shape).mask
    return VoxelSet(grid, mask)


def contact_surface(
    grid: GridWorkspace, q: Coord, action: ActionSpec | Coord, shape: ProbeShape
) -> VoxelSet:
    """Leading-face cells one step ahead of the footprint at ``q``.

    When a contact is sensed at ``q`` while pushing, at least one of these
    cells is occupied. Raises :class:`EmptySurface` when every leading cell
    is outside the grid.
    """
    direction = action.direction if isinstance(action, ActionSpec) else _as_coord(action)
    fp = {_add(q, o) for o in shape.offsets}
    leading = {_add(c, direction) for c in fp} - fp
    inside = [c for c in leading if grid.contains(c)]
    if not inside:
        raise EmptySurface(f"leading face at {q} toward {direction} leaves the grid")
    return VoxelSet.from_cells(grid, inside)


def elimination_set(surface: VoxelSet, max_span: float) -> VoxelSet:
    """All grid cells strictly farther than ``max_span`` from ``surface``.

    Distances are center-to-center Euclidean; comparisons are exact because
    squared distances are integers.
    """
    if not surface.mask:
        raise EmptyInput("elimination set of empty surface")
    if max_span <= 0:
        raise ValueError("max_span must be positive")
    grid = surface.grid
    sq = _min_sqdist(grid.coords, surface.coords_array())
    far = sq > max_span * max_span
    return VoxelSet.from_array(grid, far.reshape(grid.dims))


def set_distance(a: VoxelSet, b: VoxelSet) -> float:
    """Minimum center-to-center Euclidean distance between two voxel sets."""
    if not a.mask or not b.mask:
        raise EmptyInput("set distance needs non-empty sets")
    a._check(b)
    if a.mask & b.mask:
        return 0.0
    return math.sqrt(float(_min_sqdist(a.coords_array(), b.coords_array()).min()))


@dataclass
class Geometry:
    """A grid plus a probe shape, with memoized geometric queries.

    Methods mirror the module functions; results are cached, which is safe
    because every input and output is immutable.
    """

    grid: GridWorkspace
    shape: ProbeShape

    _footprints: dict = field(default_factory=dict, repr=False)
    _surfaces: dict = field(default_factory=dict, repr=False)
    _eliminations: dict = field(default_factory=dict, repr=False)
    _prefixes: dict = field(default_factory=dict, repr=False)
    _pair_distance: dict = field(default_factory=dict, repr=False)
    _candidates: dict = field(default_factory=dict, repr=False)
    _shifts: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.shape.ndim != self.grid.ndim:
            raise ValueError("probe shape and grid dimensionality differ")

    def fits(self, q: Coord) -> bool:
        return fits(self.grid, q, self.shape)

    def footprint(self, q: Coord) -> VoxelSet:
        out = self._footprints.get(q)
        if out is None:
            out = probe_voxels(self.grid, q, self.shape)
            self._footprints[q] = out
        return out

    def discretize(self, start: Coord, spec: ActionSpec) -> DiscretizedAction:
        return discretize_action(self.grid, self.shape, start, spec)

    def surface(self, q: Coord, direction: Coord) -> VoxelSet | None:
        """Contact surface, or None when the leading face leaves the grid."""
        key = (q, direction)
        if key not in self._surfaces:
            try:
                out = contact_surface(self.grid, q, direction, self.shape)
            except EmptySurface:
                out = None
            self._surfaces[key] = out
        return self._surfaces[key]

    def swept_prefixes(self, action: DiscretizedAction) -> tuple[int, ...]:
        """Cumulative swept masks: entry i is the sweep through waypoint i+1."""
        out = self._prefixes.get(action)
        if out is None:
            masks = []
            acc = 0
            for q in action.waypoints:
                acc |= self.footprint(q).mask
                masks.append(acc)
            out = tuple(masks)
            self._prefixes[action] = out
        return out

    def swept(self, action: DiscretizedAction) -> VoxelSet:
        return VoxelSet(self.grid, self.swept_prefixes(action)[-1])

    def elimination(self, surface: VoxelSet, max_span: float) -> VoxelSet:
        key = (surface.mask, max_span)
        out = self._eliminations.get(key)
        if out is None:
            out = elimination_set(surface, max_span)
            self._eliminations[key] = out
        return out

    def surface_distance(self, a: VoxelSet, b: VoxelSet) -> float:
        key = (a.mask, b.mask) if a.mask <= b.mask else (b.mask, a.mask)
        out = self._pair_distance.get(key)
        if out is None:
            out = set_distance(a, b)
            self._pair_distance[key] = out
        return out

    def shift_mask(self, offset: Coord) -> tuple[int, int]:
        """(flat shift амount, validity mask) for translating cell sets.

        A cell c maps to c + offset by shifting its flat index; the validity
        mask keeps only cells whose translate stays inside the grid, which
        kills row wrap-around.
        """
        out = self._shifts.get(offset)
        if out is None:
            delta = sum(o * s for o, s in zip(offset, self.grid.strides))
            arr = np.ones(self.grid.dims, dtype=bool)
            for axis, o in enumerate(offset):
                idx = [slice(None)] * self.grid.ndim
                if o > 0:
                    idx[axis] = slice(self.grid.dims[axis] - o, None)
                elif o < 0:
                    idx[axis] = slice(None, -o)
                else:
                    continue
                arr[tuple(idx)] = False
            out = (delta, VoxelSet.from_array(self.grid, arr).mask)
            self._shifts[offset] = out
        return out

    def placement_count(self, cells: VoxelSet, offsets: Sequence[Coord]) -> int:
        """Number of translations t with t + o inside ``cells`` for every o."""
        fit = (1 << self.grid.ncells) - 1
        for offset in offsets:
            delta, valid = self.shift_mask(offset)
            shifted = cells.mask >> delta if delta >= 0 else cells.mask << -delta
            fit &= shifted & valid
            if not fit:
                return 0
        return fit.bit_count()

    def candidate_actions(
        self, q: Coord, lengths: Sequence[int]
    ) -> tuple[DiscretizedAction, ...]:
        """Valid pushes from ``q``, clipped, deduplicated, canonically ordered.

        Canonical order is (effective length, direction); requested lengths
        that clip to the same waypoint sequence collapse to one action.
        """
        key = (q, tuple(lengths))
        out = self._candidates.get(key)
        if out is None:
            seen = {}
            for direction in self.grid.directions():
                for length in sorted(set(lengths)):
                    try:
                        disc = self.discretize(q, ActionSpec(direction, length))
                    except InvalidAction:
                        continue
                    seen.setdefault((disc.n, direction), disc)
            out = tuple(seen[k] for k in sorted(seen))
            self._candidates[key] = out
        return out
