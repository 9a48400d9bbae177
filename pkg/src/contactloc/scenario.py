"""Scenario files: everything one episode needs, as versioned JSON.

A scenario pins the grid, the probe shape, the object template with its
docking cells, the prior box the object is guaranteed to lie in, the true
pose (or "random" for seed-driven placement), the action lengths, and the
model/solver/baseline knobs. Builtin scenarios cover a 2D shelf-style
setup, a 2D wide-prior setup, and a small 3D setup.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from .errors import ScenarioError
from .geometry import Coord, Geometry, GridWorkspace, ProbeShape, VoxelSet, fits
from .particles import ObjectTemplate, PoseHypothesis
from .planner import PlannerConfig
from .baselines import BaselineConfig
from .volumetric import VolumetricParams

FORMAT_VERSION = 1

# 2x2 box with one corner missing; the dock is the missing corner, so the
# probe "plugs" into the notch. All four orientations are distinct.
_L_ROTATIONS = (
    ((0, 0), (1, 0), (0, 1)),
    ((0, 0), (1, 0), (1, 1)),
    ((1, 0), (0, 1), (1, 1)),
    ((0, 0), (0, 1), (1, 1)),
)
_L_DOCKS = ((1, 1), (0, 1), (0, 0), (1, 0))


@dataclass(frozen=True)
class Scenario:
    name: str
    grid_dims: Coord
    probe_offsets: tuple[Coord, ...]
    template_rotations: tuple[tuple[Coord, ...], ...]
    template_docks: tuple[Coord, ...]
    start: Coord
    box_min: Coord
    box_max: Coord
    action_lengths: tuple[int, ...]
    truth: PoseHypothesis | None = None  # None means sampled from the seed
    max_object_span: float | None = None
    overlap_smoothing: float = 0.1
    handoff_threshold: int | None = None
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    seed: int = 0
    max_steps: int = 600

    # -- derived pieces -------------------------------------------------------

    def grid(self) -> GridWorkspace:
        return GridWorkspace(self.grid_dims)

    def probe(self) -> ProbeShape:
        return ProbeShape(self.probe_offsets)

    def geometry(self) -> Geometry:
        return Geometry(self.grid(), self.probe())

    def template(self) -> ObjectTemplate:
        return ObjectTemplate(self.template_rotations, self.template_docks)

    def prior_box(self) -> VoxelSet:
        grid = self.grid()
        lo, hi = self.box_min, self.box_max
        cells = []
        ranges = [range(lo[a], hi[a] + 1) for a in range(grid.ndim)]
        stack = [()]
        for r in ranges:
            stack = [p + (v,) for p in stack for v in r]
        for cell in stack:
            if not grid.contains(cell):
                raise ScenarioError(f"prior box cell {cell} outside grid {grid.dims}")
            cells.append(cell)
        return VoxelSet.from_cells(grid, cells)

    def volumetric_params(self) -> VolumetricParams:
        template = self.template()
        span = self.max_object_span
        if span is None:
            # Conservative: object diameter plus one voxel diagonal. The tiny
            # pad keeps the bound off exact cell distances, where a cell
            # would survive elimination yet zero out every contact factor.
            span = template.max_span + math.sqrt(self.grid().ndim) + 1e-6
        threshold = self.handoff_threshold
        if threshold is None:
            threshold = max(
                template.voxel_count, (2 * template.extent) ** self.grid().ndim
            )
        return VolumetricParams(
            object_voxel_count=template.voxel_count,
            max_object_span=span,
            overlap_smoothing=self.overlap_smoothing,
            handoff_threshold=threshold,
        )

    # -- checks and sampling --------------------------------------------------

    def feasible_poses(self) -> list[PoseHypothesis]:
        """Grid-aligned placements fully inside the prior box and clear of the
        verified start footprint."""
        grid = self.grid()
        geometry = self.geometry()
        box = self.prior_box()
        start_fp = geometry.footprint(self.start)
        template = self.template()
        out = []
        for rotation in range(len(template.rotations)):
            offsets = template.rotations[rotation]
            ranges = [range(self.box_min[a], self.box_max[a] + 1) for a in range(grid.ndim)]
            stack = [()]
            for r in ranges:
                stack = [p + (v,) for p in stack for v in r]
            for translation in stack:
                pose = PoseHypothesis(translation, rotation)
                cells = template.cells_of(pose)
                if not all(grid.contains(c) for c in cells):
                    continue
                pose_set = VoxelSet.from_cells(grid, cells)
                if not pose_set.issubset(box):
                    continue
                if pose_set.intersects(start_fp):
                    continue
                out.append(pose)
        return sorted(out, key=lambda h: (h.translation, h.rotation))

    def resolve_truth(self, seed: int) -> PoseHypothesis:
        if self.truth is not None:
            return self.truth
        poses = self.feasible_poses()
        if not poses:
            raise ScenarioError("no feasible true pose inside the prior box")
        rng = random.Random(seed * 1_000_003 + 17)
        return poses[rng.randrange(len(poses))]

    def validate(self) -> None:
        grid = self.grid()
        geometry = self.geometry()
        if not fits(grid, self.start, self.probe()):
            raise ScenarioError(f"start {self.start} footprint leaves the grid")
        template = self.template()
        if template.ndim != grid.ndim:
            raise ScenarioError("template and grid dimensionality differ")
        if len(self.box_min) != grid.ndim or len(self.box_max) != grid.ndim:
            raise ScenarioError("prior box dimensionality mismatch")
        if any(self.box_min[a] > self.box_max[a] for a in range(grid.ndim)):
            raise ScenarioError("prior box min exceeds max")
        self.prior_box()
        if not self.action_lengths or any(l < 1 for l in self.action_lengths):
            raise ScenarioError("action lengths must be positive")
        if self.max_steps < 1:
            raise ScenarioError("max_steps must be positive")
        if self.max_object_span is not None and self.max_object_span < template.max_span:
            raise ScenarioError(
                "max_object_span below the template's own span breaks soundness"
            )
        self.volumetric_params()
        if self.truth is not None:
            box = self.prior_box()
            cells = template.cells_of(self.truth)
            if not all(grid.contains(c) for c in cells):
                raise ScenarioError("true pose leaves the grid")
            if not VoxelSet.from_cells(grid, cells).issubset(box):
                raise ScenarioError("true pose is not inside the prior box")
            if VoxelSet.from_cells(grid, cells).intersects(geometry.footprint(self.start)):
                raise ScenarioError("true pose overlaps the verified start footprint")


# -- JSON round trip ----------------------------------------------------------


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "name": s.name,
        "grid_dims": list(s.grid_dims),
        "probe_offsets": [list(o) for o in s.probe_offsets],
        "template": {
            "rotations": [[list(c) for c in rot] for rot in s.template_rotations],
            "docks": [list(d) for d in s.template_docks],
        },
        "start": list(s.start),
        "prior_box": {"min": list(s.box_min), "max": list(s.box_max)},
        "action_lengths": list(s.action_lengths),
        "truth": (
            None
            if s.truth is None
            else {"translation": list(s.truth.translation), "rotation": s.truth.rotation}
        ),
        "volumetric": {
            "max_object_span": s.max_object_span,
            "overlap_smoothing": s.overlap_smoothing,
            "handoff_threshold": s.handoff_threshold,
        },
        "planner": asdict(s.planner),
        "baseline": asdict(s.baseline),
        "seed": s.seed,
        "max_steps": s.max_steps,
    }


def scenario_from_dict(data: dict) -> Scenario:
    try:
        version = data["format_version"]
        if version != FORMAT_VERSION:
            raise ScenarioError(f"unsupported scenario format version {version}")
        truth = None
        if data.get("truth") is not None:
            truth = PoseHypothesis(
                tuple(data["truth"]["translation"]), int(data["truth"]["rotation"])
            )
        vol = data.get("volumetric", {})
        scenario = Scenario(
            name=data["name"],
            grid_dims=tuple(data["grid_dims"]),
            probe_offsets=tuple(tuple(o) for o in data["probe_offsets"]),
            template_rotations=tuple(
                tuple(tuple(c) for c in rot) for rot in data["template"]["rotations"]
            ),
            template_docks=tuple(tuple(d) for d in data["template"]["docks"]),
            start=tuple(data["start"]),
            box_min=tuple(data["prior_box"]["min"]),
            box_max=tuple(data["prior_box"]["max"]),
            action_lengths=tuple(data["action_lengths"]),
            truth=truth,
            max_object_span=vol.get("max_object_span"),
            overlap_smoothing=vol.get("overlap_smoothing", 0.1),
            handoff_threshold=vol.get("handoff_threshold"),
            planner=PlannerConfig(**data.get("planner", {})),
            baseline=BaselineConfig(**data.get("baseline", {})),
            seed=int(data.get("seed", 0)),
            max_steps=int(data.get("max_steps", 600)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    scenario.validate()
    return scenario


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(data)


# -- builtin scenarios --------------------------------------------------------


def _shelf2d() -> Scenario:
    return Scenario(
        name="shelf2d",
        grid_dims=(50, 50),
        probe_offsets=((0, 0),),
        template_rotations=_L_ROTATIONS,
        template_docks=_L_DOCKS,
        start=(24, 26),
        box_min=(11, 30),
        box_max=(38, 39),
        action_lengths=(1, 2, 4, 8, 16, 32),
        handoff_threshold=60,
        planner=PlannerConfig(budget=300),
        max_steps=700,
    )


def _base2d() -> Scenario:
    return Scenario(
        name="base2d",
        grid_dims=(56, 30),
        probe_offsets=((0, 0),),
        template_rotations=_L_ROTATIONS,
        template_docks=_L_DOCKS,
        start=(28, 8),
        box_min=(8, 12),
        box_max=(47, 23),
        action_lengths=(1, 2, 4, 8, 16, 32),
        handoff_threshold=60,
        planner=PlannerConfig(budget=300),
        max_steps=900,
    )


def _small3d() -> Scenario:
    bar = (((0, 0, 0), (1, 0, 0)),)
    docks = ((-1, 0, 0),)
    return Scenario(
        name="small3d",
        grid_dims=(16, 16, 16),
        probe_offsets=((0, 0, 0),),
        template_rotations=bar,
        template_docks=docks,
        start=(8, 8, 2),
        box_min=(5, 5, 6),
        box_max=(10, 10, 9),
        action_lengths=(1, 2, 4, 8),
        handoff_threshold=64,
        planner=PlannerConfig(budget=250),
        max_steps=500,
    )


def _tiny2d() -> Scenario:
    return Scenario(
        name="tiny2d",
        grid_dims=(24, 24),
        probe_offsets=(((0, 0)),),
        template_rotations=_L_ROTATIONS,
        template_docks=_L_DOCKS,
        start=(11, 3),
        box_min=(5, 7),
        box_max=(18, 20),
        action_lengths=(1, 2, 4, 8, 16),
        handoff_threshold=40,
        planner=PlannerConfig(budget=300),
        max_steps=500,
    )


_BUILTINS = {
    "shelf2d": _shelf2d,
    "base2d": _base2d,
    "small3d": _small3d,
    "tiny2d": _tiny2d,
}


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILTINS))


def builtin_scenario(name: str) -> Scenario:
    try:
        scenario = _BUILTINS[name]()
    except KeyError:
        raise ScenarioError(f"unknown builtin scenario {name!r}; have {builtin_names()}")
    scenario.validate()
    return scenario


def resolve_scenario(ref: str | Path) -> Scenario:
    """A path to a scenario file, or the name of a builtin."""
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    if str(ref) in _BUILTINS:
        return builtin_scenario(str(ref))
    raise ScenarioError(f"scenario {ref!r} is neither a file nor a builtin name")


def with_overrides(
    scenario: Scenario,
    budget: int | None = None,
    seed: int | None = None,
    explore_fraction: float | None = None,
) -> Scenario:
    out = scenario
    if budget is not None:
        out = replace(out, planner=replace(out.planner, budget=budget))
    if explore_fraction is not None:
        out = replace(out, planner=replace(out.planner, explore_fraction=explore_fraction))
    if seed is not None:
        out = replace(out, seed=seed)
    return out
