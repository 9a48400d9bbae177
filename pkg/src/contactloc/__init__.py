"""Contact-only target localization: hierarchical belief planning and benchmark."""

from .baselines import BaselineConfig, frontier_step, information_gain, tbl_step
from .errors import (
    AmbiguousGoal,
    ContactLocError,
    DeadEnd,
    EmptyInput,
    EmptySurface,
    InconsistentObservation,
    InvalidAction,
    MismatchedScenarioSets,
    NoFeasiblePose,
    NoInformativeAction,
    ScenarioError,
    StartInCollision,
)
from .geometry import (
    ActionSpec,
    DiscretizedAction,
    Geometry,
    GridWorkspace,
    ProbeShape,
    VoxelSet,
    contact_surface,
    discretize_action,
    elimination_set,
    probe_voxels,
    set_distance,
    swept_voxels,
)
from .harness import (
    AggregateTable,
    RunRecord,
    ablation_heuristics,
    aggregate,
    phase_cost_ratios,
    replay_row,
    run_episode,
    run_episode_detailed,
    run_suite,
    simulate_observation,
)
from .particles import (
    ObjectTemplate,
    ParticleBelief,
    PoseHypothesis,
    PoseTable,
    dock_action,
    expected_observation,
    generate_hypotheses,
    is_goal,
    partition_by_observation,
    shared_dock,
)
from .planner import (
    PartialPolicy,
    PlannerConfig,
    ValueTable,
    action_cost,
    backup,
    belief_fingerprint,
    plan,
    plan_with_table,
    q_value,
    rtdp_trial,
)
from .scenario import (
    Scenario,
    builtin_names,
    builtin_scenario,
    load_scenario,
    resolve_scenario,
    save_scenario,
)
from .spaces import BeliefSpace, Phase1Space, Phase2Space
from .volumetric import (
    CollisionRecord,
    Outcome,
    VolumetricBelief,
    VolumetricParams,
    apply_collision,
    apply_no_collision,
    combined_collision_prob,
    enumerate_outcomes,
    history_collision_likelihood,
    initial_belief,
    is_phase1_terminal,
    parse_snapshot,
    snapshot,
    volume_collision_likelihood,
)

__version__ = "0.1.0"
