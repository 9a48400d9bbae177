"""Exception types shared across the package."""


class ContactLocError(Exception):
    """Base class for all package errors."""


class InvalidAction(ContactLocError):
    """Action has no in-bounds waypoint from its start configuration."""


class EmptySurface(ContactLocError):
    """All leading-face cells fall outside the grid."""


class EmptyInput(ContactLocError):
    """A set operation received an empty voxel set it cannot handle."""


class InconsistentObservation(ContactLocError):
    """A contact was reported somewhere the target cannot be."""


class NoFeasiblePose(ContactLocError):
    """No candidate pose is consistent with the residual volume and contacts."""


class StartInCollision(ContactLocError):
    """The probe footprint overlaps an object at the action start."""


class AmbiguousGoal(ContactLocError):
    """Hypotheses disagree on the docking configuration."""


class DeadEnd(ContactLocError):
    """No valid action exists from a belief."""


class NoInformativeAction(ContactLocError):
    """No candidate action clears the information-gain threshold."""


class MismatchedScenarioSets(ContactLocError):
    """Planners were run on different scenario/seed sets."""


class ScenarioError(ContactLocError):
    """Scenario file is malformed or violates its invariants."""
