"""Exception hierarchy shared by the library and the CLI.

Every error carries an ``exit_code`` so each CLI failure path maps to a
distinct, documented exit category (see README).
"""


class PpfsyncError(Exception):
    """Base class for all package errors."""

    exit_code = 1


# -- configuration / input documents (exit 2) --------------------------------

class ConfigError(PpfsyncError):
    exit_code = 2


class UnknownKey(ConfigError):
    pass


class TypeMismatch(ConfigError):
    pass


class MissingRequired(ConfigError):
    pass


class BroadcastAmbiguity(ConfigError):
    pass


class UnknownExample(ConfigError):
    pass


# -- graph construction and spectral quantities (exit 3) ---------------------

class GraphError(PpfsyncError):
    exit_code = 3


class NonSquareInput(GraphError):
    pass


class NegativeWeight(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class NotStronglyConnected(GraphError):
    pass


class NoPinning(GraphError):
    pass


class NonpositiveQ(GraphError):
    """The selected q-rule produced a zero or negative entry."""


class SingularPinnedLaplacian(GraphError):
    pass


# -- filter / controller construction (exit 4) -------------------------------

class FilterError(PpfsyncError):
    exit_code = 4


class NotHurwitz(FilterError):
    pass


class SingularLyapunovSystem(FilterError):
    pass


# -- funnel violation (exit 5) ------------------------------------------------

class FunnelViolation(PpfsyncError):
    """Normalized error left the open funnel interval.

    A violation falsifies the performance guarantee, so runs abort rather
    than clamping; the attributes identify the first offending sample.
    """

    exit_code = 5

    def __init__(self, message, t=None, agent=None, channel=None,
                 ratio=None, stage=None):
        super().__init__(message)
        self.t = t
        self.agent = agent
        self.channel = channel
        self.ratio = ratio
        self.stage = stage


# -- numeric / runtime failures (exit 6) --------------------------------------

class NumericError(PpfsyncError):
    exit_code = 6


class SingularInputMatrix(NumericError):
    pass


class ZeroDegreePlusPinning(NumericError):
    """Agent is disconnected from both its neighbors and the leader."""


class DimensionMismatch(NumericError):
    pass


class NonFiniteState(NumericError):
    pass


class EmptyTrace(NumericError):
    pass


class GroundTruthUnavailable(NumericError):
    """Scenario models carry no true parameter decomposition."""
