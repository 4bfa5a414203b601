"""Exception hierarchy shared by all artifield modules."""


class ArtifieldError(Exception):
    """Base class for all library errors.

    Every error carries a short machine-parseable ``code`` used by the CLI
    to emit a stable last-line diagnostic.
    """

    code = "error"


class InvalidArgumentError(ArtifieldError, ValueError):
    code = "invalid-argument"


class TopologyError(ArtifieldError):
    code = "topology"


class InvalidStateError(ArtifieldError):
    code = "invalid-state"


class TrainingError(ArtifieldError):
    code = "training"


class GenerationError(ArtifieldError):
    code = "generation"


class ConfigError(ArtifieldError):
    code = "config"


class MissingArtifactError(ArtifieldError):
    """A pipeline stage requires an artifact a prior stage did not produce."""

    code = "missing-artifact"
