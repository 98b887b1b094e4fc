"""Exception types shared across the package.

Every error raised on purpose derives from GridnavError so callers (and the
CLI) can distinguish expected failures from bugs.
"""

from __future__ import annotations


class GridnavError(Exception):
    """Base class for all deliberate gridnav failures."""


class SceneSizingError(GridnavError):
    """Requested room count cannot be partitioned into the given grid."""


class SceneValidationError(GridnavError):
    """A scene violates a structural invariant."""


class SceneParseError(GridnavError):
    """Scene bytes could not be parsed."""


class PriorsParseError(GridnavError):
    """Priors table is malformed; message carries the offending location."""


class PriorsValidationError(GridnavError):
    """Priors table parsed but one entry violates a range or symmetry rule."""


class VocabularyError(GridnavError):
    """A category or room type is not present in the vocabulary."""


class IllegalTransitionError(GridnavError):
    """Simulator stepped on a terminated episode state."""


class UnreachableTargetError(GridnavError):
    """No collision-free path to any target instance exists."""


class UnsatisfiableEpisodeError(GridnavError):
    """Episode sampling cannot meet its constraints in this scene."""


class ReplayError(GridnavError):
    """An action sequence does not replay into a valid trajectory."""


class AnnotationError(GridnavError):
    """Annotation failed; message carries step context and raw payload."""


class ChatError(AnnotationError):
    """Base for chat-completion client failures."""


class ChatTransportError(ChatError):
    """Network-level failure talking to the chat endpoint."""


class ChatServiceError(ChatError):
    """Chat endpoint answered with a non-success status."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class ChatParseError(ChatError):
    """Chat endpoint answered but the reply violates the expected grammar."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class EmptyDatasetError(GridnavError):
    """A training or metrics routine received no examples."""


class TrainingDivergedError(GridnavError):
    """Loss became non-finite during optimization."""


class ManifestError(GridnavError):
    """Experiment manifest is missing, malformed, or inconsistent."""
