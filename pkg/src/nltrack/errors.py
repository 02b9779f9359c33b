"""Exception types shared across the package."""


class NLTrackError(Exception):
    """Base class for all package errors."""


class EmptyQueryError(NLTrackError, ValueError):
    pass


class ShapeMismatchError(NLTrackError, ValueError):
    pass


class NoProposalsError(NLTrackError):
    pass


class NothingToEvaluateError(NLTrackError, ValueError):
    pass


class DatasetError(NLTrackError):
    """Malformed benchmark data. Carries the video id and, where known, the line number."""

    def __init__(self, message, video_id=None, line=None):
        where = []
        if video_id is not None:
            where.append(f"video {video_id!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.video_id = video_id
        self.line = line


class FrameError(NLTrackError):
    """A failure while processing one frame of a video."""

    def __init__(self, frame_index, cause):
        super().__init__(f"frame {frame_index}: {cause}")
        self.frame_index = frame_index
        self.cause = cause


class StageOrderError(NLTrackError):
    pass


class IncompleteModelError(NLTrackError):
    pass


class CheckpointError(NLTrackError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass
