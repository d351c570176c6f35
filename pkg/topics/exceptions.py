from __future__ import annotations


class TiganError(Exception):
    """Base class for every error raised by the topics package."""


class GraphError(TiganError):
    pass


class ShapeError(GraphError):
    pass


class NonFiniteError(TiganError):
    pass


class CorpusError(TiganError):
    pass


class EmbeddingFormatError(TiganError):
    pass


class ConfigError(TiganError):
    pass


class TrainingDivergedError(TiganError):
    def __init__(self, message: str, step: int | None = None, losses: dict | None = None):
        super().__init__(message)
        self.step = step
        self.losses = dict(losses or {})


class CheckpointError(TiganError):
    pass


class EvaluationError(TiganError):
    pass
