"""Hallucination feedback training and penalty decoding on a synthetic corpus."""

from ._core import (
    Corpus,
    InvalidArgument,
    Model,
    chair,
    describe,
    desk_preset,
    extract_objects,
    map_answer,
    mock_score,
    pope,
    train,
)

__all__ = [
    "Corpus",
    "InvalidArgument",
    "Model",
    "chair",
    "describe",
    "desk_preset",
    "extract_objects",
    "map_answer",
    "mock_score",
    "pope",
    "train",
]
