"""Leakage and coincidence analysis for two-channel separated meeting audio."""

from meetlab.core import (
    SIL,
    AudioBuffer,
    FrameGrid,
    Segment,
    Utterance,
    WordToken,
    cross_channel,
    normalize_token,
)

__version__ = "0.1.0"

__all__ = [
    "SIL",
    "AudioBuffer",
    "FrameGrid",
    "Segment",
    "Utterance",
    "WordToken",
    "cross_channel",
    "normalize_token",
    "__version__",
]
