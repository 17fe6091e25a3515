"""Shared domain types and the time/frame arithmetic everything agrees on.

All analysis happens on a fixed-rate frame grid (default 100 frames/s).
Conversions between continuous times and frame indices go through
:class:`FrameGrid` so that every module resolves float edge cases the same
way, and token comparison goes through :func:`normalize_token` so that no two
modules disagree about casing or whitespace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Token standing for "no word here" on a frame or a lattice arc.
SIL = "<sil>"

#: Default analysis frame rate in frames per second (10 ms frames).
DEFAULT_FRAME_RATE = 100

#: Distance from an integer, in frame units, within which a float frame
#: position is treated as exactly that integer. Products like 0.24 * 100
#: evaluate to 24.000000000000004; without snapping, a ceiling would push
#: that boundary a whole frame to the right.
FRAME_EPS = 1e-6


def snap_floor(x: float, eps: float = FRAME_EPS) -> int:
    """Floor that forgives float noise within ``eps`` of an integer.

    Args:
        x: Value in frame (or sample) units.
        eps: Snap distance.

    Returns:
        ``round(x)`` when ``x`` is within ``eps`` of an integer, else
        ``floor(x)``.
    """
    nearest = round(x)
    if abs(x - nearest) <= eps:
        return int(nearest)
    return math.floor(x)


def snap_ceil(x: float, eps: float = FRAME_EPS) -> int:
    """Ceiling counterpart of :func:`snap_floor`."""
    nearest = round(x)
    if abs(x - nearest) <= eps:
        return int(nearest)
    return math.ceil(x)


def cross_channel(channel: int) -> int:
    """Return the other stream of a two-channel separation.

    Raises:
        ValueError: If ``channel`` is not 0 or 1.
    """
    if channel not in (0, 1):
        raise ValueError(f"channel must be 0 or 1, got {channel!r}")
    return 1 - channel


def normalize_token(text: str) -> str:
    """Lowercase and strip a word token.

    Every comparison in the toolkit runs on normalized tokens, so this is
    applied once on ingest rather than ad hoc at comparison sites.

    Raises:
        ValueError: If nothing is left after stripping, or if whitespace
            remains inside the token. An empty token would silently vanish
            from every metric downstream, and an embedded space means the
            caller forgot to split a phrase into words.
    """
    out = text.strip().lower()
    if not out:
        raise ValueError(f"word token is empty after normalization: {text!r}")
    if any(c.isspace() for c in out):
        raise ValueError(f"word token contains whitespace: {text!r}")
    return out


def _check_time(name: str, value: float, *, allow_zero: bool = True) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be non-negative, got {value!r}")


@dataclass(frozen=True)
class FrameGrid:
    """Fixed-rate frame grid; frame ``f`` starts at time ``f / frame_rate``.

    ``num_frames`` optionally bounds the grid; when set, frame ranges are
    clipped to ``[0, num_frames)`` so callers cannot address frames past the
    end of the session.
    """

    frame_rate: int = DEFAULT_FRAME_RATE
    num_frames: int | None = None

    def __post_init__(self) -> None:
        if self.frame_rate <= 0:
            raise ValueError(f"frame_rate must be positive, got {self.frame_rate}")
        if self.num_frames is not None and self.num_frames < 0:
            raise ValueError(f"num_frames must be >= 0, got {self.num_frames}")

    def frame_time(self, frame: int) -> float:
        """Start time of ``frame`` in seconds."""
        return frame / self.frame_rate

    def _clip(self, lo: int, hi: int) -> range:
        lo = max(0, lo)
        if self.num_frames is not None:
            hi = min(hi, self.num_frames)
        return range(lo, max(lo, hi))

    def time_to_frames(self, start: float, end: float) -> range:
        """Frames touched by the interval ``[start, end)``.

        Floor on the left edge, ceiling on the right, both snap-tolerant, so
        partially covered frames are included. Used for segment windows.

        Raises:
            ValueError: If the interval is empty, reversed, negative or
                non-finite.
        """
        _check_time("start", start)
        _check_time("end", end)
        lo = snap_floor(start * self.frame_rate)
        hi = snap_ceil(end * self.frame_rate)
        if hi <= lo:
            raise ValueError(f"interval [{start}, {end}) covers no frames")
        return self._clip(lo, hi)

    def covering_frames(self, start: float, end: float) -> range:
        """Frames whose start instant lies in ``[start, end)``.

        Used to decide which frames a word labels. Unlike
        :meth:`time_to_frames` this assigns a frame that straddles a word
        boundary to exactly one side (the word covering the frame's start),
        so non-overlapping words never share a frame. May be empty.
        """
        _check_time("start", start)
        _check_time("end", end)
        if end < start:
            raise ValueError(f"reversed interval [{start}, {end})")
        lo = snap_ceil(start * self.frame_rate)
        hi = snap_ceil(end * self.frame_rate)
        return self._clip(lo, hi)


@dataclass(frozen=True)
class WordToken:
    """One recognized or aligned word with its time span.

    Attributes:
        text: Normalized token text, no whitespace.
        start: Start time in seconds.
        duration: Duration in seconds, strictly positive.
        speaker: Speaker label, empty when unknown.
        channel: Stream index 0 or 1, or None when not tied to a stream.
    """

    text: str
    start: float
    duration: float
    speaker: str = ""
    channel: int | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("word token text must be non-empty")
        if any(c.isspace() for c in self.text):
            raise ValueError(f"word token contains whitespace: {self.text!r}")
        _check_time("start", self.start)
        if not math.isfinite(self.duration) or self.duration <= 0:
            raise ValueError(f"duration must be finite and > 0, got {self.duration!r}")
        if self.channel is not None and self.channel not in (0, 1):
            raise ValueError(f"channel must be 0, 1 or None, got {self.channel!r}")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class Segment:
    """A contiguous span of one stream, optionally attributed to a speaker."""

    channel: int
    start: float
    end: float
    speaker: str | None = None

    def __post_init__(self) -> None:
        if self.channel not in (0, 1):
            raise ValueError(f"channel must be 0 or 1, got {self.channel!r}")
        _check_time("start", self.start)
        _check_time("end", self.end)
        if self.end <= self.start:
            raise ValueError(f"segment [{self.start}, {self.end}) is empty or reversed")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def overlap(self, other: "Segment") -> float:
        """Time overlap with ``other`` in seconds, ignoring channels."""
        return max(0.0, min(self.end, other.end) - max(self.start, other.start))


@dataclass(frozen=True)
class Utterance:
    """One reference or hypothesis utterance.

    ``words`` holds normalized tokens in spoken order. ``end >= start`` is
    required; a zero-length utterance with no words is legal and inert.
    """

    speaker: str
    words: tuple[str, ...]
    start: float
    end: float
    session_id: str = ""
    channel: int | None = None

    def __post_init__(self) -> None:
        _check_time("start", self.start)
        _check_time("end", self.end)
        if self.end < self.start:
            raise ValueError(f"utterance [{self.start}, {self.end}] is reversed")
        if self.channel is not None and self.channel not in (0, 1):
            raise ValueError(f"channel must be 0, 1 or None, got {self.channel!r}")
        if not isinstance(self.words, tuple):
            object.__setattr__(self, "words", tuple(self.words))


@dataclass(eq=False)
class AudioBuffer:
    """Float64 audio in [-1, 1], shaped ``(num_samples, num_channels)``.

    1-D input is accepted and treated as a single channel. All channels share
    one length and sample rate by construction.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, np.newaxis]
        if arr.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got shape {arr.shape}")
        if arr.shape[1] == 0:
            raise ValueError("audio must have at least one channel")
        self.samples = arr
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate

    def channel(self, c: int) -> np.ndarray:
        """1-D view of channel ``c``."""
        if not 0 <= c < self.num_channels:
            raise ValueError(f"channel {c} out of range for {self.num_channels} channels")
        return self.samples[:, c]

    def time_slice(self, start: float, end: float) -> np.ndarray:
        """View of the samples for ``[start, end)``, snap-tolerant and clipped."""
        _check_time("start", start)
        _check_time("end", end)
        if end < start:
            raise ValueError(f"reversed interval [{start}, {end})")
        lo = max(0, snap_floor(start * self.sample_rate))
        hi = min(len(self), snap_ceil(end * self.sample_rate))
        return self.samples[lo:max(lo, hi)]
