"""Signal-level procedures on two-channel separated audio.

Three independent jobs live here because they share framing and buffer
plumbing: an energy-ratio VAD that decides which of the two streams owns
each stretch of speech, a window stitcher that undoes per-window channel
permutations by minimum mean squared error on overlaps, and an SDR-based
oracle channel selector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from meetlab.core import AudioBuffer, Segment, snap_ceil, snap_floor

#: SDR ceiling, in dB, standing in for a perfect match.
SDR_CAP_DB = 100.0

#: Ratio-denominator stabilizer so all-silence frames divide cleanly.
_RATIO_EPS = 1e-12

#: Tolerance for duration comparisons built from float frame times.
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class VadParams:
    """Energy-ratio VAD tuning knobs; defaults suit the bundled simulator."""

    frame_len: float = 0.025
    hop: float = 0.010
    energy_floor: float = 1e-3
    ratio_threshold: float = 0.2
    min_speech: float = 0.2
    min_gap: float = 0.3
    pad: float = 0.1

    def __post_init__(self) -> None:
        if not 0 < self.hop <= self.frame_len:
            raise ValueError(
                f"need frame_len >= hop > 0, got frame_len={self.frame_len}, "
                f"hop={self.hop}"
            )
        if not 0 < self.ratio_threshold < 1:
            raise ValueError(
                f"ratio_threshold must be in (0, 1), got {self.ratio_threshold}"
            )
        if self.energy_floor < 0:
            raise ValueError(f"energy_floor must be >= 0, got {self.energy_floor}")
        for name in ("min_speech", "min_gap", "pad"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


def _frame_energies(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    """Sum of squares per frame; tail frames use whatever samples remain."""
    n = len(x)
    num_frames = max(0, snap_ceil(n / hop))
    csum = np.concatenate(([0.0], np.cumsum(np.square(x, dtype=np.float64))))
    starts = np.arange(num_frames) * hop
    ends = np.minimum(starts + frame, n)
    return csum[ends] - csum[starts]


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal True runs as [start, end) index pairs."""
    if not mask.any():
        return []
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def energy_vad(streams: AudioBuffer, params: VadParams | None = None) -> list[Segment]:
    """Segment both streams by per-frame energy and cross-channel ratio.

    A frame is speech on channel c when its energy clears ``energy_floor``
    and its share of the summed two-channel energy clears
    ``ratio_threshold``. Runs are smoothed (gaps shorter than ``min_gap``
    closed, runs shorter than ``min_speech`` dropped), padded by ``pad`` and
    clipped to the stream.

    Returns:
        Segments for both channels, sorted by (channel, start), disjoint
        within each channel.

    Raises:
        ValueError: If ``streams`` is not 2-channel.
    """
    params = params or VadParams()
    if streams.num_channels != 2:
        raise ValueError(f"energy_vad needs 2 channels, got {streams.num_channels}")
    sr = streams.sample_rate
    frame = snap_floor(params.frame_len * sr)
    hop = snap_floor(params.hop * sr)
    if frame < 1 or hop < 1:
        raise ValueError("frame_len and hop are below one sample at this rate")
    energies = np.stack(
        [_frame_energies(streams.channel(c), frame, hop) for c in (0, 1)], axis=1
    )
    total = energies.sum(axis=1) + _RATIO_EPS
    out: list[Segment] = []
    for c in (0, 1):
        own = energies[:, c]
        active = (own >= params.energy_floor) & (own / total >= params.ratio_threshold)
        spans = [
            (i0 * params.hop, (i1 - 1) * params.hop + params.frame_len)
            for i0, i1 in _runs(active)
        ]
        merged: list[list[float]] = []
        for s, e in spans:
            if merged and s - merged[-1][1] < params.min_gap - _TIME_EPS:
                merged[-1][1] = e
            else:
                merged.append([s, e])
        kept = [
            (s, e) for s, e in merged if e - s >= params.min_speech - _TIME_EPS
        ]
        padded: list[list[float]] = []
        for s, e in kept:
            s = max(0.0, s - params.pad)
            e = min(streams.duration, e + params.pad)
            if padded and s <= padded[-1][1]:
                padded[-1][1] = max(padded[-1][1], e)
            else:
                padded.append([s, e])
        out.extend(Segment(channel=c, start=s, end=e) for s, e in padded if e > s)
    return out


# ---------------------------------------------------------------------------
# window stitching

@dataclass(frozen=True)
class WindowedSeparation:
    """Per-window two-channel output of a windowed separator."""

    window_size: float
    shift: float
    windows: tuple[AudioBuffer, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.windows, tuple):
            object.__setattr__(self, "windows", tuple(self.windows))
        if self.shift <= 0 or self.window_size <= 0:
            raise ValueError("window_size and shift must be positive")
        if self.shift >= self.window_size:
            raise ValueError(
                f"shift {self.shift} >= window_size {self.window_size} "
                "leaves no overlap to resolve permutations on"
            )
        if not self.windows:
            raise ValueError("need at least one window")
        sr = self.windows[0].sample_rate
        length = len(self.windows[0])
        for w in self.windows:
            if w.sample_rate != sr:
                raise ValueError("all windows must share one sample rate")
            if w.num_channels != 2:
                raise ValueError("windows must be 2-channel")
            if len(w) != length:
                raise ValueError("all windows must have equal length")

    @property
    def sample_rate(self) -> int:
        return self.windows[0].sample_rate


def cut_into_windows(
    streams: AudioBuffer, window_size: float = 4.0, shift: float = 3.0
) -> WindowedSeparation:
    """Cut a 2-channel buffer into overlapping windows, zero-padding the tail."""
    if streams.num_channels != 2:
        raise ValueError(f"need 2 channels, got {streams.num_channels}")
    sr = streams.sample_rate
    win = snap_floor(window_size * sr)
    hop = snap_floor(shift * sr)
    if not 0 < hop < win:
        raise ValueError("shift must be positive and smaller than window_size")
    n = len(streams)
    num_windows = max(1, math.ceil(max(0, n - win) / hop) + 1)
    windows = []
    for k in range(num_windows):
        chunk = streams.samples[k * hop : k * hop + win]
        if len(chunk) < win:
            chunk = np.concatenate(
                [chunk, np.zeros((win - len(chunk), 2), dtype=np.float64)]
            )
        windows.append(AudioBuffer(samples=chunk.copy(), sample_rate=sr))
    return WindowedSeparation(
        window_size=window_size, shift=shift, windows=tuple(windows)
    )


def channel_permutation_mse(
    prefix_tail: np.ndarray, window_head: np.ndarray
) -> tuple[float, float]:
    """Summed per-channel MSE of keeping vs swapping the window's channels."""
    keep = float(np.mean(np.square(prefix_tail - window_head)))
    swap = float(np.mean(np.square(prefix_tail - window_head[:, ::-1])))
    return keep, swap


def stitch(sep: WindowedSeparation) -> tuple[AudioBuffer, tuple[bool, ...]]:
    """Concatenate windows, resolving each window's channel permutation.

    Window 0 is taken as-is. Every later window is compared against the
    already-stitched output over the overlap region and keeps or swaps its
    channels, whichever gives the smaller summed MSE (ties keep). Overlaps
    are blended with a linear cross-fade that starts at the previous content
    and ends at the new window, so two windows that agree on the overlap
    reproduce it exactly.

    Returns:
        The stitched 2-stream buffer and one swap decision per window
        (window 0 is always False).
    """
    sr = sep.sample_rate
    win = len(sep.windows[0])
    hop = snap_floor(sep.shift * sr)
    overlap = win - hop
    n_out = win + (len(sep.windows) - 1) * hop
    out = np.zeros((n_out, 2), dtype=np.float64)
    out[:win] = sep.windows[0].samples
    decisions = [False]
    fade = ((np.arange(overlap) + 1) / (overlap + 1))[:, np.newaxis]
    pos = hop
    for window in sep.windows[1:]:
        head = window.samples[:overlap]
        keep, swap = channel_permutation_mse(out[pos : pos + overlap], head)
        do_swap = swap < keep
        decisions.append(do_swap)
        samples = window.samples[:, ::-1] if do_swap else window.samples
        prev = out[pos : pos + overlap]
        out[pos : pos + overlap] = prev + fade * (samples[:overlap] - prev)
        out[pos + overlap : pos + win] = samples[overlap:]
        pos += hop
    return AudioBuffer(samples=out, sample_rate=sr), tuple(decisions)


# ---------------------------------------------------------------------------
# SDR and oracle channel selection

def sdr_db(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Signal-to-distortion ratio in dB after optimal scalar gain.

    The estimate is scaled by the least-squares gain before computing
    10 log10(||s||^2 / ||s - a x||^2), which makes the result invariant
    under positive scaling of the estimate. Perfect (or near-perfect)
    matches are capped at :data:`SDR_CAP_DB`.

    Raises:
        ValueError: If the reference has no energy.
    """
    s = np.asarray(reference, dtype=np.float64)
    x = np.asarray(estimate, dtype=np.float64)
    if s.shape != x.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {x.shape}")
    s_energy = float(np.dot(s, s))
    if s_energy == 0.0:
        raise ValueError("reference signal has no energy")
    x_energy = float(np.dot(x, x))
    alpha = float(np.dot(s, x)) / x_energy if x_energy > 0 else 0.0
    residual = float(np.dot(s - alpha * x, s - alpha * x))
    if residual <= 0:
        return SDR_CAP_DB
    return min(SDR_CAP_DB, 10.0 * math.log10(s_energy / residual))


def select_oracle_channel(
    clean: AudioBuffer, streams: AudioBuffer, segment: Segment
) -> tuple[int, tuple[float, float]]:
    """Pick the separated stream that best matches a clean reference.

    Both streams are scored by :func:`sdr_db` against the clean audio over
    the segment's window; the channel with the larger SDR wins, ties going
    to channel 0.

    Returns:
        ``(channel, (sdr_ch0, sdr_ch1))`` in dB.
    """
    if streams.num_channels != 2:
        raise ValueError(f"need 2 separated channels, got {streams.num_channels}")
    if clean.sample_rate != streams.sample_rate:
        raise ValueError("clean and streams must share one sample rate")
    ref = clean.time_slice(segment.start, segment.end)[:, 0]
    cut = streams.time_slice(segment.start, segment.end)
    sdrs = (sdr_db(ref, cut[:, 0]), sdr_db(ref, cut[:, 1]))
    channel = 0 if sdrs[0] >= sdrs[1] else 1
    return channel, sdrs
