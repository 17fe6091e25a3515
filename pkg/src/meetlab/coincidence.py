"""Frame-wise coincidence rates between the two separated streams.

The question answered here: at how many frames does the word content of one
stream agree with the word content of the other? Alignments and hypotheses
are rasterized onto the shared frame grid; agreement is counted per frame,
bucketed by how many speakers the reference says are active, and pooled
frame-weighted over all segments of a session.

Two directions are measured per segment, always relative to the segment's
own (primary) channel:

* ``primary_to_cross``: the primary channel's spoken words against the
  cross channel's recognition output. High values mean primary speech leaks
  into the other stream strongly enough to be recognized there.
* ``cross_to_primary``: the primary channel's recognition output against
  the cross channel's spoken words. High values mean the other stream's
  speech contaminates recognition on this one.

One-best hypotheses give the word coincidence rate (WCR); lattices give the
generalized coincidence rate (GCR), which counts a frame as matching when
any arc over it carries the spoken word, valid path or not.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from meetlab.core import SIL, FrameGrid, Segment, WordToken, cross_channel
from meetlab.formats import Lattice

BUCKETS = ("1", "2", "all")
VARIANTS = ("words", "words_sil")
DIRECTIONS = ("primary_to_cross", "cross_to_primary")
HYP_KINDS = ("one_best", "lattice")


@dataclass(frozen=True)
class FrameLabeling:
    """Word labels over a frame window.

    ``labels[i]`` belongs to frame ``start_frame + i``. Alignments and
    one-best hypotheses carry one label per frame; lattices carry a set.
    Internally everything is a frozenset (singletons for alignments), which
    makes the matching rule uniform.
    """

    start_frame: int
    labels: tuple[frozenset[str], ...]
    grid: FrameGrid

    def __post_init__(self) -> None:
        for s in self.labels:
            if not s:
                raise ValueError("every frame needs at least one label (use the silence token)")

    def __len__(self) -> int:
        return len(self.labels)


def _window_frames(grid: FrameGrid, window: Segment) -> range:
    return grid.time_to_frames(window.start, window.end)


def rasterize_alignment(
    words: Sequence[WordToken], grid: FrameGrid, window: Segment
) -> FrameLabeling:
    """Paint word labels onto the frames of ``window``.

    A frame carries a word's label when the frame's start instant falls in
    the word's [start, end) span; everything else is silence. Words are laid
    down in time order.

    Raises:
        ValueError: If two words overlap in time (alignments are
            single-label by definition).
    """
    frames = _window_frames(grid, window)
    labels: list[str] = [SIL] * len(frames)
    ordered = sorted(words, key=lambda w: (w.start, w.end))
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end - 1e-9:
            raise ValueError(
                f"overlapping words {prev.text!r} and {cur.text!r} "
                f"at {prev.start:.3f}/{cur.start:.3f}"
            )
    for word in ordered:
        for f in grid.covering_frames(word.start, word.end):
            if frames.start <= f < frames.stop:
                labels[f - frames.start] = word.text
    return FrameLabeling(
        start_frame=frames.start,
        labels=tuple(frozenset((lab,)) for lab in labels),
        grid=grid,
    )


def rasterize_lattice(lat: Lattice, grid: FrameGrid, window: Segment) -> FrameLabeling:
    """Union of arc labels per frame; frames under no arc get silence.

    Every arc contributes its word to every frame it spans, whether or not
    the arcs form a consistent path; that is the whole point of the
    generalized rate.
    """
    if lat.frame_rate != grid.frame_rate:
        raise ValueError(
            f"lattice frame rate {lat.frame_rate} != grid rate {grid.frame_rate}"
        )
    frames = _window_frames(grid, window)
    sets: list[set[str]] = [set() for _ in frames]
    for arc in lat.arcs:
        start_t, end_t = lat.arc_span(arc)
        if end_t <= start_t:
            continue
        span = grid.covering_frames(start_t, end_t)
        for f in range(max(span.start, frames.start), min(span.stop, frames.stop)):
            sets[f - frames.start].add(arc.word)
    return FrameLabeling(
        start_frame=frames.start,
        labels=tuple(frozenset(s) if s else frozenset((SIL,)) for s in sets),
        grid=grid,
    )


def active_speaker_counts(
    utterances: Iterable[tuple[str, float, float]], grid: FrameGrid, window: Segment
) -> tuple[int, ...]:
    """Distinct active speakers per frame of ``window``.

    Input is (speaker, start, end) activity intervals from the reference
    annotation; a speaker is active on a frame when the frame's start
    instant falls inside one of their intervals.
    """
    frames = _window_frames(grid, window)
    active: list[set[str]] = [set() for _ in frames]
    for speaker, start, end in utterances:
        if end <= start:
            continue
        for f in grid.covering_frames(start, end):
            if frames.start <= f < frames.stop:
                active[f - frames.start].add(speaker)
    return tuple(len(s) for s in active)


def _match_flags(
    primary: FrameLabeling, cross: FrameLabeling, variant: str
) -> list[bool]:
    if primary.grid != cross.grid or primary.start_frame != cross.start_frame:
        raise ValueError("labelings must cover the same frame window")
    if len(primary) != len(cross):
        raise ValueError(
            f"frame count mismatch: {len(primary)} vs {len(cross)}"
        )
    out = []
    for p, c in zip(primary.labels, cross.labels):
        shared = p & c
        if variant == "words":
            out.append(bool(shared - {SIL}))
        else:
            out.append(bool(shared))
    return out


@dataclass(frozen=True)
class CrCell:
    """One numerator/denominator pair; rate is None while empty."""

    num: int = 0
    den: int = 0

    @property
    def rate(self) -> float | None:
        if self.den == 0:
            return None
        return self.num / self.den

    def __add__(self, other: "CrCell") -> "CrCell":
        return CrCell(num=self.num + other.num, den=self.den + other.den)


def coincidence_rate(
    primary: FrameLabeling,
    cross: FrameLabeling,
    active_counts: Sequence[int],
    variant: str,
    bucket: str,
) -> CrCell:
    """Count matching frames of one segment window in one bucket.

    The denominator is every window frame in the bucket (frames with zero
    active speakers belong only to the "all" bucket); the numerator is the
    subset whose labels match under the variant rule: shared non-silence
    word for ``words``, any shared label including silence for
    ``words_sil``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if bucket not in BUCKETS:
        raise ValueError(f"unknown bucket {bucket!r}")
    if len(active_counts) != len(primary):
        raise ValueError(
            f"active_counts length {len(active_counts)} != window size {len(primary)}"
        )
    flags = _match_flags(primary, cross, variant)
    num = den = 0
    for match, count in zip(flags, active_counts):
        if bucket == "1" and count != 1:
            continue
        if bucket == "2" and count != 2:
            continue
        den += 1
        if match:
            num += 1
    return CrCell(num=num, den=den)


@dataclass(frozen=True)
class CrReport:
    """Pooled coincidence rates for one direction and hypothesis kind."""

    direction: str
    hyp_kind: str
    cells: dict[tuple[str, str], CrCell] = field(default_factory=dict)
    skipped_segments: int = 0

    def rate(self, variant: str, bucket: str) -> float | None:
        return self.cells[(variant, bucket)].rate

    def merge(self, other: "CrReport") -> "CrReport":
        """Pool another report of the same direction and hypothesis kind.

        Frame counts add, which is exactly frame-weighted pooling.
        """
        if (other.direction, other.hyp_kind) != (self.direction, self.hyp_kind):
            raise ValueError(
                f"cannot merge {other.direction}/{other.hyp_kind} into "
                f"{self.direction}/{self.hyp_kind}"
            )
        cells = dict(self.cells)
        for key, cell in other.cells.items():
            cells[key] = cells[key] + cell if key in cells else cell
        return CrReport(
            direction=self.direction,
            hyp_kind=self.hyp_kind,
            cells=cells,
            skipped_segments=self.skipped_segments + other.skipped_segments,
        )

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "hyp_kind": self.hyp_kind,
            "cells": [
                {
                    "bucket": bucket,
                    "variant": variant,
                    "num": cell.num,
                    "den": cell.den,
                    "rate": cell.rate,
                }
                for (variant, bucket) in sorted(self.cells)
                for cell in [self.cells[(variant, bucket)]]
            ],
            "skipped_segments": self.skipped_segments,
        }


@dataclass
class SessionFrames:
    """Everything leakage_report needs to rasterize one session.

    Attributes:
        segments: Diarized or oracle segments; each is analyzed on its own
            channel as primary.
        spoken: Per channel, the aligned reference words of the speech
            assigned to that stream, with true timings. Leaked audio never
            shows up here; it shows up in the recognition side instead.
        one_best: Per (segment index, channel), recognition output words for
            that segment's window on that channel.
        lattices: Per (segment index, channel), recognition lattices. May be
            empty when only WCR is wanted.
        activity: Reference speaker activity intervals for bucketing.
        grid: The frame grid everything is rasterized on.
    """

    segments: Sequence[Segment]
    spoken: Mapping[int, Sequence[WordToken]]
    one_best: Mapping[tuple[int, int], Sequence[WordToken]]
    lattices: Mapping[tuple[int, int], Lattice]
    activity: Sequence[tuple[str, float, float]]
    grid: FrameGrid


def _words_in_window(
    words: Sequence[WordToken], window: Segment
) -> list[WordToken]:
    return [w for w in words if w.end > window.start and w.start < window.end]


def leakage_report(session: SessionFrames, direction: str, hyp_kind: str) -> CrReport:
    """Pool coincidence counts over all segments of a session.

    For each segment the primary channel is the segment's own channel and
    the cross channel is the other stream over the same window. Segments
    lacking the needed hypothesis or lattice are skipped with a warning and
    counted in the report.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    if hyp_kind not in HYP_KINDS:
        raise ValueError(f"unknown hyp_kind {hyp_kind!r}")
    cells = {(v, b): CrCell() for v in VARIANTS for b in BUCKETS}
    skipped = 0
    for idx, seg in enumerate(session.segments):
        own = seg.channel
        other = cross_channel(own)
        spoken_channel = own if direction == "primary_to_cross" else other
        hyp_channel = other if direction == "primary_to_cross" else own
        spoken_words = _words_in_window(
            list(session.spoken.get(spoken_channel, ())), seg
        )
        spoken_side = rasterize_alignment(spoken_words, session.grid, seg)
        if hyp_kind == "one_best":
            hyp = session.one_best.get((idx, hyp_channel))
            if hyp is None:
                warnings.warn(
                    f"segment {idx}: no one-best hypothesis on channel "
                    f"{hyp_channel}, skipping",
                    stacklevel=2,
                )
                skipped += 1
                continue
            hyp_side = rasterize_alignment(
                _words_in_window(list(hyp), seg), session.grid, seg
            )
        else:
            lat = session.lattices.get((idx, hyp_channel))
            if lat is None:
                warnings.warn(
                    f"segment {idx}: no lattice on channel {hyp_channel}, skipping",
                    stacklevel=2,
                )
                skipped += 1
                continue
            hyp_side = rasterize_lattice(lat, session.grid, seg)
        if direction == "primary_to_cross":
            primary_side, cross_side = spoken_side, hyp_side
        else:
            primary_side, cross_side = hyp_side, spoken_side
        counts = active_speaker_counts(session.activity, session.grid, seg)
        for variant in VARIANTS:
            for bucket in BUCKETS:
                cells[(variant, bucket)] = cells[(variant, bucket)] + coincidence_rate(
                    primary_side, cross_side, counts, variant, bucket
                )
    return CrReport(
        direction=direction, hyp_kind=hyp_kind, cells=cells, skipped_segments=skipped
    )
