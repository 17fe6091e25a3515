"""Segmentation error taxonomy and oracle-informed repairs.

Four error kinds are classified by comparing a hypothesis segmentation
against an oracle one on the same two-channel session:

* ``leak``: a hypothesis segment that sits on the wrong stream; it barely
  overlaps same-channel oracle speech but substantially overlaps speech the
  oracle places on the other channel.
* ``missing``: a stretch of oracle speech no same-channel hypothesis
  segment covers.
* ``merge``: one hypothesis segment swallowing several oracle segments.
* ``boundary``: a one-to-one matched segment whose endpoints deviate
  slightly.

Each kind has a repair that uses the oracle: delete, insert, split at gap
midpoints, snap endpoints. Repairs are meant for ablations (how much does
each error kind cost?) so they are applied one kind at a time or in a fixed
canonical order, re-classifying between passes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from meetlab.core import Segment, cross_channel

FIX_KINDS = ("leak", "missing", "merge", "boundary")

#: Order used by plans covering several kinds. Deletions and splits first so
#: later snapping and insertion work on segments that are at least on the
#: right stream, insertion last so nothing inserted is re-split.
_APPLY_ORDER = ("leak", "merge", "boundary", "missing")

_EPS = 1e-9


@dataclass(frozen=True)
class FixPlan:
    """Which kinds to repair and the classification tolerances."""

    kinds: tuple[str, ...] = FIX_KINDS
    leak_overlap: float = 0.2
    coverage: float = 0.9
    snap: float = 0.5
    min_speech: float = 0.2

    def __post_init__(self) -> None:
        if not isinstance(self.kinds, tuple):
            object.__setattr__(self, "kinds", tuple(self.kinds))
        unknown = set(self.kinds) - set(FIX_KINDS)
        if unknown:
            raise ValueError(f"unknown fix kinds: {sorted(unknown)}")
        if not 0 < self.leak_overlap < 1:
            raise ValueError(f"leak_overlap must be in (0, 1), got {self.leak_overlap}")
        if not 0 < self.coverage <= 1:
            raise ValueError(f"coverage must be in (0, 1], got {self.coverage}")
        if self.snap < 0:
            raise ValueError(f"snap must be >= 0, got {self.snap}")
        if self.min_speech < 0:
            raise ValueError(f"min_speech must be >= 0, got {self.min_speech}")


@dataclass(frozen=True)
class SegError:
    """One classified error.

    ``hyp_index`` / ``oracle_index`` point into the segment lists handed to
    :func:`classify_errors`; either may be None when the kind implicates
    only one side. ``span`` carries the affected time range for kinds where
    it is not simply a whole segment (missing runs).
    """

    kind: str
    hyp_index: int | None = None
    oracle_index: int | None = None
    span: tuple[float, float] | None = None


def _overlap(a: Segment, b: Segment) -> float:
    return max(0.0, min(a.end, b.end) - max(a.start, b.start))


def _uncovered_spans(oracle_seg: Segment, covers: Sequence[Segment]) -> list[tuple[float, float]]:
    """Maximal sub-spans of ``oracle_seg`` touched by none of ``covers``."""
    spans = [(oracle_seg.start, oracle_seg.end)]
    for cov in sorted(covers, key=lambda s: s.start):
        next_spans = []
        for s, e in spans:
            if cov.end <= s or cov.start >= e:
                next_spans.append((s, e))
                continue
            if cov.start > s:
                next_spans.append((s, cov.start))
            if cov.end < e:
                next_spans.append((cov.end, e))
        spans = next_spans
    return [(s, e) for s, e in spans if e - s > _EPS]


def classify_errors(
    hyp_segs: Sequence[Segment],
    oracle_segs: Sequence[Segment],
    plan: FixPlan | None = None,
) -> list[SegError]:
    """Classify every error instance; empty inputs give an empty list.

    The four definitions are independent, so one segment can appear in more
    than one error (a leaked segment may also look like a boundary match on
    a short overlap); repairs re-classify between passes, which resolves
    such overlaps in canonical order.
    """
    plan = plan or FixPlan()
    errors: list[SegError] = []

    for i, seg in enumerate(hyp_segs):
        own = sum(_overlap(seg, o) for o in oracle_segs if o.channel == seg.channel)
        other = sum(
            _overlap(seg, o)
            for o in oracle_segs
            if o.channel == cross_channel(seg.channel)
        )
        threshold = plan.leak_overlap * seg.duration
        if own < threshold - _EPS and other >= threshold - _EPS:
            errors.append(SegError(kind="leak", hyp_index=i))

    for j, oracle in enumerate(oracle_segs):
        covers = [s for s in hyp_segs if s.channel == oracle.channel]
        for s, e in _uncovered_spans(oracle, covers):
            if e - s >= plan.min_speech - _EPS:
                errors.append(
                    SegError(kind="missing", oracle_index=j, span=(s, e))
                )

    for i, seg in enumerate(hyp_segs):
        swallowed = [
            o
            for o in oracle_segs
            if o.channel == seg.channel
            and _overlap(seg, o) >= plan.min_speech - _EPS
        ]
        if len(swallowed) >= 2:
            errors.append(SegError(kind="merge", hyp_index=i))

    # Mutual-best matching for boundary deviations.
    best_for_hyp: dict[int, int] = {}
    for i, seg in enumerate(hyp_segs):
        cands = [
            (j, _overlap(seg, o))
            for j, o in enumerate(oracle_segs)
            if o.channel == seg.channel and _overlap(seg, o) > 0
        ]
        if cands:
            best_for_hyp[i] = max(cands, key=lambda c: (c[1], -c[0]))[0]
    best_for_oracle: dict[int, int] = {}
    for j, o in enumerate(oracle_segs):
        cands = [
            (i, _overlap(hyp_segs[i], o))
            for i in range(len(hyp_segs))
            if hyp_segs[i].channel == o.channel and _overlap(hyp_segs[i], o) > 0
        ]
        if cands:
            best_for_oracle[j] = max(cands, key=lambda c: (c[1], -c[0]))[0]
    for i, j in best_for_hyp.items():
        if best_for_oracle.get(j) != i:
            continue
        seg, oracle = hyp_segs[i], oracle_segs[j]
        shorter = min(seg.duration, oracle.duration)
        if _overlap(seg, oracle) < plan.coverage * shorter - _EPS:
            continue
        deviation = max(abs(seg.start - oracle.start), abs(seg.end - oracle.end))
        if _EPS < deviation <= plan.snap + _EPS:
            errors.append(SegError(kind="boundary", hyp_index=i, oracle_index=j))

    rank = {kind: r for r, kind in enumerate(FIX_KINDS)}
    errors.sort(
        key=lambda e: (
            rank[e.kind],
            e.hyp_index if e.hyp_index is not None else -1,
            e.oracle_index if e.oracle_index is not None else -1,
            e.span or (0.0, 0.0),
        )
    )
    return errors


def classification_report(
    hyp_segs: Sequence[Segment],
    oracle_segs: Sequence[Segment],
    plan: FixPlan | None = None,
) -> dict:
    """Per-kind counts and implicated durations, JSON-ready."""
    errors = classify_errors(hyp_segs, oracle_segs, plan)
    report = {
        kind: {"count": 0, "duration": 0.0} for kind in FIX_KINDS
    }
    for err in errors:
        entry = report[err.kind]
        entry["count"] += 1
        if err.span is not None:
            entry["duration"] += err.span[1] - err.span[0]
        elif err.hyp_index is not None:
            entry["duration"] += hyp_segs[err.hyp_index].duration
    for entry in report.values():
        entry["duration"] = round(entry["duration"], 6)
    return report


# ---------------------------------------------------------------------------
# repairs

def _fix_leak(
    hyp_segs: Sequence[Segment], errors: Sequence[SegError]
) -> list[tuple[Segment, bool]]:
    doomed = {e.hyp_index for e in errors if e.kind == "leak"}
    return [(s, False) for i, s in enumerate(hyp_segs) if i not in doomed]


def _fix_merge(
    hyp_segs: Sequence[Segment],
    oracle_segs: Sequence[Segment],
    errors: Sequence[SegError],
) -> list[tuple[Segment, bool]]:
    implicated = {e.hyp_index for e in errors if e.kind == "merge"}
    out: list[tuple[Segment, bool]] = []
    for i, seg in enumerate(hyp_segs):
        if i not in implicated:
            out.append((seg, False))
            continue
        inside = sorted(
            (o for o in oracle_segs if o.channel == seg.channel and _overlap(seg, o) > 0),
            key=lambda o: o.start,
        )
        cuts = []
        for a, b in zip(inside, inside[1:]):
            mid = (a.end + b.start) / 2
            if seg.start + _EPS < mid < seg.end - _EPS:
                cuts.append(mid)
        edges = [seg.start] + cuts + [seg.end]
        out.extend(
            (replace(seg, start=s, end=e), False)
            for s, e in zip(edges, edges[1:])
            if e - s > _EPS
        )
    return out


def _fix_boundary(
    hyp_segs: Sequence[Segment],
    oracle_segs: Sequence[Segment],
    errors: Sequence[SegError],
) -> list[tuple[Segment, bool]]:
    snap_to: dict[int, int] = {
        e.hyp_index: e.oracle_index
        for e in errors
        if e.kind == "boundary" and e.hyp_index is not None and e.oracle_index is not None
    }
    out: list[tuple[Segment, bool]] = []
    for i, seg in enumerate(hyp_segs):
        if i in snap_to:
            oracle = oracle_segs[snap_to[i]]
            out.append((replace(seg, start=oracle.start, end=oracle.end), True))
        else:
            out.append((seg, False))
    return out


def _fix_missing(
    hyp_segs: Sequence[Segment],
    oracle_segs: Sequence[Segment],
    errors: Sequence[SegError],
) -> list[tuple[Segment, bool]]:
    out: list[tuple[Segment, bool]] = [(s, False) for s in hyp_segs]
    for e in errors:
        if e.kind != "missing" or e.span is None or e.oracle_index is None:
            continue
        oracle = oracle_segs[e.oracle_index]
        s, span_end = e.span
        out.append(
            (
                Segment(
                    channel=oracle.channel, start=s, end=span_end, speaker=oracle.speaker
                ),
                True,
            )
        )
    return out


def _resolve_overlaps(entries: list[tuple[Segment, bool]]) -> list[Segment]:
    """Make each channel disjoint; oracle-derived (pinned) segments win."""
    out: list[Segment] = []
    for channel in (0, 1):
        ordered = sorted(
            (item for item in entries if item[0].channel == channel),
            key=lambda item: (item[0].start, item[0].end),
        )
        kept: list[tuple[Segment, bool]] = []
        for seg, pinned in ordered:
            current: Segment | None = seg
            while kept and current is not None:
                prev, prev_pinned = kept[-1]
                if current.start >= prev.end - _EPS:
                    break
                if pinned and not prev_pinned:
                    if prev.start < current.start - _EPS:
                        kept[-1] = (replace(prev, end=current.start), prev_pinned)
                        break
                    kept.pop()
                    continue
                if prev.end < current.end - _EPS:
                    current = replace(current, start=prev.end)
                else:
                    current = None
                break
            if current is not None:
                kept.append((current, pinned))
        out.extend(s for s, _ in kept)
    return sorted(out, key=lambda s: (s.channel, s.start, s.end))


def apply_fixes(
    hyp_segs: Sequence[Segment],
    oracle_segs: Sequence[Segment],
    plan: FixPlan | None = None,
) -> list[Segment]:
    """Repair the plan's error kinds, one kind per pass in canonical order.

    Each pass re-classifies against the current state, so a repair never
    acts on stale structure (a segment deleted by the leak pass cannot also
    be snapped). Output segments are disjoint per channel and sorted.
    """
    plan = plan or FixPlan()
    current = list(hyp_segs)
    for kind in _APPLY_ORDER:
        if kind not in plan.kinds:
            continue
        errors = [e for e in classify_errors(current, oracle_segs, plan) if e.kind == kind]
        if kind == "leak":
            entries = _fix_leak(current, errors)
        elif kind == "merge":
            entries = _fix_merge(current, oracle_segs, errors)
        elif kind == "boundary":
            entries = _fix_boundary(current, oracle_segs, errors)
        else:
            entries = _fix_missing(current, oracle_segs, errors)
        current = _resolve_overlaps(entries)
    return sorted(current, key=lambda s: (s.channel, s.start, s.end))
