"""Segmentation refinement with speaker embeddings.

Three steps, each usable alone:

1. :func:`split_by_speaker_change` cuts a segment at word boundaries where
   the embedding left of the boundary disagrees with the embedding right of
   it (below a similarity threshold and locally minimal).
2. :func:`cluster_and_label` groups segments into speakers with k-means over
   one embedding per segment.
3. :func:`merge_same_speaker` joins adjacent same-speaker segments whose gap
   is short enough.

Embedding extraction is behind the :class:`EmbeddingProvider` protocol: the
oracle provider synthesizes embeddings from ground-truth speaker activity
(orthonormal prototypes plus Gaussian noise), the spectral provider computes
a crude band-energy signature from real audio. Neither is a trained speaker
model; the refinement logic is the subject here, not the extractor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np

from meetlab.core import AudioBuffer, Segment, WordToken

_EMBED_DIM = 16


class EmbeddingProvider(Protocol):
    def embed(self, channel: int, start: float, end: float) -> np.ndarray:
        """Unit-norm embedding of the window [start, end) on one stream."""
        ...


@dataclass(frozen=True)
class DiarizeParams:
    """Refinement knobs.

    ``k`` is the number of speakers: an integer when known (the usual case
    for benchmark sessions) or the string "estimate" to pick it by
    silhouette score.
    """

    k: "int | str" = 2
    context: float = 3.0
    search_window: float = 4.0
    sim_threshold: float = 0.5
    merge_gap: float = 3.0
    restarts: int = 50
    max_iter: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.context <= 0:
            raise ValueError(f"context must be positive, got {self.context}")
        if self.search_window < self.context:
            raise ValueError(
                f"search_window {self.search_window} must be >= context {self.context}"
            )
        if not -1.0 <= self.sim_threshold <= 1.0:
            raise ValueError(
                f"sim_threshold must be in [-1, 1], got {self.sim_threshold}"
            )
        if self.merge_gap < 0:
            raise ValueError(f"merge_gap must be >= 0, got {self.merge_gap}")
        if isinstance(self.k, str):
            if self.k != "estimate":
                raise ValueError(f"k must be a positive int or 'estimate', got {self.k!r}")
        elif self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.restarts < 1 or self.max_iter < 1:
            raise ValueError("restarts and max_iter must be >= 1")


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


class OracleEmbedder:
    """Synthesizes embeddings from known speaker activity.

    Each speaker gets an orthonormal prototype vector. The embedding of a
    window is the duration-weighted mixture of the prototypes of whoever
    speaks inside it on that channel (a dedicated silence prototype when
    nobody does), plus Gaussian noise, normalized. The weighting matters: a
    window lying mostly in speaker A with a sliver of B lands near A's
    prototype, so similarities degrade smoothly with boundary distance and
    the true change point is a strict similarity minimum.

    Deterministic: the noise is drawn from a generator keyed on the seed and
    the window, so the same query always returns the same vector.
    """

    def __init__(
        self,
        activity: Sequence[tuple[str, int, float, float]],
        noise: float = 0.01,
        seed: int = 0,
        dim: int = _EMBED_DIM,
    ) -> None:
        """Args:
            activity: (speaker, channel, start, end) ground-truth intervals.
            noise: Gaussian noise scale added before normalization.
            seed: Base seed; all draws derive from it.
            dim: Embedding dimension; must fit all speakers plus silence.
        """
        self._activity = list(activity)
        self._noise = float(noise)
        self._seed = int(seed)
        speakers = sorted({a[0] for a in self._activity})
        if len(speakers) + 1 > dim:
            raise ValueError(
                f"dim={dim} too small for {len(speakers)} speakers plus silence"
            )
        rng = np.random.default_rng([self._seed, 97])
        basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        self._prototypes = {spk: basis[:, i] for i, spk in enumerate(speakers)}
        self._silence = basis[:, len(speakers)]
        self._dim = dim

    def prototype(self, speaker: str) -> np.ndarray:
        return self._prototypes[speaker].copy()

    def embed(self, channel: int, start: float, end: float) -> np.ndarray:
        if end <= start:
            raise ValueError(f"empty window [{start}, {end})")
        weights: dict[str, float] = {}
        for spk, chan, a_start, a_end in self._activity:
            if chan != channel:
                continue
            ov = min(end, a_end) - max(start, a_start)
            if ov > 0:
                weights[spk] = weights.get(spk, 0.0) + ov
        total = sum(weights.values())
        if total == 0.0:
            mix = self._silence.copy()
        else:
            mix = np.zeros(self._dim)
            for spk, w in weights.items():
                mix += (w / total) * self._prototypes[spk]
        rng = np.random.default_rng(
            [self._seed, channel, round(start * 1000), round(end * 1000)]
        )
        return _unit(mix + self._noise * rng.standard_normal(self._dim))


class SpectralEmbedder:
    """Crude band-energy signature from real audio; demo quality only."""

    def __init__(self, streams: AudioBuffer, bands: int = 8) -> None:
        if bands < 2:
            raise ValueError(f"need at least 2 bands, got {bands}")
        self._streams = streams
        self._bands = bands

    def embed(self, channel: int, start: float, end: float) -> np.ndarray:
        window = self._streams.time_slice(start, end)[:, channel]
        if len(window) < 2 * self._bands:
            raise ValueError(
                f"window [{start:.3f}, {end:.3f}) too short to embed"
            )
        power = np.square(np.abs(np.fft.rfft(window)))
        edges = np.linspace(0, len(power), self._bands + 1).astype(int)
        feats = np.array(
            [math.log(power[a:b].sum() + 1e-12) for a, b in zip(edges, edges[1:])]
        )
        feats = feats - feats.mean()
        norm = float(np.linalg.norm(feats))
        if norm == 0.0:
            raise ValueError("window has no spectral contrast")
        return feats / norm


# ---------------------------------------------------------------------------
# step 1: splitting at speaker changes

def split_by_speaker_change(
    segment: Segment,
    words: Sequence[WordToken],
    provider: EmbeddingProvider,
    params: DiarizeParams | None = None,
) -> list[Segment]:
    """Cut ``segment`` where the speaker audibly changes between words.

    Every boundary between consecutive words is scored by the cosine
    similarity of the embeddings over [b - context, b) and [b, b + context),
    both clipped to the segment. A boundary splits when its similarity is
    below ``sim_threshold`` and is the strict minimum among all boundaries
    within ``search_window / 2`` on either side (ties go to the earlier
    boundary). Segments with fewer than two words come back unchanged.
    """
    params = params or DiarizeParams()
    if len(words) < 2:
        return [segment]
    ordered = sorted(words, key=lambda w: (w.start, w.end))
    boundaries = [
        cur.start
        for prev, cur in zip(ordered, ordered[1:])
        if segment.start < cur.start < segment.end
    ]
    if not boundaries:
        return [segment]
    sims = []
    for b in boundaries:
        left = provider.embed(segment.channel, max(segment.start, b - params.context), b)
        right = provider.embed(segment.channel, b, min(segment.end, b + params.context))
        sims.append(cosine_similarity(left, right))
    half = params.search_window / 2
    cuts = []
    for i, (b, sim) in enumerate(zip(boundaries, sims)):
        if sim >= params.sim_threshold:
            continue
        minimal = True
        for j, (other_b, other_sim) in enumerate(zip(boundaries, sims)):
            if j == i or abs(other_b - b) > half:
                continue
            if other_sim < sim or (other_sim == sim and j < i):
                minimal = False
                break
        if minimal:
            cuts.append(b)
    edges = [segment.start] + cuts + [segment.end]
    return [
        replace(segment, start=s, end=e) for s, e in zip(edges, edges[1:]) if e > s
    ]


# ---------------------------------------------------------------------------
# step 2: clustering

def _kmeans_once(
    points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int
) -> tuple[np.ndarray, float]:
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum(np.square(points - centers[0]), axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total == 0.0:
            centers[c] = points[rng.integers(n)]
        else:
            centers[c] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum(np.square(points - centers[c]), axis=1))
    for _ in range(max_iter):
        dists = np.sum(
            np.square(points[:, np.newaxis, :] - centers[np.newaxis, :, :]), axis=2
        )
        labels = np.argmin(dists, axis=1)
        new_centers = centers.copy()
        for c in range(k):
            members = points[labels == c]
            if len(members):
                new_centers[c] = members.mean(axis=0)
            else:
                # Reseed a starved cluster to the point served worst.
                worst = int(np.argmax(np.min(dists, axis=1)))
                new_centers[c] = points[worst]
        if np.allclose(new_centers, centers):
            centers = new_centers
            break
        centers = new_centers
    dists = np.sum(
        np.square(points[:, np.newaxis, :] - centers[np.newaxis, :, :]), axis=2
    )
    labels = np.argmin(dists, axis=1)
    inertia = float(np.sum(dists[np.arange(n), labels]))
    return labels, inertia


def cluster_speakers(
    points: np.ndarray, k: int, restarts: int = 50, max_iter: int = 100, seed: int = 0
) -> np.ndarray:
    """k-means labels, deterministic for a given seed.

    Runs ``restarts`` k-means++ initializations and keeps the lowest
    (inertia, restart index) result; labels are renumbered in order of first
    appearance so the output does not depend on initialization internals.
    Degenerate inputs (fewer distinct points than clusters) still produce k
    non-empty clusters: surplus members are peeled off the largest cluster
    in input order.
    """
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be in [1, {n}]")
    best: tuple[float, int, np.ndarray] | None = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, 11, r])
        labels, inertia = _kmeans_once(points, k, rng, max_iter)
        if best is None or (inertia, r) < (best[0], best[1]):
            best = (inertia, r, labels)
    assert best is not None
    labels = best[2].copy()
    for c in range(k):
        if not np.any(labels == c):
            counts = np.bincount(labels, minlength=k)
            donor = int(np.argmax(counts))
            movable = np.flatnonzero(labels == donor)
            labels[movable[-1]] = c
    remap: dict[int, int] = {}
    out = np.empty(n, dtype=np.int64)
    for i, lab in enumerate(labels):
        remap.setdefault(int(lab), len(remap))
        out[i] = remap[int(lab)]
    return out


def _silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    n = len(points)
    dists = np.sqrt(
        np.sum(np.square(points[:, np.newaxis, :] - points[np.newaxis, :, :]), axis=2)
    )
    score = 0.0
    for i in range(n):
        same = labels == labels[i]
        same[i] = False
        a = dists[i, same].mean() if same.any() else 0.0
        b = math.inf
        for c in set(labels.tolist()):
            if c == labels[i]:
                continue
            others = labels == c
            b = min(b, dists[i, others].mean())
        denom = max(a, b)
        score += 0.0 if denom == 0 else (b - a) / denom
    return score / n


def estimate_num_speakers(
    points: np.ndarray, upper: int = 8, restarts: int = 10, seed: int = 0
) -> int:
    """Silhouette-score sweep over k; returns the best k in [2, upper]."""
    upper = min(upper, len(points) - 1)
    if upper < 2:
        return 1
    best_k, best_score = 2, -math.inf
    for k in range(2, upper + 1):
        labels = cluster_speakers(points, k, restarts=restarts, seed=seed)
        score = _silhouette(points, labels)
        if score > best_score + 1e-12:
            best_k, best_score = k, score
    return best_k


def cluster_and_label(
    segments: Sequence[Segment],
    provider: EmbeddingProvider,
    params: DiarizeParams | None = None,
) -> list[Segment]:
    """Assign speaker labels to segments by clustering their embeddings.

    Each segment is embedded over its whole window. Segments too short for
    the provider to embed borrow the label of the nearest embeddable
    segment (by midpoint distance). Labels are "spk0", "spk1", ... in order
    of first appearance.

    Raises:
        ValueError: If k exceeds the number of embeddable segments, or
            nothing can be embedded at all.
    """
    params = params or DiarizeParams()
    if not segments:
        return []
    embedded: list[tuple[int, np.ndarray]] = []
    failed: list[int] = []
    for i, seg in enumerate(segments):
        try:
            embedded.append((i, provider.embed(seg.channel, seg.start, seg.end)))
        except ValueError:
            failed.append(i)
    if not embedded:
        raise ValueError("no segment was long enough to embed")
    points = np.stack([e for _, e in embedded])
    if params.k == "estimate":
        k = estimate_num_speakers(points, seed=params.seed)
    else:
        k = int(params.k)
    if k > len(embedded):
        raise ValueError(f"k={k} exceeds the {len(embedded)} embeddable segments")
    labels = cluster_speakers(
        points, k, restarts=params.restarts, max_iter=params.max_iter, seed=params.seed
    )
    out: list[Segment | None] = [None] * len(segments)
    for (i, _), lab in zip(embedded, labels):
        out[i] = replace(segments[i], speaker=f"spk{int(lab)}")
    for i in failed:
        mid = (segments[i].start + segments[i].end) / 2
        nearest = min(
            (j for j, _ in embedded),
            key=lambda j: (abs((segments[j].start + segments[j].end) / 2 - mid), j),
        )
        out[i] = replace(segments[i], speaker=out[nearest].speaker)
    return [seg for seg in out if seg is not None]


# ---------------------------------------------------------------------------
# step 3: merging

def merge_same_speaker(
    segments: Sequence[Segment], params: DiarizeParams | None = None
) -> list[Segment]:
    """Join same-channel same-speaker segments separated by short gaps.

    Chains merge transitively (a-b merged, then checked against c), which
    is the fixpoint of repeated pairwise merging; the result is idempotent
    under re-application. Gap exactly equal to ``merge_gap`` still merges.
    """
    params = params or DiarizeParams()
    groups: dict[tuple[int, str | None], list[Segment]] = {}
    for seg in segments:
        groups.setdefault((seg.channel, seg.speaker), []).append(seg)
    out: list[Segment] = []
    for (_, _), group in groups.items():
        group = sorted(group, key=lambda s: (s.start, s.end))
        current = group[0]
        for seg in group[1:]:
            if seg.start - current.end <= params.merge_gap:
                current = replace(current, end=max(current.end, seg.end))
            else:
                out.append(current)
                current = seg
        out.append(current)
    return sorted(out, key=lambda s: (s.channel, s.start, s.end))


def diarize_segments(
    segments: Sequence[Segment],
    words: Sequence[Sequence[WordToken]],
    provider: EmbeddingProvider,
    params: DiarizeParams | None = None,
) -> list[Segment]:
    """Split, cluster and merge in one call.

    ``words[i]`` are the recognized words of ``segments[i]``, used only for
    split candidate boundaries.
    """
    params = params or DiarizeParams()
    if len(words) != len(segments):
        raise ValueError("need one word list per segment")
    pieces: list[Segment] = []
    for seg, segment_words in zip(segments, words):
        pieces.extend(split_by_speaker_change(seg, segment_words, provider, params))
    pieces.sort(key=lambda s: (s.channel, s.start, s.end))
    labeled = cluster_and_label(pieces, provider, params)
    return merge_same_speaker(labeled, params)
