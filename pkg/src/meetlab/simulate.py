"""Synthetic two-channel meetings with exact ground truth.

Everything downstream of separation is testable against known quantities if
the meetings themselves are synthetic: utterances are placed on an integer
frame grid, words are fixed-length tones, and leakage between the two
streams is injected on purpose with an exact per-frame ledger. No acoustics
are modeled; the audio only needs enough energy structure for the VAD,
stitcher and SDR selector to chew on.

The timeline invariant throughout: at most two speakers are simultaneously
active, and overlapping utterances sit on opposite channels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from meetlab.core import (
    DEFAULT_FRAME_RATE,
    AudioBuffer,
    FrameGrid,
    Segment,
    Utterance,
    WordToken,
    cross_channel,
)
from meetlab.formats import (
    Lattice,
    LatticeArc,
    read_wav,
    write_lattice,
    read_lattice,
    write_rttm,
    write_seglst,
    write_ctm,
    write_wav,
)
from meetlab.metrics import SpeakerTranscript

_WORD_AMP = 0.3
_RAMP = 0.005
_BASE_FREQ = 300.0
_FREQ_STEP = 180.0
_LEAD_IN_FRAMES = 50
_TAIL_FRAMES = 50


class SimulationError(RuntimeError):
    """Raised when no timeline satisfying the MeetingSpec is found."""


@dataclass(frozen=True)
class MeetingSpec:
    """What to generate. All randomness derives from ``seed``."""

    session_id: str = "session0"
    num_speakers: int = 2
    num_utterances: int = 10
    utterance_words: tuple[int, int] = (3, 8)
    word_duration: float = 0.4
    vocab_size: int = 50
    shared_vocab: bool = False
    overlap_ratio: float = 0.0
    overlap_tol: float = 0.05
    gap_range: tuple[float, float] = (0.7, 1.6)
    min_channel_gap: float = 0.7
    sample_rate: int = 8000
    seed: int = 0
    max_attempts: int = 80

    def __post_init__(self) -> None:
        if self.num_speakers < 1:
            raise ValueError(f"num_speakers must be >= 1, got {self.num_speakers}")
        if self.num_utterances < 1:
            raise ValueError(f"num_utterances must be >= 1, got {self.num_utterances}")
        lo, hi = self.utterance_words
        if not 1 <= lo <= hi:
            raise ValueError(f"bad utterance_words range {self.utterance_words}")
        if not 0 <= self.overlap_ratio < 1:
            raise ValueError(
                f"overlap_ratio must be in [0, 1), got {self.overlap_ratio}"
            )
        if self.overlap_ratio > 0 and self.num_speakers < 2:
            raise ValueError("overlap needs at least 2 speakers")
        if self.sample_rate % DEFAULT_FRAME_RATE != 0:
            raise ValueError(
                f"sample_rate must be a multiple of {DEFAULT_FRAME_RATE} "
                "so frame edges land on samples"
            )
        frames = self.word_duration * DEFAULT_FRAME_RATE
        if abs(frames - round(frames)) > 1e-9 or round(frames) < 1:
            raise ValueError(
                f"word_duration {self.word_duration} must be a positive "
                "whole number of frames"
            )
        if self.gap_range[0] < 0 or self.gap_range[0] > self.gap_range[1]:
            raise ValueError(f"bad gap_range {self.gap_range}")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")


@dataclass(frozen=True)
class LeakSpec:
    """How much single-speaker audio crosses to the other stream."""

    copy_prob: float = 0.0
    move_prob: float = 0.0
    leak_gain: float = 0.5

    def __post_init__(self) -> None:
        if self.copy_prob < 0 or self.move_prob < 0:
            raise ValueError("leak probabilities must be >= 0")
        if self.copy_prob + self.move_prob > 1:
            raise ValueError(
                f"copy_prob + move_prob must be <= 1, got "
                f"{self.copy_prob} + {self.move_prob}"
            )
        if not 0 < self.leak_gain <= 1:
            raise ValueError(f"leak_gain must be in (0, 1], got {self.leak_gain}")


@dataclass(frozen=True)
class LeakEvent:
    """One word whose audio and label crossed streams."""

    word: WordToken
    mode: str  # "copy" or "move"
    source: int
    target: int
    start_frame: int
    end_frame: int


@dataclass(frozen=True)
class LeakLedger:
    events: tuple[LeakEvent, ...] = ()

    @property
    def num_frames(self) -> int:
        return sum(e.end_frame - e.start_frame for e in self.events)

    def frames_on_target(self, channel: int) -> set[int]:
        out: set[int] = set()
        for e in self.events:
            if e.target == channel:
                out.update(range(e.start_frame, e.end_frame))
        return out


@dataclass
class MeetingTruth:
    """A generated session with every layer of ground truth.

    ``alignments`` holds each channel's reference words (what the channel's
    assigned speakers said, with true timings); it never changes when
    leakage is injected. ``stream_words`` holds what is physically audible
    on each stream and gains leaked copies; recognition is simulated from
    it.
    """

    spec: MeetingSpec
    utterances: tuple[Utterance, ...]
    segments: tuple[Segment, ...]
    alignments: dict[int, tuple[WordToken, ...]]
    stream_words: dict[int, tuple[WordToken, ...]]
    clean: dict[str, AudioBuffer]
    streams: AudioBuffer
    ledger: LeakLedger
    num_frames: int

    @property
    def grid(self) -> FrameGrid:
        return FrameGrid(frame_rate=DEFAULT_FRAME_RATE, num_frames=self.num_frames)

    def transcript(self) -> SpeakerTranscript:
        return SpeakerTranscript(
            session_id=self.spec.session_id, utterances=self.utterances
        )

    def activity(self) -> list[tuple[str, float, float]]:
        return [(u.speaker, u.start, u.end) for u in self.utterances]

    def activity_by_channel(self) -> list[tuple[str, int, float, float]]:
        out = []
        for u in self.utterances:
            assert u.channel is not None
            out.append((u.speaker, u.channel, u.start, u.end))
        return out


def count_active_speakers(
    intervals: Sequence[tuple[str, float, float]], num_frames: int, frame_rate: int
) -> np.ndarray:
    """Per-frame distinct-speaker counts by a deliberately naive loop.

    This is the independent frame counter the rest of the toolkit is
    checked against: one pass per interval, marking each frame whose start
    instant lies inside it, no shared helpers.
    """
    speakers = sorted({name for name, _, _ in intervals})
    marks = np.zeros((len(speakers), num_frames), dtype=bool)
    index = {name: i for i, name in enumerate(speakers)}
    for name, start, end in intervals:
        for f in range(num_frames):
            instant = f / frame_rate
            if start - 1e-9 <= instant < end - 1e-9:
                marks[index[name], f] = True
    return marks.sum(axis=0)


def _speaker_freq(speaker_index: int) -> float:
    return _BASE_FREQ + _FREQ_STEP * speaker_index


def _word_tone(
    start: float, end: float, freq: float, sample_rate: int
) -> tuple[int, np.ndarray]:
    """Tone samples for [start, end) with absolute-time phase and soft edges."""
    n0 = round(start * sample_rate)
    n1 = round(end * sample_rate)
    t = np.arange(n0, n1) / sample_rate
    env = np.minimum(1.0, np.minimum((t - start) / _RAMP, (end - t) / _RAMP))
    env = np.maximum(env, 0.0)
    return n0, _WORD_AMP * env * np.sin(2 * math.pi * freq * t)


def tone_frame_energy(spec: MeetingSpec, frame_len: float = 0.025) -> float:
    """Energy of one fully voiced VAD frame, for choosing energy floors."""
    return (_WORD_AMP**2 / 2) * frame_len * spec.sample_rate


@dataclass
class _Placement:
    speaker: int
    channel: int
    start_frame: int
    end_frame: int
    num_words: int


def _plan_timeline(spec: MeetingSpec, attempt: int) -> list[_Placement] | None:
    rate = DEFAULT_FRAME_RATE
    rng = np.random.default_rng([spec.seed, 5, attempt])
    word_frames = round(spec.word_duration * rate)
    gap_lo = round(spec.gap_range[0] * rate)
    gap_hi = round(spec.gap_range[1] * rate)
    chan_gap = round(spec.min_channel_gap * rate)
    placements: list[_Placement] = []
    last_end = [0, 0]
    prev_end = _LEAD_IN_FRAMES
    prev_prev_end = 0
    prev_channel = 1
    prev_speaker = -1
    speech = overlap = 0
    for i in range(spec.num_utterances):
        n_words = int(rng.integers(spec.utterance_words[0], spec.utterance_words[1] + 1))
        length = n_words * word_frames
        want_overlap = (
            spec.overlap_ratio > 0
            and i > 0
            and (overlap / speech if speech else 0.0) < spec.overlap_ratio
        )
        if want_overlap:
            channel = cross_channel(prev_channel)
            max_ov = min(length, prev_end - prev_prev_end) - 1
            if max_ov >= 1:
                ov = int(rng.integers(1, max_ov + 1))
                start = max(
                    prev_end - ov, prev_prev_end, last_end[channel] + chan_gap
                )
            else:
                start = max(prev_end, prev_prev_end, last_end[channel] + chan_gap)
            choices = [s for s in range(spec.num_speakers) if s != prev_speaker]
            speaker = int(rng.choice(choices))
        else:
            gap = int(rng.integers(gap_lo, gap_hi + 1))
            channel = 0 if last_end[0] <= last_end[1] else 1
            start = max(prev_end + gap, last_end[channel] + chan_gap)
            speaker = int(rng.integers(spec.num_speakers))
        end = start + length
        placements.append(
            _Placement(
                speaker=speaker,
                channel=channel,
                start_frame=start,
                end_frame=end,
                num_words=n_words,
            )
        )
        overlap += max(0, min(prev_end, end) - start)
        speech += length - max(0, min(prev_end, end) - start)
        # Conservative: the next utterance may only reach back past the old
        # frontier, which caps simultaneous speakers at two.
        prev_prev_end = prev_end
        prev_end = max(prev_end, end)
        last_end[channel] = end
        prev_channel = channel
        prev_speaker = speaker
    measured = overlap / speech if speech else 0.0
    if abs(measured - spec.overlap_ratio) <= spec.overlap_tol:
        return placements
    return None


def _vocab(spec: MeetingSpec) -> dict[int, list[str]]:
    if spec.shared_vocab:
        words = [f"w{k:03d}" for k in range(spec.vocab_size)]
        return {s: words for s in range(spec.num_speakers)}
    return {
        s: [f"s{s}w{k:03d}" for k in range(spec.vocab_size)]
        for s in range(spec.num_speakers)
    }


def gen_meeting(spec: MeetingSpec) -> MeetingTruth:
    """Place utterances, synthesize audio, return the full truth bundle.

    The timeline targets ``overlap_ratio`` (overlapped speech over total
    speech) within ``overlap_tol``; placement retries with fresh randomness
    until a timeline verifies against the independent frame counter.

    Raises:
        SimulationError: When no attempt lands inside the tolerance.
    """
    rate = DEFAULT_FRAME_RATE
    vocab = _vocab(spec)
    placements = None
    for attempt in range(spec.max_attempts):
        candidate = _plan_timeline(spec, attempt)
        if candidate is None:
            continue
        num_frames = max(p.end_frame for p in candidate) + _TAIL_FRAMES
        intervals = [
            (f"spk{p.speaker}", p.start_frame / rate, p.end_frame / rate)
            for p in candidate
        ]
        counts = count_active_speakers(intervals, num_frames, rate)
        if counts.max(initial=0) > 2:
            continue
        speech = int((counts >= 1).sum())
        over = int((counts >= 2).sum())
        measured = over / speech if speech else 0.0
        if abs(measured - spec.overlap_ratio) <= spec.overlap_tol:
            placements = candidate
            break
    if placements is None:
        raise SimulationError(
            f"no timeline hit overlap {spec.overlap_ratio} +- {spec.overlap_tol} "
            f"in {spec.max_attempts} attempts"
        )

    num_frames = max(p.end_frame for p in placements) + _TAIL_FRAMES
    num_samples = num_frames * (spec.sample_rate // rate)
    word_frames = round(spec.word_duration * rate)
    rng_words = np.random.default_rng([spec.seed, 3])

    utterances: list[Utterance] = []
    segments: list[Segment] = []
    alignments: dict[int, list[WordToken]] = {0: [], 1: []}
    clean = {
        f"spk{s}": np.zeros(num_samples, dtype=np.float64)
        for s in range(spec.num_speakers)
    }
    streams = np.zeros((num_samples, 2), dtype=np.float64)

    for p in placements:
        speaker = f"spk{p.speaker}"
        texts = [
            vocab[p.speaker][int(rng_words.integers(len(vocab[p.speaker])))]
            for _ in range(p.num_words)
        ]
        words = []
        for w, text in enumerate(texts):
            start = (p.start_frame + w * word_frames) / rate
            token = WordToken(
                text=text,
                start=start,
                duration=spec.word_duration,
                speaker=speaker,
                channel=p.channel,
            )
            words.append(token)
            n0, tone = _word_tone(start, token.end, _speaker_freq(p.speaker), spec.sample_rate)
            clean[speaker][n0 : n0 + len(tone)] += tone
            streams[n0 : n0 + len(tone), p.channel] += tone
        start_t = p.start_frame / rate
        end_t = p.end_frame / rate
        utterances.append(
            Utterance(
                speaker=speaker,
                words=tuple(t.text for t in words),
                start=start_t,
                end=end_t,
                session_id=spec.session_id,
                channel=p.channel,
            )
        )
        segments.append(
            Segment(channel=p.channel, start=start_t, end=end_t, speaker=speaker)
        )
        alignments[p.channel].extend(words)

    for chan in (0, 1):
        alignments[chan].sort(key=lambda t: (t.start, t.end))
    return MeetingTruth(
        spec=spec,
        utterances=tuple(utterances),
        segments=tuple(segments),
        alignments={c: tuple(ws) for c, ws in alignments.items()},
        stream_words={c: tuple(ws) for c, ws in alignments.items()},
        clean={
            s: AudioBuffer(samples=buf, sample_rate=spec.sample_rate)
            for s, buf in clean.items()
        },
        streams=AudioBuffer(samples=streams, sample_rate=spec.sample_rate),
        ledger=LeakLedger(),
        num_frames=num_frames,
    )


def single_active_words(truth: MeetingTruth) -> list[WordToken]:
    """Words every frame of which has exactly one active speaker."""
    counts = count_active_speakers(
        truth.activity(), truth.num_frames, DEFAULT_FRAME_RATE
    )
    out = []
    for chan in (0, 1):
        for word in truth.alignments[chan]:
            frames = truth.grid.covering_frames(word.start, word.end)
            if len(frames) and all(counts[f] == 1 for f in frames):
                out.append(word)
    return sorted(out, key=lambda w: (w.start, w.channel or 0))


def inject_leakage(truth: MeetingTruth, leak: LeakSpec, seed: int = 0) -> MeetingTruth:
    """Copy or move single-speaker words onto the other stream.

    Per eligible word one uniform draw decides copy (audio scaled by
    ``leak_gain`` added to the cross stream, label added to the cross
    stream's word list), move (same, plus removal from the source stream),
    or nothing. Alignments are left untouched: what each speaker said does
    not change because the audio ended up elsewhere. The returned ledger
    records every event with exact frame spans.
    """
    if leak.copy_prob == 0 and leak.move_prob == 0:
        return replace(truth, ledger=LeakLedger())
    rng = np.random.default_rng([seed, 7])
    original = truth.streams.samples.copy()
    new_streams = truth.streams.samples.copy()
    stream_words = {c: list(truth.stream_words[c]) for c in (0, 1)}
    events: list[LeakEvent] = []
    sr = truth.spec.sample_rate
    for word in single_active_words(truth):
        draw = float(rng.random())
        if draw < leak.copy_prob:
            mode = "copy"
        elif draw < leak.copy_prob + leak.move_prob:
            mode = "move"
        else:
            continue
        source = word.channel
        assert source is not None
        target = cross_channel(source)
        n0 = round(word.start * sr)
        n1 = round(word.end * sr)
        new_streams[n0:n1, target] += leak.leak_gain * original[n0:n1, source]
        if mode == "move":
            new_streams[n0:n1, source] -= original[n0:n1, source]
            stream_words[source] = [w for w in stream_words[source] if w is not word]
        stream_words[target].append(replace(word, channel=target))
        frames = truth.grid.covering_frames(word.start, word.end)
        events.append(
            LeakEvent(
                word=word,
                mode=mode,
                source=source,
                target=target,
                start_frame=frames.start,
                end_frame=frames.stop,
            )
        )
    for chan in (0, 1):
        stream_words[chan].sort(key=lambda t: (t.start, t.end))
    return replace(
        truth,
        streams=AudioBuffer(samples=new_streams, sample_rate=sr),
        stream_words={c: tuple(ws) for c, ws in stream_words.items()},
        ledger=LeakLedger(events=tuple(events)),
    )


def ledger_leak_rate(truth: MeetingTruth) -> float | None:
    """Leaked fraction of single-active frames, straight from the ledger."""
    counts = count_active_speakers(
        truth.activity(), truth.num_frames, DEFAULT_FRAME_RATE
    )
    single = int((counts == 1).sum())
    if single == 0:
        return None
    return truth.ledger.num_frames / single


# ---------------------------------------------------------------------------
# synthetic recognition

@dataclass(frozen=True)
class Hypotheses:
    """Per (segment index, channel) recognition output."""

    model: str
    sub_rate: float
    lattice_density: int
    one_best: dict[tuple[int, int], tuple[WordToken, ...]]
    lattices: dict[tuple[int, int], Lattice]


def _session_vocab(truth: MeetingTruth) -> list[str]:
    return sorted({w.text for c in (0, 1) for w in truth.alignments[c]})


def _build_lattice(
    emitted: Sequence[WordToken],
    originals: Sequence[str],
    density: int,
    vocab: Sequence[str],
    rng: np.random.Generator,
) -> Lattice:
    node_times: dict[int, float] = {}
    ids: dict[float, int] = {}

    def node(t: float) -> int:
        key = round(t, 6)
        if key not in ids:
            ids[key] = len(ids)
            node_times[ids[key]] = key
        return ids[key]

    arcs: list[LatticeArc] = []
    for word, original in zip(emitted, originals):
        src, dst = node(word.start), node(word.end)
        arcs.append(LatticeArc(src=src, dst=dst, word=word.text))
        # Distractors never reproduce the spoken word, so they can add
        # matches for nothing and the lattice rate stays honest.
        banned = {word.text, original}
        candidates = [v for v in vocab if v not in banned]
        for _ in range(density):
            if not candidates:
                break
            pick = candidates[int(rng.integers(len(candidates)))]
            arcs.append(LatticeArc(src=src, dst=dst, word=pick))
    if not node_times:
        node(0.0)
    return Lattice(
        frame_rate=DEFAULT_FRAME_RATE, node_times=node_times, arcs=tuple(arcs)
    )


def gen_hypotheses(
    truth: MeetingTruth,
    segments: Sequence[Segment] | None = None,
    model: str = "oracle",
    sub_rate: float = 0.1,
    seed: int = 0,
    lattice_density: int = 0,
) -> Hypotheses:
    """Simulate recognition of every segment on both streams.

    The oracle model emits exactly the stream's words whose midpoints fall
    inside the segment, at true timings. The noisy model substitutes each
    word with probability ``sub_rate`` by a different vocabulary word.
    With ``lattice_density`` > 0 each hypothesis also gets a lattice: the
    one-best path plus that many distractor arcs per word, time-aligned to
    the word, never equal to the word actually spoken there.
    """
    if model not in ("oracle", "noisy"):
        raise ValueError(f"model must be 'oracle' or 'noisy', got {model!r}")
    if not 0 <= sub_rate <= 1:
        raise ValueError(f"sub_rate must be in [0, 1], got {sub_rate}")
    segs = list(segments if segments is not None else truth.segments)
    vocab = _session_vocab(truth)
    one_best: dict[tuple[int, int], tuple[WordToken, ...]] = {}
    lattices: dict[tuple[int, int], Lattice] = {}
    for k, seg in enumerate(segs):
        for chan in (0, 1):
            inside = [
                w
                for w in truth.stream_words[chan]
                if seg.start <= (w.start + w.end) / 2 < seg.end
            ]
            inside.sort(key=lambda w: (w.start, w.end))
            originals = [w.text for w in inside]
            emitted = list(inside)
            if model == "noisy" and sub_rate > 0:
                rng_sub = np.random.default_rng([seed, 23, k, chan])
                for i, word in enumerate(emitted):
                    if rng_sub.random() < sub_rate:
                        others = [v for v in vocab if v != word.text]
                        if others:
                            emitted[i] = replace(
                                word, text=others[int(rng_sub.integers(len(others)))]
                            )
            one_best[(k, chan)] = tuple(emitted)
            if lattice_density > 0:
                rng_lat = np.random.default_rng([seed, 29, k, chan])
                lattices[(k, chan)] = _build_lattice(
                    emitted, originals, lattice_density, vocab, rng_lat
                )
    return Hypotheses(
        model=model,
        sub_rate=sub_rate if model == "noisy" else 0.0,
        lattice_density=lattice_density,
        one_best=one_best,
        lattices=lattices,
    )


def segment_transcripts(
    segments: Sequence[Segment], stream_words: dict[int, tuple[WordToken, ...]]
) -> list[list[str]]:
    """Per-stream word sequences a segment-limited recognizer would emit.

    A stream word is recognized iff its midpoint lies inside one of that
    channel's segments; output order is temporal. This is the transcription
    stand-in used to score segmentations.
    """
    out: list[list[str]] = [[], []]
    for chan in (0, 1):
        spans = sorted(
            ((s.start, s.end) for s in segments if s.channel == chan)
        )
        for word in sorted(stream_words[chan], key=lambda w: (w.start, w.end)):
            mid = (word.start + word.end) / 2
            if any(s <= mid < e for s, e in spans):
                out[chan].append(word.text)
    return out


# ---------------------------------------------------------------------------
# segmentation corruption

@dataclass(frozen=True)
class CorruptSpec:
    """Probabilities and magnitudes for each induced segmentation error."""

    delete_prob: float = 0.0
    merge_prob: float = 0.0
    jitter_prob: float = 0.0
    jitter_max: float = 0.15
    spawn_prob: float = 0.0

    def __post_init__(self) -> None:
        for name in ("delete_prob", "merge_prob", "jitter_prob", "spawn_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.jitter_max < 0:
            raise ValueError("jitter_max must be >= 0")


def corrupt_segmentation(
    truth: MeetingTruth, corrupt: CorruptSpec, seed: int = 0
) -> list[Segment]:
    """Derive a flawed segmentation from the oracle one.

    Four independent corruptions mirror the four error kinds: segment
    deletion (missing speech), merging of same-channel neighbors, endpoint
    jitter (boundary deviations), and spawning of segments on the other
    stream wherever the ledger says a word leaked. Segments whose utterance
    sourced a leak are never deleted; their words exist on the other stream
    too, and deleting them would let a later leak repair reduce coverage of
    genuine speech.
    """
    rng = np.random.default_rng([seed, 13])
    protected: set[int] = set()
    for event in truth.ledger.events:
        for k, seg in enumerate(truth.segments):
            if (
                seg.channel == event.source
                and seg.start <= event.word.start
                and event.word.end <= seg.end
            ):
                protected.add(k)
    survivors: list[Segment] = []
    for k, seg in enumerate(truth.segments):
        if k not in protected and rng.random() < corrupt.delete_prob:
            continue
        survivors.append(replace(seg, speaker=None))

    merged: list[Segment] = []
    by_channel: dict[int, list[Segment]] = {0: [], 1: []}
    for seg in sorted(survivors, key=lambda s: (s.channel, s.start)):
        by_channel[seg.channel].append(seg)
    for chan in (0, 1):
        row = by_channel[chan]
        i = 0
        while i < len(row):
            if i + 1 < len(row) and rng.random() < corrupt.merge_prob:
                merged.append(replace(row[i], end=row[i + 1].end))
                i += 2
            else:
                merged.append(row[i])
                i += 1

    jittered: list[Segment] = []
    for seg in merged:
        if corrupt.jitter_prob > 0 and rng.random() < corrupt.jitter_prob:
            ds = float(rng.uniform(-corrupt.jitter_max, corrupt.jitter_max))
            de = float(rng.uniform(-corrupt.jitter_max, corrupt.jitter_max))
            start = max(0.0, seg.start + ds)
            end = max(start + 0.05, seg.end + de)
            jittered.append(replace(seg, start=start, end=end))
        else:
            jittered.append(seg)

    spawned: list[Segment] = list(jittered)
    for event in truth.ledger.events:
        if rng.random() < corrupt.spawn_prob:
            spawned.append(
                Segment(
                    channel=event.target,
                    start=event.word.start,
                    end=event.word.end,
                    speaker=None,
                )
            )
    return sorted(spawned, key=lambda s: (s.channel, s.start, s.end))


# ---------------------------------------------------------------------------
# corpus on disk

def _word_row(w: WordToken) -> list:
    return [w.text, w.start, w.duration, w.speaker, w.channel]


def _word_from_row(row: Sequence) -> WordToken:
    return WordToken(
        text=row[0],
        start=float(row[1]),
        duration=float(row[2]),
        speaker=row[3],
        channel=None if row[4] is None else int(row[4]),
    )


def write_corpus(
    out_dir: str | Path, truth: MeetingTruth, hyps: Hypotheses | None = None
) -> None:
    """Write one session to a directory in both lossless and exchange forms.

    ``meeting.json`` carries everything needed to reload the truth exactly
    (modulo 16-bit audio quantization); the WAV/SegLST/RTTM/CTM/lattice
    files are the interchange surface other tools and the CLI consume.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = truth.spec
    doc = {
        "session_id": spec.session_id,
        "num_frames": truth.num_frames,
        "frame_rate": DEFAULT_FRAME_RATE,
        "spec": {
            "session_id": spec.session_id,
            "num_speakers": spec.num_speakers,
            "num_utterances": spec.num_utterances,
            "utterance_words": list(spec.utterance_words),
            "word_duration": spec.word_duration,
            "vocab_size": spec.vocab_size,
            "shared_vocab": spec.shared_vocab,
            "overlap_ratio": spec.overlap_ratio,
            "overlap_tol": spec.overlap_tol,
            "gap_range": list(spec.gap_range),
            "min_channel_gap": spec.min_channel_gap,
            "sample_rate": spec.sample_rate,
            "seed": spec.seed,
            "max_attempts": spec.max_attempts,
        },
        "utterances": [
            {
                "speaker": u.speaker,
                "channel": u.channel,
                "start": u.start,
                "end": u.end,
                "words": list(u.words),
            }
            for u in truth.utterances
        ],
        "alignments": {
            str(c): [_word_row(w) for w in truth.alignments[c]] for c in (0, 1)
        },
        "stream_words": {
            str(c): [_word_row(w) for w in truth.stream_words[c]] for c in (0, 1)
        },
        "ledger": [
            {
                "word": _word_row(e.word),
                "mode": e.mode,
                "source": e.source,
                "target": e.target,
                "start_frame": e.start_frame,
                "end_frame": e.end_frame,
            }
            for e in truth.ledger.events
        ],
    }
    (out / "meeting.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    write_wav(out / "streams.wav", truth.streams)
    for speaker, buf in sorted(truth.clean.items()):
        write_wav(out / f"clean_{speaker}.wav", buf)
    write_seglst(out / "ref.seglst.json", list(truth.utterances))
    write_rttm(out / "oracle_segments.rttm", spec.session_id, list(truth.segments))
    for chan in (0, 1):
        write_ctm(
            out / f"spoken_ch{chan}.ctm", spec.session_id, list(truth.alignments[chan])
        )
        write_ctm(
            out / f"stream_ch{chan}.ctm", spec.session_id, list(truth.stream_words[chan])
        )
    if hyps is not None:
        hyp_doc = {
            "model": hyps.model,
            "sub_rate": hyps.sub_rate,
            "lattice_density": hyps.lattice_density,
            "one_best": {
                f"{k}:{chan}": [_word_row(w) for w in words]
                for (k, chan), words in sorted(hyps.one_best.items())
            },
        }
        (out / "hypotheses.json").write_text(
            json.dumps(hyp_doc, indent=2, sort_keys=True) + "\n"
        )
        if hyps.lattices:
            lat_dir = out / "lattices"
            lat_dir.mkdir(exist_ok=True)
            for (k, chan), lattice in sorted(hyps.lattices.items()):
                write_lattice(lat_dir / f"seg{k:03d}_ch{chan}.json", lattice)


def load_corpus(corpus_dir: str | Path) -> tuple[MeetingTruth, Hypotheses | None]:
    """Reload a session written by :func:`write_corpus`."""
    src = Path(corpus_dir)
    doc = json.loads((src / "meeting.json").read_text())
    spec_doc = dict(doc["spec"])
    spec_doc["utterance_words"] = tuple(spec_doc["utterance_words"])
    spec_doc["gap_range"] = tuple(spec_doc["gap_range"])
    spec = MeetingSpec(**spec_doc)
    utterances = tuple(
        Utterance(
            speaker=u["speaker"],
            words=tuple(u["words"]),
            start=float(u["start"]),
            end=float(u["end"]),
            session_id=spec.session_id,
            channel=None if u["channel"] is None else int(u["channel"]),
        )
        for u in doc["utterances"]
    )
    segments = tuple(
        Segment(channel=u.channel, start=u.start, end=u.end, speaker=u.speaker)
        for u in utterances
        if u.channel is not None
    )
    alignments = {
        int(c): tuple(_word_from_row(r) for r in rows)
        for c, rows in doc["alignments"].items()
    }
    stream_words = {
        int(c): tuple(_word_from_row(r) for r in rows)
        for c, rows in doc["stream_words"].items()
    }
    events = tuple(
        LeakEvent(
            word=_word_from_row(e["word"]),
            mode=e["mode"],
            source=int(e["source"]),
            target=int(e["target"]),
            start_frame=int(e["start_frame"]),
            end_frame=int(e["end_frame"]),
        )
        for e in doc["ledger"]
    )
    streams = read_wav(src / "streams.wav")
    clean = {}
    for wav in sorted(src.glob("clean_*.wav")):
        clean[wav.stem.removeprefix("clean_")] = read_wav(wav)
    truth = MeetingTruth(
        spec=spec,
        utterances=utterances,
        segments=segments,
        alignments=alignments,
        stream_words=stream_words,
        clean=clean,
        streams=streams,
        ledger=LeakLedger(events=events),
        num_frames=int(doc["num_frames"]),
    )
    hyps = None
    hyp_path = src / "hypotheses.json"
    if hyp_path.exists():
        hyp_doc = json.loads(hyp_path.read_text())
        one_best = {}
        for key, rows in hyp_doc["one_best"].items():
            k, chan = key.split(":")
            one_best[(int(k), int(chan))] = tuple(_word_from_row(r) for r in rows)
        lattices = {}
        lat_dir = src / "lattices"
        if lat_dir.is_dir():
            for lat_path in sorted(lat_dir.glob("seg*_ch*.json")):
                stem = lat_path.stem
                k = int(stem[3 : stem.index("_")])
                chan = int(stem[stem.index("_ch") + 3 :])
                lattices[(k, chan)] = read_lattice(lat_path)
        hyps = Hypotheses(
            model=hyp_doc["model"],
            sub_rate=float(hyp_doc["sub_rate"]),
            lattice_density=int(hyp_doc["lattice_density"]),
            one_best=one_best,
            lattices=lattices,
        )
    return truth, hyps
