"""Readers and writers for the on-disk interchange formats.

Formats covered: SegLST (segment-level JSON transcripts), CTM word lists,
RTTM segment lists, word-lattice JSON, and 16-bit PCM WAV. Readers normalize
tokens on ingest; writers format times with millisecond precision where the
format is line-based.
"""

from __future__ import annotations

import json
import math
import wave
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from meetlab.core import AudioBuffer, Segment, Utterance, WordToken, normalize_token

_TIME_FMT = "%.3f"


# ---------------------------------------------------------------------------
# SegLST


def read_seglst(path: str | Path) -> list[Utterance]:
    """Read a SegLST JSON file into utterances.

    Expects a list of objects with keys ``session_id``, ``speaker``,
    ``start_time``, ``end_time``, ``words`` and optionally ``channel``.
    ``words`` is one space-separated string; tokens are normalized here.
    """
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValueError(f"{path}: SegLST must be a JSON list")
    out = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ValueError(f"{path}: entry {i} is not an object")
        try:
            words = tuple(
                normalize_token(w) for w in str(entry["words"]).split()
            )
            out.append(
                Utterance(
                    speaker=str(entry["speaker"]),
                    words=words,
                    start=float(entry["start_time"]),
                    end=float(entry["end_time"]),
                    session_id=str(entry["session_id"]),
                    channel=int(entry["channel"]) if "channel" in entry else None,
                )
            )
        except KeyError as exc:
            raise ValueError(f"{path}: entry {i} is missing key {exc}") from exc
    return out


def write_seglst(path: str | Path, utterances: list[Utterance]) -> None:
    entries = []
    for utt in utterances:
        entry: dict[str, object] = {
            "session_id": utt.session_id,
            "speaker": utt.speaker,
            "start_time": round(utt.start, 3),
            "end_time": round(utt.end, 3),
            "words": " ".join(utt.words),
        }
        if utt.channel is not None:
            entry["channel"] = utt.channel
        entries.append(entry)
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# CTM

def read_ctm(path: str | Path) -> dict[str, list[WordToken]]:
    """Read a CTM file, returning word tokens grouped by session.

    Line format: ``session channel start duration word``. The channel field
    is 1-based on disk and 0-based in memory. Tokens are sorted by start
    time within a session.
    """
    by_session: dict[str, list[WordToken]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith(";;"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        session, chn, start, duration, word = parts
        try:
            channel = int(chn) - 1
            if channel not in (0, 1):
                raise ValueError(f"channel must be 1 or 2, got {chn}")
            token = WordToken(
                text=normalize_token(word),
                start=float(start),
                duration=float(duration),
                channel=channel,
            )
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
        by_session.setdefault(session, []).append(token)
    for tokens in by_session.values():
        tokens.sort(key=lambda t: (t.start, t.end, t.text))
    return by_session


def write_ctm(path: str | Path, session: str, tokens: list[WordToken]) -> None:
    lines = []
    for tok in sorted(tokens, key=lambda t: (t.start, t.end, t.text)):
        if tok.channel is None:
            raise ValueError(f"CTM requires a channel on every token: {tok}")
        lines.append(
            f"{session} {tok.channel + 1} {_TIME_FMT % tok.start} "
            f"{_TIME_FMT % tok.duration} {tok.text}"
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# RTTM

def read_rttm(path: str | Path) -> dict[str, list[Segment]]:
    """Read RTTM SPEAKER lines, grouped by session, sorted by start time."""
    by_session: dict[str, list[Segment]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith(";;"):
            continue
        parts = line.split()
        if len(parts) < 9 or parts[0] != "SPEAKER":
            raise ValueError(f"{path}:{lineno}: not a SPEAKER line")
        session = parts[1]
        channel = int(parts[2]) - 1
        if channel not in (0, 1):
            raise ValueError(f"{path}:{lineno}: channel must be 1 or 2, got {parts[2]}")
        start = float(parts[3])
        duration = float(parts[4])
        speaker = parts[7]
        try:
            segment = Segment(
                channel=channel,
                start=start,
                end=start + duration,
                speaker=None if speaker == "<NA>" else speaker,
            )
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
        by_session.setdefault(session, []).append(segment)
    for segs in by_session.values():
        segs.sort(key=lambda s: (s.start, s.end, s.channel))
    return by_session


def write_rttm(path: str | Path, session: str, segments: list[Segment]) -> None:
    lines = []
    for seg in sorted(segments, key=lambda s: (s.start, s.end, s.channel)):
        speaker = seg.speaker if seg.speaker is not None else "<NA>"
        lines.append(
            f"SPEAKER {session} {seg.channel + 1} {_TIME_FMT % seg.start} "
            f"{_TIME_FMT % seg.duration} <NA> <NA> {speaker} <NA> <NA>"
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# Lattices

@dataclass(frozen=True)
class LatticeArc:
    src: int
    dst: int
    word: str

    def __post_init__(self) -> None:
        if not self.word or any(c.isspace() for c in self.word):
            raise ValueError(f"arc word must be one non-empty token, got {self.word!r}")


@dataclass(frozen=True)
class Lattice:
    """A word lattice: timed nodes and word-labelled arcs between them.

    Validated on construction: node ids unique, arcs reference known nodes,
    arcs never go backwards in time, and the graph is acyclic.
    """

    frame_rate: int
    node_times: dict[int, float]
    arcs: tuple[LatticeArc, ...]

    def __post_init__(self) -> None:
        if self.frame_rate <= 0:
            raise ValueError(f"lattice frame_rate must be positive, got {self.frame_rate}")
        for node, t in self.node_times.items():
            if not math.isfinite(t) or t < 0:
                raise ValueError(f"node {node} has invalid time {t!r}")
        out_edges: dict[int, list[int]] = {n: [] for n in self.node_times}
        for arc in self.arcs:
            for node in (arc.src, arc.dst):
                if node not in self.node_times:
                    raise ValueError(f"arc references unknown node {node}")
            if not arc.word:
                raise ValueError(f"arc {arc.src}->{arc.dst} has an empty word")
            if self.node_times[arc.dst] < self.node_times[arc.src]:
                raise ValueError(
                    f"arc {arc.src}->{arc.dst} goes backwards in time"
                )
            out_edges[arc.src].append(arc.dst)
        self._check_acyclic(out_edges)

    @staticmethod
    def _check_acyclic(out_edges: dict[int, list[int]]) -> None:
        indeg = {n: 0 for n in out_edges}
        for dsts in out_edges.values():
            for d in dsts:
                indeg[d] += 1
        queue = [n for n, d in indeg.items() if d == 0]
        seen = 0
        while queue:
            node = queue.pop()
            seen += 1
            for d in out_edges[node]:
                indeg[d] -= 1
                if indeg[d] == 0:
                    queue.append(d)
        if seen != len(out_edges):
            raise ValueError("lattice contains a cycle")

    def arc_span(self, arc: LatticeArc) -> tuple[float, float]:
        return self.node_times[arc.src], self.node_times[arc.dst]


def read_lattice(path: str | Path) -> Lattice:
    """Read lattice JSON: ``{"frame_rate", "nodes": [{"id","t"}], "arcs": [...]}.``"""
    raw = json.loads(Path(path).read_text())
    try:
        node_times = {int(n["id"]): float(n["t"]) for n in raw["nodes"]}
        if len(node_times) != len(raw["nodes"]):
            raise ValueError(f"{path}: duplicate node ids")
        arcs = tuple(
            LatticeArc(
                src=int(a["from"]),
                dst=int(a["to"]),
                word=normalize_token(str(a["word"])),
            )
            for a in raw["arcs"]
        )
        return Lattice(
            frame_rate=int(raw["frame_rate"]), node_times=node_times, arcs=arcs
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc}") from exc


def write_lattice(path: str | Path, lattice: Lattice) -> None:
    doc = {
        "frame_rate": lattice.frame_rate,
        "nodes": [
            {"id": n, "t": round(t, 3)}
            for n, t in sorted(lattice.node_times.items())
        ],
        "arcs": [
            {"from": a.src, "to": a.dst, "word": a.word} for a in lattice.arcs
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# WAV

def write_wav(path: str | Path, audio: AudioBuffer) -> None:
    """Write a buffer as 16-bit PCM.

    Values outside [-1, 1] are clipped with a warning rather than wrapped.
    """
    data = audio.samples
    if np.any(np.abs(data) > 1.0):
        warnings.warn(f"{path}: samples outside [-1, 1] were clipped", stacklevel=2)
        data = np.clip(data, -1.0, 1.0)
    pcm = np.rint(data * 32767.0).astype(np.int16)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(data.shape[1])
        fh.setsampwidth(2)
        fh.setframerate(audio.sample_rate)
        fh.writeframes(pcm.tobytes())


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a 16-bit PCM WAV into a float64 buffer in [-1, 1].

    Raises:
        ValueError: For any sample width other than 16 bits.
    """
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM is supported")
        channels = fh.getnchannels()
        sample_rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    pcm = np.frombuffer(raw, dtype=np.int16)
    data = pcm.astype(np.float64) / 32767.0
    return AudioBuffer(samples=data.reshape(-1, channels), sample_rate=sample_rate)
