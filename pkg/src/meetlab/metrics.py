"""Word error rates for multi-speaker transcripts.

Two system-level metrics:

* :func:`cpwer` scores per-speaker concatenated transcripts under the best
  one-to-one speaker matching (unmatched reference speakers count as
  deletions, unmatched hypothesis speakers as insertions).
* :func:`orcwer` assigns each reference utterance to the hypothesis stream
  where it scores best, jointly and exactly, then sums per-stream edit
  distances. Exact search is exponential in the number of streams, so the
  stream count is capped.

Both rest on a Levenshtein alignment with a fixed tie-break so repeated runs
produce identical statistics. :func:`brute_force_oracles` recomputes either
metric by exhaustive enumeration; it exists so the clever implementations can
be checked against an implementation too simple to be wrong.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from meetlab.core import Utterance

_BIG = 10**9


@dataclass(frozen=True)
class EditStats:
    """Alignment counts; add instances together to pool over groups."""

    hits: int = 0
    subs: int = 0
    dels: int = 0
    inss: int = 0

    @property
    def ref_len(self) -> int:
        return self.hits + self.subs + self.dels

    @property
    def errors(self) -> int:
        return self.subs + self.dels + self.inss

    @property
    def wer(self) -> float:
        """Error rate; +inf when errors exist against an empty reference."""
        if self.ref_len == 0:
            return math.inf if self.errors else 0.0
        return self.errors / self.ref_len

    def __add__(self, other: "EditStats") -> "EditStats":
        return EditStats(
            hits=self.hits + other.hits,
            subs=self.subs + other.subs,
            dels=self.dels + other.dels,
            inss=self.inss + other.inss,
        )


@dataclass(frozen=True)
class SpeakerTranscript:
    """All utterances of one session, each carrying a speaker label.

    This is the unit both metrics consume. Reference transcripts should keep
    each speaker's utterances time-disjoint; hypothesis transcripts are free
    to violate that (a recognizer may emit anything), so disjointness is a
    checkable property, not a constructor error.
    """

    session_id: str
    utterances: tuple[Utterance, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not isinstance(self.utterances, tuple):
            object.__setattr__(self, "utterances", tuple(self.utterances))

    @property
    def speakers(self) -> tuple[str, ...]:
        """Distinct speaker labels in first-appearance order."""
        seen: dict[str, None] = {}
        for utt in self.utterances:
            seen.setdefault(utt.speaker, None)
        return tuple(seen)

    def words_by_speaker(self) -> dict[str, tuple[str, ...]]:
        """Per-speaker concatenation, utterances ordered by start time."""
        order = sorted(
            range(len(self.utterances)),
            key=lambda i: (self.utterances[i].start, self.utterances[i].end, i),
        )
        out: dict[str, list[str]] = {}
        for i in order:
            utt = self.utterances[i]
            out.setdefault(utt.speaker, []).extend(utt.words)
        for spk in self.speakers:  # speakers with only empty utterances
            out.setdefault(spk, [])
        return {spk: tuple(words) for spk, words in out.items()}

    def overlap_problems(self) -> list[str]:
        """Same-speaker time overlaps, as messages; empty when well-formed."""
        problems = []
        by_spk: dict[str, list[Utterance]] = {}
        for utt in self.utterances:
            by_spk.setdefault(utt.speaker, []).append(utt)
        for spk, utts in by_spk.items():
            utts = sorted(utts, key=lambda u: (u.start, u.end))
            for a, b in zip(utts, utts[1:]):
                if b.start < a.end:
                    problems.append(
                        f"speaker {spk!r}: utterances [{a.start:.3f}, {a.end:.3f}] "
                        f"and [{b.start:.3f}, {b.end:.3f}] overlap"
                    )
        return problems


def _token_ids(seqs: Sequence[Sequence[str]]) -> list[np.ndarray]:
    # Comparing ints instead of strings lets the inner DP loops vectorize.
    vocab: dict[str, int] = {}
    out = []
    for seq in seqs:
        out.append(
            np.array([vocab.setdefault(w, len(vocab)) for w in seq], dtype=np.int64)
        )
    return out


def _lev_cost(ref_ids: np.ndarray, hyp_ids: np.ndarray) -> int:
    """Levenshtein distance, one row at a time.

    The insertion recurrence row[j] = min(cand[j], row[j-1] + 1) is solved in
    closed form as j + running_min(cand[j] - j), which keeps the whole row
    update vectorized.
    """
    m = len(hyp_ids)
    idx = np.arange(m + 1, dtype=np.int64)
    row = idx.copy()
    for rid in ref_ids:
        cand = np.empty(m + 1, dtype=np.int64)
        cand[0] = row[0] + 1
        np.minimum(row[:-1] + (hyp_ids != rid), row[1:] + 1, out=cand[1:])
        row = idx + np.minimum.accumulate(cand - idx)
    return int(row[m])


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> EditStats:
    """Align ``hyp`` against ``ref`` and return alignment counts.

    Ties during backtrace prefer hit over substitution over deletion over
    insertion, so the returned decomposition is deterministic.
    """
    ref_ids, hyp_ids = _token_ids([ref, hyp])
    n, m = len(ref_ids), len(hyp_ids)
    d = np.empty((n + 1, m + 1), dtype=np.int64)
    idx = np.arange(m + 1, dtype=np.int64)
    d[0] = idx
    for i in range(1, n + 1):
        cand = np.empty(m + 1, dtype=np.int64)
        cand[0] = d[i - 1, 0] + 1
        np.minimum(
            d[i - 1, :-1] + (hyp_ids != ref_ids[i - 1]), d[i - 1, 1:] + 1, out=cand[1:]
        )
        d[i] = idx + np.minimum.accumulate(cand - idx)
    hits = subs = dels = inss = 0
    i, j = n, m
    while i > 0 or j > 0:
        if (
            i > 0
            and j > 0
            and ref_ids[i - 1] == hyp_ids[j - 1]
            and d[i, j] == d[i - 1, j - 1]
        ):
            hits += 1
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + 1:
            subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return EditStats(hits=hits, subs=subs, dels=dels, inss=inss)


# ---------------------------------------------------------------------------
# cpWER

@dataclass(frozen=True)
class CpResult:
    """cpWER outcome.

    ``mapping`` pairs each matched hypothesis speaker with its reference
    speaker; speakers missing from it were left unmatched (and scored as
    pure insertions or deletions).
    """

    stats: EditStats
    mapping: tuple[tuple[str, str], ...]
    unmatched_ref: tuple[str, ...] = ()
    unmatched_hyp: tuple[str, ...] = ()

    @property
    def wer(self) -> float:
        return self.stats.wer


def _cp_result(
    ref_words: dict[str, tuple[str, ...]],
    hyp_words: dict[str, tuple[str, ...]],
    matching: Sequence[tuple[str, str]],
) -> CpResult:
    stats = EditStats()
    matched_ref = {r for r, _ in matching}
    matched_hyp = {h for _, h in matching}
    for r, h in matching:
        stats = stats + edit_distance(ref_words[r], hyp_words[h])
    unmatched_ref = tuple(r for r in ref_words if r not in matched_ref)
    unmatched_hyp = tuple(h for h in hyp_words if h not in matched_hyp)
    for r in unmatched_ref:
        stats = stats + EditStats(dels=len(ref_words[r]))
    for h in unmatched_hyp:
        stats = stats + EditStats(inss=len(hyp_words[h]))
    mapping = tuple(sorted(((h, r) for r, h in matching)))
    return CpResult(
        stats=stats,
        mapping=mapping,
        unmatched_ref=unmatched_ref,
        unmatched_hyp=unmatched_hyp,
    )


def cpwer(ref: SpeakerTranscript, hyp: SpeakerTranscript) -> CpResult:
    """Concatenated-speaker WER under the optimal speaker matching.

    The assignment problem is padded with dummy rows and columns so that
    leaving a reference speaker unmatched costs their full deletion and
    leaving a hypothesis speaker unmatched costs their full insertion.
    """
    ref_words = ref.words_by_speaker()
    hyp_words = hyp.words_by_speaker()
    ref_spks = list(ref_words)
    hyp_spks = list(hyp_words)
    n_ref, n_hyp = len(ref_spks), len(hyp_spks)
    id_seqs = _token_ids(
        [ref_words[s] for s in ref_spks] + [hyp_words[s] for s in hyp_spks]
    )
    ref_ids, hyp_ids = id_seqs[:n_ref], id_seqs[n_ref:]
    cost = np.full((n_ref + n_hyp, n_hyp + n_ref), _BIG, dtype=np.int64)
    for r in range(n_ref):
        for h in range(n_hyp):
            cost[r, h] = _lev_cost(ref_ids[r], hyp_ids[h])
        cost[r, n_hyp + r] = len(ref_ids[r])
    for h in range(n_hyp):
        cost[n_ref + h, h] = len(hyp_ids[h])
    cost[n_ref:, n_hyp:] = 0
    rows, cols = linear_sum_assignment(cost)
    matching = [
        (ref_spks[r], hyp_spks[c])
        for r, c in zip(rows.tolist(), cols.tolist())
        if r < n_ref and c < n_hyp
    ]
    return _cp_result(ref_words, hyp_words, matching)


# ---------------------------------------------------------------------------
# ORC-WER

@dataclass(frozen=True)
class OrcResult:
    """ORC-WER outcome.

    ``assignment[i]`` is the stream index chosen for the transcript's
    utterance ``i`` (transcript order, not time order).
    """

    stats: EditStats
    assignment: tuple[int, ...]

    @property
    def wer(self) -> float:
        return self.stats.wer


def _extend_along(
    F: np.ndarray, axis: int, utt: np.ndarray, stream: np.ndarray
) -> np.ndarray:
    """Best cost after additionally consuming ``utt`` on ``axis``.

    Weighted-start Levenshtein: row 0 lets stream words before the match be
    charged as insertions; each utterance word then advances the alignment.
    All slices along the other axes are processed in one vectorized batch.
    """
    G = np.moveaxis(F, axis, -1)
    shp = G.shape
    width = shp[-1]
    G = G.reshape(-1, width)
    idx = np.arange(width, dtype=np.int64)
    D = idx + np.minimum.accumulate(G - idx, axis=1)
    for tok in utt:
        cand = np.empty_like(D)
        cand[:, 0] = D[:, 0] + 1
        np.minimum(D[:, :-1] + (stream != tok), D[:, 1:] + 1, out=cand[:, 1:])
        D = idx + np.minimum.accumulate(cand - idx, axis=1)
    return np.moveaxis(D.reshape(shp), -1, axis)


def _extend_line(
    line: np.ndarray, utt: np.ndarray, stream: np.ndarray
) -> np.ndarray:
    """1-D version of :func:`_extend_along` keeping all DP rows for backtrace."""
    width = len(line)
    idx = np.arange(width, dtype=np.int64)
    rows = np.empty((len(utt) + 1, width), dtype=np.int64)
    rows[0] = idx + np.minimum.accumulate(line - idx)
    for i, tok in enumerate(utt, start=1):
        cand = np.empty(width, dtype=np.int64)
        cand[0] = rows[i - 1, 0] + 1
        np.minimum(
            rows[i - 1, :-1] + (stream != tok), rows[i - 1, 1:] + 1, out=cand[1:]
        )
        rows[i] = idx + np.minimum.accumulate(cand - idx)
    return rows


def _backtrace_start(
    rows: np.ndarray, line: np.ndarray, utt: np.ndarray, stream: np.ndarray, end: int
) -> int:
    """Find the stream position where the alignment ending at ``end`` began."""
    i, k = len(utt), end
    while i > 0:
        if k > 0 and rows[i, k] == rows[i - 1, k - 1] + (stream[k - 1] != utt[i - 1]):
            i, k = i - 1, k - 1
        elif rows[i, k] == rows[i - 1, k] + 1:
            i -= 1
        else:
            k -= 1
    while k > 0 and rows[0, k] != line[k]:
        k -= 1
    return k


def orcwer(
    ref: SpeakerTranscript,
    streams: Sequence[Sequence[str]],
    max_streams: int = 4,
) -> OrcResult:
    """Optimal assignment of reference utterances to hypothesis streams.

    Utterances are taken in start-time order; each is assigned to exactly one
    stream and streams read their assigned utterances in that order. The
    search is an exact dynamic program over one position per stream, which
    is exponential in the stream count, hence ``max_streams``.
    """
    n_streams = len(streams)
    if n_streams == 0:
        raise ValueError("orcwer needs at least one hypothesis stream")
    if n_streams > max_streams:
        raise ValueError(
            f"{n_streams} streams exceed max_streams={max_streams}; "
            "exact search would be intractable"
        )
    refs = ref.utterances
    order = sorted(range(len(refs)), key=lambda i: (refs[i].start, refs[i].end, i))
    id_seqs = _token_ids(
        [tuple(s) for s in streams] + [refs[i].words for i in order]
    )
    stream_ids = id_seqs[:n_streams]
    utt_ids = id_seqs[n_streams:]
    shape = tuple(len(s) + 1 for s in stream_ids)

    consumed = np.zeros(shape, dtype=np.int64)
    for c in range(n_streams):
        view = [1] * n_streams
        view[c] = shape[c]
        consumed = consumed + np.arange(shape[c], dtype=np.int64).reshape(view)

    history = [consumed.copy()]  # F_0: unassigned stream words are insertions
    F = consumed.copy()
    for utt in utt_ids:
        F = np.minimum.reduce(
            [_extend_along(F, c, utt, stream_ids[c]) for c in range(n_streams)]
        )
        history.append(F)

    total_words = sum(len(s) for s in stream_ids)
    final = F + (total_words - consumed)
    state = list(np.unravel_index(int(np.argmin(final)), shape))

    assignment_time_order: list[int] = [0] * len(utt_ids)
    for u in range(len(utt_ids) - 1, -1, -1):
        utt = utt_ids[u]
        target = history[u + 1][tuple(state)]
        chosen = -1
        rows = line = None
        for c in range(n_streams):
            slicer = tuple(
                state[a] if a != c else slice(None) for a in range(n_streams)
            )
            cand_line = history[u][slicer]
            cand_rows = _extend_line(cand_line, utt, stream_ids[c])
            if cand_rows[-1, state[c]] == target:
                chosen, rows, line = c, cand_rows, cand_line
                break
        if chosen < 0:  # pragma: no cover - would mean the DP is inconsistent
            raise AssertionError("backtrace failed to reproduce the DP value")
        assignment_time_order[u] = chosen
        state[chosen] = _backtrace_start(
            rows, line, utt, stream_ids[chosen], state[chosen]
        )

    assignment = [0] * len(refs)
    per_stream_refs: list[list[str]] = [[] for _ in range(n_streams)]
    for pos, input_idx in enumerate(order):
        assignment[input_idx] = assignment_time_order[pos]
        per_stream_refs[assignment_time_order[pos]].extend(refs[input_idx].words)
    stats = EditStats()
    for c in range(n_streams):
        stats = stats + edit_distance(per_stream_refs[c], tuple(streams[c]))
    return OrcResult(stats=stats, assignment=tuple(assignment))


# ---------------------------------------------------------------------------
# exhaustive re-computation

#: Instance-size caps for brute_force_oracles; enumeration beyond these would
#: take unreasonable time, and the point of the function is small instances.
BRUTE_FORCE_MAX_SPEAKERS = 8
BRUTE_FORCE_MAX_UTTERANCES = 10
BRUTE_FORCE_MAX_STREAMS = 3


def brute_force_oracles(
    ref: SpeakerTranscript,
    hyp: "SpeakerTranscript | Sequence[Sequence[str]]",
    kind: str,
) -> "CpResult | OrcResult":
    """Recompute :func:`cpwer` or :func:`orcwer` by exhaustive enumeration.

    ``kind`` selects the metric: ``"cp"`` expects ``hyp`` to be a
    :class:`SpeakerTranscript` and tries every injective speaker matching;
    ``"orc"`` expects a list of word streams and tries every assignment of
    utterances to streams. Total error count and WER always agree with the
    optimized implementations; the reported alignment may be a different
    optimum when several exist.

    Raises:
        ValueError: On unknown ``kind`` or an instance too large to
            enumerate.
    """
    if kind == "cp":
        if not isinstance(hyp, SpeakerTranscript):
            raise ValueError("kind 'cp' needs a SpeakerTranscript hypothesis")
        ref_words = ref.words_by_speaker()
        hyp_words = hyp.words_by_speaker()
        if (
            len(ref_words) > BRUTE_FORCE_MAX_SPEAKERS
            or len(hyp_words) > BRUTE_FORCE_MAX_SPEAKERS
        ):
            raise ValueError(
                "instance too large: brute-force cp handles at most "
                f"{BRUTE_FORCE_MAX_SPEAKERS} speakers per side"
            )
        ref_spks = list(ref_words)
        hyp_spks = list(hyp_words)
        best_cost = None
        best_matching: list[tuple[str, str]] = []
        for k in range(min(len(ref_spks), len(hyp_spks)) + 1):
            for ref_subset in itertools.combinations(range(len(ref_spks)), k):
                for hyp_pick in itertools.permutations(range(len(hyp_spks)), k):
                    cost = 0
                    for r, h in zip(ref_subset, hyp_pick):
                        cost += edit_distance(
                            ref_words[ref_spks[r]], hyp_words[hyp_spks[h]]
                        ).errors
                    matched_r = set(ref_subset)
                    matched_h = set(hyp_pick)
                    for r, spk in enumerate(ref_spks):
                        if r not in matched_r:
                            cost += len(ref_words[spk])
                    for h, spk in enumerate(hyp_spks):
                        if h not in matched_h:
                            cost += len(hyp_words[spk])
                    if best_cost is None or cost < best_cost:
                        best_cost = cost
                        best_matching = [
                            (ref_spks[r], hyp_spks[h])
                            for r, h in zip(ref_subset, hyp_pick)
                        ]
        return _cp_result(ref_words, hyp_words, best_matching)

    if kind == "orc":
        if isinstance(hyp, SpeakerTranscript):
            raise ValueError("kind 'orc' needs a list of word streams")
        streams = [tuple(s) for s in hyp]
        refs = ref.utterances
        if len(refs) > BRUTE_FORCE_MAX_UTTERANCES:
            raise ValueError(
                "instance too large: brute-force orc handles at most "
                f"{BRUTE_FORCE_MAX_UTTERANCES} utterances"
            )
        if not 1 <= len(streams) <= BRUTE_FORCE_MAX_STREAMS:
            raise ValueError(
                "instance too large: brute-force orc handles 1 to "
                f"{BRUTE_FORCE_MAX_STREAMS} streams"
            )
        order = sorted(
            range(len(refs)), key=lambda i: (refs[i].start, refs[i].end, i)
        )
        best_stats = None
        best_choice: tuple[int, ...] = ()
        for choice in itertools.product(range(len(streams)), repeat=len(refs)):
            concat: list[list[str]] = [[] for _ in streams]
            for pos in order:
                concat[choice[pos]].extend(refs[pos].words)
            stats = EditStats()
            for c, stream in enumerate(streams):
                stats = stats + edit_distance(concat[c], stream)
            if best_stats is None or stats.errors < best_stats.errors:
                best_stats = stats
                best_choice = choice
        assert best_stats is not None
        return OrcResult(stats=best_stats, assignment=best_choice)

    raise ValueError(f"unknown kind {kind!r}, expected 'cp' or 'orc'")
