"""Command line front end.

Every subcommand is deterministic given its inputs: the same invocation on
the same data writes byte-identical outputs, including under ``--jobs``.

Exit codes: 0 on success, 1 for data or validation problems, 2 for usage
and configuration problems.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from meetlab.coincidence import (
    DIRECTIONS,
    HYP_KINDS,
    CrReport,
    SessionFrames,
    leakage_report,
)
from meetlab.config import ConfigError, load_config, resolve
from meetlab.core import AudioBuffer, Segment
from meetlab.diarize import (
    DiarizeParams,
    OracleEmbedder,
    SpectralEmbedder,
    diarize_segments,
)
from meetlab.formats import (
    read_ctm,
    read_rttm,
    read_seglst,
    read_wav,
    write_rttm,
    write_wav,
)
from meetlab.metrics import SpeakerTranscript, cpwer, orcwer
from meetlab.report_html import build_report
from meetlab.segfix import FIX_KINDS, FixPlan, apply_fixes, classification_report
from meetlab.signal import VadParams, cut_into_windows, energy_vad, stitch
from meetlab.simulate import (
    Hypotheses,
    LeakSpec,
    MeetingSpec,
    MeetingTruth,
    SimulationError,
    gen_hypotheses,
    gen_meeting,
    inject_leakage,
    load_corpus,
    write_corpus,
)


def _emit_json(out: str | None, doc: object) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _session_dirs(root: str | Path) -> list[Path]:
    """The session directory at ``root``, or every one directly under it."""
    base = Path(root)
    if (base / "meeting.json").is_file():
        return [base]
    if base.is_dir():
        subs = sorted(p for p in base.iterdir() if (p / "meeting.json").is_file())
        if subs:
            return subs
    raise ValueError(f"{base}: no session found (missing meeting.json)")


def _one_session(root: str | Path) -> Path:
    dirs = _session_dirs(root)
    if len(dirs) > 1:
        raise ValueError(
            f"{root}: holds {len(dirs)} sessions; point at exactly one"
        )
    return dirs[0]


def _wer_json(value: float) -> float | str:
    return "inf" if math.isinf(value) else value


def _transcript_from_seglst(path: str) -> SpeakerTranscript:
    utterances = read_seglst(path)
    if not utterances:
        raise ValueError(f"{path}: empty SegLST")
    session = utterances[0].session_id or "session"
    return SpeakerTranscript(session_id=session, utterances=tuple(utterances))


# ---------------------------------------------------------------------------
# simulate

def _simulate_one(payload: tuple) -> str:
    spec, leak, model, sub_rate, density, out_dir = payload
    truth = gen_meeting(spec)
    if leak.copy_prob > 0 or leak.move_prob > 0:
        truth = inject_leakage(truth, leak, seed=spec.seed)
    hyps = gen_hypotheses(
        truth,
        model=model,
        sub_rate=sub_rate,
        seed=spec.seed,
        lattice_density=density,
    )
    write_corpus(out_dir, truth, hyps)
    return str(out_dir)


def cmd_simulate(args: argparse.Namespace, cfg: dict) -> int:
    opts = resolve(
        "simulate",
        cfg,
        {
            "sessions": args.sessions,
            "num_speakers": args.num_speakers,
            "num_utterances": args.num_utterances,
            "word_duration": args.word_duration,
            "vocab_size": args.vocab_size,
            "overlap_ratio": args.overlap_ratio,
            "sample_rate": args.sample_rate,
            "seed": args.seed,
            "copy_prob": args.copy_prob,
            "move_prob": args.move_prob,
            "leak_gain": args.leak_gain,
            "model": args.model,
            "sub_rate": args.sub_rate,
            "lattice_density": args.lattice_density,
        },
    )
    out = Path(args.out)
    payloads = []
    for i in range(int(opts["sessions"])):
        spec = MeetingSpec(
            session_id=f"session{i:03d}",
            num_speakers=int(opts["num_speakers"]),
            num_utterances=int(opts["num_utterances"]),
            utterance_words=tuple(opts["utterance_words"]),
            word_duration=float(opts["word_duration"]),
            vocab_size=int(opts["vocab_size"]),
            shared_vocab=bool(opts["shared_vocab"]),
            overlap_ratio=float(opts["overlap_ratio"]),
            overlap_tol=float(opts["overlap_tol"]),
            sample_rate=int(opts["sample_rate"]),
            seed=int(opts["seed"]) + i,
        )
        leak = LeakSpec(
            copy_prob=float(opts["copy_prob"]),
            move_prob=float(opts["move_prob"]),
            leak_gain=float(opts["leak_gain"]),
        )
        payloads.append(
            (
                spec,
                leak,
                opts["model"],
                float(opts["sub_rate"]),
                int(opts["lattice_density"]),
                str(out / f"session{i:03d}"),
            )
        )
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            written = list(pool.map(_simulate_one, payloads))
    else:
        written = [_simulate_one(p) for p in payloads]
    for path in written:
        print(path)
    return 0


# ---------------------------------------------------------------------------
# stitch

def cmd_stitch(args: argparse.Namespace, cfg: dict) -> int:
    opts = resolve(
        "stitch",
        cfg,
        {
            "window": args.window,
            "shift": args.shift,
            "scramble_seed": args.scramble_seed,
        },
    )
    audio = read_wav(args.input)
    if audio.num_channels != 2:
        raise ValueError(f"{args.input}: stitch needs 2 channels")
    sep = cut_into_windows(audio, float(opts["window"]), float(opts["shift"]))
    if opts["scramble_seed"] is not None:
        rng = np.random.default_rng([int(opts["scramble_seed"]), 41])
        scrambled = tuple(
            AudioBuffer(samples=w.samples[:, ::-1].copy(), sample_rate=w.sample_rate)
            if rng.random() < 0.5
            else w
            for w in sep.windows
        )
        sep = replace(sep, windows=scrambled)
    stitched, decisions = stitch(sep)
    trimmed = AudioBuffer(
        samples=stitched.samples[: len(audio)], sample_rate=stitched.sample_rate
    )
    write_wav(args.out, trimmed)
    if args.decisions is not None:
        _emit_json(
            args.decisions,
            {
                "window": float(opts["window"]),
                "shift": float(opts["shift"]),
                "decisions": list(decisions),
            },
        )
    return 0


# ---------------------------------------------------------------------------
# vad

def cmd_vad(args: argparse.Namespace, cfg: dict) -> int:
    opts = resolve(
        "vad",
        cfg,
        {
            "frame_len": args.frame_len,
            "hop": args.hop,
            "energy_floor": args.energy_floor,
            "ratio_threshold": args.ratio_threshold,
            "min_speech": args.min_speech,
            "min_gap": args.min_gap,
            "pad": args.pad,
        },
    )
    source = Path(args.input)
    if source.is_dir():
        session_dir = _one_session(source)
        audio = read_wav(session_dir / "streams.wav")
        session = json.loads((session_dir / "meeting.json").read_text())["session_id"]
    else:
        audio = read_wav(source)
        session = source.stem
    params = VadParams(
        frame_len=float(opts["frame_len"]),
        hop=float(opts["hop"]),
        energy_floor=float(opts["energy_floor"]),
        ratio_threshold=float(opts["ratio_threshold"]),
        min_speech=float(opts["min_speech"]),
        min_gap=float(opts["min_gap"]),
        pad=float(opts["pad"]),
    )
    segments = energy_vad(audio, params)
    write_rttm(args.out, session, segments)
    return 0


# ---------------------------------------------------------------------------
# diarize

def _segment_words(truth: MeetingTruth, segments: list[Segment]) -> list[list]:
    out = []
    for seg in segments:
        out.append(
            [
                w
                for w in truth.stream_words[seg.channel]
                if seg.start <= (w.start + w.end) / 2 < seg.end
            ]
        )
    return out


def cmd_diarize(args: argparse.Namespace, cfg: dict) -> int:
    opts = resolve(
        "diarize",
        cfg,
        {
            "embedder": args.embedder,
            "bands": args.bands,
            "k": args.k,
            "context": args.context,
            "search_window": args.search_window,
            "sim_threshold": args.sim_threshold,
            "merge_gap": args.merge_gap,
            "seed": args.seed,
        },
    )
    session_dir = _one_session(args.input)
    truth, _ = load_corpus(session_dir)
    if args.segments is not None:
        by_session = read_rttm(args.segments)
        segments = [s for segs in by_session.values() for s in segs]
    else:
        segments = list(truth.segments)
    k: int | str = opts["k"]
    if isinstance(k, str) and k != "estimate":
        k = int(k)
    params = DiarizeParams(
        k=k,
        context=float(opts["context"]),
        search_window=float(opts["search_window"]),
        sim_threshold=float(opts["sim_threshold"]),
        merge_gap=float(opts["merge_gap"]),
        restarts=int(opts["restarts"]),
        max_iter=int(opts["max_iter"]),
        seed=int(opts["seed"]),
    )
    if opts["embedder"] == "spectral":
        provider = SpectralEmbedder(truth.streams, bands=int(opts["bands"]))
    elif opts["embedder"] == "oracle":
        provider = OracleEmbedder(truth.activity_by_channel(), seed=params.seed)
    else:
        raise ConfigError(f"unknown embedder {opts['embedder']!r}")
    words = _segment_words(truth, segments)
    labeled = diarize_segments(segments, words, provider, params)
    write_rttm(args.out, truth.spec.session_id, labeled)
    return 0


# ---------------------------------------------------------------------------
# cr

def _session_frames(truth: MeetingTruth, hyps: Hypotheses) -> SessionFrames:
    return SessionFrames(
        segments=truth.segments,
        spoken=truth.alignments,
        one_best=hyps.one_best,
        lattices=hyps.lattices,
        activity=truth.activity(),
        grid=truth.grid,
    )


def _cr_one(payload: tuple) -> CrReport:
    session_dir, direction, hyp_kind = payload
    truth, hyps = load_corpus(session_dir)
    if hyps is None:
        raise ValueError(f"{session_dir}: no hypotheses.json; run simulate first")
    return leakage_report(_session_frames(truth, hyps), direction, hyp_kind)


def cmd_cr(args: argparse.Namespace, cfg: dict) -> int:
    opts = resolve(
        "cr", cfg, {"direction": args.direction, "hyp_kind": args.hyp_kind}
    )
    direction = str(opts["direction"]).replace("-", "_")
    hyp_kind = str(opts["hyp_kind"]).replace("-", "_")
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if hyp_kind not in HYP_KINDS:
        raise ConfigError(f"hyp_kind must be one of {HYP_KINDS}, got {hyp_kind!r}")
    dirs = _session_dirs(args.input)
    payloads = [(str(d), direction, hyp_kind) for d in dirs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_cr_one, payloads))
    else:
        reports = [_cr_one(p) for p in payloads]
    total = reports[0]
    for rep in reports[1:]:
        total = total.merge(rep)
    doc = total.to_dict()
    doc["sessions"] = len(reports)
    _emit_json(args.out, doc)
    return 0


# ---------------------------------------------------------------------------
# score

def cmd_score(args: argparse.Namespace, cfg: dict) -> int:
    opts = resolve(
        "score", cfg, {"metric": args.metric, "max_streams": args.max_streams}
    )
    metric = opts["metric"]
    ref = _transcript_from_seglst(args.ref)
    if metric == "cpwer":
        if len(args.hyp) != 1:
            raise ConfigError("cpwer takes exactly one hypothesis SegLST")
        hyp = _transcript_from_seglst(args.hyp[0])
        result = cpwer(ref, hyp)
        doc = {
            "metric": "cpwer",
            "wer": _wer_json(result.wer),
            "hits": result.stats.hits,
            "subs": result.stats.subs,
            "dels": result.stats.dels,
            "inss": result.stats.inss,
            "ref_len": result.stats.ref_len,
            "errors": result.stats.errors,
            "mapping": [list(pair) for pair in result.mapping],
            "unmatched_ref": list(result.unmatched_ref),
            "unmatched_hyp": list(result.unmatched_hyp),
        }
    elif metric == "orcwer":
        streams = []
        for path in args.hyp:
            by_session = read_ctm(path)
            tokens = [t for toks in by_session.values() for t in toks]
            tokens.sort(key=lambda t: (t.start, t.end))
            streams.append([t.text for t in tokens])
        result = orcwer(ref, streams, max_streams=int(opts["max_streams"]))
        doc = {
            "metric": "orcwer",
            "wer": _wer_json(result.wer),
            "hits": result.stats.hits,
            "subs": result.stats.subs,
            "dels": result.stats.dels,
            "inss": result.stats.inss,
            "ref_len": result.stats.ref_len,
            "errors": result.stats.errors,
            "assignment": list(result.assignment),
        }
    else:
        raise ConfigError(f"metric must be cpwer or orcwer, got {metric!r}")
    _emit_json(args.out, doc)
    return 0


# ---------------------------------------------------------------------------
# segfix

def cmd_segfix(args: argparse.Namespace, cfg: dict) -> int:
    opts = resolve(
        "segfix",
        cfg,
        {
            "kinds": args.kinds.split(",") if args.kinds else None,
            "leak_overlap": args.leak_overlap,
            "coverage": args.coverage,
            "snap": args.snap,
            "min_speech": args.min_speech,
        },
    )
    session_dir = _one_session(args.input)
    truth, _ = load_corpus(session_dir)
    by_session = read_rttm(args.segments)
    hyp_segments = [s for segs in by_session.values() for s in segs]
    plan = FixPlan(
        kinds=tuple(opts["kinds"]),
        leak_overlap=float(opts["leak_overlap"]),
        coverage=float(opts["coverage"]),
        snap=float(opts["snap"]),
        min_speech=float(opts["min_speech"]),
    )
    if args.report is not None:
        _emit_json(
            args.report,
            classification_report(hyp_segments, list(truth.segments), plan),
        )
    fixed = apply_fixes(hyp_segments, list(truth.segments), plan)
    write_rttm(args.out, truth.spec.session_id, fixed)
    return 0


# ---------------------------------------------------------------------------
# report

def cmd_report(args: argparse.Namespace, cfg: dict) -> int:
    resolve("report", cfg, {})
    session_dir = _one_session(args.input)
    truth, hyps = load_corpus(session_dir)
    cr_reports = []
    if hyps is not None:
        kinds = ["one_best"] + (["lattice"] if hyps.lattices else [])
        frames = _session_frames(truth, hyps)
        for direction in DIRECTIONS:
            for kind in kinds:
                cr_reports.append(leakage_report(frames, direction, kind))
    Path(args.out).write_text(build_report(truth, hyps, cr_reports))
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meetlab",
        description="Synthetic meeting simulation, scoring and leakage analysis.",
    )
    parser.add_argument(
        "--config",
        default=None,
        help="JSON config file (or set MEETLAB_CONFIG); sections mirror "
        "subcommand names",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic sessions")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sessions", type=int, default=None)
    p.add_argument("--num-speakers", type=int, default=None)
    p.add_argument("--num-utterances", type=int, default=None)
    p.add_argument("--word-duration", type=float, default=None)
    p.add_argument("--vocab-size", type=int, default=None)
    p.add_argument("--overlap-ratio", type=float, default=None)
    p.add_argument("--sample-rate", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--copy-prob", type=float, default=None)
    p.add_argument("--move-prob", type=float, default=None)
    p.add_argument("--leak-gain", type=float, default=None)
    p.add_argument("--model", choices=["oracle", "noisy"], default=None)
    p.add_argument("--sub-rate", type=float, default=None)
    p.add_argument("--lattice-density", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stitch", help="align window permutations and restitch")
    p.add_argument("--in", dest="input", required=True, help="2-channel wav")
    p.add_argument("--out", required=True, help="stitched wav")
    p.add_argument("--decisions", default=None, help="swap decisions JSON")
    p.add_argument("--window", type=float, default=None)
    p.add_argument("--shift", type=float, default=None)
    p.add_argument(
        "--scramble-seed",
        type=int,
        default=None,
        help="randomly swap window channels first (for round-trip checks)",
    )
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("vad", help="energy-ratio voice activity detection")
    p.add_argument("--in", dest="input", required=True, help="session dir or wav")
    p.add_argument("--out", required=True, help="output RTTM")
    p.add_argument("--frame-len", type=float, default=None)
    p.add_argument("--hop", type=float, default=None)
    p.add_argument("--energy-floor", type=float, default=None)
    p.add_argument("--ratio-threshold", type=float, default=None)
    p.add_argument("--min-speech", type=float, default=None)
    p.add_argument("--min-gap", type=float, default=None)
    p.add_argument("--pad", type=float, default=None)
    p.set_defaults(func=cmd_vad)

    p = sub.add_parser("diarize", help="split, cluster and label segments")
    p.add_argument("--in", dest="input", required=True, help="session dir")
    p.add_argument(
        "--segments", default=None, help="RTTM to diarize (default: oracle segments)"
    )
    p.add_argument("--out", required=True, help="labeled RTTM")
    p.add_argument("--embedder", choices=["spectral", "oracle"], default=None)
    p.add_argument("--bands", type=int, default=None)
    p.add_argument("--k", default=None, help="cluster count or 'estimate'")
    p.add_argument("--context", type=float, default=None)
    p.add_argument("--search-window", type=float, default=None)
    p.add_argument("--sim-threshold", type=float, default=None)
    p.add_argument("--merge-gap", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("cr", help="coincidence rates between streams")
    p.add_argument(
        "--in", dest="input", required=True, help="session dir or parent of sessions"
    )
    p.add_argument(
        "--direction",
        default=None,
        help="primary-to-cross or cross-to-primary",
    )
    p.add_argument("--hyp-kind", default=None, help="one_best or lattice")
    p.add_argument("--out", default=None, help="output JSON (default stdout)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_cr)

    p = sub.add_parser("score", help="speaker-attributed WER metrics")
    p.add_argument("--ref", required=True, help="reference SegLST")
    p.add_argument(
        "--hyp",
        required=True,
        nargs="+",
        help="hypothesis SegLST (cpwer) or one CTM per stream (orcwer)",
    )
    p.add_argument("--metric", choices=["cpwer", "orcwer"], default=None)
    p.add_argument("--max-streams", type=int, default=None)
    p.add_argument("--out", default=None, help="output JSON (default stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("segfix", help="classify and repair segmentation errors")
    p.add_argument("--in", dest="input", required=True, help="session dir")
    p.add_argument("--segments", required=True, help="hypothesis RTTM")
    p.add_argument("--out", required=True, help="repaired RTTM")
    p.add_argument("--report", default=None, help="classification JSON")
    p.add_argument(
        "--kinds", default=None, help=f"comma-separated subset of {','.join(FIX_KINDS)}"
    )
    p.add_argument("--leak-overlap", type=float, default=None)
    p.add_argument("--coverage", type=float, default=None)
    p.add_argument("--snap", type=float, default=None)
    p.add_argument("--min-speech", type=float, default=None)
    p.set_defaults(func=cmd_segfix)

    p = sub.add_parser("report", help="static HTML session summary")
    p.add_argument("--in", dest="input", required=True, help="session dir")
    p.add_argument("--out", required=True, help="output HTML")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
