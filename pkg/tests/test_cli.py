import json

import numpy as np
import pytest

from meetlab.cli import main
from meetlab.formats import read_rttm, read_wav

SIM_ARGS = [
    "--num-utterances",
    "6",
    "--sample-rate",
    "1000",
    "--copy-prob",
    "0.4",
    "--model",
    "noisy",
    "--sub-rate",
    "0.1",
    "--lattice-density",
    "1",
    "--seed",
    "0",
]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    base = tmp_path_factory.mktemp("corpus")
    assert main(["simulate", "--out", str(base)] + SIM_ARGS) == 0
    return base / "session000"


@pytest.fixture(scope="module")
def two_sessions(tmp_path_factory):
    base = tmp_path_factory.mktemp("pair")
    args = ["simulate", "--out", str(base), "--sessions", "2"] + SIM_ARGS
    assert main(args) == 0
    return base


class TestSimulate:
    def test_writes_session_files(self, corpus, capsys):
        for name in (
            "meeting.json",
            "streams.wav",
            "ref.seglst.json",
            "oracle_segments.rttm",
            "spoken_ch0.ctm",
            "stream_ch1.ctm",
            "hypotheses.json",
        ):
            assert (corpus / name).is_file(), name
        assert (corpus / "lattices").is_dir()

    def test_deterministic_across_runs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["simulate", "--out", str(out)] + SIM_ARGS) == 0
        left = (a / "session000" / "meeting.json").read_bytes()
        right = (b / "session000" / "meeting.json").read_bytes()
        assert left == right
        assert (a / "session000" / "streams.wav").read_bytes() == (
            b / "session000" / "streams.wav"
        ).read_bytes()

    def test_jobs_do_not_change_output(self, tmp_path, two_sessions):
        out = tmp_path / "par"
        args = ["simulate", "--out", str(out), "--sessions", "2", "--jobs", "2"]
        assert main(args + SIM_ARGS) == 0
        for i in range(2):
            name = f"session{i:03d}"
            assert (out / name / "meeting.json").read_bytes() == (
                two_sessions / name / "meeting.json"
            ).read_bytes()

    def test_sessions_get_distinct_seeds(self, two_sessions):
        spec0 = json.loads(
            (two_sessions / "session000" / "meeting.json").read_text()
        )["spec"]
        spec1 = json.loads(
            (two_sessions / "session001" / "meeting.json").read_text()
        )["spec"]
        assert spec1["seed"] == spec0["seed"] + 1


class TestStitch:
    def test_scramble_round_trip(self, corpus, tmp_path):
        src = corpus / "streams.wav"
        out = tmp_path / "restitched.wav"
        decisions = tmp_path / "decisions.json"
        code = main(
            [
                "stitch",
                "--in",
                str(src),
                "--out",
                str(out),
                "--decisions",
                str(decisions),
                "--scramble-seed",
                "3",
            ]
        )
        assert code == 0
        original = read_wav(src).samples
        stitched = read_wav(out).samples
        assert stitched.shape == original.shape
        direct = float(np.abs(stitched - original).max())
        swapped = float(np.abs(stitched - original[:, ::-1]).max())
        # channel identity is only defined up to a global swap
        assert min(direct, swapped) == 0.0
        doc = json.loads(decisions.read_text())
        assert doc["window"] == 4.0
        assert all(isinstance(d, bool) for d in doc["decisions"])

    def test_mono_rejected(self, tmp_path):
        from meetlab.core import AudioBuffer
        from meetlab.formats import write_wav

        mono = tmp_path / "mono.wav"
        write_wav(mono, AudioBuffer(samples=np.zeros(1000), sample_rate=1000))
        code = main(["stitch", "--in", str(mono), "--out", str(tmp_path / "o.wav")])
        assert code == 1


class TestVad:
    def test_session_dir_to_rttm(self, corpus, tmp_path):
        out = tmp_path / "vad.rttm"
        assert main(["vad", "--in", str(corpus), "--out", str(out)]) == 0
        by_session = read_rttm(out)
        assert list(by_session) == ["session000"]
        assert len(by_session["session000"]) >= 1

    def test_plain_wav_input_uses_stem(self, corpus, tmp_path):
        out = tmp_path / "vad.rttm"
        src = corpus / "streams.wav"
        assert main(["vad", "--in", str(src), "--out", str(out)]) == 0
        assert list(read_rttm(out)) == ["streams"]


class TestDiarize:
    def test_oracle_embedder_labels_segments(self, corpus, tmp_path):
        out = tmp_path / "diar.rttm"
        code = main(
            [
                "diarize",
                "--in",
                str(corpus),
                "--out",
                str(out),
                "--embedder",
                "oracle",
                "--k",
                "2",
            ]
        )
        assert code == 0
        segments = read_rttm(out)["session000"]
        assert segments
        assert all(
            s.speaker is not None and s.speaker.startswith("spk") for s in segments
        )

    def test_explicit_segments_file(self, corpus, tmp_path):
        out = tmp_path / "diar2.rttm"
        code = main(
            [
                "diarize",
                "--in",
                str(corpus),
                "--segments",
                str(corpus / "oracle_segments.rttm"),
                "--out",
                str(out),
                "--embedder",
                "oracle",
            ]
        )
        assert code == 0
        assert read_rttm(out)["session000"]


class TestCr:
    def test_stdout_json(self, corpus, capsys):
        assert main(["cr", "--in", str(corpus)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["direction"] == "primary_to_cross"
        assert doc["hyp_kind"] == "one_best"
        assert doc["sessions"] == 1
        assert len(doc["cells"]) == 6
        rates = {
            (c["bucket"], c["variant"]): c["rate"] for c in doc["cells"]
        }
        assert rates[("1", "words")] is not None
        assert rates[("1", "words")] > 0  # the corpus has copy leakage

    def test_hyphenated_direction_and_lattice(self, corpus, capsys):
        code = main(
            [
                "cr",
                "--in",
                str(corpus),
                "--direction",
                "cross-to-primary",
                "--hyp-kind",
                "lattice",
            ]
        )
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["direction"] == "cross_to_primary"
        assert doc["hyp_kind"] == "lattice"

    def test_jobs_do_not_change_output(self, two_sessions, tmp_path):
        serial = tmp_path / "serial.json"
        parallel = tmp_path / "parallel.json"
        base = ["cr", "--in", str(two_sessions)]
        assert main(base + ["--out", str(serial)]) == 0
        assert main(base + ["--out", str(parallel), "--jobs", "2"]) == 0
        assert serial.read_bytes() == parallel.read_bytes()
        assert json.loads(serial.read_text())["sessions"] == 2

    def test_bad_direction_is_usage_error(self, corpus):
        assert main(["cr", "--in", str(corpus), "--direction", "sideways"]) == 2


class TestScore:
    def test_cpwer_self_is_zero(self, corpus, capsys):
        ref = str(corpus / "ref.seglst.json")
        assert main(["score", "--ref", ref, "--hyp", ref]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["metric"] == "cpwer"
        assert doc["wer"] == 0.0
        assert doc["errors"] == 0
        assert doc["mapping"]

    def test_orcwer_over_stream_ctms(self, corpus, capsys):
        code = main(
            [
                "score",
                "--ref",
                str(corpus / "ref.seglst.json"),
                "--hyp",
                str(corpus / "spoken_ch0.ctm"),
                str(corpus / "spoken_ch1.ctm"),
                "--metric",
                "orcwer",
            ]
        )
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["metric"] == "orcwer"
        assert doc["wer"] == 0.0
        assert len(doc["assignment"]) == len(
            json.loads((corpus / "ref.seglst.json").read_text())
        )

    def test_cpwer_wants_one_hyp(self, corpus):
        ref = str(corpus / "ref.seglst.json")
        assert main(["score", "--ref", ref, "--hyp", ref, ref]) == 2


class TestSegfix:
    def test_oracle_input_passes_through(self, corpus, tmp_path):
        out = tmp_path / "fixed.rttm"
        report = tmp_path / "report.json"
        code = main(
            [
                "segfix",
                "--in",
                str(corpus),
                "--segments",
                str(corpus / "oracle_segments.rttm"),
                "--out",
                str(out),
                "--report",
                str(report),
            ]
        )
        assert code == 0
        oracle = read_rttm(corpus / "oracle_segments.rttm")["session000"]
        fixed = read_rttm(out)["session000"]
        assert sorted((s.channel, s.start, s.end) for s in fixed) == sorted(
            (s.channel, s.start, s.end) for s in oracle
        )
        doc = json.loads(report.read_text())
        assert all(entry["count"] == 0 for entry in doc.values())

    def test_kind_subset(self, corpus, tmp_path):
        out = tmp_path / "fixed.rttm"
        code = main(
            [
                "segfix",
                "--in",
                str(corpus),
                "--segments",
                str(corpus / "oracle_segments.rttm"),
                "--out",
                str(out),
                "--kinds",
                "leak,missing",
            ]
        )
        assert code == 0


class TestReport:
    def test_html_written(self, corpus, tmp_path):
        out = tmp_path / "session.html"
        assert main(["report", "--in", str(corpus), "--out", str(out)]) == 0
        text = out.read_text()
        assert "session000" in text
        assert "<table" in text

    def test_deterministic(self, corpus, tmp_path):
        a, b = tmp_path / "a.html", tmp_path / "b.html"
        assert main(["report", "--in", str(corpus), "--out", str(a)]) == 0
        assert main(["report", "--in", str(corpus), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestErrorsAndConfig:
    def test_missing_input_is_data_error(self, tmp_path):
        code = main(
            ["vad", "--in", str(tmp_path / "nope.wav"), "--out", str(tmp_path / "o")]
        )
        assert code == 1

    def test_empty_dir_has_no_session(self, tmp_path):
        code = main(["cr", "--in", str(tmp_path)])
        assert code == 1

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_config_section(self, corpus, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"telemetry": {}}))
        code = main(["--config", str(cfg), "cr", "--in", str(corpus)])
        assert code == 2

    def test_toml_config_rejected(self, corpus, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text("[cr]\n")
        code = main(["--config", str(cfg), "cr", "--in", str(corpus)])
        assert code == 2

    def test_config_file_sets_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"simulate": {"num_utterances": 4}}))
        out = tmp_path / "sim"
        args = [
            "--config",
            str(cfg),
            "simulate",
            "--out",
            str(out),
            "--sample-rate",
            "1000",
        ]
        assert main(args) == 0
        doc = json.loads((out / "session000" / "meeting.json").read_text())
        assert doc["spec"]["num_utterances"] == 4

    def test_cli_flag_beats_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"simulate": {"num_utterances": 4}}))
        out = tmp_path / "sim"
        args = [
            "--config",
            str(cfg),
            "simulate",
            "--out",
            str(out),
            "--sample-rate",
            "1000",
            "--num-utterances",
            "5",
        ]
        assert main(args) == 0
        doc = json.loads((out / "session000" / "meeting.json").read_text())
        assert doc["spec"]["num_utterances"] == 5

    def test_env_var_config(self, corpus, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"cr": {"direction": "cross_to_primary"}}))
        monkeypatch.setenv("MEETLAB_CONFIG", str(cfg))
        out = tmp_path / "cr.json"
        assert main(["cr", "--in", str(corpus), "--out", str(out)]) == 0
        assert json.loads(out.read_text())["direction"] == "cross_to_primary"
