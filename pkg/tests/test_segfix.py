import pytest

from meetlab.core import Segment
from meetlab.segfix import (
    FIX_KINDS,
    FixPlan,
    SegError,
    apply_fixes,
    classification_report,
    classify_errors,
)


def seg(channel, start, end, speaker=None):
    return Segment(channel=channel, start=start, end=end, speaker=speaker)


def kinds_of(errors):
    return [e.kind for e in errors]


class TestFixPlan:
    def test_kinds_coerced_to_tuple(self):
        assert FixPlan(kinds=["leak"]).kinds == ("leak",)

    def test_validation(self):
        with pytest.raises(ValueError, match="unknown"):
            FixPlan(kinds=("leak", "teleport"))
        with pytest.raises(ValueError):
            FixPlan(leak_overlap=0.0)
        with pytest.raises(ValueError):
            FixPlan(leak_overlap=1.0)
        with pytest.raises(ValueError):
            FixPlan(coverage=0.0)
        with pytest.raises(ValueError):
            FixPlan(snap=-0.1)
        with pytest.raises(ValueError):
            FixPlan(min_speech=-1.0)


class TestClassify:
    def test_identical_segmentations_are_clean(self):
        oracle = [seg(0, 0.0, 2.0, "a"), seg(1, 1.0, 3.0, "b")]
        assert classify_errors(oracle, oracle) == []

    def test_leak_needs_little_own_and_much_cross_overlap(self):
        oracle = [seg(0, 0.0, 0.1, "a"), seg(1, 0.0, 1.0, "b")]
        hyp = [seg(0, 0.0, 1.0)]
        leaks = [e for e in classify_errors(hyp, oracle) if e.kind == "leak"]
        assert [e.hyp_index for e in leaks] == [0]

    def test_no_leak_when_cross_channel_is_also_quiet(self):
        # barely any oracle speech anywhere under the segment
        oracle = [seg(0, 0.0, 0.1, "a")]
        hyp = [seg(0, 0.0, 1.0)]
        assert "leak" not in kinds_of(classify_errors(hyp, oracle))

    def test_missing_reports_each_uncovered_run(self):
        oracle = [seg(0, 0.0, 3.0, "a")]
        hyp = [seg(0, 0.5, 1.0), seg(0, 1.5, 2.0)]
        missing = [e for e in classify_errors(hyp, oracle) if e.kind == "missing"]
        assert [e.span for e in missing] == [(0.0, 0.5), (1.0, 1.5), (2.0, 3.0)]
        assert all(e.oracle_index == 0 for e in missing)

    def test_tiny_uncovered_slivers_ignored(self):
        oracle = [seg(0, 0.0, 1.1, "a")]
        hyp = [seg(0, 0.0, 1.0)]
        assert "missing" not in kinds_of(classify_errors(hyp, oracle))

    def test_merge_needs_two_substantial_oracle_overlaps(self):
        oracle = [seg(0, 0.0, 2.0, "a"), seg(0, 3.0, 5.0, "b")]
        merged = classify_errors([seg(0, 0.0, 5.0)], oracle)
        assert "merge" in kinds_of(merged)
        single = classify_errors([seg(0, 0.0, 2.0)], oracle)
        assert "merge" not in kinds_of(single)

    def test_boundary_on_small_deviation_only(self):
        oracle = [seg(0, 0.0, 2.0, "a")]
        small = classify_errors([seg(0, 0.1, 2.1)], oracle)
        assert kinds_of(small) == ["boundary"]
        # deviation above the snap window keeps good coverage but is not
        # treated as a boundary problem
        large = classify_errors([seg(0, 0.6, 2.0)], oracle)
        assert "boundary" not in kinds_of(large)

    def test_boundary_requires_mutual_best_match(self):
        oracle = [seg(0, 0.0, 2.0, "a")]
        hyp = [seg(0, 0.0, 1.9), seg(0, 1.95, 2.2)]
        boundary = [e for e in classify_errors(hyp, oracle) if e.kind == "boundary"]
        assert [(e.hyp_index, e.oracle_index) for e in boundary] == [(0, 0)]

    def test_canonical_kind_order(self):
        oracle = [
            seg(0, 0.0, 2.0, "a"),
            seg(0, 3.0, 5.0, "b"),
            seg(0, 6.0, 8.0, "c"),
            seg(1, 0.0, 4.0, "d"),
        ]
        hyp = [seg(0, 0.0, 5.0), seg(0, 6.2, 8.2), seg(1, 6.5, 7.5)]
        got = kinds_of(classify_errors(hyp, oracle))
        ranks = [FIX_KINDS.index(k) for k in got]
        assert ranks == sorted(ranks)
        assert set(got) == set(FIX_KINDS)


class TestReport:
    def test_counts_and_durations(self):
        oracle = [
            seg(0, 0.0, 2.0, "a"),
            seg(0, 3.0, 5.0, "b"),
            seg(0, 6.0, 8.0, "c"),
            seg(1, 0.0, 4.0, "d"),
        ]
        hyp = [seg(0, 0.0, 5.0), seg(0, 6.2, 8.2), seg(1, 6.5, 7.5)]
        report = classification_report(hyp, oracle)
        assert report["leak"] == {"count": 1, "duration": 1.0}
        assert report["merge"] == {"count": 1, "duration": 5.0}
        assert report["boundary"] == {"count": 1, "duration": 2.0}
        # the whole cross channel plus the sliver in front of [6, 8)
        assert report["missing"] == {"count": 2, "duration": 4.2}

    def test_clean_input_reports_zeros(self):
        oracle = [seg(0, 0.0, 1.0, "a")]
        report = classification_report(oracle, oracle)
        assert all(v == {"count": 0, "duration": 0.0} for v in report.values())


class TestRepairs:
    def test_identity_on_oracle_input(self):
        oracle = [seg(0, 0.0, 2.0, "a"), seg(0, 3.0, 4.0, "b"), seg(1, 0.5, 2.5, "c")]
        assert apply_fixes(list(oracle), oracle) == sorted(
            oracle, key=lambda s: (s.channel, s.start)
        )

    def test_leak_pass_drops_only_the_leaked_segment(self):
        oracle = [seg(0, 0.0, 1.0, "a"), seg(1, 2.0, 3.0, "b")]
        hyp = [seg(0, 0.0, 1.0), seg(0, 2.0, 3.0)]
        out = apply_fixes(hyp, oracle, FixPlan(kinds=("leak",)))
        assert out == [seg(0, 0.0, 1.0)]

    def test_merge_pass_splits_at_gap_midpoints(self):
        oracle = [seg(0, 0.0, 2.0, "a"), seg(0, 3.0, 5.0, "b")]
        out = apply_fixes([seg(0, 0.0, 5.0)], oracle, FixPlan(kinds=("merge",)))
        assert out == [seg(0, 0.0, 2.5), seg(0, 2.5, 5.0)]

    def test_boundary_pass_snaps_to_oracle_endpoints(self):
        oracle = [seg(0, 0.0, 2.0, "a")]
        out = apply_fixes([seg(0, 0.1, 2.1)], oracle, FixPlan(kinds=("boundary",)))
        assert out == [seg(0, 0.0, 2.0)]

    def test_missing_pass_inserts_with_oracle_speaker(self):
        oracle = [seg(0, 1.0, 2.0, "x")]
        out = apply_fixes([], oracle, FixPlan(kinds=("missing",)))
        assert out == [seg(0, 1.0, 2.0, "x")]

    def test_unplanned_kinds_left_alone(self):
        oracle = [seg(0, 0.0, 0.1, "a"), seg(1, 0.0, 1.0, "b")]
        hyp = [seg(0, 0.0, 1.0)]
        out = apply_fixes(hyp, oracle, FixPlan(kinds=("boundary",)))
        assert out == hyp

    def test_snapped_segment_wins_overlap_with_unsnapped(self):
        oracle = [seg(0, 0.0, 2.0, "a")]
        hyp = [seg(0, 0.0, 1.9), seg(0, 1.95, 3.0)]
        out = apply_fixes(hyp, oracle, FixPlan(kinds=("boundary",)))
        assert out == [seg(0, 0.0, 2.0), seg(0, 2.0, 3.0)]

    def test_full_plan_reconstructs_oracle(self):
        oracle = [
            seg(0, 0.0, 2.0, "a"),
            seg(0, 3.0, 5.0, "b"),
            seg(0, 6.0, 8.0, "c"),
            seg(1, 0.0, 4.0, "d"),
        ]
        hyp = [seg(0, 0.0, 5.0), seg(0, 6.2, 8.2), seg(1, 6.5, 7.5)]
        out = apply_fixes(hyp, oracle)
        spans = [(s.channel, s.start, s.end) for s in out]
        assert spans == [(0, 0.0, 2.0), (0, 3.0, 5.0), (0, 6.0, 8.0), (1, 0.0, 4.0)]

    def test_repair_is_idempotent(self):
        oracle = [
            seg(0, 0.0, 2.0, "a"),
            seg(0, 3.0, 5.0, "b"),
            seg(1, 0.0, 4.0, "d"),
        ]
        hyp = [seg(0, 0.0, 5.0), seg(1, 0.1, 3.9)]
        once = apply_fixes(hyp, oracle)
        assert apply_fixes(once, oracle) == once


def test_seg_error_is_plain_data():
    err = SegError(kind="missing", oracle_index=2, span=(0.0, 1.0))
    assert err.hyp_index is None
    assert err.span == (0.0, 1.0)
