import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nof1gait.data import (
    DataError,
    Foot,
    Outcome,
    StrideRecord,
    WalkingCondition,
    describe,
    describe_csv,
    parse_stride_csv,
    preprocess,
    serialize_stride_csv,
)

HEADER = "participant_id,foot,condition,sequence_index,stride_length_m,stride_time_s\n"


def make_records(pid="p01", foot=Foot.LEFT, condition=WalkingCondition.ST_CONTROL, values=None):
    values = values if values is not None else [1.4]
    return [
        StrideRecord(pid, foot, condition, i, v, 1.1) for i, v in enumerate(values)
    ]


class TestParse:
    def test_single_row(self):
        recs = parse_stride_csv(HEADER + "p01,left,ST-Control,0,1.43,1.10\n")
        assert recs == [
            StrideRecord("p01", Foot.LEFT, WalkingCondition.ST_CONTROL, 0, 1.43, 1.10)
        ]

    def test_header_only(self):
        assert parse_stride_csv(HEADER) == []

    def test_non_positive_value(self):
        with pytest.raises(DataError, match="non-positive value"):
            parse_stride_csv(HEADER + "p01,left,ST-Control,0,-1.0,1.10\n")

    def test_unknown_condition_names_token(self):
        with pytest.raises(DataError, match="Sideways"):
            parse_stride_csv(HEADER + "p01,left,Sideways,0,1.4,1.1\n")

    def test_unknown_foot_names_token(self):
        with pytest.raises(DataError, match="middle"):
            parse_stride_csv(HEADER + "p01,middle,ST-Control,0,1.4,1.1\n")

    def test_malformed_row_reports_line_number(self):
        text = HEADER + "p01,left,ST-Control,0,1.4,1.1\np01,left,ST-Control\n"
        with pytest.raises(DataError, match="line 3"):
            parse_stride_csv(text)

    def test_case_insensitive_tokens(self):
        recs = parse_stride_csv(HEADER + "p01,LEFT,dt-fatigue,0,1.4,1.1\n")
        assert recs[0].condition is WalkingCondition.DT_FATIGUE

    def test_sequence_must_increase(self):
        text = HEADER + "p01,left,ST-Control,1,1.4,1.1\np01,left,ST-Control,1,1.4,1.1\n"
        with pytest.raises(DataError, match="strictly increasing"):
            parse_stride_csv(text)

    def test_non_finite_rejected(self):
        with pytest.raises(DataError, match="non-finite"):
            parse_stride_csv(HEADER + "p01,left,ST-Control,0,nan,1.1\n")

    def test_accepts_bytes(self):
        recs = parse_stride_csv((HEADER + "p01,left,ST-Control,0,1.4,1.1\n").encode())
        assert len(recs) == 1


@given(
    st.lists(
        st.tuples(
            st.sampled_from(sorted(WalkingCondition, key=lambda c: c.value)),
            st.floats(0.5, 2.5),
            st.floats(0.5, 2.5),
        ),
        min_size=0,
        max_size=30,
    )
)
@settings(max_examples=50)
def test_parse_serialize_round_trip(rows):
    counters = {}
    records = []
    for cond, sl, st_ in rows:
        seq = counters.get(cond, 0)
        counters[cond] = seq + 1
        records.append(StrideRecord("p01", Foot.LEFT, cond, seq, sl, st_))
    assert parse_stride_csv(serialize_stride_csv(records)) == records


class TestPreprocess:
    def test_downsample_keeps_every_kth(self):
        records = make_records(values=[1.0 + 0.01 * i for i in range(10)])
        records += make_records(condition=WalkingCondition.DT_CONTROL, values=[1.2])
        result = preprocess(records, downsample_factor=5, outlier_sd=100.0)
        series = result.series["p01"][Outcome.STRIDE_LENGTH]
        kept = [o.sequence_index for o in series.observations if o.condition is WalkingCondition.ST_CONTROL]
        assert kept == [0, 5]

    def test_factor_one_large_sd_is_identity_on_left_foot(self):
        left = make_records(values=[1.0, 1.1, 1.2])
        right = [
            StrideRecord("p01", Foot.RIGHT, WalkingCondition.ST_CONTROL, i, 2.0, 1.0)
            for i in range(3)
        ]
        result = preprocess(left + right, downsample_factor=1, outlier_sd=1e9)
        series = result.series["p01"][Outcome.STRIDE_LENGTH]
        assert [o.value for o in series.observations] == [1.0, 1.1, 1.2]

    def test_outlier_removed_at_three_sd(self):
        values = [1.0] * 99 + [9.0]
        # independent check that 9.0 is beyond mean + 3 SD of the block
        arr = np.array(values)
        assert 9.0 > arr.mean() + 3 * arr.std(ddof=1)
        records = make_records(values=values)
        result = preprocess(records, downsample_factor=1, outlier_sd=3.0)
        series = result.series["p01"][Outcome.STRIDE_LENGTH]
        assert 9.0 not in [o.value for o in series.observations]
        assert len(series) == 99

    def test_outlier_stats_before_downsampling(self):
        # the outlier sits at index 5; with stats-after-downsampling it would
        # survive into the kept subsequence
        values = [1.0] * 5 + [9.0] + [1.0] * 94
        records = make_records(values=values)
        result = preprocess(records, downsample_factor=5, outlier_sd=3.0)
        series = result.series["p01"][Outcome.STRIDE_LENGTH]
        assert 9.0 not in [o.value for o in series.observations]

    def test_idempotent_with_factor_one(self):
        records = make_records(values=[1.0, 1.05, 1.1, 0.95])
        once = preprocess(records, downsample_factor=1, outlier_sd=3.0)
        series = once.series["p01"][Outcome.STRIDE_LENGTH]
        again_records = [
            StrideRecord("p01", Foot.LEFT, o.condition, o.sequence_index, o.value, 1.1)
            for o in series.observations
        ]
        twice = preprocess(again_records, downsample_factor=1, outlier_sd=3.0)
        assert [
            o.value for o in twice.series["p01"][Outcome.STRIDE_LENGTH].observations
        ] == [o.value for o in series.observations]

    def test_no_synthesis_and_count_bound(self):
        records = make_records(values=[1.0, 1.2, 1.4, 5.0, 1.1])
        result = preprocess(records, downsample_factor=2, outlier_sd=3.0)
        series = result.series["p01"][Outcome.STRIDE_LENGTH]
        input_values = {r.stride_length for r in records}
        assert len(series) <= len(records)
        assert all(o.value in input_values for o in series.observations)

    def test_empty_block_excludes_participant_with_warning(self):
        records = [
            StrideRecord("p01", Foot.RIGHT, WalkingCondition.ST_CONTROL, 0, 1.4, 1.1)
        ] + make_records(pid="p02")
        result = preprocess(records, downsample_factor=1, outlier_sd=3.0)
        assert "p01" not in result.series
        assert "p02" in result.series
        # p01 has no left-foot strides at all, so it never enters the series map
        assert not any("p01" in w for w in result.warnings) or "p01" not in result.series

    def test_invalid_knobs(self):
        with pytest.raises(ValueError):
            preprocess([], downsample_factor=0)
        with pytest.raises(ValueError):
            preprocess([], outlier_sd=0.0)

    def test_outlier_removal_independent_per_outcome(self):
        records = [
            StrideRecord("p01", Foot.LEFT, WalkingCondition.ST_CONTROL, i, sl, st_)
            for i, (sl, st_) in enumerate(
                [(1.0, 1.1)] * 99 + [(9.0, 1.1)]
            )
        ]
        result = preprocess(records, downsample_factor=1, outlier_sd=3.0)
        assert len(result.series["p01"][Outcome.STRIDE_LENGTH]) == 99
        assert len(result.series["p01"][Outcome.STRIDE_TIME]) == 100


class TestDescribe:
    def test_single_record(self):
        d = describe(make_records(values=[1.4]))
        assert d[0].n == 1
        assert d[0].stride_length_mean == 1.4
        assert d[0].stride_length_sd == 0.0

    def test_two_records_sample_sd(self):
        d = describe(make_records(values=[1.0, 2.0]))
        assert d[0].stride_length_mean == pytest.approx(1.5)
        assert d[0].stride_length_sd == pytest.approx(0.7071, abs=1e-4)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            describe([])

    def test_csv_shape(self):
        text = describe_csv(describe(make_records()))
        lines = text.strip().splitlines()
        assert lines[0] == "condition,n,sl_mean,sl_sd,st_mean,st_sd"
        assert lines[1].startswith("ST-Control,1,")
