import numpy as np
import pytest

from nof1gait.data import Foot, Outcome, WalkingCondition, describe, parse_stride_csv, preprocess, serialize_stride_csv
from nof1gait.synth import (
    DT_FIRST_ORDER,
    ST_FIRST_ORDER,
    SynthSpec,
    generate_series,
    generate_study,
    truth_csv,
)


def lag1_autocorr(x: np.ndarray) -> float:
    xc = x - x.mean()
    return float(xc[:-1] @ xc[1:] / (xc @ xc))


class TestGenerateSeries:
    def test_phi_zero_errors_independent(self):
        spec = SynthSpec((1.4, 0, 0, 0), 0.0, 0.05, 250, seed=1)
        series = generate_series(spec)
        resid = series.values() - 1.4
        assert abs(lag1_autocorr(resid)) < 0.1

    def test_lag1_autocorrelation_matches_phi(self):
        spec = SynthSpec((1.4, 0, 0, 0), 0.8, 0.05, 500, seed=2)
        series = generate_series(spec)
        resid = series.values() - 1.4
        assert lag1_autocorr(resid) == pytest.approx(0.8, abs=0.05)

    def test_noiseless_limit_hits_condition_means(self):
        beta = (1.4, -0.09, -0.03, -0.12)
        spec = SynthSpec(beta, 0.3, 1e-12, 5, seed=3)
        series = generate_series(spec)
        stats = series.observed_condition_stats()
        assert stats[WalkingCondition.ST_CONTROL][0] == pytest.approx(1.4, abs=1e-9)
        assert stats[WalkingCondition.DT_CONTROL][0] == pytest.approx(1.31, abs=1e-9)
        assert stats[WalkingCondition.ST_FATIGUE][0] == pytest.approx(1.37, abs=1e-9)
        assert stats[WalkingCondition.DT_FATIGUE][0] == pytest.approx(1.28, abs=1e-9)

    def test_same_seed_identical(self):
        spec = SynthSpec((1.4, -0.1, 0, 0), 0.5, 0.05, 50, seed=9)
        a = generate_series(spec)
        b = generate_series(spec)
        assert np.array_equal(a.values(), b.values())

    def test_marginal_variance_converges(self):
        phi, sigma = 0.6, 0.05
        spec = SynthSpec((1.4, 0, 0, 0), phi, sigma, 1250, seed=4)
        resid = generate_series(spec).values() - 1.4
        expected = sigma**2 / (1 - phi**2)
        assert np.var(resid) == pytest.approx(expected, rel=0.1)

    def test_condition_order_respected(self):
        spec = SynthSpec((1.4, 0, 0, 0), 0.0, 0.05, 3, condition_order=DT_FIRST_ORDER, seed=5)
        series = generate_series(spec)
        assert [b[0] for b in series.condition_blocks()] == list(DT_FIRST_ORDER)

    def test_validation(self):
        with pytest.raises(ValueError):
            SynthSpec((1, 0, 0, 0), 1.0, 0.05, 10)
        with pytest.raises(ValueError):
            SynthSpec((1, 0, 0, 0), 0.5, -1.0, 10)
        with pytest.raises(ValueError):
            SynthSpec((1, 0, 0, 0), 0.5, 0.05, 10, condition_order=ST_FIRST_ORDER[:3] + ST_FIRST_ORDER[:1])


class TestGenerateStudy:
    def test_record_count(self):
        study = generate_study(16, seed=0, strides_per_condition=50)
        assert len(study.records) == 16 * 4 * 50
        assert len(study.truths) == 16

    def test_visit_order_alternates(self):
        study = generate_study(4, seed=0, strides_per_condition=2)
        first_conditions = {}
        for r in study.records:
            first_conditions.setdefault(r.participant_id, r.condition)
        values = list(first_conditions.values())
        assert values[0] is ST_FIRST_ORDER[0]
        assert values[1] is DT_FIRST_ORDER[0]

    def test_same_seed_byte_identical(self):
        a = generate_study(4, seed=11, strides_per_condition=10)
        b = generate_study(4, seed=11, strides_per_condition=10)
        assert serialize_stride_csv(a.records) == serialize_stride_csv(b.records)
        assert truth_csv(a.truths) == truth_csv(b.truths)

    def test_describe_matches_truth_within_se(self):
        base = SynthSpec((1.4, -0.09, -0.03, -0.12), 0.0, 0.05, 100)
        specs = [
            SynthSpec(
                base.beta_true,
                base.phi_true,
                base.sigma_true,
                100,
                condition_order=ST_FIRST_ORDER if i % 2 == 0 else DT_FIRST_ORDER,
                seed=100 + i,
            )
            for i in range(10)
        ]
        study = generate_study(10, specs=specs, seed=0)
        d = {x.condition: x for x in describe(study.records)}
        n = 10 * 100
        se = 0.05 / np.sqrt(n)
        assert abs(d[WalkingCondition.ST_CONTROL].stride_length_mean - 1.4) < 4 * se
        assert abs(d[WalkingCondition.DT_CONTROL].stride_length_mean - 1.31) < 4 * se

    def test_round_trip_through_pipeline(self):
        study = generate_study(3, seed=7, strides_per_condition=12)
        parsed = parse_stride_csv(serialize_stride_csv(study.records))
        assert parsed == study.records
        result = preprocess(parsed, foot_filter=Foot.LEFT, downsample_factor=1, outlier_sd=1e9)
        # regenerate the first participant's series and compare values
        pid = study.truths[0].participant_id
        got = result.series[pid][Outcome.STRIDE_LENGTH].values()
        original = np.array(
            [r.stride_length for r in study.records if r.participant_id == pid]
        )
        assert np.array_equal(got, original)
