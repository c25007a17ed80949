import numpy as np
import pytest

from fuserec.errors import DimensionError
from fuserec.fusion import PredictionHead, init_head, score_logit, score_logit_batch
from fuserec.quant import (
    dequantize,
    logit_error_bound,
    qscore,
    qscore_logit,
    quantize_head,
    quantize_per_row,
)


def test_zero_row_scale_one():
    q = quantize_per_row(np.zeros((2, 4)))
    assert np.array_equal(q.scales, np.ones(2))
    assert not q.qvalues.any()
    assert np.array_equal(dequantize(q), np.zeros((2, 4)))


def test_extrema_exact():
    q = quantize_per_row(np.array([[1.0, -1.0]]))
    assert q.scales[0] == pytest.approx(1 / 127)
    assert q.qvalues.tolist() == [[127, -127]]
    assert np.array_equal(dequantize(q), np.array([[1.0, -1.0]]))


def test_half_point_rounds_away_from_zero():
    # 0.5 / (1/127) = 63.5 -> 64, not banker's 63
    q = quantize_per_row(np.array([[0.5, 1.0]]))
    assert q.qvalues.tolist() == [[64, 127]]
    deq = dequantize(q)[0, 0]
    assert deq == pytest.approx(64 / 127)
    # error at the half-point is exactly scale/2
    assert abs(deq - 0.5) == pytest.approx(q.scales[0] / 2, abs=1e-15)


def test_negative_half_symmetric():
    q = quantize_per_row(np.array([[-0.5, 1.0]]))
    assert q.qvalues[0, 0] == -64


def test_rejects_bad_inputs():
    with pytest.raises(DimensionError):
        quantize_per_row(np.zeros(4))
    with pytest.raises(ValueError):
        quantize_per_row(np.array([[np.nan, 1.0]]))


def test_int8_range_and_error_bound_random():
    """Elementwise |w - dequant| <= scale/2, codes within [-127, 127]."""
    for trial in range(1000):
        rng = np.random.default_rng(trial)
        w = rng.standard_normal((rng.integers(1, 6), rng.integers(1, 8))) * rng.gamma(1.0)
        q = quantize_per_row(w)
        assert q.qvalues.min() >= -127 and q.qvalues.max() <= 127
        err = np.abs(dequantize(q) - w)
        assert np.all(err <= q.scales[:, None] / 2 + 1e-12)


def test_quantize_idempotent_bitwise(rng):
    w = rng.standard_normal((5, 9))
    q1 = quantize_per_row(w)
    q2 = quantize_per_row(dequantize(q1))
    assert np.array_equal(q1.qvalues, q2.qvalues)
    assert np.array_equal(q1.scales, q2.scales)


def test_zero_head_scores_half():
    head = PredictionHead(
        hidden=np.zeros((4, 3)), hidden_bias=np.zeros(3), out=np.zeros(3), out_bias=0.0
    )
    qhead = quantize_head(head)
    assert qscore(np.ones(4), qhead) == 0.5


def test_extrema_head_exact_logit():
    # single hidden unit, weights at the quantization extrema are exact
    head = PredictionHead(
        hidden=np.array([[1.0], [-1.0]]),
        hidden_bias=np.zeros(1),
        out=np.ones(1),
        out_bias=0.0,
    )
    qhead = quantize_head(head)
    assert qscore_logit(np.array([1.0, 1.0]), qhead) == 0.0


def test_quantized_logits_respect_analytic_bound():
    for trial in range(100):
        rng = np.random.default_rng(trial)
        head = init_head(8, 5, rng)
        qhead = quantize_head(head)
        z = rng.standard_normal(8) * 3
        err = abs(qscore_logit(z, qhead) - score_logit(z, head))
        assert err <= logit_error_bound(z, head, qhead) + 1e-12


def test_batch_matches_scalar(rng):
    head = init_head(6, 4, rng)
    qhead = quantize_head(head)
    z = rng.standard_normal((10, 6))
    from fuserec.quant import qscore_logit_batch

    batch = qscore_logit_batch(z, qhead)
    for row in range(10):
        assert batch[row] == pytest.approx(qscore_logit(z[row], qhead), abs=1e-12)


def test_quantization_preserves_scores_roughly(rng):
    head = init_head(12, 8, rng)
    qhead = quantize_head(head)
    z = rng.standard_normal((50, 12))
    full = score_logit_batch(z, head)
    quantized = np.array([qscore_logit(v, qhead) for v in z])
    assert np.max(np.abs(full - quantized)) < 0.5  # coarse sanity, bound test is exact
