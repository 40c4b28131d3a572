"""
Tests for rational-rate polyphase resampling.
"""

import numpy as np
import pytest

from gestdiff.dsp.resampling import ResampleError, design_polyphase_filter, rate_ratio, resample_polyphase


def test_rate_ratio_in_lowest_terms():
    assert rate_ratio(50.0, 30.0) == (3, 5)
    assert rate_ratio(44100, 16000) == (160, 441)


def test_constant_stream_keeps_unit_gain():
    """100 frames at 50 Hz become ceil(100 * 3 / 5) = 60 frames at 30 Hz."""
    output = resample_polyphase(np.ones(100), 50.0, 30.0)

    assert output.shape == (60,)
    np.testing.assert_allclose(output, 1.0, atol=1e-6)


def test_edges_of_an_offset_constant_are_not_pulled_toward_zero():
    output = resample_polyphase(np.full(60, 7.5), 30.0, 50.0)

    assert output.shape == (100,)
    np.testing.assert_allclose(output[[0, 1, -2, -1]], 7.5, atol=1e-6)


def test_sine_matches_analytic_samples_away_from_edges():
    t_in = np.arange(100) / 50.0
    t_out = np.arange(60) / 30.0

    output = resample_polyphase(np.sin(2 * np.pi * 5.0 * t_in), 50.0, 30.0)

    interior = slice(10, 50)
    assert np.max(np.abs(output[interior] - np.sin(2 * np.pi * 5.0 * t_out[interior]))) < 1e-2


def test_equal_rates_return_input():
    x = np.random.default_rng(0).normal(size=(37, 4))

    np.testing.assert_allclose(resample_polyphase(x, 30.0, 30.0), x, atol=1e-9)


def test_columns_are_resampled_independently():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(80, 3))

    together = resample_polyphase(x, 50.0, 30.0)
    separately = np.stack([resample_polyphase(x[:, column], 50.0, 30.0) for column in range(3)], axis=1)

    np.testing.assert_allclose(together, separately, atol=1e-12)


def test_every_polyphase_branch_has_unit_dc_gain():
    taps = design_polyphase_filter(3, 5)

    for phase in range(3):
        assert taps[phase::3].sum() * 3 == pytest.approx(1.0)


def test_empty_stream_is_rejected():
    with pytest.raises(ResampleError, match="empty"):
        resample_polyphase(np.zeros(0), 50.0, 30.0)


def test_non_positive_rate_is_rejected():
    with pytest.raises(ResampleError, match="positive"):
        resample_polyphase(np.ones(10), 0.0, 30.0)
