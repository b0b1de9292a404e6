"""Unit tests for field post-processing and frequency recovery."""

import math

import numpy as np
import pytest

from ldaction import (
    Axis,
    Harmonic,
    PhaseState,
    ScalarField,
    average_fields,
    extract_singular_features,
    find_local_minima,
    frequency_from_series,
    g_series,
    normalize_field,
    sample_bilinear,
    torus_consistency,
)
from ldaction.analysis import forward_average_series
from ldaction.sections import CrossingSet


def make_field(values, mask=None, lo=-1.0, hi=1.0):
    values = np.asarray(values, dtype=float)
    nx, ny = values.shape
    if mask is None:
        mask = np.ones_like(values, dtype=bool)
    return ScalarField(values=values, x_axis=Axis(lo, hi, nx), y_axis=Axis(lo, hi, ny),
                       mask=np.asarray(mask, dtype=bool))


class TestNormalize:
    def test_affine_rescale(self):
        f = make_field([[0.0, 2.0], [4.0, 4.0]])
        out = normalize_field(f)
        np.testing.assert_allclose(out.values, [[0.0, 0.5], [1.0, 1.0]])

    def test_constant_field_becomes_zero(self):
        out = normalize_field(make_field(np.full((3, 3), 7.0)))
        np.testing.assert_array_equal(out.values, 0.0)

    def test_masked_cells_untouched_and_excluded(self):
        mask = np.ones((2, 2), dtype=bool)
        mask[0, 0] = False
        f = make_field([[100.0, 2.0], [4.0, 6.0]], mask=mask)
        out = normalize_field(f)
        assert out.values[0, 0] == 100.0
        np.testing.assert_allclose(out.values[mask], [0.0, 0.5, 1.0])

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        f = make_field(rng.uniform(3.0, 9.0, (6, 6)))
        once = normalize_field(f)
        twice = normalize_field(once)
        np.testing.assert_allclose(twice.values, once.values, atol=1e-15)


class TestExtractFeatures:
    def test_features_line_up_on_a_sharp_front(self):
        # a step across x = 0 concentrates the central-difference gradient
        # on the two cell columns straddling the jump
        xs = np.linspace(-1.0, 1.0, 41)
        v = np.where(xs > 0.0, 1.0, 0.0)[:, None] + 0.01 * np.linspace(0, 1, 21)[None, :]
        feats = extract_singular_features(make_field(v), percentile=95.0)
        assert len(feats.points) > 0
        assert np.max(np.abs(feats.points[:, 0])) <= xs[1] - xs[0] + 1e-12

    def test_linear_ramp_selects_percentile_count(self):
        xs = np.linspace(0.0, 1.0, 30)
        v = np.broadcast_to(xs[:, None], (30, 30)).copy()
        feats = extract_singular_features(make_field(v), percentile=90.0)
        interior = 28 * 28
        # constant gradient: >= floor(10%) of interior cells survive the cut
        assert len(feats.points) >= 0.1 * interior * 0.9
        assert feats.threshold > 0

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        v = rng.uniform(0.0, 5.0, (25, 25))
        a = extract_singular_features(make_field(v), percentile=95.0)
        b = extract_singular_features(make_field(3.0 * v + 11.0), percentile=95.0)
        np.testing.assert_array_equal(a.indices, b.indices)

    def test_small_field_rejected(self):
        with pytest.raises(ValueError):
            extract_singular_features(make_field(np.zeros((2, 2))))

    def test_masked_interior_gives_empty_set(self):
        f = make_field(np.zeros((5, 5)), mask=np.zeros((5, 5), dtype=bool))
        feats = extract_singular_features(f)
        assert len(feats.points) == 0


class TestLocalMinima:
    def test_paraboloid_has_single_minimum(self):
        n = 15
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        v = (ii - 7.0) ** 2 + (jj - 7.0) ** 2
        mins = find_local_minima(make_field(v), radius=1)
        assert len(mins) == 1
        assert mins[0][:2] == (7, 7)

    def test_duality_with_maxima(self):
        rng = np.random.default_rng(5)
        v = rng.uniform(0.0, 1.0, (20, 20))
        mins = find_local_minima(make_field(-v), radius=2)
        # each reported minimum of -v is a strict local maximum of v
        for i, j, *_ in mins:
            window = v[i - 2: i + 3, j - 2: j + 3]
            assert v[i, j] == window.max()

    def test_masked_neighbors_ignored(self):
        v = np.zeros((7, 7))
        v[3, 3] = -1.0
        v[3, 4] = -2.0  # lower, but masked away
        mask = np.ones((7, 7), dtype=bool)
        mask[3, 4] = False
        mins = find_local_minima(make_field(v, mask=mask), radius=1)
        assert any(m[:2] == (3, 3) for m in mins)

    def test_radius_validation(self):
        with pytest.raises(ValueError):
            find_local_minima(make_field(np.zeros((5, 5))), radius=0)


class TestGSeries:
    def test_zero_energy_is_identically_zero(self):
        taus = np.linspace(1.0, 20.0, 128)
        series = g_series(Harmonic(), PhaseState(q=0.0, p=0.0), taus, dt=1e-2)
        assert all(g == pytest.approx(0.0, abs=1e-14) for _, g in series)

    def test_amplitude_bound(self):
        h0, omega = 0.5, 1.0
        taus = np.linspace(50.0 / 256, 50.0, 256)
        series = g_series(Harmonic(), PhaseState(q=1.0, p=0.0), taus, dt=1e-2, s_inf=h0)
        gs = np.array([g for _, g in series])
        assert np.max(np.abs(gs)) <= h0 / (2 * omega) + 1e-3

    def test_estimated_baseline_keeps_amplitude_close(self):
        # the trailing-decade estimate of the limit carries an O(1/tau) bias
        # that is multiplied by tau, so only a relative bound holds
        h0, omega = 0.5, 1.0
        taus = np.linspace(50.0 / 256, 50.0, 256)
        series = g_series(Harmonic(), PhaseState(q=1.0, p=0.0), taus, dt=1e-2)
        gs = np.array([g for _, g in series])
        assert np.max(np.abs(gs)) <= 1.25 * h0 / (2 * omega)

    def test_matches_closed_form_with_exact_baseline(self):
        h0, omega = 0.5, 1.0
        taus = np.linspace(100.0 / 512, 100.0, 512)
        series = g_series(Harmonic(), PhaseState(q=1.0, p=0.0), taus, dt=1e-3, s_inf=h0)
        gs = np.array([g for _, g in series])
        ref = -(h0 / (2 * omega)) * np.sin(2 * omega * taus)
        np.testing.assert_allclose(gs, ref, atol=1e-5)

    def test_average_series_converges_to_h0(self):
        ser = forward_average_series(Harmonic(), PhaseState(q=1.0, p=0.0), 100.0, 256, dt=1e-2)
        taus, avgs = ser[:, 0], ser[:, 1]
        late = taus > 1.0
        assert np.all(np.abs(avgs[late] - 0.5) <= 0.5 / (2.0 * taus[late]) + 1e-6)


class TestFrequency:
    def test_synthetic_sine(self):
        taus = np.linspace(0.0, 100.0, 2048)
        series = list(zip(taus, np.sin(3.0 * taus)))
        est = frequency_from_series(series)
        assert abs(est.omega - 3.0) <= est.resolution

    def test_scaled_harmonic_frequency(self):
        sys = Harmonic(m=1.0, omega=2.0)
        taus = np.linspace(100.0 / 1024, 100.0, 1024)
        series = g_series(sys, PhaseState(q=1.0, p=0.0), taus, dt=1e-2, s_inf=2.0)
        est = frequency_from_series(series)
        assert abs(est.omega - 4.0) <= est.resolution

    def test_flat_series_rejected(self):
        taus = np.linspace(0.0, 10.0, 128)
        with pytest.raises(ValueError):
            frequency_from_series(list(zip(taus, np.zeros(128))))

    def test_too_few_samples_rejected(self):
        taus = np.linspace(0.0, 10.0, 32)
        with pytest.raises(ValueError):
            frequency_from_series(list(zip(taus, np.sin(taus))))

    def test_parseval_consistency(self):
        rng = np.random.default_rng(11)
        y = rng.standard_normal(256)
        spec = np.fft.rfft(y)
        # rfft energy bookkeeping: doubled interior bins
        weights = np.full(spec.size, 2.0)
        weights[0] = 1.0
        if y.size % 2 == 0:
            weights[-1] = 1.0
        energy = float(np.sum(weights * np.abs(spec) ** 2) / y.size)
        assert energy == pytest.approx(float(np.sum(y**2)), rel=1e-10)


class TestAverageFields:
    def test_identity_and_mean(self):
        a = make_field(np.zeros((4, 4)))
        b = make_field(np.full((4, 4), 2.0))
        out = average_fields([a, b])
        np.testing.assert_array_equal(out.values, 1.0)
        one = average_fields([a])
        np.testing.assert_array_equal(one.values, a.values)

    def test_mask_intersection(self):
        ma = np.ones((3, 3), dtype=bool)
        mb = np.ones((3, 3), dtype=bool)
        ma[0, 0] = False
        mb[2, 2] = False
        out = average_fields([make_field(np.ones((3, 3)), ma), make_field(np.ones((3, 3)), mb)])
        assert not out.mask[0, 0] and not out.mask[2, 2]
        assert out.mask.sum() == 7

    def test_axis_mismatch_rejected(self):
        a = make_field(np.zeros((4, 4)), lo=-1.0, hi=1.0)
        b = make_field(np.zeros((4, 4)), lo=-2.0, hi=2.0)
        with pytest.raises(ValueError):
            average_fields([a, b])


class TestSamplingAndTori:
    def test_bilinear_exact_on_linear_field(self):
        xs = np.linspace(-1.0, 1.0, 9)
        v = xs[:, None] + 2.0 * xs[None, :]
        f = make_field(v)
        for x, y in [(0.13, -0.4), (-0.77, 0.21), (0.0, 0.0)]:
            out = sample_bilinear(f, np.array([[x, y]]))
            assert out[0] == pytest.approx(x + 2.0 * y, abs=1e-12)

    def test_bilinear_outside_is_nan(self):
        f = make_field(np.zeros((5, 5)))
        assert math.isnan(sample_bilinear(f, np.array([[2.0, 0.0]]))[0])

    def test_constant_field_spread_zero(self):
        f = make_field(np.full((11, 11), 3.0))
        theta = np.linspace(0.0, 2 * math.pi, 40, endpoint=False)
        pts = 0.5 * np.column_stack([np.cos(theta), np.sin(theta)])
        crossings = CrossingSet(points=pts, times=np.arange(40.0),
                                states=np.zeros((40, 4)), complete=True)
        rep = torus_consistency(f, crossings, tolerance=0.02)
        assert rep.passed
        assert rep.spread == pytest.approx(0.0, abs=1e-14)
        assert rep.mean == pytest.approx(3.0)

    def test_spread_ratio_detects_variation(self):
        xs = np.linspace(-1.0, 1.0, 21)
        v = 1.0 + np.broadcast_to(xs[:, None] ** 2, (21, 21)).copy()
        f = make_field(v)
        theta = np.linspace(0.0, 2 * math.pi, 60, endpoint=False)
        pts = 0.9 * np.column_stack([np.cos(theta), np.sin(theta)])
        rep = torus_consistency(f, pts_to_crossings(pts), tolerance=0.02)
        assert not rep.passed
        assert rep.ratio > 0.02


def pts_to_crossings(pts):
    n = len(pts)
    return CrossingSet(points=np.asarray(pts), times=np.arange(float(n)),
                       states=np.zeros((n, 4)), complete=True)
