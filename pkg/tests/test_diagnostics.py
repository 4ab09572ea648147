import itertools
import json
import math

import numpy as np
import pytest

from onebit_gna.diagnostics import (
    _block_extrema,
    cone_constants,
    cone_ratio,
    diagnostics_report,
    eta_bound,
    restricted_spectrum,
    scaling_fit,
)
from onebit_gna.model import sample_matrix


def test_identity_gram():
    m, n = 16, 6
    psi = math.sqrt(m) * np.vstack([np.eye(n), np.zeros((m - n, n))])
    spec = restricted_spectrum(psi, 2)
    assert spec.exhaustive
    assert spec.c2s_min == pytest.approx(1.0, abs=1e-12)
    assert spec.c2s_max == pytest.approx(1.0, abs=1e-12)
    assert spec.support_size == 4


def test_exhaustive_matches_brute_force():
    m, n, s = 200, 8, 2
    psi = sample_matrix(m, n, 0.0, np.random.default_rng(0)).matrix
    spec = restricted_spectrum(psi, s)
    lo, hi = np.inf, -np.inf
    for a in itertools.combinations(range(n), 2 * s):
        cols = psi[:, list(a)]
        ev = np.linalg.eigvalsh(cols.T @ cols / m)
        lo, hi = min(lo, ev[0]), max(hi, ev[-1])
    assert spec.exhaustive and spec.supports_evaluated == math.comb(n, 2 * s)
    assert abs(spec.c2s_min - lo) <= 1e-12
    assert abs(spec.c2s_max - hi) <= 1e-12


def test_exhaustive_order_independent():
    psi = sample_matrix(50, 9, 0.3, np.random.default_rng(1)).matrix
    gram = psi.T @ psi / 50
    supports = list(itertools.combinations(range(9), 4))
    shuffled = [supports[i] for i in np.random.default_rng(2).permutation(len(supports))]
    assert _block_extrema(gram, supports) == _block_extrema(gram, shuffled)
    assert _block_extrema(gram, supports) == _block_extrema(gram, supports[::-1])


def test_extrema_bound_every_block():
    rng = np.random.default_rng(3)
    psi = sample_matrix(100, 10, 0.0, rng).matrix
    spec = restricted_spectrum(psi, 2)
    for _ in range(50):
        a = rng.choice(10, 4, replace=False)
        ev = np.linalg.eigvalsh(psi[:, a].T @ psi[:, a] / 100)
        assert spec.c2s_min <= ev[0] + 1e-13
        assert ev[-1] <= spec.c2s_max + 1e-13


def test_sampled_mode_is_inner_estimate():
    psi = sample_matrix(100, 10, 0.0, np.random.default_rng(4)).matrix
    full = restricted_spectrum(psi, 2)
    part = restricted_spectrum(psi, 2, budget=30, rng=np.random.default_rng(5))
    assert not part.exhaustive and part.supports_evaluated == 30
    assert full.c2s_min <= part.c2s_min <= part.c2s_max <= full.c2s_max


def test_sampled_c2s_min_positive_in_lemma_regime():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        psi = sample_matrix(400, 100, 0.0, rng).matrix
        assert restricted_spectrum(psi, 3, budget=200, rng=rng).c2s_min > 0


def test_restricted_spectrum_rejects_large_s():
    with pytest.raises(ValueError):
        restricted_spectrum(np.ones((5, 5)), 3)


def test_cone_ratio_coordinate_directions():
    m, n = 9, 5
    psi = math.sqrt(m) * np.vstack([np.eye(n), np.zeros((m - n, n))])
    for i in range(n):
        assert cone_ratio(psi, np.eye(n)[i]) == pytest.approx(1.0)


def test_cone_constants_envelope_contains_samples():
    psi = sample_matrix(60, 20, 0.2, np.random.default_rng(4)).matrix
    cc = cone_constants(psi, 2, 500, np.random.default_rng(5))
    assert cc.c_star_lower <= cc.c_star_upper
    assert cc.c_star_lower > 0
    assert np.all(cc.c_star_lower <= cc.ratios) and np.all(cc.ratios <= cc.c_star_upper)


def test_cone_constants_nested_monotone():
    psi = sample_matrix(60, 20, 0.0, np.random.default_rng(6)).matrix
    prev = None
    for k in (10, 20, 40, 80, 160):
        cc = cone_constants(psi, 2, k, np.random.default_rng(7))
        if prev is not None:
            np.testing.assert_array_equal(cc.ratios[:prev.samples], prev.ratios)
            assert cc.c_star_lower <= prev.c_star_lower
            assert cc.c_star_upper >= prev.c_star_upper
        prev = cc


def test_cone_constants_bracketed_by_fine_grid():
    m, n = 30, 6
    psi = sample_matrix(m, n, 0.0, np.random.default_rng(8)).matrix
    # every 2-sparse direction up to scale: angle sweep on each coordinate pair
    pairs = list(itertools.combinations(range(n), 2))
    theta = np.linspace(0, 2 * np.pi, 10_000 // len(pairs), endpoint=False)
    vals = []
    for i, j in pairs:
        for t in theta:
            v = np.zeros(n)
            v[i], v[j] = np.cos(t), np.sin(t)
            vals.append(cone_ratio(psi, v))
    lo, hi = min(vals), max(vals)
    cc = cone_constants(psi, 1, 2000, np.random.default_rng(9))
    assert lo - 1e-3 <= cc.c_star_lower <= cc.c_star_upper <= hi + 1e-3


def test_scaling_fit_exact_power_law():
    ms = [250, 500, 1000, 2000]
    fit = scaling_fit([(m, 3 * m**-0.5) for m in ms])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_scaling_fit_flat():
    fit = scaling_fit([(m, 0.2) for m in (10, 20, 40, 80)])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert 0.0 <= fit.r2 <= 1.0


@pytest.mark.parametrize("points", [
    [(1, 1), (2, 1), (3, 1)],
    [(1, 1), (2, 0), (3, 1), (4, 1)],
    [(0, 1), (2, 1), (3, 1), (4, 1)],
])
def test_scaling_fit_rejects_bad_input(points):
    with pytest.raises(ValueError):
        scaling_fit(points)


def test_eta_bound_examples():
    assert eta_bound(1.0, 1) == pytest.approx((4 / 9, 4 / 9))
    assert eta_bound(1.0, 4) == pytest.approx((4 / 9, 2 / 9))
    assert eta_bound(2.0, 1) == pytest.approx((2 / 9, 2 / 9))


def test_diagnostics_report_schema():
    psi = sample_matrix(80, 12, 0.1, np.random.default_rng(10)).matrix
    rep = diagnostics_report(psi, 2, budget=1000, samples=200)
    assert set(rep) == {"c2s_min", "c2s_max", "exhaustive", "c_star_lower", "c_star_upper",
                        "samples", "eta_bounds"}
    assert rep["exhaustive"] is True
    assert rep["eta_bounds"][1] == pytest.approx(rep["eta_bounds"][0] / math.sqrt(2))
    json.dumps(rep)
