import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sst

from coxballs.errors import ValidationError
from coxballs.stats import DEFAULT_THETAS, compare, ecf, hill_tail_index, variance_check

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_ecf_trivial_examples():
    assert np.all(ecf(np.zeros(7), [0.0, 1.0, -3.0]) == 1.0)
    th = np.array([-2.0, 0.3, 5.0])
    assert np.allclose(ecf([1.7], th), np.exp(1j * th * 1.7), atol=1e-15)


def test_ecf_gaussian():
    n = 10_000
    x = np.random.default_rng(1).standard_normal(n)
    assert abs(ecf(x, [1.0])[0] - math.exp(-0.5)) <= 3 * math.sqrt(2 / n)


def test_ecf_empty():
    with pytest.raises(ValidationError):
        ecf([], [1.0])


@settings(max_examples=100, deadline=None)
@given(x=st.lists(finite, min_size=1, max_size=50), th=st.floats(-20, 20, allow_nan=False))
def test_ecf_invariants(x, th):
    vals = ecf(x, [0.0, th, -th])
    assert vals[0] == 1.0
    assert np.all(np.abs(vals) <= 1.0 + 1e-12)
    assert vals[2] == np.conj(vals[1])


def test_default_grid():
    assert DEFAULT_THETAS.size == 41 and DEFAULT_THETAS[0] == -4.0 and DEFAULT_THETAS[-1] == 4.0


def test_compare_against_itself():
    x = np.random.default_rng(2).standard_normal(500)
    rep = compare(x, lambda t: ecf(x, t))
    assert rep.sup_deviation == 0.0
    assert rep.passed
    assert rep.empirical[DEFAULT_THETAS == 0.0][0] == 1.0


def test_compare_halves_self_consistent():
    # two independent halves differ by ECF noise on both sides, so the bound is 3 sqrt(2/N) * sqrt(2)
    passes = 0
    reps = 40
    for i in range(reps):
        x = np.random.default_rng(100 + i).standard_normal(4000)
        a, b = x[:2000], x[2000:]
        rep = compare(a, ecf(b, DEFAULT_THETAS))
        passes += bool(np.max(rep.z) <= 3 * math.sqrt(2))
    assert passes >= 0.95 * reps


def test_compare_power_against_wrong_scale():
    x = np.random.default_rng(3).standard_normal(10_000)
    rep = compare(x, lambda t: np.exp(-0.5 * (2 * t) ** 2))
    assert not rep.passed


def test_compare_correct_theory_passes():
    x = np.random.default_rng(4).standard_normal(10_000)
    rep = compare(x, lambda t: np.exp(-0.5 * t**2))
    assert rep.passed
    assert rep.se == pytest.approx(math.sqrt(2 / 10_000))


def test_compare_allowance_and_theory_error():
    x = np.zeros(100_000)
    rep = compare(x, np.full(3, 0.9 + 0j), [-1.0, 0.0, 1.0])
    assert not rep.passed
    assert compare(x, np.full(3, 0.9 + 0j), [-1.0, 0.0, 1.0], allowance=0.1).passed
    assert compare(x, np.full(3, 0.9 + 0j), [-1.0, 0.0, 1.0], theory_error=0.1).passed


def test_compare_accepts_evaluator_objects():
    class Res:
        values = np.array([1.0 + 0j, 0.5 + 0j])
        errors = np.array([0.0, 0.6])

    rep = compare(np.zeros(10), lambda t: Res(), [0.0, 1.0])
    assert rep.passed
    assert list(rep.theory_error) == [0.0, 0.6]


def test_compare_shape_mismatch():
    with pytest.raises(ValidationError):
        compare(np.zeros(10), np.ones(2), [0.0, 1.0, 2.0])
    with pytest.raises(ValidationError):
        compare(np.zeros(10), np.ones(0), [])


def test_report_files(tmp_path):
    x = np.random.default_rng(5).standard_normal(200)
    rep = compare(x, lambda t: np.exp(-0.5 * t**2), [0.0, 1.0], seed=9, label="gauss")
    rep.write_csv(tmp_path / "r.csv")
    rep.write_json(tmp_path / "r.json")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "theta,ecf_re,ecf_im,th_re,th_im,se,z"
    assert len(lines) == 3
    summary = json.loads((tmp_path / "r.json").read_text())
    assert summary["N"] == 200 and summary["seed"] == 9 and summary["pass"] == rep.passed
    assert summary["sup_deviation"] == rep.sup_deviation


def test_hill_pareto():
    # at k=100 the estimator sd is about 1.8/10, so single draws leave [1.6, 2.0] often;
    # check the replicate distribution: centre in the band and 3/sqrt(k) interval coverage
    est = []
    for i in range(60):
        res = hill_tail_index(sst.pareto.rvs(1.8, size=10_000, random_state=600 + i))
        assert res.k == 100 and not res.light_tailed
        est.append(res.index)
    est = np.array(est)
    assert 1.6 <= np.median(est) <= 2.0
    covered = np.abs(est - 1.8) <= 1.8 * 3 / math.sqrt(100)
    assert covered.mean() >= 0.95


def test_hill_stable():
    est = [hill_tail_index(sst.levy_stable.rvs(1.5, 0.0, size=10_000, random_state=700 + i)).index
           for i in range(20)]
    assert 1.3 <= np.median(est) <= 1.7


def test_hill_bounded_flagged():
    x = np.random.default_rng(8).uniform(-1, 1, 10_000)
    res = hill_tail_index(x)
    assert res.light_tailed and res.index > 4


def test_hill_insufficient_data():
    with pytest.raises(ValidationError):
        hill_tail_index([1.0, 2.0, 3.0])
    with pytest.raises(ValidationError):
        hill_tail_index(np.arange(1.0, 101.0), k=50)
    with pytest.raises(ValidationError):
        hill_tail_index(np.zeros(100))


def test_variance_check_gaussian():
    n = 10_000
    x = 2 * np.random.default_rng(9).standard_normal(n)
    res = variance_check(x, 4.0, tolerance=0.0)
    assert abs(res.ratio - 1) <= 3 * math.sqrt(2 / n)
    assert res.passed


def test_variance_check_zero_prediction():
    assert not variance_check([1.0, -1.0, 2.0], 0.0).passed
    assert variance_check([1.0, 1.0], 0.0).passed


def test_variance_check_scaling():
    x = np.random.default_rng(10).standard_normal(300)
    r1 = variance_check(x, 1.0).ratio
    assert variance_check(3 * x, 1.0).ratio == pytest.approx(9 * r1, rel=1e-12)
