import math

import numpy as np
import pytest

from classkit.evaluate import pearson, qwk, rmse, spearman
from oracles import brute_pearson, brute_qwk, brute_rmse, brute_spearman


def test_pearson_basics():
    assert pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [-1, -2, -3]) == pytest.approx(-1.0)
    assert pearson([1, 2, 3], [2, 2, 4]) == pytest.approx(0.866025, abs=1e-6)
    assert pearson([1, 1, 1], [1, 2, 3]) is None
    assert pearson([1.0], [2.0]) is None
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


def test_spearman_basics():
    x = [1.0, 2.0, 3.0, 4.0]
    assert spearman(x, [v**3 for v in x]) == pytest.approx(1.0)
    assert spearman(x, list(reversed(x))) == pytest.approx(-1.0)
    a = [1, 2, 2, 4]
    b = [3, 1, 4, 4]
    assert spearman(a, b) == pytest.approx(brute_spearman(a, b), abs=1e-12)
    assert spearman([2, 2, 2], [1, 2, 3]) is None


def test_rmse_basics():
    assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), abs=1e-6)
    assert rmse([1, 2, 3], [2, 3, 4]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        rmse([1], [1, 2])


def test_qwk_perfect_agreement():
    truth = [1, 4, 7, 4, 2]
    pred = [1.0, 4.0, 7.0, 4.0, 2.0]
    assert qwk(pred, truth, (1, 7)) == pytest.approx(1.0)


def test_qwk_hand_case_against_direct_matrices():
    truth = [1, 2, 3, 2]
    pred = [1.0, 3.0, 2.0, 2.0]
    value = qwk(pred, truth, (1, 7))
    assert value == pytest.approx(1.0 / 6.0, abs=1e-12)
    assert value == pytest.approx(brute_qwk(pred, truth, 1, 7), abs=1e-12)


def test_qwk_random_labels_near_zero():
    rng = np.random.default_rng(42)
    truth = rng.integers(1, 8, size=200).astype(float)
    pred = rng.uniform(1, 7, size=200)
    assert abs(qwk(pred, truth, (1, 7))) < 0.2


def test_qwk_constant_predictions_map_to_midpoint():
    truth = [1, 3, 5, 7]
    value = qwk([2.0, 2.0, 2.0, 2.0], truth, (1, 7))
    assert value <= 0.0 + 1e-12
    assert value == pytest.approx(brute_qwk([2.0] * 4, truth, 1, 7), abs=1e-12)


def test_qwk_degenerate_identical_single_category():
    assert qwk([4.0, 4.0], [4, 4], (1, 7)) == 1.0


def test_metrics_match_brute_force_oracles():
    rng = np.random.default_rng(1234)
    for trial in range(300):
        n = int(rng.integers(2, 40))
        a = rng.normal(size=n)
        b = rng.normal(size=n) + 0.3 * a
        if trial % 3 == 0:  # force ties sometimes
            a = np.round(a)
            b = np.round(b)
        ours = pearson(a, b)
        brute = brute_pearson(list(a), list(b))
        if ours is None or brute is None:
            assert ours is None and brute is None
        else:
            assert ours == pytest.approx(brute, abs=1e-10)
        ours_s = spearman(a, b)
        brute_s = brute_spearman(list(a), list(b))
        if ours_s is None or brute_s is None:
            assert ours_s is None and brute_s is None
        else:
            assert ours_s == pytest.approx(brute_s, abs=1e-10)
        assert rmse(a, b) == pytest.approx(brute_rmse(list(a), list(b)), abs=1e-10)
        truth = rng.integers(1, 8, size=n).astype(float)
        pred = rng.uniform(0, 10, size=n)
        assert qwk(pred, truth, (1, 7)) == pytest.approx(brute_qwk(list(pred), list(truth), 1, 7), abs=1e-10)
