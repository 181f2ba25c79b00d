import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_resampling.core import Orientation
from adaptive_resampling.futility import WinTable, bt_eliminate, bt_fit, tabulate_wins
from adaptive_resampling.futility.bradley_terry import log_likelihood

from oracles import _bt_loglik, bt_lattice

LARGER = Orientation.LARGER_IS_BETTER
SMALLER = Orientation.SMALLER_IS_BETTER

# A beats B 8 of 10, A beats C 9 of 10, B beats C 7 of 10
EXAMPLE = WinTable.from_pairs([0, 1, 2], {(0, 1): 8, (0, 2): 9, (1, 2): 7}, 10)


def _random_table(rng, m):
    n = int(rng.integers(5, 30))
    w = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            # keep every pair away from a clean sweep so the maximizer is finite
            w[a, b] = rng.integers(1, n)
            w[b, a] = n - w[a, b]
    return WinTable(tuple(range(m)), w, n)


class TestTabulation:
    def test_pair_count(self):
        values = np.random.default_rng(0).normal(size=(10, 21))
        table = tabulate_wins(values, LARGER)
        assert len(table.pairs) == 210
        assert all(wj + wk == 10 for _, _, wj, wk in table.pairs)

    def test_ties_split_evenly(self):
        table = tabulate_wins(np.full((4, 3), 0.5), LARGER)
        assert table.pair(0, 2) == (2.0, 2.0)
        assert table.total_wins() == {0: 4.0, 1: 4.0, 2: 4.0}

    def test_orientation(self):
        values = np.array([[1.0, 2.0], [1.0, 3.0], [5.0, 0.0]])
        assert tabulate_wins(values, LARGER).pair(0, 1) == (1.0, 2.0)
        assert tabulate_wins(values, SMALLER).pair(0, 1) == (2.0, 1.0)

    def test_from_pairs(self):
        assert EXAMPLE.pair(0, 1) == (8.0, 2.0)
        assert EXAMPLE.pair(2, 1) == (3.0, 7.0)


class TestLikelihood:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_bernoulli_form(self, seed):
        rng = np.random.default_rng(seed)
        table = _random_table(rng, 4)
        lam = rng.normal(size=4)
        assert log_likelihood(lam, table.wins, table.n_games) == pytest.approx(
            _bt_loglik(lam[None, :], table.wins)[0], rel=1e-12)


class TestFit:
    def test_worked_example(self):
        fit = bt_fit(EXAMPLE, 0)
        assert fit.converged
        assert fit.lambda_hat[1] == pytest.approx(-1.376, abs=1e-3)
        assert fit.lambda_hat[2] == pytest.approx(-2.216, abs=1e-3)
        assert fit.se_lambda[1] == pytest.approx(0.669, abs=1e-3)
        assert fit.se_lambda[2] == pytest.approx(0.745, abs=1e-3)

    def test_worked_example_matches_lattice(self):
        lattice = bt_lattice(EXAMPLE.wins, 0)
        fit = bt_fit(EXAMPLE, 0)
        for j in (1, 2):
            assert fit.lambda_hat[j] == pytest.approx(lattice[j], abs=0.01)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_lattice_on_random_tables(self, seed):
        rng = np.random.default_rng(100 + seed)
        m = 3 + seed % 2
        table = _random_table(rng, m)
        fit = bt_fit(table, 0)
        assert fit.converged
        lattice = bt_lattice(table.wins, 0)
        for j in range(1, m):
            assert fit.lambda_hat[j] == pytest.approx(lattice[j], abs=0.01)

    @pytest.mark.parametrize("seed", range(10))
    def test_reference_change_invariance(self, seed):
        table = _random_table(np.random.default_rng(seed), 4)
        a, b = bt_fit(table, 0), bt_fit(table, 2)
        for j in range(4):
            for k in range(4):
                da = a.lambda_hat[j] - a.lambda_hat[k]
                db = b.lambda_hat[j] - b.lambda_hat[k]
                assert da == pytest.approx(db, abs=1e-6)

    def test_all_ties(self):
        fit = bt_fit(tabulate_wins(np.zeros((10, 4)), LARGER), 0)
        assert fit.converged
        assert all(abs(v) < 1e-12 for v in fit.lambda_hat.values())
        assert bt_eliminate(fit, 0.01).removed == []

    def test_zero_win_candidate_set_aside(self):
        values = np.array([[3.0, 2.0, 0.0], [2.0, 3.0, 0.0], [3.0, 2.5, 1.0], [2.0, 2.6, 0.5]])
        table = tabulate_wins(values, LARGER)
        fit = bt_fit(table, 0)
        assert fit.zero_win_ids == [2]
        assert fit.fitted_ids == [0, 1]
        assert fit.converged
        assert bt_eliminate(fit, 0.01).removed == [2]

    def test_separation_falls_back_to_zero_win_rule(self):
        # {0, 1} sweep {2, 3}; within each group results are mixed
        pairs = {(0, 1): 3, (2, 3): 3, (0, 2): 5, (0, 3): 5, (1, 2): 5, (1, 3): 5}
        fit = bt_fit(WinTable.from_pairs([0, 1, 2, 3], pairs, 5), 0)
        assert not fit.converged
        assert "separation" in fit.note
        assert fit.zero_win_ids == []
        assert bt_eliminate(fit, 0.01).removed == []

    def test_reference_without_wins(self):
        table = WinTable.from_pairs([0, 1], {(0, 1): 0}, 4)
        fit = bt_fit(table, 0)
        assert not fit.converged
        assert bt_eliminate(fit, 0.01).removed == []


class TestInvariance:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_monotone_transform(self, seed):
        values = np.random.default_rng(seed).uniform(0.1, 1, size=(12, 4))
        a = tabulate_wins(values, LARGER)
        b = tabulate_wins(np.log(values) * 7 + 3, LARGER)
        assert np.array_equal(a.wins, b.wins)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_per_resample_shift(self, seed):
        rng = np.random.default_rng(seed)
        values = rng.normal(size=(12, 4))
        shifted = values + rng.normal(0, 10, size=(12, 1))
        assert np.array_equal(tabulate_wins(values, LARGER).wins,
                              tabulate_wins(shifted, LARGER).wins)


class TestElimination:
    def test_bound_example(self):
        fit = bt_fit(EXAMPLE, 0)
        fit.lambda_hat = {0: 0.0, 1: -3.0, 2: 0.1}
        fit.se_lambda = {0: 0.0, 1: 0.5, 2: 0.5}
        d = bt_eliminate(fit, 0.05)
        assert d.bounds[1] == pytest.approx(-3 + 1.645 * 0.5, abs=1e-3)
        assert d.removed == [1]

    def test_example_decisions(self):
        fit = bt_fit(EXAMPLE, 0)
        assert bt_eliminate(fit, 0.01).removed == [2]
        assert bt_eliminate(fit, 0.2).removed == [1, 2]

    @pytest.mark.parametrize("seed", range(20))
    def test_removed_set_monotone_in_alpha(self, seed):
        rng = np.random.default_rng(seed)
        values = rng.normal(size=(15, 5)) + np.linspace(0, 1.2, 5)
        table = tabulate_wins(values, LARGER)
        fit = bt_fit(table, int(np.argmax(values.mean(axis=0))))
        sets = [set(bt_eliminate(fit, a).removed) for a in (0.001, 0.01, 0.1)]
        assert sets[0] <= sets[1] <= sets[2]

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            bt_eliminate(bt_fit(EXAMPLE, 0), 0.7)
