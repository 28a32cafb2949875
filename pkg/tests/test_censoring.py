"""Censoring-survivor estimators against hand values and naive oracles."""

import numpy as np
import pytest

from curereg import (
    BeranConfig,
    CoxCensoring,
    DataError,
    KnownCensoring,
    LowOverlapWarning,
    SURVIVOR_FLOOR,
    SurvivalDataset,
    fit_beran_censoring,
    fit_censoring,
    fit_cox_censoring,
    fit_km_censoring,
)


def dataset(y, delta, x=None):
    y = np.asarray(y, dtype=float)
    if x is None:
        x = np.zeros((y.shape[0], 0))
    return SurvivalDataset.from_arrays(y, delta, x)


def censoring_km_oracle(y, delta, t, side):
    """Product limit over censorings by direct per-time loops.

    Convention under test: at a tied time, events leave the risk set before
    censorings, so the factor at time s is 1 - c_s / (r_s - e_s) where r_s
    counts subjects with Y >= s.
    """
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta)
    out = 1.0
    for s in np.unique(y):
        if side == "left" and s >= t:
            break
        if side == "right" and s > t:
            break
        c = np.sum((y == s) & (delta == 0))
        if c == 0:
            continue
        r = np.sum(y >= s)
        e = np.sum((y == s) & (delta == 1))
        out *= 1.0 - c / (r - e)
    return out


def event_km_oracle(y, delta):
    """Standard Kaplan-Meier of the event time, value at the last event."""
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta)
    out = 1.0
    for s in np.unique(y):
        d = np.sum((y == s) & (delta == 1))
        if d == 0:
            continue
        r = np.sum(y >= s)
        out *= 1.0 - d / r
    return out


class TestKaplanMeier:
    def test_hand_values_no_ties(self):
        # censorings at 2 and 3; event at 1 never moves the curve
        km = fit_km_censoring(dataset([1.0, 2.0, 3.0], [1, 0, 0]))
        assert km.survivor(1.5) == 1.0
        assert km.survivor(2.0) == 0.5
        assert km.survivor(2.9) == 0.5
        assert km.survivor(3.0) == 0.0
        assert km.survivor_left_limit(2.0) == 1.0
        with pytest.warns(LowOverlapWarning):
            assert km.survivor_left_limit(3.5) == SURVIVOR_FLOOR

    def test_hand_values_event_censoring_tie(self):
        # tie at t=1: the event leaves first, so the factor is 1 - 1/(3-1)
        km = fit_km_censoring(dataset([1.0, 1.0, 2.0], [1, 0, 0]))
        assert km.survivor(1.0) == 0.5
        assert km.survivor(2.0) == 0.0
        assert km.survivor_left_limit(2.0) == 0.5

    def test_matches_loop_oracle_on_tied_data(self):
        rng = np.random.default_rng(11)
        for trial in range(25):
            n = int(rng.integers(3, 40))
            y = rng.integers(1, 6, n).astype(float)
            delta = rng.integers(0, 2, n)
            if not np.any(delta == 0):
                delta[0] = 0
            km = fit_km_censoring(dataset(y, delta))
            for t in [0.5, 1.0, 2.0, 3.5, 5.0, 6.0]:
                assert km.survivor(t) == pytest.approx(
                    censoring_km_oracle(y, delta, t, "right"), abs=1e-12
                )
                raw = censoring_km_oracle(y, delta, t, "left")
                assert km._left_limit_many(
                    np.array([t]), None
                )[0] == pytest.approx(raw, abs=1e-12)

    def test_survivor_non_increasing(self):
        rng = np.random.default_rng(5)
        y = rng.exponential(1.0, 60)
        delta = rng.integers(0, 2, 60)
        km = fit_km_censoring(dataset(y, delta))
        grid = np.linspace(0.0, y.max() * 1.1, 200)
        vals = [km.survivor(t) for t in grid]
        assert np.all(np.diff(vals) <= 1e-15)

    def test_left_limits_counts_low_overlap(self):
        # all censored at distinct times: the product telescopes, so the
        # left limit of subject k is (26 - k) / 25; only the last (0.04)
        # falls under the 0.05 overlap threshold
        n = 25
        data = dataset(np.arange(1.0, n + 1.0), np.zeros(n, dtype=int))
        km = fit_km_censoring(data)
        with pytest.warns(LowOverlapWarning, match=f"1 of {n}"):
            vals, low = km.left_limits(data)
        assert low == 1
        np.testing.assert_allclose(vals, (n + 1.0 - np.arange(1.0, n + 1.0)) / n)


class TestIpcwPlateauIdentity:
    """Weighted mean of delta / S_C(Y-) reproduces the event-time KM plateau."""

    def test_on_random_tied_datasets(self):
        rng = np.random.default_rng(23)
        for trial in range(30):
            n = int(rng.integers(5, 80))
            tied = trial % 2 == 0
            if tied:
                y = rng.integers(1, 7, n).astype(float)
            else:
                y = rng.exponential(1.0, n)
            delta = rng.integers(0, 2, n)
            if not np.any(delta == 1):
                delta[0] = 1
            data = dataset(y, delta)
            km = fit_km_censoring(data)
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LowOverlapWarning)
                s_left, _ = km.left_limits(data)
            pi_hat = np.mean(1.0 - data.delta / s_left)
            assert pi_hat == pytest.approx(
                event_km_oracle(y, delta), abs=1e-8
            ), f"trial {trial}"


class TestCox:
    def cox_data(self, n=40, beta=0.8, seed=2):
        rng = np.random.default_rng(seed)
        x = rng.normal(0.0, 1.0, (n, 1))
        c = rng.exponential(1.0, n) / np.exp(beta * x[:, 0])
        t = rng.exponential(1.3, n)
        y = np.minimum(t, c)
        delta = (t <= c).astype(int)
        if not np.any(delta == 0):
            delta[0] = 0
        return SurvivalDataset.from_arrays(y, delta, x)

    def partial_loglik_oracle(self, data, beta):
        """Breslow partial likelihood over censorings, naive double loop."""
        y, delta, x = data.y, data.delta, data.x
        ll = 0.0
        for s in np.unique(y):
            at = (y == s) & (delta == 0)
            d = int(np.sum(at))
            if d == 0:
                continue
            risk = y >= s
            denom = np.sum(np.exp(x[risk] @ beta))
            ll += float(np.sum(x[at] @ beta)) - d * np.log(denom)
        return ll

    def test_beta_matches_grid_oracle(self):
        data = self.cox_data()
        fit = fit_cox_censoring(data)
        grid = np.arange(-5.0, 5.0, 1e-3)
        vals = [self.partial_loglik_oracle(data, np.array([b])) for b in grid]
        best = grid[int(np.argmax(vals))]
        assert fit.beta[0] == pytest.approx(best, abs=2e-3)
        assert fit.converged
        assert fit.score_norm <= 1e-6

    def test_loglik_matches_oracle_at_fit(self):
        data = self.cox_data(seed=9)
        fit = fit_cox_censoring(data)
        assert fit.loglik == pytest.approx(
            self.partial_loglik_oracle(data, fit.beta), rel=1e-12
        )

    def test_score_matches_finite_differences(self):
        from curereg.censoring import _cox_quantities

        data = self.cox_data(n=30, seed=4)
        events = (data.delta == 0).astype(float)
        rng = np.random.default_rng(7)
        h = 1e-6
        for _ in range(5):
            beta = rng.normal(0.0, 0.7, 1)
            _, grad, info, _, _ = _cox_quantities(data.y, events, data.x, beta)
            up = _cox_quantities(data.y, events, data.x, beta + h)[0]
            dn = _cox_quantities(data.y, events, data.x, beta - h)[0]
            fd = (up - dn) / (2 * h)
            assert grad[0] == pytest.approx(fd, rel=1e-5, abs=1e-7)
            # information = negative second derivative
            gu = _cox_quantities(data.y, events, data.x, beta + h)[1][0]
            gd = _cox_quantities(data.y, events, data.x, beta - h)[1][0]
            assert info[0, 0] == pytest.approx(
                -(gu - gd) / (2 * h), rel=1e-4, abs=1e-6
            )

    def test_breslow_survivor_matches_hand_computation(self):
        data = self.cox_data(n=25, seed=12)
        fit = fit_cox_censoring(data)
        beta = fit.beta
        y, delta, x = data.y, data.delta, data.x
        for t in [0.2, 0.7, 1.5]:
            lam = 0.0
            for s in np.unique(y):
                if s > t:
                    break
                d = int(np.sum((y == s) & (delta == 0)))
                if d == 0:
                    continue
                lam += d / np.sum(np.exp(x[y >= s] @ beta))
            x0 = np.array([[0.4]])
            want = np.exp(-np.exp(0.4 * beta[0]) * lam)
            assert fit.survivor(t, x0) == pytest.approx(want, rel=1e-10)

    def test_p0_reduces_to_nelson_aalen(self):
        # two censorings, no covariates: hazard jumps 1/2 then 1/1
        data = dataset([1.0, 2.0], [0, 0])
        fit = fit_cox_censoring(data)
        assert fit.beta.shape == (0,)
        np.testing.assert_allclose(fit.cumhaz_values, [0.5, 1.5])
        assert fit.survivor(1.0) == pytest.approx(np.exp(-0.5))
        assert fit.survivor(2.0) == pytest.approx(np.exp(-1.5))
        assert fit._left_limit_many(np.array([2.0]), None)[0] == pytest.approx(
            np.exp(-0.5)
        )

    def test_no_censoring_events_rejected(self):
        with pytest.raises(DataError, match="no censoring events"):
            fit_cox_censoring(dataset([1.0, 2.0], [1, 1], np.ones((2, 1))))

    def test_collinear_covariates_rejected(self):
        rng = np.random.default_rng(1)
        x1 = rng.normal(0.0, 1.0, 20)
        x = np.column_stack([x1, 2.0 * x1])
        data = SurvivalDataset.from_arrays(
            rng.exponential(1.0, 20), rng.integers(0, 2, 20), x
        )
        with pytest.raises(DataError, match="singular information"):
            fit_cox_censoring(data)

    def test_requires_covariates_at_evaluation(self):
        data = self.cox_data(n=15)
        fit = fit_cox_censoring(data)
        with pytest.raises(DataError, match="requires covariate"):
            fit.survivor(1.0)

    def test_single_query_point_broadcasts(self):
        data = self.cox_data(n=15)
        fit = fit_cox_censoring(data)
        vals, _ = fit.left_limits(data)
        assert vals.shape == (15,)
        one = fit._left_limit_many(data.y, np.array([[0.3]]))
        assert one.shape == (15,)


class TestBeran:
    def beran_data(self, seed=3, n=50):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1.0, 1.0, (n, 1))
        y = rng.exponential(1.0, n)
        delta = rng.integers(0, 2, n)
        if not np.any(delta == 0):
            delta[0] = 0
        return SurvivalDataset.from_arrays(y, delta, x)

    def test_huge_bandwidth_recovers_km(self):
        data = self.beran_data()
        km = fit_km_censoring(data)
        ber = fit_beran_censoring(data, BeranConfig(bandwidth=1e9, index=0))
        x0 = np.array([[0.2]])
        for t in np.linspace(0.05, data.y.max(), 25):
            assert abs(ber.survivor(t, x0) - km.survivor(t)) <= 1e-10
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LowOverlapWarning)
            b_vals, _ = ber.left_limits(data)
            k_vals, _ = km.left_limits(data)
        np.testing.assert_allclose(b_vals, k_vals, atol=1e-10)

    def test_separated_clusters_give_local_km(self):
        rng = np.random.default_rng(8)
        n = 30
        z = np.concatenate([np.zeros(n), 10.0 * np.ones(n)])
        y = rng.exponential(1.0, 2 * n)
        delta = rng.integers(0, 2, 2 * n)
        delta[0] = 0
        delta[n] = 0
        data = SurvivalDataset.from_arrays(y, delta, z.reshape(-1, 1))
        ber = fit_beran_censoring(data, BeranConfig(bandwidth=1.0, index=0))
        left = fit_km_censoring(data.take(np.arange(n)))
        right = fit_km_censoring(data.take(np.arange(n, 2 * n)))
        for t in [0.3, 0.8, 1.4]:
            assert ber.survivor(t, np.array([[0.0]])) == pytest.approx(
                left.survivor(t), abs=1e-12
            )
            assert ber.survivor(t, np.array([[10.0]])) == pytest.approx(
                right.survivor(t), abs=1e-12
            )

    def test_no_kernel_support_raises(self):
        data = self.beran_data()
        ber = fit_beran_censoring(data, BeranConfig(bandwidth=0.5, index=0))
        with pytest.raises(DataError, match="no kernel support"):
            ber.survivor(1.0, np.array([[50.0]]))

    def test_index_vector_equivalent_to_column(self):
        rng = np.random.default_rng(14)
        x = rng.normal(0.0, 1.0, (40, 2))
        data = SurvivalDataset.from_arrays(
            rng.exponential(1.0, 40), rng.integers(0, 2, 40), x
        )
        by_col = fit_beran_censoring(data, BeranConfig(bandwidth=0.8, index=1))
        by_vec = fit_beran_censoring(
            data, BeranConfig(bandwidth=0.8, index=np.array([0.0, 1.0]))
        )
        q = np.array([[0.3, -0.4]])
        for t in [0.5, 1.0, 2.0]:
            assert by_col.survivor(t, q) == by_vec.survivor(t, q)

    def test_bad_bandwidth_rejected(self):
        with pytest.raises(DataError, match="bandwidth"):
            BeranConfig(bandwidth=0.0)

    def test_index_out_of_range(self):
        data = self.beran_data()
        with pytest.raises(DataError, match="out of range"):
            fit_beran_censoring(data, BeranConfig(bandwidth=1.0, index=3))


class TestKnown:
    def test_evaluates_supplied_function(self):
        model = KnownCensoring(lambda t, x: np.exp(-0.5 * t))
        assert model.survivor(2.0) == pytest.approx(np.exp(-1.0))
        assert model.survivor_left_limit(1.0) == pytest.approx(np.exp(-0.5))

    def test_covariate_dependent_function(self):
        model = KnownCensoring(lambda t, x: np.exp(-t * np.exp(x[0])))
        v = model.survivor(1.0, np.array([[np.log(2.0)]]))
        assert v == pytest.approx(np.exp(-2.0))

    def test_floor_and_warning(self):
        model = KnownCensoring(lambda t, x: np.exp(-t))
        with pytest.warns(LowOverlapWarning):
            v = model.survivor_left_limit(40.0)
        assert v == SURVIVOR_FLOOR


class TestDispatcher:
    def data(self):
        rng = np.random.default_rng(0)
        return SurvivalDataset.from_arrays(
            rng.exponential(1.0, 30),
            rng.integers(0, 2, 30),
            rng.normal(0.0, 1.0, (30, 1)),
        )

    def test_each_kind(self):
        data = self.data()
        assert fit_censoring(data, "km").kind == "km"
        assert fit_censoring(data, "cox").kind == "cox"
        b = fit_censoring(data, "beran", beran_config=BeranConfig(bandwidth=2.0))
        assert b.kind == "beran"
        k = fit_censoring(data, "known", known_fn=lambda t, x: 1.0)
        assert k.kind == "known"

    def test_missing_settings_rejected(self):
        data = self.data()
        with pytest.raises(DataError, match="BeranConfig"):
            fit_censoring(data, "beran")
        with pytest.raises(DataError, match="evaluator"):
            fit_censoring(data, "known")
        with pytest.raises(DataError, match="unknown censoring kind"):
            fit_censoring(data, "weibull")
