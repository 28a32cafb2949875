"""Nonparametric bootstrap inference for the cure regression.

Each replicate resamples subjects with replacement and reruns the entire
pipeline: the censoring model is refit on the resample before the cure
coefficients are re-estimated, so the intervals account for censoring-model
estimation error. Confidence intervals are percentile; standard errors are
replicate standard deviations; p-values are normal-reference two-sided
tests of each original-sample coefficient against its bootstrap SE.

Replicate r draws its random stream from the pair (seed, r), so results are
identical no matter how replicates are scheduled or how many workers run.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .censoring import fit_censoring
from .data import destandardize_coefficients, standardize
from .exceptions import ConvergenceError, DataError
from .mle import fit_cure, synthetic_indicators
from .penalty import adaptive_weights, fit_penalized

__all__ = ["BootstrapResult", "bootstrap"]

MAX_FAILURE_FRACTION = 0.05


@dataclass
class BootstrapResult:
    """Point estimate plus bootstrap uncertainty summaries.

    `replicates` holds the converged replicate coefficient vectors in
    replicate-index order; failed replicates are excluded from every
    summary and counted in n_failed.
    """

    theta: np.ndarray
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    p_values: np.ndarray
    replicates: np.ndarray
    n_replicates: int
    n_failed: int
    level: float
    seed: int


def _fit_theta(data, censor, beran_config, known_fn, penalty, penalty_lambda,
               tol, max_iter):
    """One full pipeline pass: censoring refit, then the cure fit."""
    model = fit_censoring(
        data, censor, beran_config=beran_config, known_fn=known_fn
    )
    if penalty is None:
        return fit_cure(data, model, tol=tol, max_iter=max_iter).theta
    std_data, standardization = standardize(data)
    ind = synthetic_indicators(data, model)
    if penalty.kind == "alasso":
        pilot = fit_cure(std_data, indicators=ind, tol=tol)
        weights = adaptive_weights(pilot.theta, penalty)
    else:
        weights = np.ones(data.p)
    start = np.zeros(data.p + 1)
    fit = fit_penalized(
        std_data, ind.b_star, penalty_lambda, weights, penalty,
        start=start, tol=tol,
    )
    theta = destandardize_coefficients(fit.theta, standardization)
    theta[1:][~fit.active[1:]] = 0.0
    return theta


def _replicate_job(args):
    (data, censor, beran_config, known_fn, penalty, penalty_lambda, seed, r,
     tol, max_iter, resampler) = args
    rng = np.random.default_rng([seed, r])
    if resampler is None:
        idx = rng.integers(0, data.n, data.n)
    else:
        idx = np.asarray(resampler(rng, data.n), dtype=np.intp)
    try:
        theta = _fit_theta(
            data.take(idx), censor, beran_config, known_fn, penalty,
            penalty_lambda, tol, max_iter,
        )
        return r, theta
    except (DataError, ConvergenceError):
        return r, None


def bootstrap(data, *, censor="cox", beran_config=None, known_fn=None,
              penalty=None, penalty_lambda=None, n_replicates=399,
              level=0.95, seed=0, n_workers=1, tol=1e-8, max_iter=100,
              _resampler=None):
    """Bootstrap the cure-regression coefficients.

    censor picks the censoring estimator refit inside every replicate; when
    `penalty` is given the cure fit is the penalized estimate at the fixed
    `penalty_lambda` (standardized internally, reported on the original
    scale). More than 5% failed replicates is an error. `_resampler` is a
    test hook: a callable (rng, n) -> indices replacing the multinomial
    resample.
    """
    if not 0.0 < level < 1.0:
        raise DataError(f"level must be in (0, 1), got {level}")
    if n_replicates < 1:
        raise DataError("n_replicates must be at least 1")
    if penalty is not None and penalty_lambda is None:
        raise DataError("penalized bootstrap needs penalty_lambda")

    theta = _fit_theta(
        data, censor, beran_config, known_fn, penalty, penalty_lambda,
        tol, max_iter,
    )

    jobs = [
        (data, censor, beran_config, known_fn, penalty, penalty_lambda,
         seed, r, tol, max_iter, _resampler)
        for r in range(n_replicates)
    ]
    rows = np.full((n_replicates, data.p + 1), np.nan)
    if n_workers > 1:
        chunk = max(1, n_replicates // (4 * n_workers))
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for r, th in pool.map(_replicate_job, jobs, chunksize=chunk):
                if th is not None:
                    rows[r] = th
    else:
        for job in jobs:
            r, th = _replicate_job(job)
            if th is not None:
                rows[r] = th

    ok = ~np.isnan(rows[:, 0])
    n_failed = int(np.count_nonzero(~ok))
    if n_failed > MAX_FAILURE_FRACTION * n_replicates:
        raise ConvergenceError(
            f"{n_failed} of {n_replicates} bootstrap replicates failed "
            f"(more than {MAX_FAILURE_FRACTION:.0%})"
        )
    reps = rows[ok]

    alpha = 1.0 - level
    ci_lower = np.quantile(reps, alpha / 2.0, axis=0)
    ci_upper = np.quantile(reps, 1.0 - alpha / 2.0, axis=0)
    if reps.shape[0] > 1:
        se = reps.std(axis=0, ddof=1)
    else:
        se = np.full(data.p + 1, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(theta) / se
    p_values = np.array([
        math.erfc(v / math.sqrt(2.0)) if np.isfinite(v) else
        (0.0 if v == np.inf else np.nan)
        for v in z
    ])
    return BootstrapResult(
        theta=theta,
        se=se,
        ci_lower=ci_lower,
        ci_upper=ci_upper,
        p_values=p_values,
        replicates=reps,
        n_replicates=n_replicates,
        n_failed=n_failed,
        level=level,
        seed=seed,
    )
