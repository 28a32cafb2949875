"""Cure-fraction regression by inverse-probability-of-censoring weighting.

The estimand is the conditional cure probability pi(x) under a logistic
link. Each subject contributes a synthetic cure indicator

    b*_i = 1 - delta_i / S_C(Y_i- | X_i)

whose conditional expectation equals pi(X_i) whenever the censoring model
is correct. Plugging b* into a weighted Bernoulli
log-likelihood gives a concave objective in the logistic coefficients, so a
damped Newton ascent from zero converges globally. b* is deliberately left
unclipped: it equals 1 for censored subjects and is non-positive for events,
and the likelihood below is linear in b*, so negative values are fine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, ConvergenceError

__all__ = [
    "SyntheticIndicators",
    "CureFit",
    "synthetic_indicators",
    "cure_loglik",
    "cure_score",
    "cure_hessian",
    "fit_cure",
]


@dataclass(frozen=True)
class SyntheticIndicators:
    """Per-subject synthetic cure indicators plus an overlap diagnostic.

    low_overlap_count is the number of subjects whose pre-clamp censoring
    survivor left limit fell below the overlap threshold; large counts mean
    some inverse weights were effectively truncated.
    """

    b_star: np.ndarray
    low_overlap_count: int = 0


def synthetic_indicators(data, model):
    """Compute b* = 1 - delta / S_C(Y- | X) for every subject."""
    s_left, low = model.left_limits(data)
    b_star = 1.0 - data.delta / s_left
    return SyntheticIndicators(b_star=b_star, low_overlap_count=low)


def _as_b_star(indicators):
    if isinstance(indicators, SyntheticIndicators):
        return indicators.b_star
    return np.asarray(indicators, dtype=float)


def _expit(eta):
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _design(data):
    return np.column_stack([np.ones(data.n), data.x])


def cure_loglik(theta, data, indicators):
    """Weighted Bernoulli log-likelihood at the synthetic indicators.

    sum_i omega_i * (b*_i log pi_i + (1 - b*_i) log(1 - pi_i)), written in
    the numerically stable form b*_i eta_i - log(1 + e^{eta_i}).
    """
    b = _as_b_star(indicators)
    eta = _design(data) @ np.asarray(theta, dtype=float)
    return float(np.sum(data.omega * (b * eta - np.logaddexp(0.0, eta))))


def cure_score(theta, data, indicators):
    """Gradient of the log-likelihood: sum_i omega_i (b*_i - pi_i) (1, x_i)."""
    b = _as_b_star(indicators)
    xt = _design(data)
    pi = _expit(xt @ np.asarray(theta, dtype=float))
    return xt.T @ (data.omega * (b - pi))


def cure_hessian(theta, data, indicators):
    """Hessian of the log-likelihood: negative semidefinite for any b*.

    -sum_i omega_i pi_i (1 - pi_i) (1, x_i)(1, x_i)^T; b* does not appear,
    which is what makes the objective concave regardless of the weights.
    """
    xt = _design(data)
    pi = _expit(xt @ np.asarray(theta, dtype=float))
    w = data.omega * pi * (1.0 - pi)
    return -(xt * w[:, None]).T @ xt


@dataclass
class CureFit:
    """Converged cure-regression estimate and its fit diagnostics."""

    theta: np.ndarray
    loglik: float
    score_norm: float
    n_iterations: int
    converged: bool
    indicators: SyntheticIndicators
    censoring: object
    loglik_history: np.ndarray


def newton_ascent(value_grad_hess, theta0, *, tol=1e-8, max_iter=100,
                  max_halvings=30, divergence_norm=1e3, what="fit"):
    """Damped Newton maximization of a concave, twice-differentiable objective.

    Halves the step until the objective increases; declares convergence when
    the gradient 2-norm drops to tol. Iterates escaping past divergence_norm
    in parameter norm are treated as separation and raised as non-convergence
    with diagnostics attached.

    Returns (theta, value, grad_norm, n_iterations, history).
    """
    theta = np.asarray(theta0, dtype=float).copy()
    value, grad, hess = value_grad_hess(theta)
    history = [value]
    for it in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return theta, value, gnorm, it - 1, np.array(history)
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            raise ConvergenceError(
                f"{what}: singular Hessian at iteration {it}",
                theta=theta, score_norm=gnorm, n_iterations=it - 1,
            ) from None
        scale = 1.0
        for _ in range(max_halvings + 1):
            cand = theta + scale * step
            new_value, new_grad, new_hess = value_grad_hess(cand)
            if np.isfinite(new_value) and new_value > value:
                break
            scale /= 2.0
        else:
            # At a numerical optimum the full step gives no representable
            # improvement. Judge by the quadratic model's expected gain
            # (the Newton decrement), which stays meaningful however stiff
            # the objective, and by whether the iterate can move at all.
            expected_gain = 0.5 * float(grad @ step)
            eps = np.finfo(float).eps
            if (
                expected_gain <= 64.0 * eps * (1.0 + abs(value))
                or np.linalg.norm(step) <= eps * (1.0 + np.linalg.norm(theta))
            ):
                return theta, value, gnorm, it - 1, np.array(history)
            raise ConvergenceError(
                f"{what}: step halving exhausted at iteration {it}",
                theta=theta, score_norm=gnorm, n_iterations=it - 1,
            )
        theta, value, grad, hess = cand, new_value, new_grad, new_hess
        history.append(value)
        if np.linalg.norm(theta) > divergence_norm:
            raise ConvergenceError(
                f"{what}: estimates diverged (norm > {divergence_norm:g}), "
                "likely separation in the synthetic indicators",
                theta=theta, score_norm=float(np.linalg.norm(grad)),
                n_iterations=it,
            )
    raise ConvergenceError(
        f"{what}: no convergence in {max_iter} iterations",
        theta=theta, score_norm=float(np.linalg.norm(grad)),
        n_iterations=max_iter,
    )


def _check_fit_inputs(data, b_star):
    if not np.any(data.delta == 1):
        raise DataError("dataset has no events: cure regression is undefined")
    active = data.omega > 0
    if not np.any(active):
        raise DataError("all subject weights are zero")
    if np.ptp(b_star[active]) == 0.0:
        raise DataError(
            "all synthetic indicators are identical: the cure fraction is "
            "not identified"
        )
    xt = _design(data) * np.sqrt(data.omega)[:, None]
    if np.linalg.matrix_rank(xt) < data.p + 1:
        raise DataError("design matrix is rank-deficient (with intercept)")


def fit_cure(data, model=None, *, indicators=None, tol=1e-8, max_iter=100,
             max_halvings=30, divergence_norm=1e3):
    """Maximum-likelihood cure regression against a censoring model.

    Either a fitted censoring model or precomputed indicators must be given.
    Newton ascent starts at zero; concavity of the weighted likelihood makes
    the damped iteration globally convergent whenever a maximizer exists.
    """
    if indicators is None:
        if model is None:
            raise DataError("fit_cure needs a censoring model or indicators")
        indicators = synthetic_indicators(data, model)
    elif not isinstance(indicators, SyntheticIndicators):
        indicators = SyntheticIndicators(
            b_star=np.asarray(indicators, dtype=float)
        )
    b = indicators.b_star
    if b.shape[0] != data.n:
        raise DataError("indicator length does not match the dataset")
    _check_fit_inputs(data, b)

    xt = _design(data)
    omega = data.omega

    def vgh(theta):
        eta = xt @ theta
        pi = _expit(eta)
        value = float(np.sum(omega * (b * eta - np.logaddexp(0.0, eta))))
        grad = xt.T @ (omega * (b - pi))
        w = omega * pi * (1.0 - pi)
        hess = -(xt * w[:, None]).T @ xt
        return value, grad, hess

    theta, value, gnorm, n_iter, history = newton_ascent(
        vgh, np.zeros(data.p + 1), tol=tol, max_iter=max_iter,
        max_halvings=max_halvings, divergence_norm=divergence_norm,
        what="cure fit",
    )
    return CureFit(
        theta=theta,
        loglik=value,
        score_norm=gnorm,
        n_iterations=n_iter,
        converged=True,
        indicators=indicators,
        censoring=model,
        loglik_history=history,
    )
