"""Censoring-survivor estimators used to build inverse-probability weights.

Four interchangeable models of the censoring distribution C given covariates:

* Kaplan-Meier product-limit (covariate-free), fit on censoring indicators.
* Cox proportional hazards with Breslow baseline, censorings as the events.
* Beran kernel-weighted product-limit, smoothing over a one-dimensional
  covariate index with an Epanechnikov kernel.
* Known: a user-supplied evaluator, e.g. the true censoring law inside a
  simulation.

All models expose the survivor function and its left limit S_C(t- | x). The
left limit is the quantity the downstream weighting divides by, so it is
floored at SURVIVOR_FLOOR there; evaluations whose pre-clamp value falls
below LOW_OVERLAP_THRESHOLD are counted and reported via LowOverlapWarning.

Tie convention: at a tied time, events leave the censoring risk set first,
so the product-limit factor for censorings at t is 1 - c_t / (r_t - e_t)
with r_t the subjects still under observation at t- (inclusive of t) and
e_t the events at t. On tie-free data this is the usual product-limit
estimator; with ties it is exactly the convention under which the weighted
average of delta / S_C(Y- | X) reproduces the Kaplan-Meier estimate of the
event-time distribution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, ConvergenceError

__all__ = [
    "SURVIVOR_FLOOR",
    "LOW_OVERLAP_THRESHOLD",
    "LowOverlapWarning",
    "CensoringModel",
    "KaplanMeierCensoring",
    "CoxCensoring",
    "BeranConfig",
    "BeranCensoring",
    "KnownCensoring",
    "fit_km_censoring",
    "fit_cox_censoring",
    "fit_beran_censoring",
    "fit_censoring",
]

SURVIVOR_FLOOR = 1e-10
LOW_OVERLAP_THRESHOLD = 0.05


class LowOverlapWarning(UserWarning):
    """Censoring-survivor estimate nearly vanished at an evaluation point."""


class CensoringModel:
    """Common evaluation surface for all censoring-survivor estimators."""

    kind = "abstract"

    def _survivor_many(self, t, x):
        raise NotImplementedError

    def _left_limit_many(self, t, x):
        raise NotImplementedError

    def survivor(self, t, x=None):
        """S_C(t | x), right-continuous, unclamped."""
        return float(self._survivor_many(np.atleast_1d(float(t)), self._query_x(x))[0])

    def survivor_left_limit(self, t, x=None):
        """S_C(t- | x), floored at SURVIVOR_FLOOR.

        Emits LowOverlapWarning when the pre-clamp value is below
        LOW_OVERLAP_THRESHOLD: weights built from it would be unstable.
        """
        raw = float(
            self._left_limit_many(np.atleast_1d(float(t)), self._query_x(x))[0]
        )
        if raw < LOW_OVERLAP_THRESHOLD:
            warnings.warn(
                f"censoring survivor left limit {raw:.3g} at t={t} is below "
                f"{LOW_OVERLAP_THRESHOLD}; inverse weights may be unstable",
                LowOverlapWarning,
                stacklevel=2,
            )
        return max(raw, SURVIVOR_FLOOR)

    def left_limits(self, data):
        """Per-subject floored left limits S_C(Y_i- | X_i) for a dataset.

        Returns (values, low_overlap_count); a single summary warning is
        emitted when any pre-clamp value is below the overlap threshold.
        """
        raw = self._left_limit_many(data.y, data.x)
        low = int(np.count_nonzero(raw < LOW_OVERLAP_THRESHOLD))
        if low:
            warnings.warn(
                f"censoring survivor left limit below {LOW_OVERLAP_THRESHOLD} "
                f"for {low} of {data.n} subjects; inverse weights may be unstable",
                LowOverlapWarning,
                stacklevel=2,
            )
        return np.maximum(raw, SURVIVOR_FLOOR), low

    def _query_x(self, x):
        if x is None:
            return None
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x


def _step_eval(jump_times, values, t, side):
    """Evaluate a cadlag step function with value 1 before the first jump."""
    idx = np.searchsorted(jump_times, t, side=side)
    out = np.ones_like(np.asarray(t, dtype=float))
    nz = idx > 0
    out[nz] = values[idx[nz] - 1]
    return out


def _distinct_time_blocks(y_sorted):
    """Start indices of each distinct-time block in an ascending sort."""
    n = y_sorted.shape[0]
    first = np.empty(n, dtype=bool)
    first[0] = True
    np.not_equal(y_sorted[1:], y_sorted[:-1], out=first[1:])
    starts = np.flatnonzero(first)
    return y_sorted[starts], starts


def _censoring_product_limit(y, delta, weights):
    """Weighted product-limit over censorings with events leaving ties first.

    Returns (jump_times, survivor_after_jump) for the censoring survivor.
    """
    order = np.argsort(y, kind="stable")
    ys = y[order]
    cens = (delta[order] == 0).astype(float) * weights[order]
    ev = (delta[order] == 1).astype(float) * weights[order]
    w = weights[order]

    times, starts = _distinct_time_blocks(ys)
    at_risk = np.cumsum(w[::-1])[::-1][starts]
    c_k = np.add.reduceat(cens, starts)
    e_k = np.add.reduceat(ev, starts)

    has_jump = c_k > 0
    denom = at_risk[has_jump] - e_k[has_jump]
    # c_k > 0 implies censored mass at the time itself, so denom >= c_k > 0
    factors = 1.0 - c_k[has_jump] / denom
    surv = np.cumprod(factors)
    return times[has_jump], surv


class KaplanMeierCensoring(CensoringModel):
    """Product-limit estimate of the censoring survivor, no covariates."""

    kind = "km"

    def __init__(self, jump_times, survivor_values):
        self.jump_times = jump_times
        self.survivor_values = survivor_values

    def _survivor_many(self, t, x):
        return _step_eval(self.jump_times, self.survivor_values, t, "right")

    def _left_limit_many(self, t, x):
        return _step_eval(self.jump_times, self.survivor_values, t, "left")


def fit_km_censoring(data):
    """Fit the covariate-free product-limit censoring model."""
    jump_times, surv = _censoring_product_limit(
        data.y, data.delta, np.ones(data.n)
    )
    return KaplanMeierCensoring(jump_times, surv)


def _cox_quantities(y, events, x, beta):
    """Breslow partial log-likelihood, score, information, and baseline parts.

    `events` flags the failures of the distribution being modeled (here:
    censorings). Returns (loglik, grad, neg_hessian, jump_times, jump_sizes).
    """
    order = np.argsort(y, kind="stable")
    ys = y[order]
    evs = events[order].astype(float)
    xs = x[order]

    eta = xs @ beta
    shift = eta.max() if eta.size else 0.0
    r = np.exp(eta - shift)

    times, starts = _distinct_time_blocks(ys)
    s0 = np.cumsum(r[::-1])[::-1][starts]
    s1 = np.cumsum((r[:, None] * xs)[::-1], axis=0)[::-1][starts]
    d_k = np.add.reduceat(evs, starts)

    with_events = d_k > 0
    d = d_k[with_events]
    s0e = s0[with_events]
    s1e = s1[with_events]

    loglik = float(evs @ eta - d @ (np.log(s0e) + shift))
    grad = evs @ xs - d @ (s1e / s0e[:, None])

    s2 = np.cumsum((r[:, None, None] * xs[:, :, None] * xs[:, None, :])[::-1],
                   axis=0)[::-1][starts][with_events]
    m = s1e / s0e[:, None]
    info = np.einsum("k,kpq->pq", d, s2 / s0e[:, None, None]) - np.einsum(
        "k,kp,kq->pq", d, m, m
    )

    jump_times = times[with_events]
    jump_sizes = d / (s0e * np.exp(shift))
    return loglik, grad, info, jump_times, jump_sizes


class CoxCensoring(CensoringModel):
    """Proportional-hazards censoring model with a Breslow baseline."""

    kind = "cox"

    def __init__(self, beta, jump_times, cumhaz_values, *, loglik, n_iterations,
                 score_norm, converged):
        self.beta = beta
        self.jump_times = jump_times
        self.cumhaz_values = cumhaz_values
        self.loglik = loglik
        self.n_iterations = n_iterations
        self.score_norm = score_norm
        self.converged = converged

    def _cumhaz(self, t, side):
        idx = np.searchsorted(self.jump_times, t, side=side)
        out = np.zeros_like(np.asarray(t, dtype=float))
        nz = idx > 0
        out[nz] = self.cumhaz_values[idx[nz] - 1]
        return out

    def _require_x(self, t, x):
        if x is None:
            if self.beta.shape[0] == 0:
                return np.zeros((t.shape[0], 0))
            raise DataError("Cox censoring model requires covariate values")
        if x.shape[0] == 1 and t.shape[0] > 1:
            x = np.broadcast_to(x, (t.shape[0], x.shape[1]))
        return x

    def _survivor_many(self, t, x):
        x = self._require_x(t, x)
        return np.exp(-np.exp(x @ self.beta) * self._cumhaz(t, "right"))

    def _left_limit_many(self, t, x):
        x = self._require_x(t, x)
        return np.exp(-np.exp(x @ self.beta) * self._cumhaz(t, "left"))


def fit_cox_censoring(data, *, max_iter=100, tol=1e-8, max_halvings=30):
    """Fit the Cox censoring model by Newton ascent of the partial likelihood.

    Censorings (delta = 0) play the role of the events. Breslow handling of
    ties throughout; the baseline cumulative hazard is Breslow's estimator at
    the fitted coefficients. Datasets with no covariates are allowed, in which
    case the baseline is the Nelson-Aalen estimator of censoring.
    """
    events = (data.delta == 0).astype(float)
    if not events.any():
        raise DataError("no censoring events: cannot fit a censoring model")

    beta = np.zeros(data.p)
    n_iter = 0
    if data.p > 0:
        loglik, grad, info, _, _ = _cox_quantities(data.y, events, data.x, beta)
        for n_iter in range(1, max_iter + 1):
            gnorm = float(np.linalg.norm(grad))
            if gnorm <= tol:
                n_iter -= 1
                break
            try:
                step = np.linalg.solve(info, grad)
            except np.linalg.LinAlgError:
                raise DataError(
                    "singular information matrix in the censoring fit: "
                    "covariates are collinear or carry no censoring events"
                ) from None
            scale = 1.0
            for _ in range(max_halvings + 1):
                cand = beta + scale * step
                new_ll, new_grad, new_info, _, _ = _cox_quantities(
                    data.y, events, data.x, cand
                )
                if np.isfinite(new_ll) and new_ll > loglik:
                    break
                scale /= 2.0
            else:
                # No representable improvement left. Near the optimum that is
                # convergence, not failure: accept when the quadratic model's
                # expected gain sits below float resolution of the loglik.
                eps = np.finfo(float).eps
                if (
                    0.5 * float(grad @ step) <= 64.0 * eps * (1.0 + abs(loglik))
                    or np.linalg.norm(step) <= eps * (1.0 + np.linalg.norm(beta))
                ):
                    break
                raise ConvergenceError(
                    "censoring fit stalled: step halving exhausted",
                    theta=beta, score_norm=gnorm, n_iterations=n_iter,
                )
            beta, loglik, grad, info = cand, new_ll, new_grad, new_info
        else:
            raise ConvergenceError(
                "censoring fit did not converge",
                theta=beta, score_norm=float(np.linalg.norm(grad)),
                n_iterations=max_iter,
            )

    loglik, grad, _, jump_times, jump_sizes = _cox_quantities(
        data.y, events, data.x, beta
    )
    return CoxCensoring(
        beta,
        jump_times,
        np.cumsum(jump_sizes),
        loglik=loglik,
        n_iterations=n_iter,
        score_norm=float(np.linalg.norm(grad)),
        converged=True,
    )


@dataclass(frozen=True)
class BeranConfig:
    """Settings for the kernel product-limit censoring model.

    bandwidth is on the scale of the smoothing index; index selects the
    covariate column (int) or gives fixed linear-combination coefficients
    (length-p vector) defining the one-dimensional index the kernel runs over.
    """

    bandwidth: float
    index: object = 0

    def __post_init__(self):
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
            raise DataError(f"bandwidth must be positive, got {self.bandwidth}")


class BeranCensoring(CensoringModel):
    """Kernel-weighted product-limit censoring model over a covariate index."""

    kind = "beran"

    def __init__(self, config, y, delta, index_values, p):
        self.config = config
        order = np.argsort(y, kind="stable")
        self._y = y[order]
        self._cens = (delta[order] == 0).astype(float)
        self._ev = (delta[order] == 1).astype(float)
        self._z = index_values[order]
        self._times, self._starts = _distinct_time_blocks(self._y)
        self._p = p

    def index_value(self, x):
        return _index_values(np.atleast_2d(np.asarray(x, dtype=float)),
                             self.config.index, self._p)

    def _curve(self, z0):
        """Jump times and survivor values of the local product-limit at z0."""
        u = (self._z - z0) / self.config.bandwidth
        k = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
        if not np.any(k > 0):
            raise DataError(
                f"no kernel support at index value {z0:g}: "
                "increase the bandwidth or move the query point"
            )
        at_risk = np.cumsum(k[::-1])[::-1][self._starts]
        c_k = np.add.reduceat(k * self._cens, self._starts)
        e_k = np.add.reduceat(k * self._ev, self._starts)
        has_jump = c_k > 0
        denom = at_risk[has_jump] - e_k[has_jump]
        factors = 1.0 - c_k[has_jump] / denom
        return self._times[has_jump], np.cumprod(factors)

    def _eval(self, t, x, side):
        if x is None:
            raise DataError("Beran censoring model requires covariate values")
        z = _index_values(x, self.config.index, self._p)
        if z.shape[0] == 1 and t.shape[0] > 1:
            z = np.broadcast_to(z, t.shape)
        out = np.empty(t.shape[0])
        for i in range(t.shape[0]):
            jt, sv = self._curve(float(z[i]))
            out[i] = _step_eval(jt, sv, t[i : i + 1], side)[0]
        return out

    def _survivor_many(self, t, x):
        return self._eval(t, x, "right")

    def _left_limit_many(self, t, x):
        return self._eval(t, x, "left")


def _index_values(x, index, p):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != p:
        raise DataError(f"expected {p} covariates, got {x.shape[1]}")
    if isinstance(index, (int, np.integer)):
        if not 0 <= index < p:
            raise DataError(f"index column {index} out of range for p={p}")
        return x[:, index]
    v = np.asarray(index, dtype=float)
    if v.shape != (p,):
        raise DataError(f"index coefficients must have length {p}")
    return x @ v


def fit_beran_censoring(data, config):
    """Fit the Beran model: store the sample plus the smoothing settings."""
    z = _index_values(data.x, config.index, data.p)
    return BeranCensoring(config, data.y, data.delta, z, data.p)


def fit_censoring(data, kind, *, beran_config=None, known_fn=None, **cox_kwargs):
    """Dispatch to the requested censoring estimator by name."""
    if kind == "km":
        return fit_km_censoring(data)
    if kind == "cox":
        return fit_cox_censoring(data, **cox_kwargs)
    if kind == "beran":
        if beran_config is None:
            raise DataError("beran censoring requires a BeranConfig")
        return fit_beran_censoring(data, beran_config)
    if kind == "known":
        if known_fn is None:
            raise DataError("known censoring requires an evaluator")
        return KnownCensoring(known_fn)
    raise DataError(f"unknown censoring kind {kind!r}")


class KnownCensoring(CensoringModel):
    """Censoring survivor supplied by the caller.

    The evaluator is called as fn(t, x) and must return S_C(t- | x); for a
    continuous censoring law the left limit equals the survivor itself, so a
    plain survivor function is the usual argument.
    """

    kind = "known"

    def __init__(self, fn):
        self.fn = fn

    def _values(self, t, x):
        if x is None:
            xs = [None] * t.shape[0]
        elif x.shape[0] == 1 and t.shape[0] > 1:
            xs = [x[0]] * t.shape[0]
        else:
            xs = list(x)
        return np.array([float(self.fn(float(ti), xi)) for ti, xi in zip(t, xs)])

    def _survivor_many(self, t, x):
        return self._values(t, x)

    def _left_limit_many(self, t, x):
        return self._values(t, x)
