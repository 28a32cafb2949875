"""Monte Carlo engine for the cure-regression estimators.

Data generating process, per replicate:

* covariates X ~ N(0, I_p), iid across subjects;
* cure status B ~ Bernoulli(pi(X)), pi logistic with coefficients theta0;
  B = 1 means cured, so the subject can only ever be censored;
* susceptible event times T0 from a Weibull-type law truncated to (0, tau),
  survivor {(e^{-t^kappa} - e^{-tau^kappa}) / (1 - e^{-tau^kappa})}^psi with
  psi = exp(X beta_t0) and kappa = psi^(-nu), drawn by inverting the CDF;
* censoring C exponential with rate exp(beta_c[0] + X beta_c[1:]);
* observed Y = C for cured subjects, min(T0, C) otherwise, with event
  indicator delta = 1 only for susceptible subjects failing before C.

Two constants are calibrated by Monte Carlo with common random numbers:
tau so that the susceptible survivor mass beyond it averages to 5%, and the
censoring-rate intercept so that Pr(delta = 0) hits the scenario's target
censored proportion pi_m + rho.

Replicate r of a study draws its data from the stream keyed (seed, r), so
studies are reproducible for any worker count or scheduling order.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import bootstrap
from .censoring import BeranConfig, fit_censoring
from .exceptions import ConfigError, ConvergenceError, DataError
from .data import SurvivalDataset
from .mle import _expit, fit_cure
from .penalty import PenaltyConfig, lambda_path, selection_metrics

__all__ = [
    "SimScenario",
    "EstimatorConfig",
    "SimReport",
    "truncated_weibull_inverse",
    "calibrate_tau",
    "calibrate_censoring_intercept",
    "make_scenario",
    "draw_dataset",
    "run_study",
]

# cure-logit intercepts giving marginal non-cured fractions of 0.2 and 0.4
_INTERCEPT_FOR_PI_M = {0.2: -1.85, 0.4: -0.55}
_TAU_TAIL_MASS = 0.05
_MIN_UNIFORM = 2.0 ** -53


def truncated_weibull_inverse(u, psi, kappa, tau):
    """Inverse CDF of the truncated susceptible event-time law.

    Maps uniform draws u in (0, 1] to event times in [0, tau): u = 1 gives
    exactly 0 and u -> 0 approaches tau. Evaluated via expm1/log1p so the
    heavy-tail corners (kappa of order 1e3 when nu = 2) stay finite.
    """
    u = np.asarray(u, dtype=float)
    psi = np.asarray(psi, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    # q can round to exactly 1 at extreme shapes; log1p(-1) = -inf is then
    # clamped to tau below, so the divide warning carries no information
    with np.errstate(over="ignore", divide="ignore"):
        a = tau ** kappa
        q = np.expm1(np.log(u) / psi) * np.expm1(-a)
        t = (-np.log1p(-q)) ** (1.0 / kappa)
    return np.minimum(t, tau)


def calibrate_tau(nu, beta_t0, *, target=_TAU_TAIL_MASS, mc_size=1_000_000,
                  seed=0, tol=1e-6, max_bisect=300):
    """Smallest horizon tau with E[exp(-psi tau^kappa)] at the target mass.

    The expectation over X is approximated once by Monte Carlo; bisection
    then runs on that fixed sample (common random numbers), so the map from
    (nu, beta_t0, seed) to tau is deterministic.
    """
    beta_t0 = np.asarray(beta_t0, dtype=float)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((int(mc_size), beta_t0.shape[0]))
    psi = np.exp(x @ beta_t0)
    kappa = psi ** (-nu)

    def excess(tau):
        with np.errstate(over="ignore"):
            return float(np.mean(np.exp(-psi * tau ** kappa))) - target

    lo, hi = 0.0, 1.0
    for _ in range(200):
        if excess(hi) < 0.0:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise DataError("tau calibration found no bracket")
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        val = excess(mid)
        if abs(val) <= tol:
            return mid
        if val > 0.0:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError("tau calibration did not reach tolerance")


def calibrate_censoring_intercept(nu, tau, theta0, beta_t0, beta_c_slopes,
                                  target, *, mc_size=1_000_000, seed=0,
                                  tol=1e-4, max_bisect=300):
    """Censoring-rate intercept matching Pr(delta = 0) to the target.

    One joint Monte Carlo sample of (X, cure status, event time, baseline
    censoring draw) is held fixed; shifting the intercept only rescales the
    censoring times, so the estimated censored proportion is monotone in it
    and bisection applies.
    """
    theta0 = np.asarray(theta0, dtype=float)
    beta_t0 = np.asarray(beta_t0, dtype=float)
    beta_c_slopes = np.asarray(beta_c_slopes, dtype=float)
    if not 0.0 < target < 1.0:
        raise DataError(f"target censored proportion must be in (0,1): {target}")

    rng = np.random.default_rng(seed)
    n = int(mc_size)
    x = rng.standard_normal((n, theta0.shape[0] - 1))
    cured = rng.random(n) < _expit(theta0[0] + x @ theta0[1:])
    u_t = np.maximum(rng.random(n), _MIN_UNIFORM)
    psi = np.exp(x @ beta_t0)
    t0 = truncated_weibull_inverse(u_t, psi, psi ** (-nu), tau)
    c_base = rng.standard_exponential(n) / np.exp(x @ beta_c_slopes)

    def censored_fraction(b0):
        with np.errstate(over="ignore"):
            c = c_base * np.exp(-b0)
        return float(1.0 - np.mean(~cured & (t0 <= c)))

    lo, hi = -30.0, 30.0
    for _ in range(6):
        if censored_fraction(lo) < target:
            break
        lo *= 2.0
    for _ in range(6):
        if censored_fraction(hi) > target:
            break
        hi *= 2.0
    if censored_fraction(lo) >= target or censored_fraction(hi) <= target:
        raise DataError(
            "censoring calibration found no bracket: target proportion "
            f"{target} is unreachable for this scenario"
        )
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        val = censored_fraction(mid) - target
        if abs(val) <= tol:
            return mid
        if val < 0.0:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError("censoring calibration did not reach tolerance")


@dataclass(frozen=True)
class SimScenario:
    """One fully calibrated simulation design."""

    nu: float
    pi_m: float
    rho: float
    n: int
    n_replicates: int
    seed: int
    tau: float
    theta0: np.ndarray
    beta_t0: np.ndarray
    beta_c: np.ndarray

    def __post_init__(self):
        for name in ("theta0", "beta_t0", "beta_c"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.theta0.shape[0] != self.beta_t0.shape[0] + 1 or \
                self.beta_c.shape[0] != self.theta0.shape[0]:
            raise ConfigError("scenario coefficient lengths are inconsistent")

    @property
    def p(self):
        return self.beta_t0.shape[0]

    @property
    def true_zero_set(self):
        return tuple(j for j in range(1, self.p + 1) if self.theta0[j] == 0.0)

    @property
    def true_nonzero_set(self):
        return tuple(j for j in range(1, self.p + 1) if self.theta0[j] != 0.0)


def make_scenario(nu, pi_m, rho, n, n_replicates, seed, *,
                  noise_covariates=0, mc_size=1_000_000, calibration_seed=0):
    """Build a scenario and calibrate tau and the censoring intercept.

    The base design has two covariates: both drive the cure logit with unit
    coefficients, the second also drives the susceptible event times and the
    censoring rate. noise_covariates = 4 appends x3..x6 of which only x3
    enters the event-time and censoring laws (never the cure logit), the
    setup used for the selection study.
    """
    if pi_m not in _INTERCEPT_FOR_PI_M:
        raise ConfigError(
            f"pi_m must be one of {sorted(_INTERCEPT_FOR_PI_M)}, got {pi_m}"
        )
    if not 0.0 <= rho < 1.0 - pi_m:
        raise ConfigError(f"rho={rho} leaves no room for events")
    if noise_covariates < 0:
        raise ConfigError("noise_covariates must be non-negative")
    p = 2 + int(noise_covariates)
    theta0 = np.zeros(p + 1)
    theta0[0] = _INTERCEPT_FOR_PI_M[pi_m]
    theta0[1] = theta0[2] = 1.0
    beta_t0 = np.zeros(p)
    beta_t0[1] = 1.0
    beta_c_slopes = np.zeros(p)
    beta_c_slopes[1] = 1.0
    if noise_covariates > 0:
        beta_t0[2] = 1.0
        beta_c_slopes[2] = 1.0

    tau = calibrate_tau(nu, beta_t0, mc_size=mc_size, seed=calibration_seed)
    b0 = calibrate_censoring_intercept(
        nu, tau, theta0, beta_t0, beta_c_slopes, pi_m + rho,
        mc_size=mc_size, seed=calibration_seed,
    )
    return SimScenario(
        nu=float(nu), pi_m=float(pi_m), rho=float(rho), n=int(n),
        n_replicates=int(n_replicates), seed=int(seed), tau=float(tau),
        theta0=theta0, beta_t0=beta_t0,
        beta_c=np.concatenate([[b0], beta_c_slopes]),
    )


def draw_dataset(scenario, replicate_index):
    """Generate one replicate dataset from the stream (seed, replicate)."""
    rng = np.random.default_rng([scenario.seed, int(replicate_index)])
    n, p = scenario.n, scenario.p
    x = rng.standard_normal((n, p))
    cured = rng.random(n) < _expit(scenario.theta0[0] + x @ scenario.theta0[1:])
    u_t = np.maximum(rng.random(n), _MIN_UNIFORM)
    psi = np.exp(x @ scenario.beta_t0)
    t0 = truncated_weibull_inverse(u_t, psi, psi ** (-scenario.nu),
                                   scenario.tau)
    # the inverse can underflow to 0.0 when 1/kappa is huge (nu = 2 with a
    # large linear predictor); times must stay strictly positive
    t0 = np.maximum(t0, 1e-300)
    c = rng.standard_exponential(n) / np.exp(
        scenario.beta_c[0] + x @ scenario.beta_c[1:]
    )
    c = np.maximum(c, 1e-300)
    y = np.where(cured, c, np.minimum(t0, c))
    delta = (~cured & (t0 <= c)).astype(np.int64)
    return SurvivalDataset.from_arrays(
        y, delta, x, covariate_names=[f"x{j + 1}" for j in range(p)]
    )


@dataclass(frozen=True)
class EstimatorConfig:
    """What to run on each simulated replicate."""

    censor: str = "cox"
    beran: BeranConfig | None = None
    known_fn: object = None
    penalty: PenaltyConfig | None = None
    n_lambda: int = 100
    n_folds: int = 10
    golden_refine: bool = False
    bootstrap_replicates: int = 0
    level: float = 0.95
    n_workers: int = 1


@dataclass
class SimReport:
    """Aggregated study results; per-replicate rows kept for raw output."""

    scenario: SimScenario
    estimator: EstimatorConfig
    n_completed: int
    n_failed: int
    replicate_indices: np.ndarray
    theta_hat: np.ndarray
    bias: np.ndarray
    sd: np.ndarray
    coverage: np.ndarray | None
    metrics: np.ndarray | None
    mean_c: float | None
    mean_ic: float | None
    mean_df: float | None
    wall_clock_s: float = field(repr=False, default=0.0)


def _study_replicate(args):
    scenario, est, r = args
    data = draw_dataset(scenario, r)
    try:
        model = fit_censoring(
            data, est.censor, beran_config=est.beran, known_fn=est.known_fn
        )
        metrics = None
        if est.penalty is not None:
            cv_seed = int(
                np.random.default_rng([scenario.seed, r, 2]).integers(2 ** 62)
            )
            path = lambda_path(
                data, model, est.penalty, n_lambda=est.n_lambda,
                n_folds=est.n_folds, seed=cv_seed,
                golden_refine=est.golden_refine,
            )
            theta = path.theta
            m = selection_metrics(
                theta, scenario.true_zero_set, scenario.true_nonzero_set,
                est.penalty.zero_threshold,
            )
            metrics = (m.c, m.ic, m.df)
        else:
            theta = fit_cure(data, model).theta

        cover = None
        if est.bootstrap_replicates > 0:
            b_seed = int(
                np.random.default_rng([scenario.seed, r, 3]).integers(2 ** 62)
            )
            boot = bootstrap(
                data, censor=est.censor, beran_config=est.beran,
                known_fn=est.known_fn,
                n_replicates=est.bootstrap_replicates, level=est.level,
                seed=b_seed,
            )
            cover = ((boot.ci_lower <= scenario.theta0)
                     & (scenario.theta0 <= boot.ci_upper))
        return r, theta, cover, metrics
    except (DataError, ConvergenceError):
        return r, None, None, None


def run_study(scenario, estimator=None):
    """Run the full Monte Carlo study a scenario describes.

    Returns a SimReport with bias and replicate SD per coefficient, plus
    bootstrap coverage percentages and mean selection counts when the
    estimator config asks for them. Failed replicates are excluded from all
    summaries and counted.
    """
    est = estimator if estimator is not None else EstimatorConfig()
    if est.penalty is not None and est.bootstrap_replicates > 0:
        raise ConfigError(
            "bootstrap coverage is only defined for unpenalized study fits"
        )
    started = time.perf_counter()
    jobs = [(scenario, est, r) for r in range(scenario.n_replicates)]
    results = [None] * scenario.n_replicates
    if est.n_workers > 1 and scenario.n_replicates > 1:
        chunk = max(1, scenario.n_replicates // (4 * est.n_workers))
        with ProcessPoolExecutor(max_workers=est.n_workers) as pool:
            for r, theta, cover, metrics in pool.map(
                _study_replicate, jobs, chunksize=chunk
            ):
                results[r] = (theta, cover, metrics)
    else:
        for job in jobs:
            r, theta, cover, metrics = _study_replicate(job)
            results[r] = (theta, cover, metrics)

    p1 = scenario.p + 1
    done = [r for r, res in enumerate(results) if res is not None
            and res[0] is not None]
    n_completed = len(done)
    n_failed = scenario.n_replicates - n_completed
    theta_hat = np.array([results[r][0] for r in done]).reshape(n_completed, p1)

    if n_completed > 0:
        bias = theta_hat.mean(axis=0) - scenario.theta0
        sd = theta_hat.std(axis=0, ddof=1) if n_completed > 1 \
            else np.full(p1, np.nan)
    else:
        bias = np.full(p1, np.nan)
        sd = np.full(p1, np.nan)

    coverage = None
    if est.bootstrap_replicates > 0 and n_completed > 0:
        covers = np.array([results[r][1] for r in done], dtype=float)
        coverage = 100.0 * covers.mean(axis=0)

    metrics = mean_c = mean_ic = mean_df = None
    if est.penalty is not None and n_completed > 0:
        metrics = np.array([results[r][2] for r in done], dtype=int)
        mean_c = float(metrics[:, 0].mean())
        mean_ic = float(metrics[:, 1].mean())
        mean_df = float(metrics[:, 2].mean())

    return SimReport(
        scenario=scenario,
        estimator=est,
        n_completed=n_completed,
        n_failed=n_failed,
        replicate_indices=np.array(done, dtype=int),
        theta_hat=theta_hat,
        bias=bias,
        sd=sd,
        coverage=coverage,
        metrics=metrics,
        mean_c=mean_c,
        mean_ic=mean_ic,
        mean_df=mean_df,
        wall_clock_s=time.perf_counter() - started,
    )
