"""Command-line interface: fit, select, censor, simulate.

Every output file embeds the resolved configuration (including the seed) so
a run can be reproduced exactly; reruns with the same inputs are
byte-identical. JSON outputs are pretty-printed with sorted keys; CSV
outputs carry the config as a single leading comment line.

Exit codes: 0 success, 2 configuration errors, 3 data errors,
4 convergence failures.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bootstrap import bootstrap as run_bootstrap
from .censoring import BeranConfig, fit_censoring
from .data import load_csv
from .exceptions import ConfigError, ConvergenceError, DataError
from .mle import fit_cure
from .penalty import PenaltyConfig, lambda_path
from .simulation import EstimatorConfig, make_scenario, run_study


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _write_json(path, payload):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text)


def _write_csv(path, header, rows, config):
    lines = ["# config: " + json.dumps(_jsonable(config), sort_keys=True)]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _split_names(text):
    names = [c.strip() for c in text.split(",") if c.strip()]
    if not names:
        raise ConfigError("at least one covariate column is required")
    return names


def _parse_beran_index(raw, names):
    if raw is None:
        return 0
    if raw in names:
        return names.index(raw)
    try:
        coefs = [float(v) for v in raw.split(",")]
    except ValueError:
        raise ConfigError(
            f"--beran-index must be a covariate name or comma-separated "
            f"coefficients, got {raw!r}"
        ) from None
    if len(coefs) != len(names):
        raise ConfigError(
            f"--beran-index needs {len(names)} coefficients, got {len(coefs)}"
        )
    return np.array(coefs)


def _censoring_from_options(data, censor, beran_bandwidth, beran_index):
    beran_config = None
    if censor == "beran":
        if beran_bandwidth is None:
            raise ConfigError("--beran-bandwidth is required with --censor beran")
        beran_config = BeranConfig(
            bandwidth=beran_bandwidth,
            index=_parse_beran_index(beran_index, list(data.covariate_names)),
        )
    return fit_censoring(data, censor, beran_config=beran_config), beran_config


def _named(names, values):
    return {name: float(v) for name, v in zip(names, values)}


def _coef_names(data):
    return ["intercept", *data.covariate_names]


def data_options(f):
    for opt in reversed([
        click.argument("data_file", type=click.Path(exists=True, dir_okay=False)),
        click.option("--time-col", required=True, help="Follow-up time column."),
        click.option("--status-col", required=True,
                     help="Event indicator column (1 event, 0 censored)."),
        click.option("--covariates", required=True,
                     help="Comma-separated covariate column names."),
        click.option("--weight-col", default=None,
                     help="Optional per-subject weight column."),
    ]):
        f = opt(f)
    return f


def censor_options(f):
    for opt in reversed([
        click.option("--censor", type=click.Choice(["km", "cox", "beran"]),
                     default="cox", show_default=True,
                     help="Censoring-survivor estimator."),
        click.option("--beran-bandwidth", type=float, default=None,
                     help="Kernel bandwidth (beran only)."),
        click.option("--beran-index", default=None,
                     help="Covariate name or comma-separated index "
                          "coefficients (beran only)."),
    ]):
        f = opt(f)
    return f


@click.group()
@click.version_option(__version__, prog_name="curereg")
def cli():
    """Cure regression with inverse-probability-of-censoring weights."""


@cli.command()
@data_options
@censor_options
@click.option("--bootstrap", "n_bootstrap", type=int, default=0,
              show_default=True, help="Bootstrap replicates (0 disables).")
@click.option("--level", type=float, default=0.95, show_default=True,
              help="Confidence level for bootstrap intervals.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True,
              help="Parallel workers for bootstrap replicates.")
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Output directory.")
@click.option("--bstar-csv", is_flag=True,
              help="Also write the per-subject synthetic indicators.")
def fit(data_file, time_col, status_col, covariates, weight_col, censor,
        beran_bandwidth, beran_index, n_bootstrap, level, seed, workers, out,
        bstar_csv):
    """Fit the cure regression on a CSV dataset."""
    names = _split_names(covariates)
    data = load_csv(data_file, time_col, status_col, names, weight_col)
    model, beran_config = _censoring_from_options(
        data, censor, beran_bandwidth, beran_index
    )
    result = fit_cure(data, model)

    config = {
        "command": "fit", "data_file": str(data_file), "time_col": time_col,
        "status_col": status_col, "covariates": names,
        "weight_col": weight_col, "censor": censor,
        "beran_bandwidth": beran_bandwidth, "beran_index": beran_index,
        "bootstrap": n_bootstrap, "level": level, "seed": seed,
        "version": __version__,
    }
    cnames = _coef_names(data)
    payload = {
        "config": config,
        "coefficients": _named(cnames, result.theta),
        "loglik": result.loglik,
        "score_norm": result.score_norm,
        "n_iterations": result.n_iterations,
        "converged": result.converged,
        "low_overlap_count": result.indicators.low_overlap_count,
    }
    if censor == "cox":
        payload["censoring"] = {
            "kind": "cox",
            "coefficients": _named(data.covariate_names, model.beta),
        }
    else:
        payload["censoring"] = {"kind": censor}
    if n_bootstrap > 0:
        boot = run_bootstrap(
            data, censor=censor, beran_config=beran_config,
            n_replicates=n_bootstrap, level=level, seed=seed,
            n_workers=workers,
        )
        payload["bootstrap"] = {
            "n_replicates": boot.n_replicates,
            "n_failed": boot.n_failed,
            "level": boot.level,
            "se": _named(cnames, boot.se),
            "ci_lower": _named(cnames, boot.ci_lower),
            "ci_upper": _named(cnames, boot.ci_upper),
            "p_values": _named(cnames, boot.p_values),
        }

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "fit.json", payload)
    if bstar_csv:
        s_left, _ = model.left_limits(data)
        rows = zip(data.y, data.delta, result.indicators.b_star, s_left)
        _write_csv(
            out_dir / "bstar.csv",
            ["y", "delta", "b_star", "survivor_left_limit"], rows, config,
        )
    click.echo(f"wrote {out_dir / 'fit.json'}")


@cli.command()
@data_options
@censor_options
@click.option("--penalty", type=click.Choice(["alasso", "lasso"]),
              default="alasso", show_default=True)
@click.option("--gamma", type=float, default=1.0, show_default=True,
              help="Adaptive weight exponent.")
@click.option("--epsilon", type=float, default=1e-4, show_default=True,
              help="Smooth absolute-value parameter.")
@click.option("--zero-threshold", type=float, default=1e-3, show_default=True)
@click.option("--n-lambda", type=int, default=100, show_default=True)
@click.option("--cv-folds", type=int, default=10, show_default=True)
@click.option("--golden-refine", is_flag=True,
              help="Refine the selected lambda by golden-section search.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for the cross-validation fold assignment.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--svg", "emit_svg", is_flag=True,
              help="Also write a coefficient-path plot as SVG.")
def select(data_file, time_col, status_col, covariates, weight_col, censor,
           beran_bandwidth, beran_index, penalty, gamma, epsilon,
           zero_threshold, n_lambda, cv_folds, golden_refine, seed, out,
           emit_svg):
    """Penalized variable selection along a cross-validated lambda path."""
    names = _split_names(covariates)
    data = load_csv(data_file, time_col, status_col, names, weight_col)
    model, _ = _censoring_from_options(
        data, censor, beran_bandwidth, beran_index
    )
    cfg = PenaltyConfig(kind=penalty, gamma=gamma, epsilon=epsilon,
                        zero_threshold=zero_threshold)
    path = lambda_path(
        data, model, cfg, n_lambda=n_lambda, n_folds=cv_folds, seed=seed,
        golden_refine=golden_refine,
    )

    config = {
        "command": "select", "data_file": str(data_file),
        "time_col": time_col, "status_col": status_col, "covariates": names,
        "weight_col": weight_col, "censor": censor,
        "beran_bandwidth": beran_bandwidth, "beran_index": beran_index,
        "penalty": penalty, "gamma": gamma, "epsilon": epsilon,
        "zero_threshold": zero_threshold, "n_lambda": n_lambda,
        "cv_folds": cv_folds, "golden_refine": golden_refine, "seed": seed,
        "version": __version__,
    }
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    header = ["lambda", *names, "df", "cve"]
    rows = [
        [path.lambdas[i], *path.coefficients[i, 1:], path.dfs[i],
         path.cves[i]]
        for i in range(path.lambdas.shape[0])
    ]
    _write_csv(out_dir / "path.csv", header, rows, config)

    cnames = _coef_names(data)
    _write_json(out_dir / "selection.json", {
        "config": config,
        "selected_lambda": path.selected_lambda,
        "selected_index": path.selected_index,
        "refined": path.refined,
        "cve": float(path.cves[path.selected_index]),
        "coefficients": _named(cnames, path.theta),
        "coefficients_standardized": _named(cnames, path.theta_std),
        "active": {n: bool(a) for n, a in zip(cnames, path.active)},
        "df": int(path.active.sum()),
        "adaptive_weights": _named(names, path.weights),
        "low_overlap_count": path.indicators.low_overlap_count,
    })
    if emit_svg:
        _plot_path(out_dir / "path.svg", path, names)
    click.echo(f"wrote {out_dir / 'selection.json'}")


def _plot_path(path_svg, path, names):
    try:
        import matplotlib
    except ImportError:
        raise ConfigError(
            "--svg requires matplotlib (pip install curereg[plot])"
        ) from None
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "curereg"
    fig, ax = plt.subplots(figsize=(7, 4.5))
    loglam = np.log10(path.lambdas)
    for j, name in enumerate(names):
        ax.plot(loglam, path.coefficients[:, j + 1], label=name)
    ax.axvline(np.log10(path.selected_lambda), color="grey", ls="--", lw=1)
    ax.set_xlabel("log10(lambda)")
    ax.set_ylabel("standardized coefficient")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path_svg, metadata={"Date": None})
    plt.close(fig)


@cli.command()
@data_options
@censor_options
@click.option("--at", "at_point", default=None,
              help="Comma-separated covariate values for conditional "
                   "models (default: all zeros).")
@click.option("--out", required=True, type=click.Path(file_okay=False))
def censor(data_file, time_col, status_col, covariates, weight_col, censor,
           beran_bandwidth, beran_index, at_point, out):
    """Fit a censoring model and write its survivor curve."""
    names = _split_names(covariates)
    data = load_csv(data_file, time_col, status_col, names, weight_col)
    model, _ = _censoring_from_options(
        data, censor, beran_bandwidth, beran_index
    )
    if at_point is None:
        x0 = np.zeros(data.p)
    else:
        try:
            x0 = np.array([float(v) for v in at_point.split(",")])
        except ValueError:
            raise ConfigError(f"--at must be comma-separated numbers") from None
        if x0.shape[0] != data.p:
            raise ConfigError(f"--at needs {data.p} values, got {x0.shape[0]}")

    config = {
        "command": "censor", "data_file": str(data_file),
        "time_col": time_col, "status_col": status_col, "covariates": names,
        "weight_col": weight_col, "censor": censor,
        "beran_bandwidth": beran_bandwidth, "beran_index": beran_index,
        "at": [float(v) for v in x0], "version": __version__,
    }
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    times = np.unique(data.y)
    xq = None if censor == "km" else x0.reshape(1, -1)
    surv = model._survivor_many(times, xq)
    left = model._left_limit_many(times, xq)
    rows = zip(times, surv, left)
    _write_csv(out_dir / "censor_curve.csv",
               ["time", "survivor", "survivor_left_limit"], rows, config)
    if censor == "cox":
        _write_json(out_dir / "censor_cox.json", {
            "config": config,
            "coefficients": _named(data.covariate_names, model.beta),
            "loglik": model.loglik,
            "n_iterations": model.n_iterations,
            "score_norm": model.score_norm,
            "converged": model.converged,
        })
    click.echo(f"wrote {out_dir / 'censor_curve.csv'}")


def _load_sim_config(path):
    text = Path(path).read_bytes()
    if str(path).endswith((".toml", ".tml")):
        try:
            import tomllib as toml_mod
        except ImportError:
            try:
                import tomli as toml_mod
            except ImportError:
                raise ConfigError(
                    "TOML configs need Python 3.11+ or the tomli package; "
                    "JSON configs work everywhere"
                ) from None
        try:
            return toml_mod.loads(text.decode())
        except toml_mod.TOMLDecodeError as e:
            raise ConfigError(f"{path}: invalid TOML: {e}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None


_SIM_KEYS = {
    "nu": (float, None), "pi_m": (float, None), "rho": (float, None),
    "n": (int, None), "n_replicates": (int, None), "seed": (int, 0),
    "noise_covariates": (int, 0), "mc_size": (int, 1_000_000),
    "calibration_seed": (int, 0), "censor": (str, "cox"),
    "bootstrap_replicates": (int, 0), "level": (float, 0.95),
    "penalty": (str, "none"), "gamma": (float, 1.0),
    "epsilon": (float, 1e-4), "zero_threshold": (float, 1e-3),
    "n_lambda": (int, 100), "n_folds": (int, 10),
    "golden_refine": (bool, False), "workers": (int, 1),
}


def _parse_sim_config(raw, path):
    unknown = sorted(set(raw) - set(_SIM_KEYS))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s): {', '.join(unknown)}")
    cfg = {}
    for key, (cast, default) in _SIM_KEYS.items():
        if key in raw:
            try:
                cfg[key] = cast(raw[key])
            except (TypeError, ValueError):
                raise ConfigError(
                    f"{path}: key {key!r} must be {cast.__name__}"
                ) from None
        elif default is None:
            raise ConfigError(f"{path}: missing required key {key!r}")
        else:
            cfg[key] = default
    if cfg["censor"] not in ("km", "cox"):
        raise ConfigError(f"{path}: censor must be 'km' or 'cox' in studies")
    if cfg["penalty"] not in ("none", "lasso", "alasso"):
        raise ConfigError(f"{path}: penalty must be none, lasso, or alasso")
    return cfg


@cli.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--raw", "emit_raw", is_flag=True,
              help="Also write per-replicate estimates.")
@click.option("--workers", type=int, default=None,
              help="Override the config's worker count.")
def simulate(config_file, out, emit_raw, workers):
    """Run a Monte Carlo study described by a TOML or JSON config."""
    cfg = _parse_sim_config(_load_sim_config(config_file), config_file)
    if workers is not None:
        cfg["workers"] = workers

    scenario = make_scenario(
        cfg["nu"], cfg["pi_m"], cfg["rho"], cfg["n"], cfg["n_replicates"],
        cfg["seed"], noise_covariates=cfg["noise_covariates"],
        mc_size=cfg["mc_size"], calibration_seed=cfg["calibration_seed"],
    )
    penalty = None
    if cfg["penalty"] != "none":
        penalty = PenaltyConfig(
            kind=cfg["penalty"], gamma=cfg["gamma"], epsilon=cfg["epsilon"],
            zero_threshold=cfg["zero_threshold"],
        )
    estimator = EstimatorConfig(
        censor=cfg["censor"], penalty=penalty, n_lambda=cfg["n_lambda"],
        n_folds=cfg["n_folds"], golden_refine=cfg["golden_refine"],
        bootstrap_replicates=cfg["bootstrap_replicates"], level=cfg["level"],
        n_workers=cfg["workers"],
    )
    report = run_study(scenario, estimator)

    config = {"command": "simulate", "config_file": str(config_file),
              "version": __version__, **cfg}
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    cnames = ["intercept"] + [f"x{j + 1}" for j in range(scenario.p)]
    header = ["nu", "pi_m", "rho", "n", "n_replicates", "n_completed",
              "n_failed", "tau"]
    row = [scenario.nu, scenario.pi_m, scenario.rho, scenario.n,
           scenario.n_replicates, report.n_completed, report.n_failed,
           scenario.tau]
    for name, v in zip(cnames, report.bias):
        header.append(f"bias_{name}")
        row.append(v)
    for name, v in zip(cnames, report.sd):
        header.append(f"sd_{name}")
        row.append(v)
    if report.coverage is not None:
        for name, v in zip(cnames, report.coverage):
            header.append(f"coverage_{name}")
            row.append(v)
    if penalty is not None:
        header += ["mean_c", "mean_ic", "mean_df"]
        row += [report.mean_c, report.mean_ic, report.mean_df]
    _write_csv(out_dir / "sim_report.csv", header, [row], config)

    if emit_raw:
        rheader = ["replicate"] + [f"theta_{n}" for n in cnames]
        if penalty is not None:
            rheader += ["c", "ic", "df"]
        rrows = []
        for i, r in enumerate(report.replicate_indices):
            rrow = [int(r), *report.theta_hat[i]]
            if penalty is not None:
                rrow += list(report.metrics[i])
            rrows.append(rrow)
        _write_csv(out_dir / "sim_replicates.csv", rheader, rrows, config)
    print(f"elapsed: {report.wall_clock_s:.1f}s", file=sys.stderr)
    click.echo(f"wrote {out_dir / 'sim_report.csv'}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.UsageError as e:
        e.show()
        sys.exit(2)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        sys.exit(2)
    except DataError as e:
        print(f"error: data: {e}", file=sys.stderr)
        sys.exit(3)
    except ConvergenceError as e:
        print(f"error: convergence: {e}", file=sys.stderr)
        sys.exit(4)
    except click.exceptions.Abort:
        sys.exit(130)


if __name__ == "__main__":
    main()
