"""Command-line experiment driver.

Subcommands: gen {static|dynamic|nhanes-like}, train {sice|dice}, sweep,
bounds, report. Config precedence is flags > config file > INFREG_SEED
(seed only) > built-in defaults, and the effective configuration is echoed
to stdout and stored in the run.json sidecar.

Exit codes: 0 success, 2 validation or schema error, 3 numerical
divergence during training, 4 I/O error.
"""

from __future__ import annotations

import functools
import json
import os
import sys
import time

import click

from . import bounds as bounds_mod
from . import dice as dice_mod
from . import runs
from . import sice as sice_mod
from . import synthgen
from .errors import (
    ConfigurationError,
    DivergenceError,
    SchemaError,
    UsageError,
)

EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4


def _guard(fn):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (SchemaError, ConfigurationError, UsageError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_VALIDATION)
        except DivergenceError as e:
            click.echo(f"divergence: {e}", err=True)
            sys.exit(EXIT_DIVERGENCE)
        except OSError as e:
            click.echo(f"io error: {e}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


def _env_seed():
    raw = os.environ.get("INFREG_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise SchemaError(f"INFREG_SEED must be an integer, got {raw!r}")


def _pick(*candidates, default):
    for c in candidates:
        if c is not None:
            return c
    return default


def _seed_of(flag, cfg: dict, default: int = 0) -> int:
    return int(_pick(flag, cfg.get("seed"), _env_seed(), default=default))


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except ValueError as e:
            raise SchemaError(f"config file {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise SchemaError(f"config file {path}: expected a JSON object")
    return cfg


def _check_keys(cfg: dict, allowed: set, what: str) -> None:
    for key in cfg:
        if key not in allowed:
            raise SchemaError(f"{what}: unknown config key {key!r}")


def _dataset_csv(path) -> str:
    p = str(path)
    if os.path.isdir(p):
        return os.path.join(p, "dataset.csv")
    return p


def _grid(raw) -> list:
    if isinstance(raw, str):
        toks = [t.strip() for t in raw.split(",")]
        return [float(t) for t in toks if t]
    return [float(v) for v in raw]


def _echo_config(name: str, cfg: dict) -> None:
    click.echo(f"{name} config {json.dumps(cfg, sort_keys=True)}")


def _echo_metrics(report) -> None:
    click.echo("metrics " + json.dumps(
        {k: float(v) for k, v in vars(report).items()}, sort_keys=True))


@click.group()
def main():
    """Information-regularized counterfactual estimation toolkit."""


# ------------------------------------------------------------------- gen

@main.group()
def gen():
    """Generate seeded synthetic datasets with ground-truth effects."""


@gen.command("static")
@click.option("--n", default=2000, show_default=True)
@click.option("--dx", default=6, show_default=True)
@click.option("--dt", default=2, show_default=True)
@click.option("--confounding", default=1.0, show_default=True)
@click.option("--sigma-y", default=0.5, show_default=True)
@click.option("--sparse-beta-frac", default=None, type=float)
@click.option("--seed", default=None, type=int, help="default 0 or INFREG_SEED")
@click.option("--out", required=True, type=click.Path())
@_guard
def gen_static(n, dx, dt, confounding, sigma_y, sparse_beta_frac, seed, out):
    """Cross-sectional dataset: covariates, binary treatments, outcome."""
    seed = _seed_of(seed, {})
    spec = synthgen.StaticDGPSpec(
        n=n, d_x=dx, d_t=dt, confounding=confounding, sigma_y=sigma_y,
        seed=seed, sparse_beta_frac=sparse_beta_frac,
    )
    path = runs.write_dataset_dir(out, synthgen.gen_static(spec))
    _echo_config("gen-static", {
        "n": n, "d_x": dx, "d_t": dt, "confounding": confounding,
        "sigma_y": sigma_y, "sparse_beta_frac": sparse_beta_frac,
        "seed": seed,
    })
    click.echo(f"wrote {path}")


@gen.command("dynamic")
@click.option("--n", default=1000, show_default=True)
@click.option("--steps", default=10, show_default=True)
@click.option("--dx", default=8, show_default=True)
@click.option("--dv", default=3, show_default=True)
@click.option("--da", default=2, show_default=True)
@click.option("--confounding", default=1.0, show_default=True)
@click.option("--sigma-x", default=0.1, show_default=True)
@click.option("--sigma-y", default=0.5, show_default=True)
@click.option("--seed", default=None, type=int, help="default 0 or INFREG_SEED")
@click.option("--out", required=True, type=click.Path())
@_guard
def gen_dynamic(n, steps, dx, dv, da, confounding, sigma_x, sigma_y, seed,
                out):
    """Trajectory dataset with per-step actions and one-step effects."""
    seed = _seed_of(seed, {})
    spec = synthgen.DynamicDGPSpec(
        n=n, t_steps=steps, d_x=dx, d_v=dv, d_a=da, confounding=confounding,
        sigma_x=sigma_x, sigma_y=sigma_y, seed=seed,
    )
    path = runs.write_dataset_dir(out, synthgen.gen_dynamic(spec))
    _echo_config("gen-dynamic", {
        "n": n, "t_steps": steps, "d_x": dx, "d_v": dv, "d_a": da,
        "confounding": confounding, "sigma_x": sigma_x, "sigma_y": sigma_y,
        "seed": seed,
    })
    click.echo(f"wrote {path}")


@gen.command("nhanes-like")
@click.option("--n", default=2000, show_default=True)
@click.option("--confounding", default=1.0, show_default=True)
@click.option("--sigma-y", default=0.5, show_default=True)
@click.option("--seed", default=None, type=int, help="default 0 or INFREG_SEED")
@click.option("--out", required=True, type=click.Path())
@_guard
def gen_nhanes(n, confounding, sigma_y, seed, out):
    """Survey-shaped surrogate: 14 covariates, 82 sparse binary treatments."""
    seed = _seed_of(seed, {})
    ds = synthgen.gen_nhanes_surrogate(
        seed, n=n, confounding=confounding, sigma_y=sigma_y)
    path = runs.write_dataset_dir(out, ds)
    _echo_config("gen-nhanes-like", {
        "n": n, "confounding": confounding, "sigma_y": sigma_y, "seed": seed,
    })
    click.echo(f"wrote {path}")


# ------------------------------------------------------------------ train

_TRAIN_KEYS = {"lambda", "dz", "hidden", "epochs", "batch_size", "lr",
               "eval_samples", "seed"}


@main.group()
def train():
    """Train an estimator on a generated dataset and write run artifacts."""


@train.command("sice")
@click.argument("dataset", type=click.Path())
@click.option("--lambda", "lam", default=None, type=float,
              help="information-regularization weight [default: 0.0001]")
@click.option("--dz", default=None, type=int)
@click.option("--hidden", default=None, type=int)
@click.option("--epochs", default=None, type=int)
@click.option("--batch-size", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--samples", default=None, type=int,
              help="Monte Carlo draws per prediction")
@click.option("--seed", default=None, type=int)
@click.option("--config", default=None, type=click.Path(),
              help="JSON file; flags override its values")
@click.option("--out", required=True, type=click.Path())
@_guard
def train_sice(dataset, lam, dz, hidden, epochs, batch_size, lr, samples,
               seed, config, out):
    """Static estimator: train on 80% of rows, evaluate on the rest."""
    cfg_file = _load_config(config)
    _check_keys(cfg_file, _TRAIN_KEYS, "train sice")
    model_cfg = sice_mod.SiceConfig(
        dz=int(_pick(dz, cfg_file.get("dz"), default=16)),
        hidden=int(_pick(hidden, cfg_file.get("hidden"), default=128)),
        lam=float(_pick(lam, cfg_file.get("lambda"), default=1e-4)),
        epochs=int(_pick(epochs, cfg_file.get("epochs"), default=50)),
        batch_size=int(_pick(batch_size, cfg_file.get("batch_size"),
                             default=128)),
        lr=float(_pick(lr, cfg_file.get("lr"), default=5e-4)),
        eval_samples=int(_pick(samples, cfg_file.get("eval_samples"),
                               default=100)),
        seed=_seed_of(seed, cfg_file),
    )
    ds = runs.read_static_csv(_dataset_csv(dataset))
    result = runs.train_eval_static(ds, model_cfg)
    _echo_config("train-sice", result.record.config)
    runs.write_run_dir(out, result)
    _echo_metrics(result.record.report)
    click.echo(f"wrote run {result.record.run_id} to {out}")


@train.command("dice")
@click.argument("dataset", type=click.Path())
@click.option("--lambda", "lam", default=None, type=float,
              help="information-regularization weight [default: 1e-05]")
@click.option("--gru-hidden", default=None, type=int)
@click.option("--dz", default=None, type=int)
@click.option("--hidden", default=None, type=int)
@click.option("--epochs", default=None, type=int)
@click.option("--batch-size", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--samples", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--config", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@_guard
def train_dice(dataset, lam, gru_hidden, dz, hidden, epochs, batch_size, lr,
               samples, seed, config, out):
    """Sequential estimator over trajectories; state from a GRU scan."""
    cfg_file = _load_config(config)
    _check_keys(cfg_file, _TRAIN_KEYS | {"gru_hidden"}, "train dice")
    model_cfg = dice_mod.DiceConfig(
        gru_hidden=int(_pick(gru_hidden, cfg_file.get("gru_hidden"),
                             default=128)),
        dz=int(_pick(dz, cfg_file.get("dz"), default=32)),
        hidden=int(_pick(hidden, cfg_file.get("hidden"), default=128)),
        lam=float(_pick(lam, cfg_file.get("lambda"), default=1e-5)),
        epochs=int(_pick(epochs, cfg_file.get("epochs"), default=50)),
        batch_size=int(_pick(batch_size, cfg_file.get("batch_size"),
                             default=128)),
        lr=float(_pick(lr, cfg_file.get("lr"), default=5e-4)),
        eval_samples=int(_pick(samples, cfg_file.get("eval_samples"),
                               default=100)),
        seed=_seed_of(seed, cfg_file),
    )
    ds = runs.read_dynamic_csv(_dataset_csv(dataset))
    result = runs.train_eval_dynamic(ds, model_cfg)
    _echo_config("train-dice", result.record.config)
    runs.write_run_dir(out, result)
    _echo_metrics(result.record.report)
    click.echo(f"wrote run {result.record.run_id} to {out}")


# ------------------------------------------------------------------ sweep

_SWEEP_KEYS = {"lambdas", "dts", "repeats", "n", "d_x", "confounding",
               "sigma_y", "epochs", "dz", "hidden", "batch_size", "lr",
               "eval_samples", "seed", "jobs"}


@main.command("sweep")
@click.option("--lambdas", default=None,
              help="comma list [default: 1e-5,1e-4,1e-3,1e-2,0.1,1,10]")
@click.option("--dts", default=None,
              help="comma list of treatment dims [default: 2,5,10,12,14,16,18]")
@click.option("--repeats", default=None, type=int)
@click.option("--seed", default=None, type=int, help="base seed")
@click.option("--n", default=None, type=int)
@click.option("--dx", default=None, type=int)
@click.option("--confounding", default=None, type=float)
@click.option("--sigma-y", default=None, type=float)
@click.option("--epochs", default=None, type=int)
@click.option("--dz", default=None, type=int)
@click.option("--hidden", default=None, type=int)
@click.option("--batch-size", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--samples", default=None, type=int)
@click.option("--jobs", default=None, type=int,
              help="worker processes [default: 1]")
@click.option("--config", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@_guard
def cmd_sweep(lambdas, dts, repeats, seed, n, dx, confounding, sigma_y,
              epochs, dz, hidden, batch_size, lr, samples, jobs, config,
              out):
    """Static-estimator grid over lambda and treatment dimension.

    One run per (lambda, d_t, repeat); the dataset and model seed of a
    cell depend only on (base seed, d_t, repeat) so lambda comparisons
    share data. Failures are recorded in failures.csv and the sweep
    continues.
    """
    cfg_file = _load_config(config)
    _check_keys(cfg_file, _SWEEP_KEYS, "sweep")
    spec = runs.SweepSpec(
        lambdas=tuple(_grid(_pick(lambdas, cfg_file.get("lambdas"),
                                  default=runs.DEFAULT_LAMBDA_GRID))),
        dts=tuple(int(v) for v in _grid(
            _pick(dts, cfg_file.get("dts"), default=runs.DEFAULT_DT_GRID))),
        repeats=int(_pick(repeats, cfg_file.get("repeats"), default=1)),
        base_seed=_seed_of(seed, cfg_file),
        n=int(_pick(n, cfg_file.get("n"), default=2000)),
        d_x=int(_pick(dx, cfg_file.get("d_x"), default=6)),
        confounding=float(_pick(confounding, cfg_file.get("confounding"),
                                default=1.0)),
        sigma_y=float(_pick(sigma_y, cfg_file.get("sigma_y"), default=0.5)),
        epochs=int(_pick(epochs, cfg_file.get("epochs"), default=50)),
        dz=int(_pick(dz, cfg_file.get("dz"), default=16)),
        hidden=int(_pick(hidden, cfg_file.get("hidden"), default=128)),
        batch_size=int(_pick(batch_size, cfg_file.get("batch_size"),
                             default=128)),
        lr=float(_pick(lr, cfg_file.get("lr"), default=5e-4)),
        eval_samples=int(_pick(samples, cfg_file.get("eval_samples"),
                               default=100)),
    )
    n_jobs = int(_pick(jobs, cfg_file.get("jobs"), default=1))
    _echo_config("sweep", {"spec": vars(spec), "jobs": n_jobs})

    def progress(task, outcome):
        _, lam_v, dt_v, rep = task
        tag = "ok" if outcome["ok"] else f"FAILED {outcome['error']}"
        click.echo(f"cell lambda={lam_v!r} dt={dt_v} rep={rep}: {tag}")

    t0 = time.perf_counter()
    rows, failures = runs.run_sweep(spec, jobs=n_jobs, progress=progress)
    runs.write_sweep_outputs(out, spec, rows, failures,
                             time.perf_counter() - t0)
    click.echo(f"completed {len(rows)} runs, {len(failures)} failures; "
               f"wrote {out}")
    if failures:
        click.echo("failures recorded in failures.csv", err=True)


# ----------------------------------------------------------------- bounds

BOUNDS_HEADER = ["checker", "trials", "violations", "worst_slack",
                 "vacuous_links"]


@main.command("bounds")
@click.option("--trials", default=1000, show_default=True)
@click.option("--seed", default=None, type=int, help="default 0 or INFREG_SEED")
@click.option("--out", default=".", show_default=True, type=click.Path())
@_guard
def cmd_bounds(trials, seed, out):
    """Verify the information-theoretic inequalities on random joints.

    Writes bounds.csv with per-checker violation counts and worst slack;
    every count must be 0 for the theory to hold on the sampled joints.
    """
    if trials < 0:
        raise UsageError("trials must be nonnegative")
    seed = _seed_of(seed, {})
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "bounds.csv")
    if trials == 0:
        runs._write_csv(path, BOUNDS_HEADER, [])
        click.echo("empty report (0 trials)")
        click.echo(f"wrote {path}")
        return
    reports = bounds_mod.run_bounds_suite(seed=seed, trials=trials)
    rows = []
    for rep in reports:
        rows.append([rep.name, int(rep.details.get("trials", trials)),
                     rep.violations, rep.worst_slack, rep.vacuous_links])
    runs._write_csv(path, BOUNDS_HEADER, rows)
    width = max(len(r.name) for r in reports)
    for rep in reports:
        status = "pass" if rep.violations == 0 else "FAIL"
        click.echo(f"{rep.name.ljust(width)}  {status}  "
                   f"violations={rep.violations}  "
                   f"worst_slack={rep.worst_slack:.3e}  "
                   f"vacuous={rep.vacuous_links}")
    total = sum(r.violations for r in reports)
    click.echo(f"total violations: {total}")
    click.echo(f"wrote {path}")


# ----------------------------------------------------------------- report

@main.command("report")
@click.argument("run_dir", type=click.Path())
@click.option("--out", default=None, type=click.Path(),
              help="output directory [default: run_dir]")
@_guard
def cmd_report(run_dir, out):
    """Render pivot tables (metric by d_t, metric by lambda) from run CSVs."""
    text = runs.write_report(run_dir, out)
    click.echo(text, nl=False)


if __name__ == "__main__":
    main()
