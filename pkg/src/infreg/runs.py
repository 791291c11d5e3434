"""Experiment orchestration: train/eval runs, CSV artifacts, sweeps, reports.

One run is train + eval on a fixed 80/20 split drawn from the "split"
random stream, recorded as an immutable RunRecord. Sweeps execute one run
per (lambda, d_t, repeat) cell; the dataset and model seed for a cell
depend only on (base seed, d_t, repeat), so lambda comparisons within a
cell see identical data and initialization.

Artifact conventions: flat CSV with documented headers is the single
interchange format, floats are written with repr() so files are
byte-stable and round-trip exactly; wall-clock times go only into the
run.json sidecar, never into CSVs.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from types import SimpleNamespace
from typing import Optional

import numpy as np

from . import dice as dice_mod
from . import metrics as metrics_mod
from . import sice as sice_mod
from . import synthgen
from .errors import ConfigurationError, SchemaError, UsageError
from .rng import stream

METRICS_HEADER = [
    "lambda", "dt", "seed", "rmse_y", "mae_y", "ate_error", "pehe",
    "auuc", "hsic_zt", "mi_probe", "kl_bottleneck",
]
HISTORY_HEADER = ["run_id", "epoch", "supervised", "recon", "kl", "total"]
TRAIN_FRAC = 0.8

DEFAULT_LAMBDA_GRID = (1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0)
DEFAULT_DT_GRID = (2, 5, 10, 12, 14, 16, 18)


def _fmt(v) -> str:
    """Render one CSV cell: ints as-is, floats via repr (exact round-trip)."""
    if isinstance(v, (bool, np.bool_)):
        raise ConfigurationError("boolean cells are not part of any schema")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def _parse_cell(name: str, row_idx: int, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise SchemaError(
            f"column {name!r}, data row {row_idx}: not numeric: {raw!r}"
        ) from None


def _check_header(actual: list, expected: list, what: str) -> None:
    if actual == expected:
        return
    for i, want in enumerate(expected):
        got = actual[i] if i < len(actual) else "<missing>"
        if got != want:
            raise SchemaError(
                f"{what}: column {i} should be {want!r}, found {got!r}"
            )
    raise SchemaError(
        f"{what}: unexpected extra column {actual[len(expected)]!r}"
    )


# ----------------------------------------------------------------- datasets

def static_header(d_x: int, d_t: int) -> list:
    return (
        ["id"]
        + [f"x_{j}" for j in range(d_x)]
        + [f"t_{j}" for j in range(d_t)]
        + ["y"]
        + [f"talt_{j}" for j in range(d_t)]
        + ["ite_true"]
    )


def dynamic_header(d_v: int, d_x: int, d_a: int) -> list:
    return (
        ["traj", "step"]
        + [f"v_{j}" for j in range(d_v)]
        + [f"x_{j}" for j in range(d_x)]
        + [f"a_{j}" for j in range(d_a)]
        + ["y", "ite_true_step"]
        + [f"aalt_{j}" for j in range(d_a)]
    )


def write_static_csv(path, ds: synthgen.StaticDataset) -> None:
    n, d_x = ds.x.shape
    d_t = ds.t.shape[1]
    rows = []
    for i in range(n):
        rows.append(
            [i]
            + list(ds.x[i])
            + list(ds.t[i])
            + [ds.y[i]]
            + list(ds.t_alt[i])
            + [ds.ite_true[i]]
        )
    _write_csv(path, static_header(d_x, d_t), rows)


def write_dynamic_csv(path, ds: synthgen.TrajectoryDataset) -> None:
    n, steps = ds.x.shape[0], ds.x.shape[1]
    d_v, d_x, d_a = ds.v.shape[1], ds.x.shape[2], ds.a.shape[2]
    rows = []
    for i in range(n):
        for k in range(steps):
            rows.append(
                [i, k]
                + list(ds.v[i])
                + list(ds.x[i, k])
                + list(ds.a[i, k])
                + [ds.y[i, k], ds.ite_true_step[i, k]]
                + list(ds.a_alt[i, k])
            )
    _write_csv(path, dynamic_header(d_v, d_x, d_a), rows)


def _spec_sidecar(spec) -> dict:
    """Frozen DGP parameters as a JSON-ready dict (repr-exact floats)."""
    if isinstance(spec, synthgen.StaticDGPSpec):
        out = {"kind": "static"}
        scalars = ["n", "d_x", "d_t", "confounding", "sigma_y", "seed",
                   "sparse_beta_frac"]
        arrays = ["w_assign", "w_lin", "w_nl", "beta", "gamma"]
    elif isinstance(spec, synthgen.DynamicDGPSpec):
        out = {"kind": "dynamic"}
        scalars = ["n", "t_steps", "d_x", "d_v", "d_a", "confounding",
                   "sigma_x", "sigma_y", "seed"]
        arrays = ["a_mat", "b_mat", "c_mat", "u_mat", "u_vec", "w_out",
                  "beta", "gamma"]
    else:
        raise ConfigurationError(f"unknown spec type: {type(spec).__name__}")
    for name in scalars:
        out[name] = getattr(spec, name)
    for name in arrays:
        out[name] = np.asarray(getattr(spec, name)).tolist()
    return out


def write_dataset_dir(out_dir, ds) -> Path:
    """Write dataset.csv plus the dgp.json sidecar into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "dataset.csv"
    if isinstance(ds, synthgen.StaticDataset):
        write_static_csv(csv_path, ds)
    else:
        write_dynamic_csv(csv_path, ds)
    with open(out_dir / "dgp.json", "w") as fh:
        json.dump(_spec_sidecar(ds.spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path


def _rebuild_spec(sidecar: dict):
    kind = sidecar.get("kind")
    if kind == "static":
        spec = synthgen.StaticDGPSpec(
            n=int(sidecar["n"]),
            d_x=int(sidecar["d_x"]),
            d_t=int(sidecar["d_t"]),
            confounding=float(sidecar["confounding"]),
            sigma_y=float(sidecar["sigma_y"]),
            seed=int(sidecar["seed"]),
            sparse_beta_frac=(
                None if sidecar.get("sparse_beta_frac") is None
                else float(sidecar["sparse_beta_frac"])
            ),
        )
        arrays = ["w_assign", "w_lin", "w_nl", "beta", "gamma"]
    elif kind == "dynamic":
        spec = synthgen.DynamicDGPSpec(
            n=int(sidecar["n"]),
            t_steps=int(sidecar["t_steps"]),
            d_x=int(sidecar["d_x"]),
            d_v=int(sidecar["d_v"]),
            d_a=int(sidecar["d_a"]),
            confounding=float(sidecar["confounding"]),
            sigma_x=float(sidecar["sigma_x"]),
            sigma_y=float(sidecar["sigma_y"]),
            seed=int(sidecar["seed"]),
        )
        arrays = ["a_mat", "b_mat", "c_mat", "u_mat", "u_vec", "w_out",
                  "beta", "gamma"]
    else:
        raise SchemaError(f"dgp.json: unknown kind {kind!r}")
    for name in arrays:
        stored = np.asarray(sidecar[name], dtype=np.float64)
        redrawn = np.asarray(getattr(spec, name))
        if stored.shape != redrawn.shape or not np.array_equal(stored, redrawn):
            raise SchemaError(
                f"dgp.json: stored {name!r} does not match the seeded redraw"
            )
    return spec


def _load_sidecar(csv_path) -> Optional[dict]:
    side = Path(csv_path).parent / "dgp.json"
    if not side.exists():
        return None
    with open(side) as fh:
        try:
            return json.load(fh)
        except ValueError as e:
            raise SchemaError(f"dgp.json: not valid JSON ({e})") from None


def _read_rows(csv_path) -> tuple:
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("dataset CSV is empty") from None
        return header, list(reader)


def _prefix_count(header, prefix) -> int:
    return sum(1 for name in header if name.startswith(prefix))


def read_static_csv(csv_path) -> synthgen.StaticDataset:
    """Load a static dataset, validating the header column by column.

    The effect oracle callable does not survive serialization; when the
    dgp.json sidecar is present the spec is rebuilt from its seed (and
    cross-checked against the stored parameters) so mu is recovered
    exactly, otherwise mu and spec are None. The stored ite_true column
    carries the ground truth either way.
    """
    header, raw = _read_rows(csv_path)
    d_x = _prefix_count(header, "x_")
    d_t = _prefix_count(header, "talt_")
    _check_header(header, static_header(d_x, d_t), "static dataset")

    n = len(raw)
    if n == 0:
        raise SchemaError("static dataset has a header but no rows")
    table = np.empty((n, len(header)))
    for i, row in enumerate(raw):
        if len(row) != len(header):
            raise SchemaError(
                f"data row {i}: expected {len(header)} cells, found {len(row)}"
            )
        for j, raw_cell in enumerate(row):
            table[i, j] = _parse_cell(header[j], i, raw_cell)

    x = table[:, 1 : 1 + d_x]
    t = table[:, 1 + d_x : 1 + d_x + d_t]
    y = table[:, 1 + d_x + d_t]
    t_alt = table[:, 2 + d_x + d_t : 2 + d_x + 2 * d_t]
    ite_true = table[:, -1]
    for name, arr in (("t", t), ("talt", t_alt)):
        if not np.isin(arr, (0.0, 1.0)).all():
            bad = np.argwhere(~np.isin(arr, (0.0, 1.0)))[0]
            raise SchemaError(
                f"column '{name}_{bad[1]}': treatment cells must be 0 or 1"
            )

    sidecar = _load_sidecar(csv_path)
    mu = spec = None
    if sidecar is not None:
        spec = _rebuild_spec(sidecar)
        if not isinstance(spec, synthgen.StaticDGPSpec):
            raise SchemaError("dgp.json: sidecar kind does not match the CSV")
        if spec.d_x != d_x or spec.d_t != d_t:
            raise SchemaError(
                "dgp.json: sidecar dimensions do not match the CSV header"
            )
        mu = synthgen._static_mu(spec)
    return synthgen.StaticDataset(x, t, y, t_alt, ite_true, mu, spec)


def read_dynamic_csv(csv_path) -> synthgen.TrajectoryDataset:
    """Load a trajectory dataset written by write_dynamic_csv."""
    header, raw = _read_rows(csv_path)
    d_v = _prefix_count(header, "v_")
    d_x = _prefix_count(header, "x_")
    d_a = _prefix_count(header, "aalt_")
    _check_header(header, dynamic_header(d_v, d_x, d_a), "dynamic dataset")

    rows = len(raw)
    if rows == 0:
        raise SchemaError("dynamic dataset has a header but no rows")
    table = np.empty((rows, len(header)))
    for i, row in enumerate(raw):
        if len(row) != len(header):
            raise SchemaError(
                f"data row {i}: expected {len(header)} cells, found {len(row)}"
            )
        for j, raw_cell in enumerate(row):
            table[i, j] = _parse_cell(header[j], i, raw_cell)

    steps = int(table[:, 1].max()) + 1
    n = rows // steps
    if n * steps != rows:
        raise SchemaError(
            f"column 'step': {rows} rows do not tile {steps} steps evenly"
        )
    expect_traj = np.repeat(np.arange(n), steps)
    expect_step = np.tile(np.arange(steps), n)
    if not np.array_equal(table[:, 0], expect_traj):
        raise SchemaError("column 'traj': rows are not trajectory-major")
    if not np.array_equal(table[:, 1], expect_step):
        raise SchemaError("column 'step': steps are not contiguous from 0")

    col = 2
    v_rows = table[:, col : col + d_v]
    col += d_v
    x = table[:, col : col + d_x].reshape(n, steps, d_x)
    col += d_x
    a = table[:, col : col + d_a].reshape(n, steps, d_a)
    col += d_a
    y = table[:, col].reshape(n, steps)
    ite = table[:, col + 1].reshape(n, steps)
    a_alt = table[:, col + 2 :].reshape(n, steps, d_a)

    v3 = v_rows.reshape(n, steps, d_v)
    if not np.array_equal(v3, np.repeat(v3[:, :1], steps, axis=1)):
        raise SchemaError("column 'v_0': static covariates vary within a "
                          "trajectory")
    v = v3[:, 0]

    for name, arr in (("a", a), ("aalt", a_alt)):
        if not np.isin(arr, (0.0, 1.0)).all():
            raise SchemaError(f"column '{name}_*': actions must be 0 or 1")

    sidecar = _load_sidecar(csv_path)
    spec = None
    if sidecar is not None:
        spec = _rebuild_spec(sidecar)
        if not isinstance(spec, synthgen.DynamicDGPSpec):
            raise SchemaError("dgp.json: sidecar kind does not match the CSV")
        if (spec.d_v, spec.d_x, spec.d_a) != (d_v, d_x, d_a):
            raise SchemaError(
                "dgp.json: sidecar dimensions do not match the CSV header"
            )
    return synthgen.TrajectoryDataset(v, x, a, y, a_alt, ite, spec)


# --------------------------------------------------------------- run records

@dataclass
class RunRecord:
    """One experiment: effective config, loss history, final metrics."""

    run_id: str
    kind: str
    config: dict
    history: list
    report: metrics_mod.MetricReport
    wall_seconds: float

    def metrics_row(self) -> list:
        lam = self.config["model"]["lam"]
        dt = self.config["data"]["d_t"]
        seed = self.config["model"]["seed"]
        r = self.report
        return [lam, dt, seed, r.rmse_y, r.mae_y, r.ate_error, r.pehe,
                r.auuc, r.hsic_zt, r.mi_probe, r.kl_bottleneck]


def split_indices(n: int, seed: int, train_frac: float = TRAIN_FRAC):
    """Deterministic train/eval split from the dedicated split stream."""
    if not 0.0 < train_frac < 1.0:
        raise ConfigurationError("train_frac must be strictly inside (0, 1)")
    perm = stream(seed, "split").permutation(n)
    cut = int(round(train_frac * n))
    if cut == 0 or cut == n:
        raise ConfigurationError(
            f"split of {n} rows leaves an empty side at frac {train_frac}"
        )
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def _data_snapshot(ds, fallback_seed: int) -> dict:
    if isinstance(ds, synthgen.StaticDataset):
        out = {"kind": "static", "n": int(ds.x.shape[0]),
               "d_x": int(ds.x.shape[1]), "d_t": int(ds.t.shape[1])}
        if ds.spec is not None:
            out.update(confounding=ds.spec.confounding,
                       sigma_y=ds.spec.sigma_y, seed=ds.spec.seed,
                       sparse_beta_frac=ds.spec.sparse_beta_frac)
        else:
            out["seed"] = fallback_seed
        return out
    out = {"kind": "dynamic", "n": int(ds.x.shape[0]),
           "t_steps": int(ds.x.shape[1]), "d_v": int(ds.v.shape[1]),
           "d_x": int(ds.x.shape[2]), "d_t": int(ds.a.shape[2])}
    if ds.spec is not None:
        out.update(confounding=ds.spec.confounding, sigma_x=ds.spec.sigma_x,
                   sigma_y=ds.spec.sigma_y, seed=ds.spec.seed)
    else:
        out["seed"] = fallback_seed
    return out


@dataclass
class StaticRunResult:
    record: RunRecord
    model: sice_mod.SiceModel
    dataset: synthgen.StaticDataset
    train_idx: np.ndarray
    eval_idx: np.ndarray


@dataclass
class DynamicRunResult:
    record: RunRecord
    model: dice_mod.DiceModel
    dataset: synthgen.TrajectoryDataset
    train_idx: np.ndarray
    eval_idx: np.ndarray


def evaluate_static(model, ds, eval_idx) -> metrics_mod.MetricReport:
    """Metrics on held-out rows: factual fit, effect recovery, diagnostics."""
    x_e, t_e = ds.x[eval_idx], ds.t[eval_idx]
    yhat = sice_mod.predict_outcome(model, x_e, t_e)
    ite_hat = sice_mod.predict_ite(model, x_e, t_e, ds.t_alt[eval_idx])
    z, _, _, kl_rows = sice_mod.encode_eval(model, x_e)
    return metrics_mod.build_report(
        yhat, ds.y[eval_idx], ite_hat, ds.ite_true[eval_idx], z, t_e,
        kl_value=float(kl_rows.mean()), probe_seed=model.config.seed,
    )


def evaluate_dynamic(model, ds, eval_idx) -> metrics_mod.MetricReport:
    """Per-step metrics on held-out trajectories, flattened over steps."""
    sub = replace(
        ds, v=ds.v[eval_idx], x=ds.x[eval_idx], a=ds.a[eval_idx],
        y=ds.y[eval_idx], a_alt=ds.a_alt[eval_idx],
        ite_true_step=ds.ite_true_step[eval_idx],
    )
    d_a = sub.a.shape[2]
    yhat = dice_mod.predict_traj_outcome(model, sub.v, sub.x, sub.a)
    ite_hat = dice_mod.predict_traj_ite(model, sub)
    z, _, kl_rows = dice_mod.encode_traj_eval(model, sub.v, sub.x, sub.a)
    return metrics_mod.build_report(
        yhat.reshape(-1), sub.y.reshape(-1), ite_hat.reshape(-1),
        sub.ite_true_step.reshape(-1), z, sub.a.reshape(-1, d_a),
        kl_value=float(kl_rows.mean()), probe_seed=model.config.seed,
    )


def train_eval_static(ds, config: sice_mod.SiceConfig,
                      run_id: Optional[str] = None) -> StaticRunResult:
    t0 = time.perf_counter()
    idx_tr, idx_ev = split_indices(ds.x.shape[0], config.seed)
    train_view = SimpleNamespace(x=ds.x[idx_tr], t=ds.t[idx_tr],
                                 y=ds.y[idx_tr])
    model = sice_mod.train_sice(train_view, config)
    report = evaluate_static(model, ds, idx_ev)
    wall = time.perf_counter() - t0
    if run_id is None:
        run_id = f"sice-dt{ds.t.shape[1]}-lam{config.lam!r}-s{config.seed}"
    record = RunRecord(
        run_id=run_id,
        kind="sice",
        config={"model": asdict(config),
                "data": _data_snapshot(ds, config.seed),
                "split": {"train_frac": TRAIN_FRAC, "stream": "split"}},
        history=list(model.history),
        report=report,
        wall_seconds=wall,
    )
    return StaticRunResult(record, model, ds, idx_tr, idx_ev)


def train_eval_dynamic(ds, config: dice_mod.DiceConfig,
                       run_id: Optional[str] = None) -> DynamicRunResult:
    t0 = time.perf_counter()
    idx_tr, idx_ev = split_indices(ds.x.shape[0], config.seed)
    train_view = SimpleNamespace(v=ds.v[idx_tr], x=ds.x[idx_tr],
                                 a=ds.a[idx_tr], y=ds.y[idx_tr])
    model = dice_mod.train_dice(train_view, config)
    report = evaluate_dynamic(model, ds, idx_ev)
    wall = time.perf_counter() - t0
    if run_id is None:
        run_id = f"dice-da{ds.a.shape[2]}-lam{config.lam!r}-s{config.seed}"
    record = RunRecord(
        run_id=run_id,
        kind="dice",
        config={"model": asdict(config),
                "data": _data_snapshot(ds, config.seed),
                "split": {"train_frac": TRAIN_FRAC, "stream": "split"}},
        history=list(model.history),
        report=report,
        wall_seconds=wall,
    )
    return DynamicRunResult(record, model, ds, idx_tr, idx_ev)


# ----------------------------------------------------------- run artifacts

def write_metrics_csv(path, rows) -> None:
    _write_csv(path, METRICS_HEADER, rows)


def write_history_csv(path, run_id: str, history) -> None:
    rows = [
        [run_id, epoch + 1, h["supervised"], h["recon"], h["kl"], h["total"]]
        for epoch, h in enumerate(history)
    ]
    _write_csv(path, HISTORY_HEADER, rows)


def write_model_dump(path, store) -> None:
    """Named-tensor flat text: one line per parameter, repr floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for name, tensor in store.items():
            shape = "x".join(str(d) for d in tensor.data.shape)
            vals = " ".join(repr(float(v)) for v in tensor.data.ravel())
            fh.write(f"{name} {shape} {vals}\n")


def write_run_dir(out_dir, result) -> Path:
    """Write metrics.csv, history.csv, model.txt, and run.json for a run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rec = result.record
    write_metrics_csv(out_dir / "metrics.csv", [rec.metrics_row()])
    write_history_csv(out_dir / "history.csv", rec.run_id, rec.history)
    write_model_dump(out_dir / "model.txt", result.model.store)
    payload = {
        "run_id": rec.run_id,
        "kind": rec.kind,
        "config": rec.config,
        "epochs_recorded": len(rec.history),
        "metrics": asdict(rec.report),
        "wall_seconds": rec.wall_seconds,
    }
    with open(out_dir / "run.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


# ----------------------------------------------------------------- sweeps

@dataclass
class SweepSpec:
    """Grid definition plus the dataset and model settings shared by cells."""

    lambdas: tuple = DEFAULT_LAMBDA_GRID
    dts: tuple = DEFAULT_DT_GRID
    repeats: int = 1
    base_seed: int = 0
    n: int = 2000
    d_x: int = 6
    confounding: float = 1.0
    sigma_y: float = 0.5
    epochs: int = 50
    dz: int = 16
    hidden: int = 128
    batch_size: int = 128
    lr: float = 5e-4
    eval_samples: int = 100

    def __post_init__(self):
        self.lambdas = tuple(float(v) for v in self.lambdas)
        self.dts = tuple(int(v) for v in self.dts)
        if not self.lambdas or not self.dts:
            raise ConfigurationError("sweep grids must be non-empty")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be at least 1")


def cell_seed(base_seed: int, dt: int, rep: int) -> int:
    """Seed shared by every lambda at one (d_t, repeat) cell."""
    return base_seed + 7919 * dt + rep


def run_sweep_cell(spec: SweepSpec, lam: float, dt: int, rep: int):
    seed = cell_seed(spec.base_seed, dt, rep)
    data_spec = synthgen.StaticDGPSpec(
        n=spec.n, d_x=spec.d_x, d_t=dt, confounding=spec.confounding,
        sigma_y=spec.sigma_y, seed=seed,
    )
    config = sice_mod.SiceConfig(
        dz=spec.dz, hidden=spec.hidden, lam=lam, epochs=spec.epochs,
        batch_size=spec.batch_size, lr=spec.lr,
        eval_samples=spec.eval_samples, seed=seed,
    )
    return train_eval_static(synthgen.gen_static(data_spec), config)


def _sweep_worker(args):
    spec, lam, dt, rep = args
    seed = cell_seed(spec.base_seed, dt, rep)
    try:
        result = run_sweep_cell(spec, lam, dt, rep)
    except Exception as e:  # recorded, sweep continues
        return {"ok": False, "lambda": lam, "dt": dt, "seed": seed,
                "error": f"{type(e).__name__}: {e}"}
    return {"ok": True, "row": result.record.metrics_row()}


def run_sweep(spec: SweepSpec, jobs: int = 1, progress=None):
    """Execute the grid; returns (metric rows, failure records).

    Rows are sorted by (lambda, dt, seed) regardless of execution order,
    so output files do not depend on the worker count. A cell that raises
    is recorded as a failure and the sweep continues.
    """
    if jobs < 1:
        raise ConfigurationError("jobs must be at least 1")
    tasks = [
        (spec, lam, dt, rep)
        for lam in spec.lambdas
        for dt in spec.dts
        for rep in range(spec.repeats)
    ]
    if jobs == 1:
        outcomes = []
        for task in tasks:
            outcomes.append(_sweep_worker(task))
            if progress is not None:
                progress(task, outcomes[-1])
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = []
            for task, out in zip(tasks, pool.map(_sweep_worker, tasks)):
                outcomes.append(out)
                if progress is not None:
                    progress(task, out)
    rows = [o["row"] for o in outcomes if o["ok"]]
    failures = [o for o in outcomes if not o["ok"]]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    failures.sort(key=lambda f: (f["lambda"], f["dt"], f["seed"]))
    return rows, failures


def cell_means(rows) -> list:
    """Mean of every metric per (lambda, dt) cell, count in 'repeats'."""
    groups: dict = {}
    for row in rows:
        groups.setdefault((row[0], row[1]), []).append(row[3:])
    out = []
    for (lam, dt) in sorted(groups):
        block = np.asarray(groups[(lam, dt)], dtype=np.float64)
        out.append([lam, dt, block.shape[0]] + list(block.mean(axis=0)))
    return out


def write_sweep_outputs(out_dir, spec: SweepSpec, rows, failures,
                        wall_seconds: float) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / "sweep_runs.csv", rows)
    _write_csv(
        out_dir / "sweep_cells.csv",
        ["lambda", "dt", "repeats"] + METRICS_HEADER[3:],
        cell_means(rows),
    )
    _write_csv(
        out_dir / "failures.csv",
        ["lambda", "dt", "seed", "error"],
        [[f["lambda"], f["dt"], f["seed"], f["error"]] for f in failures],
    )
    payload = {
        "spec": asdict(spec),
        "runs_completed": len(rows),
        "runs_failed": len(failures),
        "wall_seconds": wall_seconds,
    }
    with open(out_dir / "sweep.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ----------------------------------------------------------------- reports

MINIMIZED = ("rmse_y", "mae_y", "ate_error", "pehe", "hsic_zt", "mi_probe",
             "kl_bottleneck")
MAXIMIZED = ("auuc",)


def load_metric_rows(run_dir) -> list:
    """Collect every metrics-schema CSV row under run_dir, as dicts."""
    run_dir = Path(run_dir)
    rows = []
    for path in sorted(run_dir.rglob("*.csv")):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != METRICS_HEADER:
                continue
            for i, raw in enumerate(reader):
                rows.append({
                    name: _parse_cell(name, i, cell)
                    for name, cell in zip(header, raw)
                })
    if not rows:
        raise UsageError(f"no metrics CSV rows found under {run_dir}")
    return rows


def pivot_rows(rows, axis: str):
    """Mean of each metric grouped by one axis column ('dt' or 'lambda').

    Returns (axis values sorted, {metric: [mean per axis value]}).
    """
    values = sorted({row[axis] for row in rows})
    table = {}
    for metric in METRICS_HEADER[3:]:
        table[metric] = [
            float(np.mean([r[metric] for r in rows if r[axis] == v]))
            for v in values
        ]
    return values, table


def rank_markers(metric: str, means) -> dict:
    """Column index -> marker ('*' best, '^' second best) for one metric."""
    sign = -1.0 if metric in MAXIMIZED else 1.0
    order = np.argsort([sign * m for m in means], kind="stable")
    marks = {int(order[0]): "*"}
    if len(order) > 1:
        marks[int(order[1])] = "^"
    return marks


def _axis_label(axis: str, value) -> str:
    if axis == "dt":
        return f"dt={int(value)}"
    return f"lambda={value!r}"


def render_pivot_text(rows, axis: str) -> str:
    values, table = pivot_rows(rows, axis)
    headers = ["metric"] + [_axis_label(axis, v) for v in values]
    body = []
    for metric in METRICS_HEADER[3:]:
        marks = rank_markers(metric, table[metric])
        cells = [metric]
        for j, m in enumerate(table[metric]):
            cells.append(f"{m:.6g}{marks.get(j, '')}")
        body.append(cells)
    widths = [max(len(r[j]) for r in [headers] + body)
              for j in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for cells in body:
        lines.append(
            "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        )
    return "\n".join(lines)


def write_pivot_csv(path, rows, axis: str) -> None:
    """CSV pivot: one row per metric, plus best/second marker columns."""
    values, table = pivot_rows(rows, axis)
    header = (["metric"] + [_axis_label(axis, v) for v in values]
              + ["best", "second"])
    out = []
    for metric in METRICS_HEADER[3:]:
        marks = rank_markers(metric, table[metric])
        best = next(j for j, m in marks.items() if m == "*")
        second = [j for j, m in marks.items() if m == "^"]
        out.append(
            [metric] + table[metric]
            + [_axis_label(axis, values[best]),
               _axis_label(axis, values[second[0]]) if second else ""]
        )
    _write_csv(path, header, out)


def write_report(run_dir, out_dir=None) -> str:
    """Render metric-by-dt and metric-by-lambda pivots; returns the text."""
    rows = load_metric_rows(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else Path(run_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sections = []
    for axis in ("dt", "lambda"):
        write_pivot_csv(out_dir / f"report_by_{axis}.csv", rows, axis)
        title = ("mean over runs, by treatment dimension" if axis == "dt"
                 else "mean over runs, by lambda")
        sections.append(
            f"{title} ({len(rows)} run rows; * best, ^ second best)\n"
            + render_pivot_text(rows, axis)
        )
    text = "\n\n".join(sections) + "\n"
    with open(out_dir / "report.txt", "w") as fh:
        fh.write(text)
    return text
