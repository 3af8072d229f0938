"""Experiment runner: declarative configs, run persistence, comparisons, plots.

A run directory is self-describing: the exact config, the per-iteration
record, the best checkpoint, and a status file land together under
``<output_dir>/<name>-<hash8>-r<NNN>``, so any artifact traces back to a
reproduction command.  Re-running the same config with the same seed yields a
new run id with byte-identical record contents.
"""

import dataclasses
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from hartransfer import __version__
from hartransfer.configio import (
    ConfigError,
    content_hash,
    dump_yaml,
    load_yaml,
    reject_unknown_keys,
)
from hartransfer.data import (
    DomainSplit,
    SplitSpec,
    build_split,
    load_split,
    load_subject_runs,
    opportunity_manifest,
    save_split,
)
from hartransfer.metrics import weighted_f1
from hartransfer.model import DannHeadSpec, ModelSpec, ParameterSnapshot
from hartransfer.synthgen import ShiftSpec, default_fixture_spec, synthetic_split
from hartransfer.trainers import (
    RunRecord,
    RunRow,
    TrainConfig,
    finetune,
    train_baseline,
    train_dann,
    train_loss_weighted,
)

DATA_ROOT_ENV = "HARTRANSFER_DATA"

METHODS = ("baseline", "loss_weighted", "dann", "finetune", "kmm", "tradaboost")
SPLIT_KINDS = ("synthetic", "opportunity", "cached")

_MODEL_KEYS = (
    "conv_layers",
    "conv_kernel",
    "conv_maps",
    "lstm_layers",
    "lstm_units",
    "dropout",
)
_METHOD_PARAM_KEYS = {
    "baseline": set(),
    "loss_weighted": {"kappa"},
    "dann": {"schedule", "lambda_init", "gamma", "attach_point", "head_units"},
    "finetune": {"frozen", "tuning_run", "tuning_fraction", "source_run", "learning_rate"},
    "kmm": {"sigma", "weight_bound", "mean_tolerance", "max_samples"},
    "tradaboost": {"rounds", "positive_classes", "max_samples", "target_fraction"},
}
_SPLIT_KEYS = {
    "kind",
    "shift_spec",
    "train_fraction",
    "dataset_root",
    "split_spec",
    "directory",
    "window_length",
    "stride",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a split, a method, its parameters, and loop controls."""

    name: str
    method: str
    split: dict
    train: TrainConfig = field(default_factory=TrainConfig)
    model: dict = field(default_factory=dict)
    method_params: dict = field(default_factory=dict)
    output_dir: str = "runs"
    schema_version: int = 1

    def __post_init__(self):
        problems = []
        if self.schema_version != 1:
            problems.append(f"unsupported schema_version {self.schema_version}")
        if not self.name:
            problems.append("name must be non-empty")
        if self.method not in METHODS:
            problems.append(f"method must be one of {METHODS}, got {self.method!r}")
        kind = self.split.get("kind")
        if kind not in SPLIT_KINDS:
            problems.append(f"split.kind must be one of {SPLIT_KINDS}, got {kind!r}")
        problems += reject_unknown_keys(self.split, _SPLIT_KEYS, "split")
        problems += reject_unknown_keys(self.model, _MODEL_KEYS, "model")
        if self.method in _METHOD_PARAM_KEYS:
            problems += reject_unknown_keys(
                self.method_params, _METHOD_PARAM_KEYS[self.method], f"method_params[{self.method}]"
            )
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "method": self.method,
            "split": self.split,
            "train": self.train.to_dict(),
            "model": self.model,
            "method_params": self.method_params,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        problems = reject_unknown_keys(doc, cls.__dataclass_fields__, "config")
        if problems:
            raise ConfigError(problems)
        train_doc = doc.get("train", {})
        problems = reject_unknown_keys(train_doc, TrainConfig.__dataclass_fields__, "train")
        if problems:
            raise ConfigError(problems)
        return cls(
            name=doc.get("name", ""),
            method=doc.get("method", ""),
            split=dict(doc.get("split", {})),
            train=TrainConfig(**train_doc),
            model=dict(doc.get("model", {})),
            method_params=dict(doc.get("method_params", {})),
            output_dir=doc.get("output_dir", "runs"),
            schema_version=doc.get("schema_version", 1),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(load_yaml(path))

    @property
    def hash(self) -> str:
        return content_hash({"config": self.to_dict(), "version": __version__})


# ---------------------------------------------------------------------------
# Split resolution
# ---------------------------------------------------------------------------

def resolve_split(config: ExperimentConfig) -> DomainSplit:
    """Materialize the configured split; fails before any training starts."""
    split_doc = config.split
    kind = split_doc["kind"]
    if kind == "synthetic":
        shift = (
            ShiftSpec.from_dict(split_doc["shift_spec"])
            if "shift_spec" in split_doc
            else default_fixture_spec()
        )
        return synthetic_split(
            shift,
            train_fraction=split_doc.get("train_fraction", 0.75),
            window_length=split_doc.get("window_length", 24),
            stride=split_doc.get("stride", 12),
        )
    if kind == "opportunity":
        root = split_doc.get("dataset_root") or os.environ.get(DATA_ROOT_ENV)
        if not root:
            raise ConfigError(
                [f"split.dataset_root not set and ${DATA_ROOT_ENV} is empty"]
            )
        manifest = opportunity_manifest()
        if "split_spec" in split_doc:
            spec = SplitSpec(**split_doc["split_spec"])
        else:
            spec = SplitSpec.paper_default(
                window_length=split_doc.get("window_length", 24),
                stride=split_doc.get("stride", 12),
            )
        recordings = []
        for subject in {spec.source_subject, spec.target_subject}:
            runs = set()
            if subject == spec.source_subject:
                runs |= set(spec.source_train_runs + spec.source_val_runs)
            if subject == spec.target_subject:
                runs |= set(spec.target_train_runs + spec.target_test_runs)
            recordings += load_subject_runs(root, manifest, subject, sorted(runs))
        return build_split(recordings, spec, n_classes=manifest.n_classes)
    if kind == "cached":
        directory = split_doc.get("directory")
        if not directory:
            raise ConfigError(["split.directory required for cached splits"])
        return load_split(directory)
    raise ConfigError([f"unknown split kind {kind!r}"])


def model_spec_for(config: ExperimentConfig, split: DomainSplit) -> ModelSpec:
    return ModelSpec(
        channels=split.source_train.channel_count,
        input_length=split.source_train.length,
        n_classes=split.n_classes,
        **config.model,
    )


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    run_dir: Path
    record: Optional[RunRecord]
    config_hash: str


def _next_run_dir(base: Path, stem: str) -> Path:
    for i in range(1, 10000):
        candidate = base / f"{stem}-r{i:03d}"
        if not candidate.exists():
            return candidate
    raise RuntimeError(f"too many runs named {stem}")


def _evenly_spaced(n: int, fraction: float) -> np.ndarray:
    k = max(1, int(round(fraction * n)))
    return np.unique(np.linspace(0, n - 1, k).round().astype(int))


def _run_trainer(config: ExperimentConfig, split: DomainSplit):
    spec = model_spec_for(config, split)
    params = config.method_params
    if config.method == "baseline":
        return train_baseline(split, spec, config.train)
    if config.method == "loss_weighted":
        return train_loss_weighted(split, spec, config.train, kappa=params.get("kappa", 2.0))
    if config.method == "dann":
        head = DannHeadSpec(
            attach_point=params.get("attach_point", "conv2"),
            recurrent_units=params.get("head_units", spec.lstm_units),
        )
        return train_dann(
            split,
            spec,
            head,
            config.train,
            schedule=params.get("schedule", "adaptive"),
            gamma=params.get("gamma", 10.0),
            lambda_init=params.get("lambda_init", 1.0),
        )
    if config.method == "finetune":
        tuning_run = params.get("tuning_run")
        if tuning_run is None:
            raise ConfigError(["method_params.tuning_run is required for finetune"])
        if tuning_run not in split.finetune_sets:
            raise ConfigError(
                [f"tuning run {tuning_run!r} not in split (have {sorted(split.finetune_sets)})"]
            )
        tuning = split.finetune_sets[tuning_run]
        fraction = params.get("tuning_fraction", 1.0)
        if fraction < 1.0:
            tuning = tuning.subset(_evenly_spaced(len(tuning), fraction))
        validation = None
        if len(tuning) >= 10:
            idx = np.arange(len(tuning))
            validation = tuning.subset(idx[::5])
            tuning = tuning.subset(np.setdiff1d(idx, idx[::5]))
        if "source_run" in params:
            snapshot = ParameterSnapshot.load(Path(params["source_run"]) / "best.npz")
        else:
            snapshot, _ = train_baseline(split, spec, config.train)
        cfg = config.train
        if "learning_rate" in params:
            cfg = dataclasses.replace(cfg, learning_rate=params["learning_rate"])
        elif cfg.learning_rate == TrainConfig().learning_rate:
            cfg = dataclasses.replace(cfg, learning_rate=5e-5)
        return finetune(
            snapshot,
            tuning,
            frozen=tuple(params.get("frozen", ())),
            cfg=cfg,
            target_test=split.target_test,
        )
    raise ConfigError([f"method {config.method!r} is not a trainer"])


def _run_classical(config: ExperimentConfig, split: DomainSplit, run_dir: Path) -> Optional[RunRecord]:
    """Desk-scale demonstrations of the classical reweighting algorithms.

    Windows are flattened to per-channel means; tradaboost binarizes the task
    (lower half of the class ids vs the rest) since the algorithm is binary.
    KMM emits weights plus diagnostics but no metric record (it produces
    weights, not a classifier).
    """
    from hartransfer.classical import kmm_weights, tradaboost

    params = config.method_params
    max_samples = params.get("max_samples", 400)

    def flatten(ws, limit):
        idx = _evenly_spaced(len(ws), min(1.0, limit / max(1, len(ws))))
        return ws.values[idx].mean(axis=1), idx

    source_flat, source_idx = flatten(split.source_train, max_samples)
    target_flat, _ = flatten(split.target_train, max_samples)

    if config.method == "kmm":
        beta = kmm_weights(
            source_flat,
            target_flat,
            sigma=params.get("sigma"),
            weight_bound=params.get("weight_bound", 1000.0),
            mean_tolerance=params.get("mean_tolerance"),
        )
        np.save(run_dir / "beta.npy", beta)
        dump_yaml(
            {
                "samples": int(source_flat.shape[0]),
                "beta_mean": float(beta.mean()),
                "beta_min": float(beta.min()),
                "beta_max": float(beta.max()),
            },
            run_dir / "kmm.yaml",
        )
        return None

    # tradaboost
    n_classes = split.n_classes
    positive = set(params.get("positive_classes", range(n_classes // 2 + 1, n_classes + 1)))

    def binarize(ws, limit):
        flat, idx = flatten(ws, limit)
        labels = np.isin(ws.labels[idx], sorted(positive)).astype(np.int64)
        return flat, labels

    src_x, src_y = binarize(split.source_train, max_samples)
    tuning_run = sorted(split.finetune_sets)[0]
    tgt_pool = split.finetune_sets[tuning_run]
    tgt_x, tgt_y = binarize(tgt_pool, max(2, int(params.get("target_fraction", 0.05) * len(src_x))))
    test_x, test_y = binarize(split.target_test, max_samples)

    ensemble = tradaboost(src_x, src_y, tgt_x, tgt_y, rounds=params.get("rounds", 20))
    preds = ensemble.predict(test_x)
    report = weighted_f1(preds + 1, test_y + 1, n_classes=2)
    record = RunRecord(
        config=config.to_dict(),
        config_hash=config.hash,
        meta={"method": "tradaboost", "rounds_completed": len(ensemble.learners)},
    )
    record.append(
        RunRow(
            iteration=1,
            source_val_f1=weighted_f1(ensemble.predict(src_x) + 1, src_y + 1, 2).weighted_f1,
            target_test_f1=report.weighted_f1,
            mean_loss=float(ensemble.state.round_errors[-1]) if ensemble.state.round_errors else 0.0,
        )
    )
    record.best_iteration = 1
    return record


def run(config: ExperimentConfig) -> RunResult:
    """Execute one experiment and persist its artifacts atomically.

    The run directory appears under the configured output directory only
    after every artifact is written; a failure leaves a ``*-failed`` directory
    whose status file carries the error.
    """
    split = resolve_split(config)  # fail fast before creating any output
    base = Path(config.output_dir)
    base.mkdir(parents=True, exist_ok=True)
    run_dir = _next_run_dir(base, f"{config.name}-{config.hash[:8]}")
    staging = run_dir.with_name(run_dir.name + ".tmp")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    dump_yaml(config.to_dict(), staging / "config.yaml")
    dump_yaml({"state": "running", "version": __version__}, staging / "status.yaml")

    try:
        if config.method in ("kmm", "tradaboost"):
            record = _run_classical(config, split, staging)
            snapshot = None
        else:
            snapshot, record = _run_trainer(config, split)
        if record is not None:
            record.meta["split_hash"] = split.split_hash
            record.meta["run_name"] = config.name
            record.save(staging / "record.jsonl")
        if snapshot is not None:
            snapshot.save(staging / "best.npz")
        dump_yaml(
            {"state": "complete", "version": __version__, "config_hash": config.hash},
            staging / "status.yaml",
        )
    except Exception as exc:
        dump_yaml(
            {"state": "failed", "error": f"{type(exc).__name__}: {exc}"},
            staging / "status.yaml",
        )
        failed_dir = run_dir.with_name(run_dir.name + "-failed")
        os.replace(staging, failed_dir)
        raise
    os.replace(staging, run_dir)
    return RunResult(run_dir=run_dir, record=record, config_hash=config.hash)


# ---------------------------------------------------------------------------
# Comparison tables
# ---------------------------------------------------------------------------

@dataclass
class ComparisonTable:
    """Highest-target-F1 summary, one row per run.

    ``max_target_f1`` follows the papers' reporting convention (max over the
    run's eval points); ``target_f1_at_best`` is the methodologically clean
    column (target F1 at the best-on-validation iteration).  Both are shown
    rather than choosing.
    """

    rows: list[dict]

    def render(self) -> str:
        header = ("method", "run", "max target F1", "F1 @ best val", "config", "status")
        table = [header] + [
            (
                r.get("method", "?"),
                r.get("run", "?"),
                "-" if r.get("max_target_f1") is None else f"{r['max_target_f1']:.4f}",
                "-" if r.get("target_f1_at_best") is None else f"{r['target_f1_at_best']:.4f}",
                r.get("config_hash", "")[:8],
                r.get("status", "ok"),
            )
            for r in self.rows
        ]
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in table]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        with open(path.with_suffix(".txt"), "w", encoding="utf-8") as fh:
            fh.write(self.render() + "\n")


def _load_run(run_dir: str | Path) -> tuple[Path, RunRecord]:
    run_dir = Path(run_dir)
    record_path = run_dir / "record.jsonl"
    if not record_path.exists():
        raise FileNotFoundError(f"{run_dir} has no metric record (record.jsonl)")
    return run_dir, RunRecord.load(record_path)


def compare(run_dirs: Sequence[str | Path]) -> ComparisonTable:
    """Pure function of persisted records; never retrains anything."""
    if not run_dirs:
        raise ValueError("no runs to compare")
    loaded = [_load_run(d) for d in run_dirs]
    hashes = {rec.meta.get("split_hash") for _, rec in loaded}
    if len(hashes) > 1:
        raise ValueError(
            f"runs use different splits ({len(hashes)} distinct split hashes); "
            "comparing target scores across splits is meaningless"
        )
    rows = []
    for run_dir, rec in loaded:
        rows.append(
            {
                "method": rec.meta.get("method", rec.config.get("method", "?")),
                "run": run_dir.name,
                "max_target_f1": rec.max_target_f1,
                "target_f1_at_best": rec.target_f1_at_best,
                "config_hash": rec.config_hash,
                "run_dir": str(run_dir),
                "status": "ok",
            }
        )
    return ComparisonTable(rows=rows)


# ---------------------------------------------------------------------------
# Plots
# ---------------------------------------------------------------------------

PLOT_KINDS = ("f1_curve", "lambda_trace", "domain_accuracy")


def plot(run_dirs: Sequence[str | Path], kind: str, out_dir: str | Path) -> list[Path]:
    """Per-iteration line charts, one image per run."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if kind not in PLOT_KINDS:
        raise ValueError(f"plot kind must be one of {PLOT_KINDS}, got {kind!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for run_dir in run_dirs:
        run_dir, rec = _load_run(run_dir)
        iters = rec.column("iteration")
        fig, ax = plt.subplots(figsize=(7, 4))
        if kind == "f1_curve":
            ax.plot(iters, rec.column("source_val_f1"), label="source val F1", marker="o", ms=3)
            ax.plot(iters, rec.column("target_test_f1"), label="target test F1", marker="s", ms=3)
            ax.set_ylabel("weighted F1")
            if any(v is not None for v in rec.column("lam")):
                ax2 = ax.twinx()
                ax2.plot(iters, rec.column("lam"), color="grey", alpha=0.6, label="reversal weight")
                ax2.set_yscale("log")
                ax2.set_ylabel("reversal weight")
        elif kind == "lambda_trace":
            series = rec.column("lam")
            if all(v is None for v in series):
                plt.close(fig)
                raise ValueError(f"{run_dir.name}: record has no 'lam' column (not an adversarial run)")
            ax.plot(iters, series, marker="o", ms=3)
            ax.set_yscale("log")
            ax.set_ylabel("reversal weight")
        else:
            series = rec.column("domain_accuracy")
            if all(v is None for v in series):
                plt.close(fig)
                raise ValueError(f"{run_dir.name}: record has no 'domain_accuracy' column")
            ax.plot(iters, series, marker="o", ms=3)
            ax.axhline(0.8, color="grey", ls="--", lw=0.8)
            ax.axhline(0.6, color="grey", ls="--", lw=0.8)
            ax.axhline(0.5, color="grey", ls=":", lw=0.8)
            ax.set_ylim(0, 1)
            ax.set_ylabel("domain accuracy")
        ax.set_xlabel("iteration")
        ax.set_title(f"{rec.meta.get('run_name', run_dir.name)} [{rec.meta.get('method', '?')}]")
        if kind == "f1_curve":
            ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        out = out_dir / f"{run_dir.name}-{kind}.png"
        fig.savefig(out, dpi=120)
        plt.close(fig)
        outputs.append(out)
    return outputs


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------

def _override(doc: dict, dotted: str, value) -> dict:
    out = json.loads(json.dumps(doc))  # deep copy of plain data
    node = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return out


def sweep(base: ExperimentConfig, grid: dict[str, list]) -> ComparisonTable:
    """Run every grid point (cartesian product over dotted config paths).

    A failing point becomes a failed row; it never aborts the sweep.
    """
    if not grid:
        raise ValueError("sweep grid is empty")
    keys = sorted(grid)
    for key in keys:
        if not isinstance(grid[key], list) or not grid[key]:
            raise ConfigError([f"grid[{key}] must be a non-empty list"])

    def points(idx: int, doc: dict, trail: tuple):
        if idx == len(keys):
            yield doc, trail
            return
        for value in grid[keys[idx]]:
            yield from points(idx + 1, _override(doc, keys[idx], value), trail + ((keys[idx], value),))

    rows = []
    for doc, trail in points(0, base.to_dict(), ()):
        label = ",".join(f"{k.split('.')[-1]}={v}" for k, v in trail)
        doc["name"] = f"{base.name}[{label}]"
        try:
            config = ExperimentConfig.from_dict(doc)
            result = run(config)
            rec = result.record
            rows.append(
                {
                    "method": config.method,
                    "run": result.run_dir.name,
                    "point": label,
                    "max_target_f1": None if rec is None else rec.max_target_f1,
                    "target_f1_at_best": None if rec is None else rec.target_f1_at_best,
                    "config_hash": config.hash,
                    "run_dir": str(result.run_dir),
                    "status": "ok",
                }
            )
        except Exception as exc:
            rows.append(
                {
                    "method": base.method,
                    "run": doc["name"],
                    "point": label,
                    "max_target_f1": None,
                    "target_f1_at_best": None,
                    "config_hash": "",
                    "status": f"failed: {type(exc).__name__}: {exc}",
                }
            )
    return ComparisonTable(rows=rows)


# ---------------------------------------------------------------------------
# Cached-split production (the `ingest` and `generate` verbs)
# ---------------------------------------------------------------------------

def ingest(dataset_root: str | Path, out_dir: str | Path, split_spec: Optional[SplitSpec] = None) -> Path:
    """Build the paper split from OPPORTUNITY files and cache it."""
    spec = split_spec or SplitSpec.paper_default()
    manifest = opportunity_manifest()
    subjects = {spec.source_subject: set(spec.source_train_runs + spec.source_val_runs)}
    subjects.setdefault(spec.target_subject, set())
    subjects[spec.target_subject] |= set(spec.target_train_runs + spec.target_test_runs)
    recordings = []
    for subject, runs in subjects.items():
        recordings += load_subject_runs(dataset_root, manifest, subject, sorted(runs))
    split = build_split(recordings, spec, n_classes=manifest.n_classes)
    save_split(split, out_dir)
    return Path(out_dir)


def generate_synthetic(out_dir: str | Path, shift: Optional[ShiftSpec] = None, train_fraction: float = 0.75) -> Path:
    """Materialize the synthetic fixture split into the cache format."""
    split = synthetic_split(shift or default_fixture_spec(), train_fraction=train_fraction)
    save_split(split, out_dir)
    return Path(out_dir)
