"""The four training procedures and their shared machinery.

* source-only baseline
* instance loss weighting driven by a pretrained probabilistic domain classifier
* adversarial domain confusion (gradient reversal) with either the fixed
  sigmoid schedule or the adaptive feedback controller
* layer transfer + fine-tuning on a small labeled target subset

An *iteration* is one full pass over the training window set.  Every trainer
is deterministic given its config: each stochastic component (parameter init,
batch order, domain-batch sampling, the pretrained scorer, dropout) draws
from its own named substream of the seed, so e.g. adding the domain head to
the adversarial trainer does not perturb the label-batch order.  That is what
makes the degeneracy guarantees exact: zero instance-weighting sharpness and
a pinned zero reversal weight both reproduce the baseline trajectory bit for
bit.

Model selection is always on the trainer's own validation data (source
validation for the unsupervised methods, the labeled tuning set for
fine-tuning); target test metrics are recorded for reporting and never touch
selection.
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from hartransfer.configio import content_hash, dump_yaml, load_yaml
from hartransfer.data import DomainSplit, WindowSet
from hartransfer.metrics import weighted_f1
from hartransfer.model import (
    DannHead,
    DannHeadSpec,
    DeepConvLstm,
    ModelSpec,
    ParameterSnapshot,
    grl_backward,
    group_of,
    init_head_params,
    init_params,
)
from hartransfer.rng import substream


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss; carries the offending iteration."""

    def __init__(self, message: str, iteration: int, lam_trace: Optional[list] = None):
        super().__init__(message)
        self.iteration = iteration
        self.lam_trace = lam_trace


# ---------------------------------------------------------------------------
# Config, optimizer, run records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """RMSProp descriptor plus loop controls; defaults are desk-scale sane."""

    learning_rate: float = 1e-3
    decay: float = 0.9
    epsilon: float = 1e-6
    batch_size: int = 100
    max_iterations: int = 30
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("batch_size and eval_every must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class RmsProp:
    """Root-mean-square propagation; skips frozen layer groups entirely."""

    def __init__(self, learning_rate: float, decay: float, epsilon: float):
        self.learning_rate = learning_rate
        self.decay = decay
        self.epsilon = epsilon
        self.mean_square: dict[str, np.ndarray] = {}

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "RmsProp":
        return cls(cfg.learning_rate, cfg.decay, cfg.epsilon)

    def step(
        self,
        params: dict[str, np.ndarray],
        grads: dict[str, np.ndarray],
        frozen: frozenset[str] = frozenset(),
    ) -> None:
        for key, grad in grads.items():
            if group_of(key) in frozen:
                continue
            acc = self.mean_square.get(key)
            if acc is None:
                acc = np.zeros_like(grad)
            acc = self.decay * acc + (1.0 - self.decay) * grad * grad
            self.mean_square[key] = acc
            params[key] = params[key] - self.learning_rate * grad / (np.sqrt(acc) + self.epsilon)


@dataclass
class RunRow:
    iteration: int
    source_val_f1: float
    target_test_f1: float
    mean_loss: float
    domain_accuracy: Optional[float] = None
    lam: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


@dataclass
class RunRecord:
    """Per-iteration metric trace plus the config that produced it.

    ``source_val_f1`` is the trainer's selection metric: F1 on source
    validation for the source-driven methods and on the labeled target tuning
    set for fine-tuning.  The best checkpoint is always the row maximizing
    that column.
    """

    config: dict
    config_hash: str
    meta: dict = field(default_factory=dict)
    rows: list[RunRow] = field(default_factory=list)
    best_iteration: Optional[int] = None

    def append(self, row: RunRow) -> None:
        if self.rows and row.iteration <= self.rows[-1].iteration:
            raise ValueError(
                f"iterations must increase strictly: {row.iteration} after {self.rows[-1].iteration}"
            )
        self.rows.append(row)

    @property
    def best_row(self) -> RunRow:
        by_iter = {r.iteration: r for r in self.rows}
        return by_iter[self.best_iteration]

    @property
    def best_source_val_f1(self) -> float:
        return self.best_row.source_val_f1

    @property
    def max_target_f1(self) -> float:
        return max(r.target_test_f1 for r in self.rows)

    @property
    def target_f1_at_best(self) -> float:
        return self.best_row.target_test_f1

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    # -- persistence: one JSON object per eval row, meta in a sidecar ----------

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row.to_dict(), sort_keys=True) + "\n")
        dump_yaml(
            {
                "config": self.config,
                "config_hash": self.config_hash,
                "meta": self.meta,
                "best_iteration": self.best_iteration,
            },
            path.with_suffix(".meta.yaml"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunRecord":
        path = Path(path)
        meta = load_yaml(path.with_suffix(".meta.yaml"))
        record = cls(
            config=meta["config"],
            config_hash=meta["config_hash"],
            meta=meta.get("meta", {}),
            best_iteration=meta.get("best_iteration"),
        )
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record.rows.append(RunRow(**json.loads(line)))
        return record


# ---------------------------------------------------------------------------
# Reversal-weight schedules
# ---------------------------------------------------------------------------

def ganin_lambda(progress: float, gamma: float = 10.0) -> float:
    """Fixed sigmoid schedule 2 / (1 + exp(-gamma * progress))."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    return 2.0 / (1.0 + math.exp(-gamma * progress))


class AdaptiveLambdaController:
    """Feedback rule keeping the domain classifier's accuracy in a target band.

    When accuracy exceeds ``acc_high`` the reversal weight grows by ``growth``;
    when it falls below ``acc_low`` the weight backs off (divide by ``growth``
    above ``lam_mid``, multiply by ``shrink`` between ``lam_min`` and
    ``lam_mid``).  The result is always clamped to [lam_min, lam_max].  All
    parameters are immutable after construction; only ``lam`` mutates.
    """

    _MUTABLE = ("lam",)

    def __init__(
        self,
        lam: float = 1.0,
        acc_high: float = 0.8,
        acc_low: float = 0.6,
        lam_max: float = 10000.0,
        lam_mid: float = 10.0,
        lam_min: float = 0.1,
        growth: float = 1.5,
        shrink: float = 0.9,
    ):
        if not (0.0 < lam_min < lam_mid < lam_max):
            raise ValueError("need 0 < lam_min < lam_mid < lam_max")
        if not (0.0 <= acc_low < acc_high <= 1.0):
            raise ValueError("need 0 <= acc_low < acc_high <= 1")
        if growth <= 1.0 or not (0.0 < shrink < 1.0):
            raise ValueError("need growth > 1 and 0 < shrink < 1")
        object.__setattr__(self, "_sealed", False)
        self.acc_high = acc_high
        self.acc_low = acc_low
        self.lam_max = lam_max
        self.lam_mid = lam_mid
        self.lam_min = lam_min
        self.growth = growth
        self.shrink = shrink
        self.lam = lam
        object.__setattr__(self, "_sealed", True)

    def __setattr__(self, name, value):
        if getattr(self, "_sealed", False) and name not in self._MUTABLE:
            raise AttributeError(f"controller parameter {name!r} is immutable after construction")
        object.__setattr__(self, name, value)

    def update(self, domain_acc: float) -> float:
        if not 0.0 <= domain_acc <= 1.0:
            raise ValueError(f"domain accuracy must lie in [0, 1], got {domain_acc}")
        lam = self.lam
        if domain_acc > self.acc_high and lam < self.lam_max:
            lam = self.growth * lam
        elif domain_acc < self.acc_low and lam > self.lam_mid:
            lam = lam / self.growth
        elif domain_acc < self.acc_low and self.lam_min < lam < self.lam_mid:
            lam = self.shrink * lam
        lam = min(max(lam, self.lam_min), self.lam_max)
        self.lam = lam
        return lam


def update_lambda(ctrl: AdaptiveLambdaController, domain_acc: float) -> float:
    """Apply one controller step; returns (and stores) the new reversal weight."""
    return ctrl.update(domain_acc)


# ---------------------------------------------------------------------------
# Instance weighting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InstanceWeighting:
    """Per-window loss weights exp(kappa * L_i) / C with unit mean.

    ``domain_scores`` are the pretrained domain classifier's probabilities
    that each window is target-domain; the normalizer C is the mean of
    exp(kappa * L_j) over the set, so the weights average to one and the
    effective learning rate is preserved.
    """

    kappa: float
    domain_scores: np.ndarray

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        scores = np.asarray(self.domain_scores)
        if scores.size == 0:
            raise ValueError("domain_scores must be non-empty")
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise ValueError("domain scores must lie in [0, 1]")

    @property
    def normalizer(self) -> float:
        return float(np.mean(np.exp(self.kappa * np.asarray(self.domain_scores))))

    @property
    def weights(self) -> np.ndarray:
        scaled = np.exp(self.kappa * np.asarray(self.domain_scores))
        return scaled / self.normalizer


# ---------------------------------------------------------------------------
# Shared classifier-fitting engine
# ---------------------------------------------------------------------------

def _evaluate(model: DeepConvLstm, ws: WindowSet) -> float:
    return weighted_f1(model.predict(ws.values), ws.labels, model.spec.n_classes).weighted_f1


def _fit_classifier(
    train_set: WindowSet,
    spec: ModelSpec,
    cfg: TrainConfig,
    selection_set: WindowSet,
    target_test: WindowSet,
    weights: Optional[np.ndarray] = None,
    initial_params: Optional[dict[str, np.ndarray]] = None,
    restore_from: Optional[tuple[ParameterSnapshot, tuple[str, ...]]] = None,
    frozen: frozenset[str] = frozenset(),
    meta: Optional[dict] = None,
) -> tuple[ParameterSnapshot, RunRecord]:
    """Cross-entropy training loop shared by baseline, weighted, and fine-tune."""
    if len(train_set) == 0:
        raise ValueError("training window set is empty")
    if not train_set.is_labeled():
        raise ValueError("classifier training requires labeled windows")

    model = DeepConvLstm(
        spec,
        params=initial_params
        if initial_params is not None
        else init_params(spec, substream(cfg.seed, "model-init")),
    )
    if restore_from is not None:
        snap, groups = restore_from
        model.restore(snap, groups)
    model.freeze(frozen)

    optimizer = RmsProp.from_config(cfg)
    rng_batches = substream(cfg.seed, "batches")
    rng_dropout = substream(cfg.seed, "dropout")

    values, labels = train_set.values, train_set.labels
    n = len(train_set)
    all_weights = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if all_weights.shape != (n,):
        raise ValueError(f"weights must have shape ({n},), got {all_weights.shape}")

    meta = dict(meta or {})
    config = {"train": cfg.to_dict(), "model": spec.to_dict(), **meta}
    record = RunRecord(config=config, config_hash=content_hash(config), meta=meta)

    best_f1 = -np.inf
    best_snapshot: Optional[ParameterSnapshot] = None
    for it in range(1, cfg.max_iterations + 1):
        perm = rng_batches.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            loss, grads = model.label_loss_and_grads(
                values[idx], labels[idx], all_weights[idx], dropout_rng=rng_dropout
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became non-finite at iteration {it}", it)
            optimizer.step(model.params, grads, model.frozen)
            losses.append(loss)

        if it % cfg.eval_every == 0 or it == cfg.max_iterations:
            row = RunRow(
                iteration=it,
                source_val_f1=_evaluate(model, selection_set),
                target_test_f1=_evaluate(model, target_test),
                mean_loss=float(np.mean(losses)),
            )
            record.append(row)
            if row.source_val_f1 > best_f1:
                best_f1 = row.source_val_f1
                record.best_iteration = it
                best_snapshot = model.snapshot({**meta, "iteration": it, "seed": cfg.seed})

    assert best_snapshot is not None
    return best_snapshot, record


# ---------------------------------------------------------------------------
# Baseline
# ---------------------------------------------------------------------------

def train_baseline(
    split: DomainSplit, spec: ModelSpec, cfg: TrainConfig
) -> tuple[ParameterSnapshot, RunRecord]:
    """Source-only cross-entropy training; the cross-domain reference point."""
    return _fit_classifier(
        split.source_train,
        spec,
        cfg,
        selection_set=split.source_val,
        target_test=split.target_test,
        meta={"method": "baseline"},
    )


# ---------------------------------------------------------------------------
# Domain scorer + loss weighting
# ---------------------------------------------------------------------------

class DomainScorer:
    """Probabilistic domain classifier: P(window is target-domain).

    Architecturally this is the adversarial head on its own fresh two-layer
    feature extractor, trained as an ordinary classifier (no gradient
    reversal) on domain labels.
    """

    def __init__(self, extractor: DeepConvLstm, head: DannHead, heldout_accuracy: float):
        self.extractor = extractor
        self.head = head
        self.heldout_accuracy = heldout_accuracy

    def score(self, values: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = np.empty(values.shape[0])
        upto = self.head.attach_index
        for lo in range(0, values.shape[0], batch_size):
            feats, _ = self.extractor.conv_stack(values[lo : lo + batch_size], upto=upto)
            out[lo : lo + batch_size] = self.head.forward_domain(feats)[:, 1]
        return out


def pretrain_domain_classifier(
    source: WindowSet,
    target: WindowSet,
    spec: ModelSpec,
    cfg: TrainConfig,
    head_spec: Optional[DannHeadSpec] = None,
    holdout_fraction: float = 0.2,
) -> DomainScorer:
    """Train a source-vs-target window classifier; activity labels never enter.

    A fraction of each side is held out to measure calibration accuracy,
    reported on the returned scorer.
    """
    if len(source) == 0 or len(target) == 0:
        raise ValueError("domain pretraining needs windows from both domains")
    head_spec = head_spec or DannHeadSpec(recurrent_units=spec.lstm_units)
    attach = head_spec.attach_index(spec)
    trimmed = dataclasses.replace(spec, conv_layers=attach, dropout=0.0)

    extractor = DeepConvLstm(trimmed, params=init_params(trimmed, substream(cfg.seed, "scorer-init")))
    head = DannHead(
        head_spec, trimmed, params=init_head_params(head_spec, trimmed, substream(cfg.seed, "scorer-head-init"))
    )
    opt_extractor = RmsProp.from_config(cfg)
    opt_head = RmsProp.from_config(cfg)

    rng_batches = substream(cfg.seed, "scorer-batches")

    def holdout(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # One fresh, identical substream per side keeps the split symmetric
        # across domains (coinciding sides get the same holdout rows).
        perm = substream(cfg.seed, "scorer-split").permutation(values.shape[0])
        n_held = max(1, int(round(holdout_fraction * values.shape[0])))
        return values[perm[n_held:]], values[perm[:n_held]]

    src_train, src_held = holdout(source.values)
    tgt_train, tgt_held = holdout(target.values)

    half = max(1, cfg.batch_size // 2)
    steps = max(1, math.ceil((src_train.shape[0] + tgt_train.shape[0]) / (2 * half)))
    for _ in range(cfg.max_iterations):
        for _ in range(steps):
            si = rng_batches.integers(0, src_train.shape[0], size=half)
            ti = rng_batches.integers(0, tgt_train.shape[0], size=half)
            batch = np.concatenate([src_train[si], tgt_train[ti]])
            domains = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
            feats, caches = extractor.conv_stack(batch, upto=attach)
            loss, head_grads, grad_tap, _ = head.loss_and_grads(feats, domains)
            if not np.isfinite(loss):
                raise TrainingDivergedError("domain pretraining diverged", 0)
            conv_grads = extractor.conv_stack_backward(grad_tap, caches, attach)
            opt_extractor.step(extractor.params, conv_grads)
            opt_head.step(head.params, head_grads)

    held = np.concatenate([src_held, tgt_held])
    held_domains = np.concatenate(
        [np.zeros(src_held.shape[0], dtype=np.int64), np.ones(tgt_held.shape[0], dtype=np.int64)]
    )
    scorer = DomainScorer(extractor, head, heldout_accuracy=0.0)
    preds = (scorer.score(held) >= 0.5).astype(np.int64)
    scorer.heldout_accuracy = float(np.mean(preds == held_domains))
    return scorer


def train_loss_weighted(
    split: DomainSplit,
    spec: ModelSpec,
    cfg: TrainConfig,
    kappa: float = 2.0,
    scorer: Optional[DomainScorer] = None,
    scorer_cfg: Optional[TrainConfig] = None,
) -> tuple[ParameterSnapshot, RunRecord]:
    """Baseline training with per-window loss weights exp(kappa * L_i) / C.

    L_i is the pretrained domain classifier's probability that source window
    i is target-domain, so windows resembling the target dominate the loss.
    kappa = 0 makes every weight exactly one and reproduces the baseline
    trajectory bit for bit under the same seed.
    """
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    if scorer is None:
        scorer = pretrain_domain_classifier(
            split.source_train, split.target_train, spec, scorer_cfg or cfg
        )
    scores = scorer.score(split.source_train.values)
    weighting = InstanceWeighting(kappa=kappa, domain_scores=scores)
    return _fit_classifier(
        split.source_train,
        spec,
        cfg,
        selection_set=split.source_val,
        target_test=split.target_test,
        weights=weighting.weights,
        meta={"method": "loss_weighted", "kappa": kappa, "scorer_heldout_accuracy": scorer.heldout_accuracy},
    )


# ---------------------------------------------------------------------------
# Adversarial training
# ---------------------------------------------------------------------------

def train_dann(
    split: DomainSplit,
    spec: ModelSpec,
    head_spec: DannHeadSpec,
    cfg: TrainConfig,
    schedule: str = "adaptive",
    controller: Optional[AdaptiveLambdaController] = None,
    gamma: float = 10.0,
    lambda_init: float = 1.0,
) -> tuple[ParameterSnapshot, RunRecord]:
    """Adversarial domain-confusion training with gradient reversal.

    Each step takes one labeled source batch for the label loss and one
    balanced source/target batch for the domain loss; the feature extractor's
    gradient is the label gradient minus lam times the domain gradient, by
    way of the reversal layer.  ``schedule``:

    * ``adaptive`` - lam updated once per iteration from that iteration's
      running domain accuracy (the feedback controller);
    * ``ganin`` - the fixed sigmoid schedule over training progress;
    * ``fixed`` - lam pinned at ``lambda_init`` (lambda_init = 0 reproduces
      the baseline label trajectory bit for bit while the head still trains).
    """
    if schedule not in ("adaptive", "ganin", "fixed"):
        raise ValueError(f"unknown schedule {schedule!r}")
    if len(split.target_train) == 0:
        raise ValueError("adversarial training requires target windows")

    model = DeepConvLstm(spec, params=init_params(spec, substream(cfg.seed, "model-init")))
    head = DannHead(
        head_spec, spec, params=init_head_params(head_spec, spec, substream(cfg.seed, "domain-head-init"))
    )
    attach = head.attach_index
    opt_model = RmsProp.from_config(cfg)
    opt_head = RmsProp.from_config(cfg)

    rng_batches = substream(cfg.seed, "batches")
    rng_domain = substream(cfg.seed, "domain-batches")
    rng_dropout = substream(cfg.seed, "dropout")

    values, labels = split.source_train.values, split.source_train.labels
    target_values = split.target_train.values
    n = len(split.source_train)
    half = max(1, cfg.batch_size // 2)

    if schedule == "adaptive":
        controller = controller or AdaptiveLambdaController(lam=lambda_init)
        lam = controller.lam
    else:
        lam = lambda_init

    meta = {"method": "dann", "schedule": schedule, "head": head_spec.to_dict()}
    config = {"train": cfg.to_dict(), "model": spec.to_dict(), **meta}
    record = RunRecord(config=config, config_hash=content_hash(config), meta=meta)
    lam_trace: list[float] = []

    best_f1 = -np.inf
    best_snapshot: Optional[ParameterSnapshot] = None
    for it in range(1, cfg.max_iterations + 1):
        if schedule == "ganin":
            lam = ganin_lambda((it - 1) / cfg.max_iterations, gamma)
        lam_trace.append(lam)

        perm = rng_batches.permutation(n)
        losses = []
        domain_hits = 0
        domain_total = 0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            label_loss, grads = model.label_loss_and_grads(
                values[idx], labels[idx], dropout_rng=rng_dropout
            )

            si = rng_domain.integers(0, values.shape[0], size=half)
            ti = rng_domain.integers(0, target_values.shape[0], size=half)
            domain_batch = np.concatenate([values[si], target_values[ti]])
            domains = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
            feats, caches = model.conv_stack(domain_batch, upto=attach)
            domain_loss, head_grads, grad_tap, preds = head.loss_and_grads(feats, domains)
            domain_hits += int((preds == domains).sum())
            domain_total += 2 * half

            if not (np.isfinite(label_loss) and np.isfinite(domain_loss)):
                raise TrainingDivergedError(
                    f"loss became non-finite at iteration {it}", it, lam_trace=lam_trace
                )
            if lam != 0.0:
                feat_grads = model.conv_stack_backward(grl_backward(grad_tap, lam), caches, attach)
                for key, grad in feat_grads.items():
                    grads[key] = grads[key] + grad
            opt_model.step(model.params, grads, model.frozen)
            opt_head.step(head.params, head_grads)
            losses.append(label_loss)

        domain_acc = domain_hits / domain_total
        if it % cfg.eval_every == 0 or it == cfg.max_iterations:
            row = RunRow(
                iteration=it,
                source_val_f1=_evaluate(model, split.source_val),
                target_test_f1=_evaluate(model, split.target_test),
                mean_loss=float(np.mean(losses)),
                domain_accuracy=domain_acc,
                lam=lam,
            )
            record.append(row)
            if row.source_val_f1 > best_f1:
                best_f1 = row.source_val_f1
                record.best_iteration = it
                best_snapshot = model.snapshot({**meta, "iteration": it, "seed": cfg.seed})
        if schedule == "adaptive":
            lam = controller.update(domain_acc)

    assert best_snapshot is not None
    return best_snapshot, record


# ---------------------------------------------------------------------------
# Layer transfer + fine-tuning
# ---------------------------------------------------------------------------

def finetune(
    source_snapshot: ParameterSnapshot,
    target_labeled: WindowSet,
    frozen: tuple[str, ...],
    cfg: Optional[TrainConfig] = None,
    target_test: Optional[WindowSet] = None,
    validation: Optional[WindowSet] = None,
) -> tuple[ParameterSnapshot, RunRecord]:
    """Restore the source-trained conv groups, freeze some, tune on labeled target data.

    The recurrent and output groups start fresh (only conv parameters carry
    over), matching the save-the-conv-parameters transfer recipe.  Selection
    uses ``validation`` when given (a held-out slice of the labeled target
    data) and otherwise the tuning set itself; ``target_test`` is reporting
    only and defaults to the tuning set when absent.
    """
    if len(target_labeled) == 0:
        raise ValueError("fine-tuning requires a non-empty labeled target set")
    cfg = cfg or TrainConfig(learning_rate=5e-5)
    spec = source_snapshot.model_spec()
    frozen_set = frozenset(frozen)
    unknown = sorted(frozen_set - set(spec.layer_groups))
    if unknown:
        raise ValueError(f"unknown layer groups: {unknown}")
    return _fit_classifier(
        target_labeled,
        spec,
        cfg,
        selection_set=validation if validation is not None else target_labeled,
        target_test=target_test if target_test is not None else target_labeled,
        restore_from=(source_snapshot, spec.conv_groups),
        frozen=frozen_set,
        meta={"method": "finetune", "frozen": sorted(frozen_set)},
    )
