"""DeepConvLSTM network, gradient-reversal layer, and the adversarial domain head.

The classifier is four valid-mode time convolutions (64 feature maps each,
kernels shared across sensor channels) followed by two 128-unit LSTM layers;
the softmax reads the final time step.  With 24-instant windows and kernel
length 5 the conv stack shrinks time 24 -> 8.

Parameters live in a flat ``{"group/name": array}`` dict partitioned into
named layer groups (conv1..conv4, recurrent, output) so freezing and partial
transfer can address exact subsets.  Snapshots are deep copies plus the
producing spec and provenance.
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from hartransfer.configio import content_hash, dump_yaml, load_yaml
from hartransfer.model import layers as L
from hartransfer.rng import substream


class DimensionError(ValueError):
    """An input tensor disagrees with the model spec; message names the axis."""


class GroupMismatchError(ValueError):
    """A snapshot's layer group is structurally incompatible with the model."""


def grl_forward(x: np.ndarray) -> np.ndarray:
    """Gradient-reversal layer, forward pass: the identity."""
    return x


def grl_backward(upstream_grad: np.ndarray, lam: float) -> np.ndarray:
    """Gradient-reversal layer, backward pass: flip sign and scale by lam."""
    if lam < 0:
        raise ValueError(f"gradient-reversal weight must be >= 0, got {lam}")
    return -lam * upstream_grad


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; defaults reproduce the 17-class HAR network."""

    channels: int
    input_length: int = 24
    conv_layers: int = 4
    conv_kernel: int = 5
    conv_maps: int = 64
    lstm_layers: int = 2
    lstm_units: int = 128
    n_classes: int = 17
    dropout: float = 0.0

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.conv_output_length < 1:
            raise ValueError(
                f"conv stack consumes the whole window: {self.input_length} instants, "
                f"{self.conv_layers} layers of kernel {self.conv_kernel}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def conv_output_length(self) -> int:
        return self.input_length - self.conv_layers * (self.conv_kernel - 1)

    def conv_length_after(self, n_layers: int) -> int:
        return self.input_length - n_layers * (self.conv_kernel - 1)

    @property
    def conv_groups(self) -> tuple[str, ...]:
        return tuple(f"conv{i}" for i in range(1, self.conv_layers + 1))

    @property
    def layer_groups(self) -> tuple[str, ...]:
        return self.conv_groups + ("recurrent", "output")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def hash(self) -> str:
        return content_hash(self.to_dict())


@dataclass(frozen=True)
class DannHeadSpec:
    """Adversarial domain-classifier head tapped off an early conv group."""

    attach_point: str = "conv2"
    recurrent_units: int = 128
    n_domains: int = 2

    def attach_index(self, spec: ModelSpec) -> int:
        if self.attach_point not in spec.conv_groups:
            raise ValueError(
                f"attach point {self.attach_point!r} is not a conv group of the model "
                f"(have {spec.conv_groups})"
            )
        return int(self.attach_point.removeprefix("conv"))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# Parameter initialization
# ---------------------------------------------------------------------------

def _uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _lstm_params(rng: np.random.Generator, d_in: int, hidden: int) -> dict[str, np.ndarray]:
    wx = _uniform_fan_in(rng, (d_in, 4 * hidden), d_in)
    wh = np.concatenate([_orthogonal(rng, hidden) for _ in range(4)], axis=1)
    bias = np.zeros(4 * hidden)
    bias[hidden : 2 * hidden] = 1.0  # forget-gate bias
    return {"Wx": wx, "Wh": wh, "b": bias}


def init_params(spec: ModelSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh parameters in canonical key order (draw order is part of the contract)."""
    params: dict[str, np.ndarray] = {}
    f_in = 1
    for g in spec.conv_groups:
        fan_in = spec.conv_kernel * f_in
        params[f"{g}/W"] = _uniform_fan_in(rng, (spec.conv_kernel, f_in, spec.conv_maps), fan_in)
        params[f"{g}/b"] = np.zeros(spec.conv_maps)
        f_in = spec.conv_maps
    d_in = spec.channels * spec.conv_maps
    for i in range(1, spec.lstm_layers + 1):
        for name, arr in _lstm_params(rng, d_in, spec.lstm_units).items():
            params[f"recurrent/lstm{i}_{name}"] = arr
        d_in = spec.lstm_units
    params["output/W"] = _uniform_fan_in(rng, (spec.lstm_units, spec.n_classes), spec.lstm_units)
    params["output/b"] = np.zeros(spec.n_classes)
    return params


def init_head_params(
    head: DannHeadSpec, spec: ModelSpec, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    d_in = spec.channels * spec.conv_maps
    params = {}
    for name, arr in _lstm_params(rng, d_in, head.recurrent_units).items():
        params[f"domain_recurrent/{name}"] = arr
    params["domain_output/W"] = _uniform_fan_in(
        rng, (head.recurrent_units, head.n_domains), head.recurrent_units
    )
    params["domain_output/b"] = np.zeros(head.n_domains)
    return params


def group_of(key: str) -> str:
    return key.split("/", 1)[0]


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

@dataclass
class ParameterSnapshot:
    """Immutable copy of trained parameters plus provenance."""

    params: dict[str, np.ndarray]
    spec: dict
    spec_hash: str
    meta: dict = field(default_factory=dict)

    def groups(self) -> set[str]:
        return {group_of(k) for k in self.params}

    def save(self, path: str | Path) -> None:
        path = Path(path)
        np.savez(path, **self.params)
        dump_yaml(
            {"spec": self.spec, "spec_hash": self.spec_hash, "meta": self.meta},
            path.with_suffix(".meta.yaml"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ParameterSnapshot":
        path = Path(path)
        meta = load_yaml(path.with_suffix(".meta.yaml"))
        with np.load(path if path.suffix == ".npz" else path.with_suffix(".npz")) as npz:
            params = {k: npz[k] for k in sorted(npz.files)}
        return cls(
            params=params,
            spec=meta["spec"],
            spec_hash=meta["spec_hash"],
            meta=meta.get("meta", {}),
        )

    def model_spec(self) -> ModelSpec:
        return ModelSpec(**self.spec)


# ---------------------------------------------------------------------------
# The classifier
# ---------------------------------------------------------------------------

class DeepConvLstm:
    """Label-prediction network with named, freezable layer groups."""

    def __init__(
        self,
        spec: ModelSpec,
        params: Optional[dict[str, np.ndarray]] = None,
        seed: int = 0,
    ):
        self.spec = spec
        self.params = params if params is not None else init_params(spec, substream(seed, "model-init"))
        self.frozen: frozenset[str] = frozenset()

    # -- shape checking --------------------------------------------------------

    def _check_batch(self, x: np.ndarray) -> None:
        if x.ndim != 3:
            raise DimensionError(f"batch must be [B, L, C]; got {x.ndim} axes")
        if x.shape[1] != self.spec.input_length:
            raise DimensionError(
                f"time axis (1) has length {x.shape[1]}, spec expects {self.spec.input_length}"
            )
        if x.shape[2] != self.spec.channels:
            raise DimensionError(
                f"channel axis (2) has length {x.shape[2]}, spec expects {self.spec.channels}"
            )

    # -- forward ----------------------------------------------------------------

    def conv_stack(self, x: np.ndarray, upto: Optional[int] = None):
        """Run conv+relu layers 1..upto; returns (activation, caches).

        caches[i] = (layer input, preactivation) for conv layer i+1.
        """
        n = self.spec.conv_layers if upto is None else upto
        act = x[..., None]  # [B, L, C, 1]
        caches = []
        for i in range(1, n + 1):
            pre = L.conv_time_forward(act, self.params[f"conv{i}/W"], self.params[f"conv{i}/b"])
            caches.append((act, pre))
            act = L.relu_forward(pre)
        return act, caches

    def conv_stack_backward(self, grad_act: np.ndarray, caches: list, upto: int) -> dict[str, np.ndarray]:
        """Backpropagate a gradient on the activation after conv layer ``upto``."""
        grads: dict[str, np.ndarray] = {}
        for i in range(upto, 0, -1):
            inp, pre = caches[i - 1]
            grad_pre = L.relu_backward(grad_act, pre)
            grad_act, grad_w, grad_b = L.conv_time_backward(grad_pre, inp, self.params[f"conv{i}/W"])
            grads[f"conv{i}/W"] = grad_w
            grads[f"conv{i}/b"] = grad_b
        return grads

    def _recurrent_head(self, feats: np.ndarray, train: bool, dropout_rng):
        """feats [B,T,C,F] -> (logits, cache dict for backward)."""
        b, t = feats.shape[:2]
        x = feats.reshape(b, t, -1)
        cache = {"lstm_in": [], "lstm_caches": [], "drop_masks": []}
        rate = self.spec.dropout
        for i in range(1, self.spec.lstm_layers + 1):
            if train and rate > 0.0:
                if dropout_rng is None:
                    raise ValueError("dropout is enabled but no dropout rng was supplied")
                x, mask = L.dropout_forward(x, rate, dropout_rng)
            else:
                mask = None
            cache["drop_masks"].append(mask)
            cache["lstm_in"].append(x)
            h, lstm_cache = L.lstm_forward(
                x,
                self.params[f"recurrent/lstm{i}_Wx"],
                self.params[f"recurrent/lstm{i}_Wh"],
                self.params[f"recurrent/lstm{i}_b"],
            )
            cache["lstm_caches"].append(lstm_cache)
            x = h
        last = x[:, -1]
        cache["last_h"] = last
        logits = L.dense_forward(last, self.params["output/W"], self.params["output/b"])
        return logits, cache

    def _recurrent_head_backward(self, grad_logits: np.ndarray, cache) -> tuple[dict, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        grad_last, grads["output/W"], grads["output/b"] = L.dense_backward(
            grad_logits, cache["last_h"], self.params["output/W"]
        )
        b, t = cache["lstm_in"][0].shape[:2]
        grad_h = np.zeros((b, t, self.spec.lstm_units))
        grad_h[:, -1] = grad_last
        for i in range(self.spec.lstm_layers, 0, -1):
            grad_x, grad_wx, grad_wh, grad_b = L.lstm_backward(
                grad_h,
                cache["lstm_caches"][i - 1],
                self.params[f"recurrent/lstm{i}_Wx"],
                self.params[f"recurrent/lstm{i}_Wh"],
            )
            grads[f"recurrent/lstm{i}_Wx"] = grad_wx
            grads[f"recurrent/lstm{i}_Wh"] = grad_wh
            grads[f"recurrent/lstm{i}_b"] = grad_b
            mask = cache["drop_masks"][i - 1]
            if mask is not None:
                grad_x = grad_x * mask
            grad_h = grad_x
        return grads, grad_h  # grad_h is now the gradient on the flattened conv features

    def forward(self, x: np.ndarray, train: bool = False, dropout_rng=None) -> np.ndarray:
        """Class probabilities [B, n_classes]; rows sum to one."""
        self._check_batch(x)
        feats, _ = self.conv_stack(x)
        logits, _ = self._recurrent_head(feats, train, dropout_rng)
        return L.softmax(logits)

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Argmax class ids 1..n_classes, evaluated in batches."""
        out = np.empty(x.shape[0], dtype=np.int64)
        for lo in range(0, x.shape[0], batch_size):
            probs = self.forward(x[lo : lo + batch_size])
            out[lo : lo + batch_size] = probs.argmax(axis=1) + 1
        return out

    def features(self, x: np.ndarray, upto: str) -> np.ndarray:
        """Activation after conv group ``upto`` (the DANN tap point)."""
        self._check_batch(x)
        idx = int(upto.removeprefix("conv"))
        if f"conv{idx}" not in self.spec.conv_groups:
            raise ValueError(f"unknown conv group {upto!r}")
        act, _ = self.conv_stack(x, upto=idx)
        return act

    # -- training-side losses ----------------------------------------------------

    def label_loss_and_grads(
        self,
        x: np.ndarray,
        targets: np.ndarray,
        weights: Optional[np.ndarray] = None,
        dropout_rng=None,
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Weighted mean cross-entropy of class labels (ids 1..K) and its gradients."""
        self._check_batch(x)
        feats, conv_caches = self.conv_stack(x)
        logits, head_cache = self._recurrent_head(feats, train=True, dropout_rng=dropout_rng)
        loss, grad_logits, _ = L.softmax_cross_entropy(logits, targets - 1, weights)
        grads, grad_flat = self._recurrent_head_backward(grad_logits, head_cache)
        grad_feats = grad_flat.reshape(feats.shape)
        grads.update(self.conv_stack_backward(grad_feats, conv_caches, self.spec.conv_layers))
        return loss, grads

    # -- snapshots, restore, freeze -----------------------------------------------

    def snapshot(self, meta: Optional[Mapping] = None) -> ParameterSnapshot:
        return ParameterSnapshot(
            params={k: v.copy() for k, v in self.params.items()},
            spec=self.spec.to_dict(),
            spec_hash=self.spec.hash,
            meta=dict(meta or {}),
        )

    def restore(self, snap: ParameterSnapshot, groups: Optional[Iterable[str]] = None) -> "DeepConvLstm":
        """Copy parameters back in; ``groups`` limits the restore to named groups.

        A full restore requires the exact producing spec; a partial restore
        only requires the named groups to match structurally.
        """
        if groups is None:
            if snap.spec_hash != self.spec.hash:
                raise GroupMismatchError(
                    "snapshot was produced by a different model spec; "
                    "restore named groups for partial transfer"
                )
            groups = self.spec.layer_groups
        groups = list(groups)
        unknown = [g for g in groups if g not in self.spec.layer_groups]
        if unknown:
            raise ValueError(f"unknown layer groups: {unknown}")
        for g in groups:
            keys = [k for k in self.params if group_of(k) == g]
            snap_keys = [k for k in snap.params if group_of(k) == g]
            if sorted(keys) != sorted(snap_keys):
                raise GroupMismatchError(f"group {g!r}: parameter names differ between snapshot and model")
            for k in keys:
                if snap.params[k].shape != self.params[k].shape:
                    raise GroupMismatchError(
                        f"group {g!r}: {k} has shape {snap.params[k].shape} in the snapshot "
                        f"but {self.params[k].shape} in the model"
                    )
        for g in groups:
            for k in [k for k in self.params if group_of(k) == g]:
                self.params[k] = snap.params[k].copy()
        return self

    def freeze(self, groups: Iterable[str]) -> "DeepConvLstm":
        groups = frozenset(groups)
        unknown = sorted(groups - set(self.spec.layer_groups))
        if unknown:
            raise ValueError(f"unknown layer groups: {unknown}")
        self.frozen = groups
        return self


# ---------------------------------------------------------------------------
# Adversarial domain head
# ---------------------------------------------------------------------------

class DannHead:
    """Domain classifier fed by the feature extractor through the GRL.

    The head owns its parameters (groups ``domain_recurrent`` and
    ``domain_output``); gradient reaches the feature extractor only through
    :func:`grl_backward`, so the head never shares parameters with the label
    predictor beyond the tapped conv groups.
    """

    def __init__(
        self,
        head_spec: DannHeadSpec,
        model_spec: ModelSpec,
        params: Optional[dict[str, np.ndarray]] = None,
        seed: int = 0,
    ):
        self.head_spec = head_spec
        self.model_spec = model_spec
        self.attach_index = head_spec.attach_index(model_spec)
        self.params = (
            params
            if params is not None
            else init_head_params(head_spec, model_spec, substream(seed, "domain-head-init"))
        )

    def _expected_tap_shape(self) -> tuple[int, int, int]:
        return (
            self.model_spec.conv_length_after(self.attach_index),
            self.model_spec.channels,
            self.model_spec.conv_maps,
        )

    def _check_features(self, feats: np.ndarray) -> None:
        if feats.ndim != 4 or feats.shape[1:] != self._expected_tap_shape():
            raise DimensionError(
                f"domain head expects features tapped after {self.head_spec.attach_point} "
                f"with shape [B, {self._expected_tap_shape()}]; got {feats.shape}"
            )

    def _forward(self, feats: np.ndarray):
        b, t = feats.shape[:2]
        x = grl_forward(feats).reshape(b, t, -1)
        h, lstm_cache = L.lstm_forward(
            x,
            self.params["domain_recurrent/Wx"],
            self.params["domain_recurrent/Wh"],
            self.params["domain_recurrent/b"],
        )
        last = h[:, -1]
        logits = L.dense_forward(last, self.params["domain_output/W"], self.params["domain_output/b"])
        return logits, (lstm_cache, last, feats.shape)

    def forward_domain(self, feats: np.ndarray) -> np.ndarray:
        """Domain probabilities [B, 2] from tapped features."""
        self._check_features(feats)
        logits, _ = self._forward(feats)
        return L.softmax(logits)

    def loss_and_grads(
        self, feats: np.ndarray, domains: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray], np.ndarray, np.ndarray]:
        """Domain cross-entropy, head gradients, and the raw tap gradient.

        Returns (loss, head_grads, grad_tap, predicted_domains).  grad_tap is
        the plain gradient of the domain loss w.r.t. the tapped features; the
        adversarial trainer routes it through :func:`grl_backward`, while the
        standalone domain-scorer pretrainer descends it directly.
        """
        self._check_features(feats)
        logits, (lstm_cache, last, feat_shape) = self._forward(feats)
        loss, grad_logits, probs = L.softmax_cross_entropy(logits, domains)
        preds = probs.argmax(axis=1)

        grads: dict[str, np.ndarray] = {}
        grad_last, grads["domain_output/W"], grads["domain_output/b"] = L.dense_backward(
            grad_logits, last, self.params["domain_output/W"]
        )
        b, t = feat_shape[:2]
        grad_h = np.zeros((b, t, self.head_spec.recurrent_units))
        grad_h[:, -1] = grad_last
        grad_x, grad_wx, grad_wh, grad_b = L.lstm_backward(
            grad_h, lstm_cache, self.params["domain_recurrent/Wx"], self.params["domain_recurrent/Wh"]
        )
        grads["domain_recurrent/Wx"] = grad_wx
        grads["domain_recurrent/Wh"] = grad_wh
        grads["domain_recurrent/b"] = grad_b
        return loss, grads, grad_x.reshape(feat_shape), preds
