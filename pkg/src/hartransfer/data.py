"""Sensor-recording ingestion, cleaning, windowing, and domain splits.

The on-disk input convention is the OPPORTUNITY ``.dat`` layout: one time
instant per row, whitespace-separated numeric columns, gesture labels in a
dedicated column.  A :class:`ColumnManifest` names the sensor columns, the
label column, and the raw-code -> class-id table, so other column layouts
are a manifest away.

All functions here are pure: they return new objects and never mutate their
inputs, which keeps recordings safe to process in parallel.
"""

import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from hartransfer.configio import ConfigError, content_hash, dump_yaml, load_yaml, reject_unknown_keys

log = logging.getLogger(__name__)

SOURCE, TARGET = "source", "target"
_DOMAIN_CODES = {SOURCE: 0, TARGET: 1}
_DOMAIN_NAMES = {0: SOURCE, 1: TARGET}

NULL_CLASS = 0


class DatasetParseError(ValueError):
    """A dataset file row could not be parsed; message names the line."""


class LabelMappingError(ValueError):
    """A raw label code has no entry in the manifest's code table."""


class MissingRunsError(ValueError):
    """A split references (subject, run) pairs that were not provided."""

    def __init__(self, missing: Sequence[tuple[int, str]]):
        self.missing = list(missing)
        pairs = ", ".join(f"S{s}-{r}" for s, r in self.missing)
        super().__init__(f"missing recordings: {pairs}")


class LabelsUnavailableError(RuntimeError):
    """Labels were requested from a window set whose labels are hidden."""


# ---------------------------------------------------------------------------
# Column manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnManifest:
    """Declarative description of a dataset file's column layout.

    ``delimiter=None`` splits rows on runs of whitespace (missing values must
    then appear as a ``NaN`` token); an explicit single-character delimiter
    preserves empty fields, which are treated as missing.
    """

    sensor_columns: tuple[int, ...]
    channel_names: tuple[str, ...]
    label_column: int
    label_codes: Mapping[int, int]  # raw dataset code -> class id 1..n_classes
    class_names: Mapping[int, str]  # class id -> display name
    n_columns: Optional[int] = None  # expected total columns per row; None = infer
    delimiter: Optional[str] = None
    missing_tokens: tuple[str, ...] = ("NaN", "nan", "")
    sample_rate: float = 30.0

    def __post_init__(self):
        if len(self.sensor_columns) != len(self.channel_names):
            raise ConfigError(["manifest: sensor_columns and channel_names differ in length"])
        if len(set(self.sensor_columns)) != len(self.sensor_columns):
            raise ConfigError(["manifest: duplicate sensor column indices"])
        ids = sorted(set(self.label_codes.values()))
        if ids != list(range(1, len(ids) + 1)):
            raise ConfigError([f"manifest: class ids must be contiguous 1..K, got {ids}"])
        if len(set(self.label_codes.values())) != len(self.label_codes):
            raise ConfigError(["manifest: label code table is not injective"])

    @property
    def n_channels(self) -> int:
        return len(self.sensor_columns)

    @property
    def n_classes(self) -> int:
        return len(set(self.label_codes.values()))

    def to_dict(self) -> dict:
        return {
            "sensor_columns": list(self.sensor_columns),
            "channel_names": list(self.channel_names),
            "label_column": self.label_column,
            "label_codes": {str(k): v for k, v in sorted(self.label_codes.items())},
            "class_names": {str(k): v for k, v in sorted(self.class_names.items())},
            "n_columns": self.n_columns,
            "delimiter": self.delimiter,
            "missing_tokens": list(self.missing_tokens),
            "sample_rate": self.sample_rate,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ColumnManifest":
        problems = reject_unknown_keys(doc, cls.__dataclass_fields__, "manifest")
        if problems:
            raise ConfigError(problems)
        return cls(
            sensor_columns=tuple(doc["sensor_columns"]),
            channel_names=tuple(doc["channel_names"]),
            label_column=int(doc["label_column"]),
            label_codes={int(k): int(v) for k, v in doc["label_codes"].items()},
            class_names={int(k): str(v) for k, v in doc.get("class_names", {}).items()},
            n_columns=doc.get("n_columns"),
            delimiter=doc.get("delimiter"),
            missing_tokens=tuple(doc.get("missing_tokens", ("NaN", "nan", ""))),
            sample_rate=float(doc.get("sample_rate", 30.0)),
        )

    def save(self, path: str | Path) -> None:
        dump_yaml(self.to_dict(), path)

    @classmethod
    def load(cls, path: str | Path) -> "ColumnManifest":
        return cls.from_dict(load_yaml(path))

    @property
    def hash(self) -> str:
        return content_hash(self.to_dict())


# The OPPORTUNITY challenge's standard body-worn selection: 113 sensor
# channels out of the 250-column .dat files, gesture labels in column 249
# (0-based; the ML_Both_Arms track).
_OPPORTUNITY_SENSOR_COLUMNS = (
    tuple(range(1, 46))
    + tuple(range(50, 59))
    + tuple(range(63, 72))
    + tuple(range(76, 85))
    + tuple(range(89, 98))
    + tuple(range(102, 134))
)

OPPORTUNITY_GESTURE_CODES = {
    406516: 1,   # Open Door 1
    406517: 2,   # Open Door 2
    404516: 3,   # Close Door 1
    404517: 4,   # Close Door 2
    406520: 5,   # Open Fridge
    404520: 6,   # Close Fridge
    406505: 7,   # Open Dishwasher
    404505: 8,   # Close Dishwasher
    406519: 9,   # Open Drawer 1
    404519: 10,  # Close Drawer 1
    406511: 11,  # Open Drawer 2
    404511: 12,  # Close Drawer 2
    406508: 13,  # Open Drawer 3
    404508: 14,  # Close Drawer 3
    408512: 15,  # Clean Table
    407521: 16,  # Drink from Cup
    405506: 17,  # Toggle Switch
}

OPPORTUNITY_CLASS_NAMES = {
    1: "Open Door 1", 2: "Open Door 2", 3: "Close Door 1", 4: "Close Door 2",
    5: "Open Fridge", 6: "Close Fridge", 7: "Open Dishwasher", 8: "Close Dishwasher",
    9: "Open Drawer 1", 10: "Close Drawer 1", 11: "Open Drawer 2", 12: "Close Drawer 2",
    13: "Open Drawer 3", 14: "Close Drawer 3", 15: "Clean Table", 16: "Drink from Cup",
    17: "Toggle Switch",
}


def opportunity_manifest() -> ColumnManifest:
    """Default manifest for OPPORTUNITY .dat files (113 body-worn channels)."""
    return ColumnManifest(
        sensor_columns=_OPPORTUNITY_SENSOR_COLUMNS,
        channel_names=tuple(f"c{i:03d}" for i in _OPPORTUNITY_SENSOR_COLUMNS),
        label_column=249,
        label_codes=OPPORTUNITY_GESTURE_CODES,
        class_names=OPPORTUNITY_CLASS_NAMES,
        n_columns=250,
        delimiter=None,
        sample_rate=30.0,
    )


# ---------------------------------------------------------------------------
# Recordings
# ---------------------------------------------------------------------------

@dataclass
class SensorRecording:
    """One subject-run's multichannel time series with per-instant labels.

    Missing sensor values are NaN until :func:`clean_and_normalize` fills
    them.  ``channel_mask[c]`` is False for channels that had to be dropped
    (no valid samples at all); their values are zeroed.
    """

    subject_id: int
    run_id: str
    sample_rate: float
    channels: np.ndarray  # [T, C] float64
    labels: np.ndarray  # [T] int64, 0 = null class
    channel_mask: np.ndarray  # [C] bool

    def __post_init__(self):
        if self.channels.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"channels rows ({self.channels.shape[0]}) != labels length ({self.labels.shape[0]})"
            )

    @property
    def n_instants(self) -> int:
        return self.channels.shape[0]

    @property
    def n_channels(self) -> int:
        return self.channels.shape[1]


_RUN_FROM_NAME = re.compile(r"S(\d+)-([A-Za-z]+\d*)")


def load_recording(
    path: str | Path,
    manifest: ColumnManifest,
    subject_id: Optional[int] = None,
    run_id: Optional[str] = None,
) -> SensorRecording:
    """Parse one dataset file into a raw recording (missing values kept as NaN).

    Subject and run default to the ``S<subject>-<run>`` filename convention
    when not given explicitly.
    """
    path = Path(path)
    if subject_id is None or run_id is None:
        m = _RUN_FROM_NAME.search(path.stem)
        if m is None:
            raise ValueError(
                f"cannot infer subject/run from filename {path.name!r}; pass subject_id and run_id"
            )
        subject_id = int(m.group(1)) if subject_id is None else subject_id
        run_id = m.group(2) if run_id is None else run_id

    rows: list[np.ndarray] = []
    labels: list[int] = []
    expected = manifest.n_columns
    missing = set(manifest.missing_tokens)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            tokens = line.split() if manifest.delimiter is None else line.split(manifest.delimiter)
            if expected is None:
                expected = len(tokens)
            if len(tokens) != expected:
                raise DatasetParseError(
                    f"{path.name}:{lineno}: expected {expected} columns, got {len(tokens)}"
                )
            try:
                values = np.array(
                    [
                        np.nan if tokens[c] in missing else float(tokens[c])
                        for c in manifest.sensor_columns
                    ],
                    dtype=np.float64,
                )
            except ValueError as exc:
                raise DatasetParseError(f"{path.name}:{lineno}: {exc}") from None
            raw_label = tokens[manifest.label_column]
            try:
                code = int(float(raw_label))
            except ValueError:
                raise DatasetParseError(
                    f"{path.name}:{lineno}: label column is not numeric: {raw_label!r}"
                ) from None
            if code == 0:
                labels.append(NULL_CLASS)
            elif code in manifest.label_codes:
                labels.append(manifest.label_codes[code])
            else:
                raise LabelMappingError(f"{path.name}:{lineno}: unknown label code {code}")
            rows.append(values)

    if not rows:
        raise DatasetParseError(f"{path.name}: file contains no data rows")
    channels = np.stack(rows)
    return SensorRecording(
        subject_id=subject_id,
        run_id=run_id,
        sample_rate=manifest.sample_rate,
        channels=channels,
        labels=np.asarray(labels, dtype=np.int64),
        channel_mask=np.ones(channels.shape[1], dtype=bool),
    )


def load_subject_runs(
    root: str | Path, manifest: ColumnManifest, subject_id: int, runs: Iterable[str]
) -> list[SensorRecording]:
    """Load ``S<subject>-<run>.dat`` for each run under ``root``."""
    root = Path(root)
    out = []
    for run in runs:
        path = root / f"S{subject_id}-{run}.dat"
        if not path.exists():
            raise FileNotFoundError(f"dataset file not found: {path}")
        out.append(load_recording(path, manifest, subject_id=subject_id, run_id=run))
    return out


# ---------------------------------------------------------------------------
# Cleaning and normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelStats:
    """Per-channel min/max used for [-1, 1] scaling."""

    minimum: np.ndarray  # [C]
    maximum: np.ndarray  # [C]

    @classmethod
    def from_recordings(cls, recordings: Sequence[SensorRecording]) -> "ChannelStats":
        """Pool min/max over recordings (which must already be gap-free)."""
        if not recordings:
            raise ValueError("need at least one recording to compute channel stats")
        lo = np.full(recordings[0].n_channels, np.inf)
        hi = np.full(recordings[0].n_channels, -np.inf)
        for rec in recordings:
            with np.errstate(invalid="ignore"):
                lo = np.minimum(lo, np.nanmin(rec.channels, axis=0))
                hi = np.maximum(hi, np.nanmax(rec.channels, axis=0))
        lo = np.where(np.isfinite(lo), lo, 0.0)
        hi = np.where(np.isfinite(hi), hi, 0.0)
        return cls(minimum=lo, maximum=hi)


def interpolate_missing(rec: SensorRecording) -> SensorRecording:
    """Fill NaNs by linear interpolation along time; boundary gaps take the
    nearest valid value.  Channels with no valid sample are masked and zeroed."""
    channels = rec.channels.copy()
    mask = rec.channel_mask.copy()
    t = np.arange(rec.n_instants)
    dead = []
    for c in range(rec.n_channels):
        if not mask[c]:
            channels[:, c] = 0.0
            continue
        col = channels[:, c]
        valid = np.isfinite(col)
        if not valid.any():
            mask[c] = False
            channels[:, c] = 0.0
            dead.append(c)
            continue
        if not valid.all():
            channels[:, c] = np.interp(t, t[valid], col[valid])
    if dead:
        log.warning(
            "recording S%s-%s: %d channel(s) entirely missing, masked out: %s",
            rec.subject_id, rec.run_id, len(dead), dead,
        )
    return replace(rec, channels=channels, channel_mask=mask)


def apply_channel_scaling(rec: SensorRecording, stats: Optional[ChannelStats] = None) -> SensorRecording:
    """Affinely map each unmasked channel into [-1, 1].

    With ``stats=None`` the recording's own min/max define the map (min -> -1,
    max -> +1; constant channels map to 0; channels already spanning exactly
    [-1, 1] are left untouched so the map is an exact fixed point).  With
    external ``stats`` the shared map is applied and the result is clipped to
    [-1, 1], so values outside the stats' range cannot leak out of bounds.
    """
    channels = rec.channels.copy()
    if stats is None:
        lo = channels.min(axis=0)
        hi = channels.max(axis=0)
        clip = False
    else:
        lo, hi = stats.minimum, stats.maximum
        clip = True
    for c in range(rec.n_channels):
        if not rec.channel_mask[c]:
            channels[:, c] = 0.0
            continue
        span = hi[c] - lo[c]
        if span == 0.0:
            channels[:, c] = 0.0
        elif stats is None and lo[c] == -1.0 and hi[c] == 1.0:
            continue
        else:
            channels[:, c] = (channels[:, c] - lo[c]) * (2.0 / span) - 1.0
    if clip:
        np.clip(channels, -1.0, 1.0, out=channels)
    return replace(rec, channels=channels)


def clean_and_normalize(rec: SensorRecording, stats: Optional[ChannelStats] = None) -> SensorRecording:
    """Interpolate missing values, then scale channels into [-1, 1]."""
    return apply_channel_scaling(interpolate_missing(rec), stats)


# ---------------------------------------------------------------------------
# Windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    """A single fixed-length segment; label comes from its last instant."""

    values: np.ndarray  # [L, C]
    label: Optional[int]
    domain: str
    origin: tuple[int, str, int]  # (subject_id, run_id, start_index)


class WindowSet:
    """Columnar batch of equally shaped windows; the training/eval currency.

    ``labels`` raises :class:`LabelsUnavailableError` when the set was
    stripped (the unlabeled-target contract); use :meth:`is_labeled` to probe.
    """

    def __init__(
        self,
        values: np.ndarray,  # [N, L, C]
        labels: Optional[np.ndarray],  # [N] int64 or None when hidden
        domains: np.ndarray,  # [N] uint8, 0=source 1=target
        subjects: np.ndarray,  # [N] int64
        runs: np.ndarray,  # [N] str
        starts: np.ndarray,  # [N] int64
        length: int,
        stride: int,
    ):
        if values.ndim != 3:
            raise ValueError(f"values must be [N, L, C], got shape {values.shape}")
        n = values.shape[0]
        for name, arr in (("domains", domains), ("subjects", subjects), ("runs", runs), ("starts", starts)):
            if arr.shape[0] != n:
                raise ValueError(f"{name} length {arr.shape[0]} != window count {n}")
        if labels is not None and labels.shape[0] != n:
            raise ValueError(f"labels length {labels.shape[0]} != window count {n}")
        if values.shape[1] != length:
            raise ValueError(f"values second axis {values.shape[1]} != declared length {length}")
        self.values = values
        self._labels = labels
        self.domains = domains
        self.subjects = subjects
        self.runs = runs
        self.starts = starts
        self.length = length
        self.stride = stride

    # -- basic protocol ------------------------------------------------------

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> Window:
        return Window(
            values=self.values[i],
            label=None if self._labels is None else int(self._labels[i]),
            domain=_DOMAIN_NAMES[int(self.domains[i])],
            origin=(int(self.subjects[i]), str(self.runs[i]), int(self.starts[i])),
        )

    @property
    def channel_count(self) -> int:
        return self.values.shape[2]

    @property
    def labels(self) -> np.ndarray:
        if self._labels is None:
            raise LabelsUnavailableError("labels are hidden on this window set")
        return self._labels

    def is_labeled(self) -> bool:
        return self._labels is not None

    # -- construction --------------------------------------------------------

    @classmethod
    def empty(cls, length: int, stride: int, channels: int) -> "WindowSet":
        return cls(
            values=np.zeros((0, length, channels)),
            labels=np.zeros(0, dtype=np.int64),
            domains=np.zeros(0, dtype=np.uint8),
            subjects=np.zeros(0, dtype=np.int64),
            runs=np.zeros(0, dtype="<U16"),
            starts=np.zeros(0, dtype=np.int64),
            length=length,
            stride=stride,
        )

    @classmethod
    def concat(cls, sets: Sequence["WindowSet"]) -> "WindowSet":
        if not sets:
            raise ValueError("cannot concatenate zero window sets")
        first = sets[0]
        for ws in sets[1:]:
            if (ws.length, ws.channel_count) != (first.length, first.channel_count):
                raise ValueError("window sets disagree on (length, channels)")
        labeled = all(ws.is_labeled() for ws in sets)
        return cls(
            values=np.concatenate([ws.values for ws in sets]),
            labels=np.concatenate([ws.labels for ws in sets]) if labeled else None,
            domains=np.concatenate([ws.domains for ws in sets]),
            subjects=np.concatenate([ws.subjects for ws in sets]),
            runs=np.concatenate([ws.runs for ws in sets]).astype("<U16"),
            starts=np.concatenate([ws.starts for ws in sets]),
            length=first.length,
            stride=first.stride,
        )

    def subset(self, indices: np.ndarray) -> "WindowSet":
        return WindowSet(
            values=self.values[indices],
            labels=None if self._labels is None else self._labels[indices],
            domains=self.domains[indices],
            subjects=self.subjects[indices],
            runs=self.runs[indices],
            starts=self.starts[indices],
            length=self.length,
            stride=self.stride,
        )

    def without_labels(self) -> "WindowSet":
        out = self.subset(np.arange(len(self)))
        out._labels = None
        return out

    def class_counts(self, n_classes: int) -> np.ndarray:
        return np.bincount(self.labels, minlength=n_classes + 1)[1:]

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path, manifest_hash: str = "") -> None:
        """Write the columnar arrays plus a YAML sidecar (lossless round trip)."""
        path = Path(path)
        arrays = {
            "values": self.values,
            "domains": self.domains,
            "subjects": self.subjects,
            "runs": self.runs.astype("<U16"),
            "starts": self.starts,
        }
        if self._labels is not None:
            arrays["labels"] = self._labels
        np.savez(path, **arrays)
        dump_yaml(
            {
                "length": self.length,
                "stride": self.stride,
                "channels": self.channel_count,
                "count": len(self),
                "labeled": self.is_labeled(),
                "manifest_hash": manifest_hash,
            },
            path.with_suffix(".meta.yaml"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "WindowSet":
        path = Path(path)
        meta = load_yaml(path.with_suffix(".meta.yaml"))
        with np.load(path if path.suffix == ".npz" else path.with_suffix(".npz")) as npz:
            return cls(
                values=npz["values"],
                labels=npz["labels"] if "labels" in npz else None,
                domains=npz["domains"],
                subjects=npz["subjects"],
                runs=npz["runs"],
                starts=npz["starts"],
                length=int(meta["length"]),
                stride=int(meta["stride"]),
            )


def segment(
    rec: SensorRecording,
    length: int = 24,
    stride: int = 12,
    drop_null: bool = True,
    domain: str = SOURCE,
) -> WindowSet:
    """Slice a recording into sliding windows labeled by their last instant.

    Windows start at 0, stride, 2*stride, ... while start + length <= T.
    Windows whose last-instant label is the null class are dropped when
    ``drop_null``.  A recording shorter than one window yields an empty set
    with a warning rather than an error.
    """
    if length < 1 or stride < 1:
        raise ValueError(f"window length and stride must be >= 1, got L={length} S={stride}")
    if domain not in _DOMAIN_CODES:
        raise ValueError(f"domain must be one of {sorted(_DOMAIN_CODES)}, got {domain!r}")
    t_total = rec.n_instants
    if length > t_total:
        log.warning(
            "recording S%s-%s has only %d instants (< window length %d): empty window set",
            rec.subject_id, rec.run_id, t_total, length,
        )
        return WindowSet.empty(length, stride, rec.n_channels)

    starts = np.arange(0, t_total - length + 1, stride)
    labels = rec.labels[starts + length - 1]
    if drop_null:
        keep = labels != NULL_CLASS
        starts, labels = starts[keep], labels[keep]
    values = np.stack([rec.channels[s : s + length] for s in starts]) if len(starts) else np.zeros(
        (0, length, rec.n_channels)
    )
    n = len(starts)
    return WindowSet(
        values=values,
        labels=labels.astype(np.int64),
        domains=np.full(n, _DOMAIN_CODES[domain], dtype=np.uint8),
        subjects=np.full(n, rec.subject_id, dtype=np.int64),
        runs=np.full(n, rec.run_id, dtype="<U16"),
        starts=starts.astype(np.int64),
        length=length,
        stride=stride,
    )


def expected_window_count(t_total: int, length: int, stride: int) -> int:
    """Closed-form sliding-window count before null filtering."""
    return max(0, (t_total - length) // stride + 1)


# ---------------------------------------------------------------------------
# Domain splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Which (subject, run) pairs feed each role of a domain split."""

    source_subject: int
    source_train_runs: tuple[str, ...]
    source_val_runs: tuple[str, ...]
    target_subject: int
    target_train_runs: tuple[str, ...]
    target_test_runs: tuple[str, ...]
    window_length: int = 24
    stride: int = 12

    def __post_init__(self):
        empty = [
            name
            for name in ("source_train_runs", "source_val_runs", "target_train_runs", "target_test_runs")
            if not getattr(self, name)
        ]
        if empty:
            raise ConfigError([f"split spec: {name} must not be empty" for name in empty])

    @classmethod
    def paper_default(cls, window_length: int = 24, stride: int = 12) -> "SplitSpec":
        """S3 ADL1-3 + Drill as source, S4 as target, ADL4/5 held out each side."""
        return cls(
            source_subject=3,
            source_train_runs=("ADL1", "ADL2", "ADL3", "Drill"),
            source_val_runs=("ADL4", "ADL5"),
            target_subject=4,
            target_train_runs=("ADL1", "ADL2", "ADL3", "Drill"),
            target_test_runs=("ADL4", "ADL5"),
            window_length=window_length,
            stride=stride,
        )

    def required_pairs(self) -> list[tuple[int, str]]:
        pairs = [(self.source_subject, r) for r in self.source_train_runs + self.source_val_runs]
        pairs += [(self.target_subject, r) for r in self.target_train_runs + self.target_test_runs]
        return pairs

    def to_dict(self) -> dict:
        return {
            "source_subject": self.source_subject,
            "source_train_runs": list(self.source_train_runs),
            "source_val_runs": list(self.source_val_runs),
            "target_subject": self.target_subject,
            "target_train_runs": list(self.target_train_runs),
            "target_test_runs": list(self.target_test_runs),
            "window_length": self.window_length,
            "stride": self.stride,
        }


@dataclass
class DomainSplit:
    """The four window sets of one transfer problem.

    ``target_train`` is unlabeled by construction; the labeled per-run target
    subsets in ``finetune_sets`` exist solely for the fine-tuning trainer,
    which is the one procedure entitled to labeled target data.
    """

    source_train: WindowSet
    source_val: WindowSet
    target_train: WindowSet
    target_test: WindowSet
    finetune_sets: dict[str, WindowSet] = field(default_factory=dict)
    description: dict = field(default_factory=dict)
    split_hash: str = ""

    def __post_init__(self):
        if self.target_train.is_labeled():
            raise ValueError("target_train must be unlabeled; use WindowSet.without_labels()")

    @property
    def n_classes(self) -> int:
        return int(self.description.get("n_classes", 17))


def build_split(
    recordings: Iterable[SensorRecording],
    spec: SplitSpec,
    n_classes: int = 17,
) -> DomainSplit:
    """Clean, normalize, window, and assemble the four split roles.

    Normalization statistics come from the source training runs only and are
    applied to every split, so nothing about the target distribution leaks
    into preprocessing.
    """
    by_key = {(rec.subject_id, rec.run_id): rec for rec in recordings}
    missing = [pair for pair in spec.required_pairs() if pair not in by_key]
    if missing:
        raise MissingRunsError(missing)

    filled = {key: interpolate_missing(by_key[key]) for key in set(spec.required_pairs())}
    stats = ChannelStats.from_recordings(
        [filled[(spec.source_subject, r)] for r in spec.source_train_runs]
    )

    def windows(subject: int, runs: Sequence[str], domain: str) -> WindowSet:
        parts = []
        for r in runs:
            rec = apply_channel_scaling(filled[(subject, r)], stats)
            parts.append(segment(rec, spec.window_length, spec.stride, drop_null=True, domain=domain))
        return WindowSet.concat(parts)

    source_train = windows(spec.source_subject, spec.source_train_runs, SOURCE)
    source_val = windows(spec.source_subject, spec.source_val_runs, SOURCE)
    target_train_labeled = windows(spec.target_subject, spec.target_train_runs, TARGET)
    target_test = windows(spec.target_subject, spec.target_test_runs, TARGET)

    finetune_sets = {
        run: windows(spec.target_subject, [run], TARGET) for run in spec.target_train_runs
    }
    description = {"split": spec.to_dict(), "n_classes": n_classes}
    return DomainSplit(
        source_train=source_train,
        source_val=source_val,
        target_train=target_train_labeled.without_labels(),
        target_test=target_test,
        finetune_sets=finetune_sets,
        description=description,
        split_hash=content_hash(description),
    )


def save_split(split: DomainSplit, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    split.source_train.save(directory / "source_train.npz")
    split.source_val.save(directory / "source_val.npz")
    split.target_train.save(directory / "target_train.npz")
    split.target_test.save(directory / "target_test.npz")
    for run, ws in split.finetune_sets.items():
        ws.save(directory / f"finetune_{run}.npz")
    dump_yaml(
        {
            "description": split.description,
            "split_hash": split.split_hash,
            "finetune_runs": sorted(split.finetune_sets),
        },
        directory / "split.yaml",
    )


def load_split(directory: str | Path) -> DomainSplit:
    directory = Path(directory)
    meta = load_yaml(directory / "split.yaml")
    finetune = {
        run: WindowSet.load(directory / f"finetune_{run}.npz") for run in meta.get("finetune_runs", [])
    }
    return DomainSplit(
        source_train=WindowSet.load(directory / "source_train.npz"),
        source_val=WindowSet.load(directory / "source_val.npz"),
        target_train=WindowSet.load(directory / "target_train.npz"),
        target_test=WindowSet.load(directory / "target_test.npz"),
        finetune_sets=finetune,
        description=meta.get("description", {}),
        split_hash=meta.get("split_hash", ""),
    )
