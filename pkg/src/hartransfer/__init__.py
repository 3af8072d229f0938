"""Transfer-learning workbench for multimodal wearable human-activity recognition.

The library covers the full pipeline: sensor-recording ingestion and
windowing (:mod:`hartransfer.data`), a synthetic covariate-shift benchmark
generator (:mod:`hartransfer.synthgen`), a from-scratch ConvLSTM classifier
with a gradient-reversal domain head (:mod:`hartransfer.model`), evaluation
metrics (:mod:`hartransfer.metrics`), the four training procedures
(:mod:`hartransfer.trainers`), classical instance-reweighting references
(:mod:`hartransfer.classical`), and a config-driven experiment harness
(:mod:`hartransfer.harness`).
"""

from hartransfer.data import (
    ColumnManifest,
    DomainSplit,
    SensorRecording,
    SplitSpec,
    Window,
    WindowSet,
    build_split,
    clean_and_normalize,
    load_recording,
    segment,
)
from hartransfer.metrics import EvalReport, domain_accuracy, weighted_f1
from hartransfer.model import (
    DannHeadSpec,
    DeepConvLstm,
    ModelSpec,
    ParameterSnapshot,
    grl_backward,
    grl_forward,
)
from hartransfer.synthgen import ShiftSpec, default_fixture_spec, generate
from hartransfer.trainers import (
    AdaptiveLambdaController,
    RunRecord,
    TrainConfig,
    finetune,
    ganin_lambda,
    pretrain_domain_classifier,
    train_baseline,
    train_dann,
    train_loss_weighted,
    update_lambda,
)

__version__ = "0.1.0"

__all__ = [
    "ColumnManifest",
    "DomainSplit",
    "SensorRecording",
    "SplitSpec",
    "Window",
    "WindowSet",
    "build_split",
    "clean_and_normalize",
    "load_recording",
    "segment",
    "EvalReport",
    "domain_accuracy",
    "weighted_f1",
    "DannHeadSpec",
    "DeepConvLstm",
    "ModelSpec",
    "ParameterSnapshot",
    "grl_backward",
    "grl_forward",
    "ShiftSpec",
    "default_fixture_spec",
    "generate",
    "AdaptiveLambdaController",
    "RunRecord",
    "TrainConfig",
    "finetune",
    "ganin_lambda",
    "pretrain_domain_classifier",
    "train_baseline",
    "train_dann",
    "train_loss_weighted",
    "update_lambda",
    "__version__",
]
