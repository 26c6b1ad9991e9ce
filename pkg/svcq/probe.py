"""Linear probes (an affine layer with softmax or sigmoid) on frozen inputs.

Training is plain mini-batch gradient descent from zero initialization with
early stopping on the validation loss. Metrics are computed with
``sklearn.metrics``.
"""

import json as _json
import logging as _logging
from dataclasses import dataclass as _dataclass
from dataclasses import field as _field
from enum import Enum as _Enum
from typing import Optional as _Optional
from typing import Tuple as _Tuple

import numpy as _np
from sklearn.metrics import accuracy_score as _accuracy_score
from sklearn.metrics import f1_score as _f1_score
from sklearn.metrics import precision_recall_fscore_support as _precision_recall_fscore_support

from .errors import DimensionMismatch as _DimensionMismatch
from .errors import EmptyInput as _EmptyInput
from .errors import InvalidValue as _InvalidValue
from .errors import LabelOutOfRange as _LabelOutOfRange

_LOGGER = _logging.getLogger(__name__)

DEFAULT_LEARNING_RATE = 0.05
DEFAULT_EPOCHS = 100
DEFAULT_BATCH_SIZE = 64
DEFAULT_PATIENCE = 10

_FINITE_DIFFERENCE_STEP = 1e-5


class Task(_Enum):
    Multiclass = "multiclass"
    Binary = "binary"

    def __str__(self):
        return self.value

    @classmethod
    def _missing_(cls, value):
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        return None


@_dataclass(frozen=True, eq=False)
class LinearProbe:
    """C x D weights and a C-vector bias; a binary probe has a single output."""

    weights: _np.ndarray
    bias: _np.ndarray
    task: Task = Task.Multiclass

    def __post_init__(self):
        task = Task(self.task)
        weights = _np.array(self.weights, dtype=_np.float64, copy=True)
        bias = _np.array(self.bias, dtype=_np.float64, copy=True)
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise _InvalidValue(
                f"LinearProbe: weights {weights.shape} and bias {bias.shape} do not fit"
            )
        if task == Task.Binary and weights.shape[0] != 1:
            raise _InvalidValue("LinearProbe: a binary probe has exactly one output")
        if task == Task.Multiclass and weights.shape[0] < 2:
            raise _InvalidValue("LinearProbe: a multiclass probe needs at least two classes")
        if not (_np.all(_np.isfinite(weights)) and _np.all(_np.isfinite(bias))):
            raise _InvalidValue("LinearProbe: parameters must be finite")
        weights.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "task", task)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @classmethod
    def zeros(cls, task, num_classes: int, dim: int):
        task = Task(task)
        outputs = 1 if task == Task.Binary else num_classes
        return cls(_np.zeros((outputs, dim)), _np.zeros(outputs), task)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def num_classes(self) -> int:
        return 2 if self.task == Task.Binary else self.weights.shape[0]

    def logits(self, inputs) -> _np.ndarray:
        inputs = _np.asarray(inputs, dtype=_np.float64)
        if inputs.shape[-1] != self.dim:
            raise _DimensionMismatch(
                f"probe has dim {self.dim}, inputs have dim {inputs.shape[-1]}",
                expected=self.dim,
                actual=inputs.shape[-1],
            )
        return inputs @ self.weights.T + self.bias

    def probabilities(self, inputs) -> _np.ndarray:
        """Softmax rows for a multiclass probe, sigmoid column for a binary one."""
        logits = self.logits(inputs)
        if self.task == Task.Binary:
            return _sigmoid(logits)
        return _softmax(logits)

    def predict(self, inputs) -> _np.ndarray:
        logits = self.logits(inputs)
        if self.task == Task.Binary:
            # sigmoid(z) >= 0.5 exactly when z >= 0
            return (logits[:, 0] >= 0.0).astype(_np.int64)
        return _np.argmax(logits, axis=1).astype(_np.int64)

    def to_dict(self) -> dict:
        return {
            "task": str(self.task),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(_np.asarray(data["weights"]), _np.asarray(data["bias"]), data["task"])

    def __eq__(self, other):
        if not isinstance(other, LinearProbe):
            return NotImplemented
        return (
            self.task == other.task
            and _np.array_equal(self.weights, other.weights)
            and _np.array_equal(self.bias, other.bias)
        )

    __hash__ = None


@_dataclass(frozen=True, eq=False)
class ProbeDataset:
    """N x D inputs with one integer label per row."""

    inputs: _np.ndarray
    labels: _np.ndarray
    split: str = "train"

    def __post_init__(self):
        inputs = _np.array(self.inputs, dtype=_np.float64, copy=True)
        labels = _np.asarray(self.labels)
        if inputs.ndim != 2 or inputs.shape[0] < 1 or inputs.shape[1] < 1:
            raise _EmptyInput(f"ProbeDataset[{self.split}]: need an N x D matrix with N >= 1")
        if labels.shape != (inputs.shape[0],):
            raise _InvalidValue(
                f"ProbeDataset[{self.split}]: {labels.shape[0] if labels.ndim else 0} labels"
                f" for {inputs.shape[0]} rows"
            )
        if not _np.all(_np.isfinite(inputs)):
            raise _InvalidValue(f"ProbeDataset[{self.split}]: inputs must be finite")
        if labels.size and not _np.all(_np.equal(_np.mod(labels, 1), 0)):
            raise _LabelOutOfRange(f"ProbeDataset[{self.split}]: labels must be integers")
        labels = labels.astype(_np.int64)
        if labels.min() < 0:
            raise _LabelOutOfRange(f"ProbeDataset[{self.split}]: negative label {labels.min()}")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def check_labels(self, task, num_classes: int):
        task = Task(task)
        limit = 2 if task == Task.Binary else num_classes
        if self.labels.max() >= limit:
            raise _LabelOutOfRange(
                f"ProbeDataset[{self.split}]: label {self.labels.max()} outside [0, {limit})"
                f" for a {task} task"
            )


@_dataclass(frozen=True)
class ProbeHyperParams:
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    patience: int = DEFAULT_PATIENCE
    class_weights: _Optional[_Tuple[float, ...]] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise _InvalidValue(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0 or self.batch_size < 1 or self.patience < 1:
            raise _InvalidValue("need epochs >= 0, batch_size >= 1 and patience >= 1")


@_dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float
    valid_accuracy: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "valid_loss": self.valid_loss,
            "valid_accuracy": self.valid_accuracy,
        }


@_dataclass(frozen=True)
class TrainingLog:
    epochs: _Tuple[EpochRecord, ...] = ()
    best_epoch: int = 0
    stopped_early: bool = False

    def __len__(self):
        return len(self.epochs)

    @property
    def train_losses(self):
        return [record.train_loss for record in self.epochs]

    def to_dict(self) -> dict:
        return {
            "epochs": [record.to_dict() for record in self.epochs],
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
        }


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exponentials = _np.exp(shifted)
    return exponentials / exponentials.sum(axis=1, keepdims=True)


def _sigmoid(logits):
    return _np.exp(-_np.logaddexp(0.0, -logits))


def _example_weights(labels, class_weights):
    if class_weights is None:
        return _np.ones(labels.shape[0])
    class_weights = _np.asarray(class_weights, dtype=_np.float64)
    if labels.max() >= class_weights.shape[0]:
        raise _LabelOutOfRange(
            f"{class_weights.shape[0]} class weights given, label {labels.max()} found"
        )
    return class_weights[labels]


def loss_and_gradients(task, weights, bias, inputs, labels, class_weights=None):
    """Mean cross-entropy (softmax) or binary cross-entropy (sigmoid) and its gradients.

    Returns
    -------
    tuple
        ``(loss, weight_gradient, bias_gradient)`` with gradients shaped like
        ``weights`` and ``bias``.
    """
    task = Task(task)
    inputs = _np.asarray(inputs, dtype=_np.float64)
    labels = _np.asarray(labels, dtype=_np.int64)
    example_weights = _example_weights(labels, class_weights)
    normalizer = example_weights.sum()
    logits = inputs @ weights.T + bias

    if task == Task.Binary:
        z = logits[:, 0]
        losses = _np.logaddexp(0.0, z) - labels * z
        delta = ((_sigmoid(z) - labels) * example_weights / normalizer)[:, None]
    else:
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_normalizers = _np.log(_np.exp(shifted).sum(axis=1))
        losses = log_normalizers - shifted[_np.arange(labels.shape[0]), labels]
        delta = _softmax(logits)
        delta[_np.arange(labels.shape[0]), labels] -= 1.0
        delta *= (example_weights / normalizer)[:, None]

    loss = float((losses * example_weights).sum() / normalizer)
    return loss, delta.T @ inputs, delta.sum(axis=0)


def _dataset_loss(probe, dataset, class_weights):
    loss, _, _ = loss_and_gradients(
        probe.task, probe.weights, probe.bias, dataset.inputs, dataset.labels, class_weights
    )
    return loss


def _resolve_num_classes(task, train, valid):
    if task == Task.Binary:
        return 2
    return max(int(train.labels.max()) + 1, int(valid.labels.max()) + 1, 2)


def train_probe(train: ProbeDataset, valid: ProbeDataset, task, hyper=ProbeHyperParams(), num_classes=None):
    """Fit a linear probe by mini-batch gradient descent with early stopping.

    The parameters of the epoch with the lowest validation loss are returned,
    along with a :class:`TrainingLog` of every epoch run. Shuffling is driven by
    ``hyper.seed`` only, so training is deterministic.
    """
    task = Task(task)
    if train.dim != valid.dim:
        raise _DimensionMismatch(
            f"train inputs have dim {train.dim}, validation inputs {valid.dim}",
            expected=train.dim,
            actual=valid.dim,
        )
    num_classes = num_classes or _resolve_num_classes(task, train, valid)
    train.check_labels(task, num_classes)
    valid.check_labels(task, num_classes)

    probe = LinearProbe.zeros(task, num_classes, train.dim)
    if hyper.epochs == 0:
        return probe, TrainingLog()

    weights = _np.array(probe.weights)
    bias = _np.array(probe.bias)
    rng = _np.random.default_rng(hyper.seed)
    best_probe, best_loss, best_epoch = probe, _np.inf, 0
    stale = 0
    records = []
    stopped_early = False

    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(len(train))
        for start in range(0, len(train), hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            _, weight_gradient, bias_gradient = loss_and_gradients(
                task,
                weights,
                bias,
                train.inputs[batch],
                train.labels[batch],
                hyper.class_weights,
            )
            weights -= hyper.learning_rate * weight_gradient
            bias -= hyper.learning_rate * bias_gradient

        current = LinearProbe(weights, bias, task)
        valid_loss = _dataset_loss(current, valid, hyper.class_weights)
        record = EpochRecord(
            epoch,
            _dataset_loss(current, train, hyper.class_weights),
            valid_loss,
            float(_accuracy_score(valid.labels, current.predict(valid.inputs))),
        )
        records.append(record)
        _LOGGER.debug(
            "epoch %d: train loss %.6f, valid loss %.6f, valid accuracy %.4f",
            epoch,
            record.train_loss,
            record.valid_loss,
            record.valid_accuracy,
        )

        if valid_loss < best_loss:
            best_probe, best_loss, best_epoch = current, valid_loss, epoch
            stale = 0
        else:
            stale += 1
            if stale >= hyper.patience:
                stopped_early = True
                _LOGGER.info("Stopping early after epoch %d (best %d)", epoch, best_epoch)
                break

    return best_probe, TrainingLog(tuple(records), best_epoch, stopped_early)


@_dataclass(frozen=True)
class MetricsReport:
    task: Task
    num_examples: int
    accuracy: float
    binary_f1: _Optional[float] = None
    precision: _Optional[float] = None
    recall: _Optional[float] = None
    per_class_f1: _Optional[_Tuple[float, ...]] = None
    micro_f1: _Optional[float] = None
    class_names: _Tuple[str, ...] = _field(default=())

    @property
    def headline(self):
        """Binary F-score for binary tasks, accuracy otherwise."""
        if self.task == Task.Binary:
            return "binary_f1", self.binary_f1
        return "accuracy", self.accuracy

    def to_dict(self) -> dict:
        data = {
            "task": str(self.task),
            "num_examples": self.num_examples,
            "accuracy": self.accuracy,
        }
        if self.task == Task.Binary:
            data.update(
                binary_f1=self.binary_f1, precision=self.precision, recall=self.recall
            )
        else:
            names = self.class_names or tuple(str(c) for c in range(len(self.per_class_f1)))
            data["per_class_f1"] = dict(zip(names, self.per_class_f1))
            data["micro_f1"] = self.micro_f1
        return data

    def to_json(self) -> str:
        return _json.dumps(self.to_dict(), indent=2, sort_keys=True)


def metrics_from_predictions(task, labels, predictions, num_classes=2, class_names=()) -> MetricsReport:
    """Accuracy plus binary or per-class F1; F1 is 0 where precision + recall is 0."""
    task = Task(task)
    labels = _np.asarray(labels, dtype=_np.int64)
    predictions = _np.asarray(predictions, dtype=_np.int64)
    if labels.shape != predictions.shape or labels.size == 0:
        raise _EmptyInput("need as many predictions as labels, at least one")
    class_names = tuple(class_names)
    if task == Task.Binary:
        num_classes = 2
    if class_names and len(class_names) != num_classes:
        raise _InvalidValue(f"{len(class_names)} class names for {num_classes} classes")
    classes = list(range(num_classes))
    precision, recall, f1, _ = _precision_recall_fscore_support(
        labels, predictions, labels=classes, average=None, zero_division=0
    )
    accuracy = float(_accuracy_score(labels, predictions))
    if task == Task.Binary:
        return MetricsReport(
            task,
            labels.shape[0],
            accuracy,
            binary_f1=float(f1[1]),
            precision=float(precision[1]),
            recall=float(recall[1]),
            class_names=class_names,
        )
    micro = _f1_score(labels, predictions, labels=classes, average="micro", zero_division=0)
    return MetricsReport(
        task,
        labels.shape[0],
        accuracy,
        per_class_f1=tuple(float(value) for value in f1),
        micro_f1=float(micro),
        class_names=class_names,
    )


def evaluate(probe: LinearProbe, test: ProbeDataset, class_names=()) -> MetricsReport:
    if test.dim != probe.dim:
        raise _DimensionMismatch(
            f"probe has dim {probe.dim}, test inputs have dim {test.dim}",
            expected=probe.dim,
            actual=test.dim,
        )
    test.check_labels(probe.task, probe.num_classes)
    return metrics_from_predictions(
        probe.task, test.labels, probe.predict(test.inputs), probe.num_classes, class_names
    )


def analytic_gradients(task, probe: LinearProbe, batch: ProbeDataset):
    _, weight_gradient, bias_gradient = loss_and_gradients(
        task, probe.weights, probe.bias, batch.inputs, batch.labels
    )
    return weight_gradient, bias_gradient


def gradient_check(task, probe: LinearProbe, batch: ProbeDataset) -> float:
    """Largest relative difference between analytic and central-difference gradients.

    The relative error of a parameter is ``|a - n| / max(|a|, |n|, 1e-3)``.
    """
    task = Task(task)
    weight_gradient, bias_gradient = analytic_gradients(task, probe, batch)
    parameters = [_np.array(probe.weights), _np.array(probe.bias)]
    analytic = [weight_gradient, bias_gradient]
    worst = 0.0

    def _loss():
        loss, _, _ = loss_and_gradients(
            task, parameters[0], parameters[1], batch.inputs, batch.labels
        )
        return loss

    for parameter, gradient in zip(parameters, analytic):
        for index in _np.ndindex(parameter.shape):
            original = parameter[index]
            parameter[index] = original + _FINITE_DIFFERENCE_STEP
            upper = _loss()
            parameter[index] = original - _FINITE_DIFFERENCE_STEP
            lower = _loss()
            parameter[index] = original
            numeric = (upper - lower) / (2.0 * _FINITE_DIFFERENCE_STEP)
            exact = gradient[index]
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-3)
            worst = max(worst, error)
    return worst
