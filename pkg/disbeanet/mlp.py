"""
The DisBeaNet regressor: a fully connected network mapping the seven box features to
distance and bearing, with hand-written backpropagation, optimizers, training loop and
JSON model files.

Arrays follow the row convention: a batch ``x`` has shape (n, 7), layer ``l`` has a
weight matrix of shape (out, in) and computes ``act(x @ W.T + b)``.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from .dataset import (
    BearingEncoding,
    NormStats,
    decode_outputs,
    extract_features,
    features_matrix,
    normalize_features,
    normalize_targets,
    target_width,
    targets_matrix,
)
from .errors import ConfigError, DataValidationError, InputError, ModelLoadError, TrainingDivergedError
from .evaluation import circular_rmse_deg, rmse
from .geodesy import wrap_bearing
from .progress import TrainingProgress
from .utils.files import atomic_write_text, read_text
from .types import Detection, LabeledSample, RangeBearing, NUM_FEATURES

logger = logging.getLogger(__name__)

MODEL_VERSION = 1
FULL_EPOCH_BUDGET = 120_000  # long-run budget, opt-in via --epochs
DEFAULT_SWEEP_DEPTHS = (1, 2, 3, 5, 20)

Activation = Literal["tanh", "relu"]
OptimizerName = Literal["sgd", "adam"]


@dataclass(frozen=True)
class LayerSpec:
    """Layer widths from input to output plus the hidden activation.

    The output width is 2 (distance, bearing) or 3 (distance, sin, cos).
    """
    sizes: tuple[int, ...]
    activation: Activation = "tanh"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 3:
            raise ConfigError(f"need at least one hidden layer, got sizes {list(sizes)}")
        if sizes[0] != NUM_FEATURES:
            raise ConfigError(f"input width must be {NUM_FEATURES}, got {sizes[0]}")
        if sizes[-1] not in (2, 3):
            raise ConfigError(f"output width must be 2 or 3, got {sizes[-1]}")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"all layer widths must be >= 1, got {list(sizes)}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation: {self.activation}")

    @staticmethod
    def build(depth: int, width: int, activation: Activation = "tanh", outputs: int = 2) -> "LayerSpec":
        return LayerSpec((NUM_FEATURES, *([width] * depth), outputs), activation)

    @property
    def depth(self) -> int:
        return len(self.sizes) - 2


def _tanh_grad(z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return 1.0 - a * a


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _relu_grad(z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, 1.0, 0.0)


# activation -> (function, derivative given pre-activation and activation)
ACTIVATIONS = {
    "tanh": (np.tanh, _tanh_grad),
    "relu": (_relu, _relu_grad),
}


class TrainMetadata(BaseModel):
    seed: Optional[int] = None
    epochs_run: int = 0
    best_epoch: int = 0
    best_val_loss: Optional[float] = None
    final_train_loss: Optional[float] = None
    final_learning_rate: Optional[float] = None


@dataclass
class Network:
    """Weights, biases, normalization snapshot and training metadata."""
    spec: LayerSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    norm_stats: Optional[NormStats] = None
    metadata: TrainMetadata = field(default_factory=TrainMetadata)

    @property
    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays; updating them in place updates the network."""
        return self.weights + self.biases

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases


def init_network(spec: LayerSpec, seed: int) -> Network:
    """Zero-mean normal weights with standard deviation 1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.sizes[:-1], spec.sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(spec=spec, weights=weights, biases=biases, metadata=TrainMetadata(seed=seed))


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[np.newaxis, :]
    return x, single


def _forward_pass(net: Network, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Return pre-activations and activations of every layer (activations[0] is the input)."""
    act, _ = ACTIVATIONS[net.spec.activation]
    pre_activations = []
    activations = [x]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = activations[-1] @ w.T + b
        pre_activations.append(z)
        activations.append(z if i == last else act(z))
    return pre_activations, activations


def forward(net: Network, x) -> np.ndarray:
    """Network outputs for one normalized feature vector (7,) or a batch (n, 7)."""
    x, single = _as_batch(x)
    if x.shape[-1] != net.spec.sizes[0]:
        raise DataValidationError(f"expected {net.spec.sizes[0]} inputs, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise DataValidationError("non-finite network input")
    _, activations = _forward_pass(net, x)
    y = activations[-1]
    return y[0] if single else y


def loss(pred, target) -> float:
    """Mean squared error over all output components."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return float(np.mean((pred - target) ** 2))


def backward(net: Network, x, target) -> Gradients:
    """Exact gradients of ``loss(forward(net, x), target)`` for every parameter."""
    x, _ = _as_batch(x)
    target, _ = _as_batch(target)
    _, act_grad = ACTIVATIONS[net.spec.activation]
    pre_activations, activations = _forward_pass(net, x)

    grad_w = [np.zeros_like(w) for w in net.weights]
    grad_b = [np.zeros_like(b) for b in net.biases]
    # d(mean over n*m entries)/dy
    delta = 2.0 * (activations[-1] - target) / target.size
    for i in range(len(net.weights) - 1, -1, -1):
        grad_w[i] = delta.T @ activations[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * act_grad(pre_activations[i - 1], activations[i])
    return Gradients(weights=grad_w, biases=grad_b)


class SGD:
    """Minibatch gradient descent with classical momentum."""
    def __init__(self, learning_rate: float, momentum: float = 0.9):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self._velocity: Optional[list[np.ndarray]] = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self._velocity):
            v *= self.momentum
            v -= self.learning_rate * g
            p += v


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: Optional[list[np.ndarray]] = None
        self._v: Optional[list[np.ndarray]] = None
        self._t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._t += 1
        correction1 = 1.0 - self.beta1 ** self._t
        correction2 = 1.0 - self.beta2 ** self._t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class TrainConfig(BaseModel):
    """Hyperparameters of one training run."""
    epochs: int = Field(5000, ge=1)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(0.01, ge=0.0)
    optimizer: OptimizerName = "sgd"
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    patience: Optional[int] = Field(200, ge=1)  # None disables early stopping
    # progress means a validation loss below (1 - min_delta) times the last progress point
    min_delta: float = Field(1e-4, ge=0.0, lt=1.0)
    lr_patience: Optional[int] = Field(50, ge=1)  # epochs without progress before decaying
    lr_decay: float = Field(0.5, gt=0.0, le=1.0)
    min_learning_rate: float = Field(1e-6, ge=0.0)
    seed: int = 0
    depth: int = Field(3, ge=1)
    width: int = Field(16, ge=1)
    activation: Activation = "tanh"
    bearing_encoding: BearingEncoding = "degrees"
    train_fraction: float = Field(0.8, gt=0.0, lt=1.0)
    max_dt: float = Field(0.5, ge=0.0)

    def layer_spec(self, depth: Optional[int] = None) -> LayerSpec:
        return LayerSpec.build(
            depth=self.depth if depth is None else depth,
            width=self.width,
            activation=self.activation,
            outputs=target_width(self.bearing_encoding),
        )


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.learning_rate)
    return SGD(cfg.learning_rate, cfg.momentum)


@dataclass
class LossHistory:
    train: list[float] = field(default_factory=list)
    val: list[float] = field(default_factory=list)

    def append(self, train_loss: float, val_loss: float):
        self.train.append(train_loss)
        self.val.append(val_loss)

    def __len__(self):
        return len(self.train)


@dataclass
class TrainResult:
    network: Network
    history: LossHistory


def _normalized_arrays(net: Network, samples: Sequence[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    stats = net.norm_stats
    x = normalize_features(stats, features_matrix(samples))
    y = normalize_targets(stats, targets_matrix(samples, stats.bearing_encoding))
    return x, y


def train(
    net: Network,
    train_set: Sequence[LabeledSample],
    val_set: Sequence[LabeledSample],
    cfg: TrainConfig,
    show_progress: bool = False,
) -> TrainResult:
    """Train ``net`` in place and return it restored to the epoch with the best validation loss.

    Without a validation set the training loss selects the best epoch.
    """
    if not train_set:
        raise InputError("training set is empty")
    if net.norm_stats is None:
        raise InputError("network has no normalization statistics attached")
    if net.spec.sizes[-1] != net.norm_stats.num_targets:
        raise ConfigError(
            f"output width {net.spec.sizes[-1]} does not match {net.norm_stats.num_targets} normalized targets"
        )

    x, y = _normalized_arrays(net, train_set)
    x_val, y_val = _normalized_arrays(net, val_set) if val_set else (x, y)
    rng = np.random.default_rng(cfg.seed)
    optimizer = make_optimizer(cfg)
    params = net.parameters
    history = LossHistory()
    best_loss = math.inf
    best_params = [p.copy() for p in params]
    best_epoch = 0
    progress_loss = math.inf
    since_progress = 0
    since_decay = 0

    with TrainingProgress(show_progress, cfg.epochs) as progress:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(x))
            for start in range(0, len(x), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                grads = backward(net, x[batch], y[batch])
                optimizer.step(params, grads.parameters)

            train_loss = loss(forward(net, x), y) if net.is_finite() else math.nan
            val_loss = loss(forward(net, x_val), y_val) if net.is_finite() else math.nan
            if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
                raise TrainingDivergedError(epoch, train_loss)
            history.append(train_loss, val_loss)
            progress.update(train_loss, val_loss)

            if val_loss < best_loss:
                best_loss = val_loss
                best_epoch = epoch
                best_params = [p.copy() for p in params]
            if val_loss < progress_loss * (1.0 - cfg.min_delta):
                progress_loss = val_loss
                since_progress = since_decay = 0
            else:
                since_progress += 1
                since_decay += 1
            if cfg.lr_patience is not None and since_decay >= cfg.lr_patience:
                since_decay = 0
                if optimizer.learning_rate > cfg.min_learning_rate:
                    optimizer.learning_rate = max(optimizer.learning_rate * cfg.lr_decay, cfg.min_learning_rate)
                    logger.debug(f"Epoch {epoch}: validation loss plateaued, learning rate {optimizer.learning_rate:.3e}")
            if cfg.patience is not None and since_progress >= cfg.patience:
                logger.info(f"Early stopping at epoch {epoch}: no progress for {since_progress} epochs")
                progress.stop_early()
                break

    for p, best in zip(params, best_params):
        p[...] = best
    net.metadata = TrainMetadata(
        seed=cfg.seed,
        epochs_run=len(history),
        best_epoch=best_epoch,
        best_val_loss=best_loss,
        final_train_loss=history.train[-1],
        final_learning_rate=optimizer.learning_rate,
    )
    logger.info(
        f"Trained {len(history)} epochs, best validation loss {best_loss:.4e} at epoch {best_epoch}"
    )
    return TrainResult(network=net, history=history)


@dataclass(frozen=True)
class Prediction:
    """A predicted observation; ``clamped`` is set when a negative distance was raised to 0."""
    range_bearing: RangeBearing
    clamped: bool = False


def _to_prediction(distance_nm: float, bearing_deg: float) -> Prediction:
    clamped = distance_nm < 0.0
    if clamped:
        logger.warning(f"Negative predicted distance {distance_nm:.4f} NM clamped to 0")
        distance_nm = 0.0
    return Prediction(RangeBearing(float(distance_nm), wrap_bearing(float(bearing_deg))), clamped)


def predict_features(net: Network, features: np.ndarray) -> list[Prediction]:
    """Predictions for a raw (unnormalized) feature matrix of shape (n, 7)."""
    if net.norm_stats is None:
        raise InputError("network has no normalization statistics; train or load a model first")
    features = np.asarray(features, dtype=np.float64).reshape(-1, NUM_FEATURES)
    if len(features) == 0:
        return []
    outputs = forward(net, normalize_features(net.norm_stats, features))
    distance, bearing = decode_outputs(net.norm_stats, outputs)
    return [_to_prediction(d, b) for d, b in zip(distance, bearing)]


def predict(net: Network, d: Detection, frame_w: float, frame_h: float) -> Prediction:
    """Distance and bearing of one detected vessel."""
    return predict_features(net, extract_features(d, frame_w, frame_h).as_array())[0]


def predict_batch(net: Network, detections: Sequence[Detection], frame_w: float, frame_h: float) -> list[Prediction]:
    if not detections:
        return []
    features = np.stack([extract_features(d, frame_w, frame_h).as_array() for d in detections])
    return predict_features(net, features)


class ModelFile(BaseModel):
    """On-disk model representation."""
    version: int
    sizes: list[int]
    activation: Activation
    weights: list[list[list[float]]]
    biases: list[list[float]]
    norm_stats: Optional[NormStats]
    metadata: TrainMetadata


def dumps_model(net: Network) -> str:
    model_file = ModelFile(
        version=MODEL_VERSION,
        sizes=list(net.spec.sizes),
        activation=net.spec.activation,
        weights=[w.tolist() for w in net.weights],
        biases=[b.tolist() for b in net.biases],
        norm_stats=net.norm_stats,
        metadata=net.metadata,
    )
    # float repr is the shortest string that round-trips to the same double
    return json.dumps(model_file.model_dump(mode="json"), indent=1) + "\n"


def loads_model(text: str, path: Optional[Union[str, PathLike]] = None) -> Network:
    where = f"{path}: " if path is not None else ""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelLoadError(f"{where}invalid model JSON: {e}") from e
    if not isinstance(data, dict) or data.get("version") != MODEL_VERSION:
        version = data.get("version") if isinstance(data, dict) else None
        raise ModelLoadError(f"{where}unsupported model version {version!r} (expected {MODEL_VERSION})")
    try:
        model_file = ModelFile.model_validate(data)
    except ValidationError as e:
        raise ModelLoadError(f"{where}invalid model file: {e.errors()[0]['msg']}") from e
    try:
        spec = LayerSpec(tuple(model_file.sizes), model_file.activation)
    except ConfigError as e:
        raise ModelLoadError(f"{where}{e}") from e

    weights = [np.array(w, dtype=np.float64) for w in model_file.weights]
    biases = [np.array(b, dtype=np.float64) for b in model_file.biases]
    expected = list(zip(spec.sizes[1:], spec.sizes[:-1]))
    if len(weights) != len(expected) or len(biases) != len(expected):
        raise ModelLoadError(f"{where}expected {len(expected)} layers, got {len(weights)} weights/{len(biases)} biases")
    for i, ((fan_out, fan_in), w, b) in enumerate(zip(expected, weights, biases)):
        if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
            raise ModelLoadError(
                f"{where}layer {i} shape mismatch: weights {w.shape}, biases {b.shape}, expected ({fan_out}, {fan_in})"
            )
    net = Network(spec=spec, weights=weights, biases=biases, norm_stats=model_file.norm_stats,
                  metadata=model_file.metadata)
    if not net.is_finite():
        raise ModelLoadError(f"{where}model contains non-finite parameters")
    if net.norm_stats is not None and net.norm_stats.num_targets != spec.sizes[-1]:
        raise ModelLoadError(f"{where}normalization targets do not match output width {spec.sizes[-1]}")
    return net


def save_model(net: Network, path: Union[str, PathLike]):
    atomic_write_text(path, dumps_model(net))


def load_model(path: Union[str, PathLike]) -> Network:
    text = read_text(path, "model file", ModelLoadError)
    return loads_model(text, path)


@dataclass
class SweepRow:
    depth: int
    rmse_distance_nm: float
    rmse_bearing_deg: float
    best_val_loss: float
    epochs_run: int


def validation_rmse(net: Network, samples: Sequence[LabeledSample]) -> tuple[float, float]:
    """(distance RMSE in NM, circular bearing RMSE in degrees) of ``net`` on ``samples``."""
    predictions = predict_features(net, features_matrix(samples))
    distance = rmse([p.range_bearing.distance_nm for p in predictions], [s.target_distance_nm for s in samples])
    bearing = circular_rmse_deg(
        [p.range_bearing.bearing_deg for p in predictions], [s.target_bearing_deg for s in samples]
    )
    return distance, bearing


def hidden_layer_sweep(
    train_set: Sequence[LabeledSample],
    val_set: Sequence[LabeledSample],
    depths: Sequence[int],
    cfg: TrainConfig,
    norm_stats: NormStats,
    show_progress: bool = False,
) -> list[SweepRow]:
    """Train one model per hidden depth with identical seed and config."""
    if not depths:
        raise ConfigError("depth list must not be empty")
    eval_set = val_set if val_set else train_set
    rows = []
    for depth in depths:
        net = init_network(cfg.layer_spec(depth), cfg.seed)
        net.norm_stats = norm_stats
        try:
            result = train(net, train_set, val_set, cfg, show_progress=show_progress)
        except TrainingDivergedError as e:
            raise TrainingDivergedError(e.epoch, e.loss, depth=depth) from e
        distance, bearing = validation_rmse(result.network, eval_set)
        logger.info(f"Depth {depth}: distance RMSE {distance:.4f} NM, bearing RMSE {bearing:.3f} deg")
        rows.append(SweepRow(
            depth=depth,
            rmse_distance_nm=distance,
            rmse_bearing_deg=bearing,
            best_val_loss=result.network.metadata.best_val_loss,
            epochs_run=result.network.metadata.epochs_run,
        ))
    return rows

