"""From-scratch MLP classifiers used to exercise the evaluation pipeline.

A small fully connected network with rectifier hidden layers, a softmax
head, inverted dropout, and Adam on the cross-entropy loss. Everything is
seeded: dataset, weight init, shuffling, and dropout masks each consume a
dedicated stream, so identical seeds reproduce identical weights and
identical prediction tensors bit for bit.

Inverted dropout rescales surviving activations by 1/(1-p) at mask time,
so the deterministic forward pass needs no compensation and the expected
masked pre-activation equals the unmasked one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .aggregate import AggregationScheme, emcd_scheme
from .errors import TrainingDivergedError, ValidationError
from .tensor import PredictionTensor

MODEL_FORMAT = "uqeval-mlp"
MODEL_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    """Architecture: layer widths (input, hidden..., output), dropout, init seed."""

    layer_widths: tuple[int, ...]
    dropout_rate: float = 0.25
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 3:
            raise ValidationError("need at least one hidden layer")
        if widths[-1] < 2:
            raise ValidationError("output width must be at least 2 classes")
        if any(w < 1 for w in widths):
            raise ValidationError(f"layer widths must be positive, got {widths}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout rate {self.dropout_rate} outside [0, 1)")
        object.__setattr__(self, "layer_widths", widths)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 300
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        # zero is allowed so the identity-update property stays testable
        if self.learning_rate < 0:
            raise ValidationError("learning rate must be nonnegative")
        if self.epochs < 1:
            raise ValidationError("need at least one epoch")
        if self.batch_size < 1:
            raise ValidationError("batch size must be positive")


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    picked = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.clip(picked, 1e-300, 1.0))))


class Mlp:
    """Fully connected ReLU network with a softmax output head."""

    def __init__(self, spec: MlpSpec):
        self.spec = spec
        widths = spec.layer_widths
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(widths, widths[1:]):
            limit = math.sqrt(6.0 / fan_in)
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out, dtype=np.float64))
        self.loss_history: list[float] = []

    @property
    def n_classes(self) -> int:
        return self.spec.layer_widths[-1]

    def forward(self, x: np.ndarray, dropout_rng: np.random.Generator | None = None) -> np.ndarray:
        """Class probabilities; pass a generator to sample dropout masks."""
        return self._forward_cached(x, dropout_rng)[0][-1]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Deterministic forward pass (dropout off)."""
        return self.forward(np.asarray(x, dtype=np.float64))

    def _forward_cached(self, x, dropout_rng):
        x = np.asarray(x, dtype=np.float64)
        rate = self.spec.dropout_rate
        activations = [x]
        pre = []
        masks = []
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            if i == last:
                a = softmax(z)
                masks.append(None)
            else:
                a = np.maximum(z, 0.0)
                if dropout_rng is not None and rate > 0.0:
                    keep = dropout_rng.random(a.shape) >= rate
                    a = a * keep / (1.0 - rate)
                    masks.append(keep)
                else:
                    masks.append(None)
            activations.append(a)
        return activations, pre, masks

    def loss_and_gradients(self, x, y, dropout_rng=None):
        """Cross-entropy loss and its gradients for every weight and bias."""
        y = np.asarray(y, dtype=np.int64)
        activations, pre, masks = self._forward_cached(x, dropout_rng)
        probs = activations[-1]
        loss = cross_entropy(probs, y)
        n = len(y)
        rate = self.spec.dropout_rate

        delta = probs.copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n

        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = activations[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                upstream = delta @ self.weights[i].T
                if masks[i - 1] is not None:
                    upstream = upstream * masks[i - 1] / (1.0 - rate)
                delta = upstream * (pre[i - 1] > 0.0)
        return loss, grads_w, grads_b

    def parameters(self):
        return self.weights + self.biases


def fit_adam(model: Mlp, config: TrainConfig, x: np.ndarray, y: np.ndarray) -> None:
    """Train a model in place with fresh Adam state; appends epoch losses.

    Shuffling and dropout draw from streams derived from ``config.seed``, so
    the run is reproducible. Raises :class:`TrainingDivergedError` with the
    epoch index if the full-data loss goes non-finite.
    """
    ss = np.random.SeedSequence(config.seed)
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in ss.spawn(2))

    params = model.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0

    n = len(y)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            rng = dropout_rng if model.spec.dropout_rate > 0 else None
            _, grads_w, grads_b = model.loss_and_gradients(x[batch], y[batch], rng)
            grads = grads_w + grads_b
            step += 1
            bc1 = 1.0 - config.beta1 ** step
            bc2 = 1.0 - config.beta2 ** step
            for p, g, m_i, v_i in zip(params, grads, m, v):
                m_i *= config.beta1
                m_i += (1.0 - config.beta1) * g
                v_i *= config.beta2
                v_i += (1.0 - config.beta2) * np.square(g)
                p -= config.learning_rate * (m_i / bc1) / (np.sqrt(v_i / bc2) + config.eps)
        epoch_loss = cross_entropy(model.predict_proba(x), y)
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"loss became non-finite at epoch {epoch}", epoch=epoch
            )
        model.loss_history.append(epoch_loss)


def train_mlp(spec: MlpSpec, config: TrainConfig, data) -> Mlp:
    """Train a fresh model with Adam on cross entropy.

    ``data`` is either an ``(x, y)`` pair or a dataset exposing
    ``train_x``/``train_y``. Deterministic for fixed seeds.
    """
    x, y = _training_arrays(data)
    if x.shape[1] != spec.layer_widths[0]:
        raise ValidationError(
            f"input width {spec.layer_widths[0]} does not match data dim {x.shape[1]}"
        )
    if int(y.max()) >= spec.layer_widths[-1]:
        raise ValidationError("label outside the model's class range")

    model = Mlp(spec)
    model.loss_history.append(cross_entropy(model.predict_proba(x), y))
    fit_adam(model, config, x, y)
    return model


def _training_arrays(data):
    if hasattr(data, "train_x"):
        return np.asarray(data.train_x, dtype=np.float64), np.asarray(data.train_y, dtype=np.int64)
    x, y = data
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)


def _default_ids(n: int) -> tuple[str, ...]:
    return tuple(f"s{i:04d}" for i in range(n))


def mc_dropout_predict(model: Mlp, inputs, t_passes: int, seed: int,
                       sample_ids=None) -> PredictionTensor:
    """T stochastic forward passes with dropout kept on; one pass per mask draw."""
    if t_passes < 1:
        raise ValidationError("need at least one forward pass")
    inputs = np.asarray(inputs, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    use_dropout = model.spec.dropout_rate > 0
    passes = [
        model.forward(inputs, dropout_rng=rng if use_dropout else None)
        for _ in range(t_passes)
    ]
    probs = np.stack(passes, axis=1)
    ids = tuple(sample_ids) if sample_ids is not None else _default_ids(len(inputs))
    return PredictionTensor(probs, ids)


def ensemble_predict(models: list[Mlp], inputs, sample_ids=None) -> PredictionTensor:
    """One deterministic pass per member; the pass axis indexes members."""
    if not models:
        raise ValidationError("need at least one model")
    inputs = np.asarray(inputs, dtype=np.float64)
    probs = np.stack([m.predict_proba(inputs) for m in models], axis=1)
    ids = tuple(sample_ids) if sample_ids is not None else _default_ids(len(inputs))
    return PredictionTensor(probs, ids)


def emcd_predict(models: list[Mlp], inputs, t_per_member: int, seed: int,
                 sample_ids=None) -> tuple[PredictionTensor, AggregationScheme]:
    """Each member evaluated by MC dropout; returns the tensor and its partition.

    The pass axis is member-major: member k occupies passes
    ``k*t_per_member .. (k+1)*t_per_member - 1``.
    """
    if not models:
        raise ValidationError("need at least one model")
    if t_per_member < 1:
        raise ValidationError("need at least one pass per member")
    inputs = np.asarray(inputs, dtype=np.float64)
    ids = tuple(sample_ids) if sample_ids is not None else _default_ids(len(inputs))
    member_seqs = np.random.SeedSequence(seed).spawn(len(models))
    blocks = []
    for model, seq in zip(models, member_seqs):
        rng = np.random.default_rng(seq)
        use_dropout = model.spec.dropout_rate > 0
        blocks.extend(
            model.forward(inputs, dropout_rng=rng if use_dropout else None)
            for _ in range(t_per_member)
        )
    probs = np.stack(blocks, axis=1)
    scheme = emcd_scheme([t_per_member] * len(models))
    return PredictionTensor(probs, ids), scheme


@dataclass(frozen=True)
class EnsembleSpec:
    """Heterogeneous ensemble: depths and widths drawn from a master seed."""

    member_count: int = 30
    depth_choices: tuple[int, ...] = (2, 3)
    width_ranges: tuple[tuple[int, int], ...] = ((32, 64), (8, 32), (2, 8))
    dropout_rate: float = 0.25
    master_seed: int = 0

    def __post_init__(self):
        if self.member_count < 2:
            raise ValidationError("an ensemble needs at least 2 members")
        if not self.depth_choices:
            raise ValidationError("depth choices must be nonempty")
        if max(self.depth_choices) > len(self.width_ranges):
            raise ValidationError("not enough width ranges for the deepest member")
        for lo, hi in self.width_ranges:
            if lo < 1 or hi < lo:
                raise ValidationError(f"bad width range ({lo}, {hi})")


def draw_architectures(spec: EnsembleSpec, n_inputs: int, n_classes: int) -> list[MlpSpec]:
    """Member specs (widths and init seeds) derived from the master seed."""
    seqs = np.random.SeedSequence(spec.master_seed).spawn(1)
    rng = np.random.default_rng(seqs[0])
    members = []
    for _ in range(spec.member_count):
        depth = int(rng.choice(spec.depth_choices))
        hidden = [int(rng.integers(lo, hi + 1)) for lo, hi in spec.width_ranges[:depth]]
        init_seed = int(rng.integers(0, 2**63 - 1))
        members.append(
            MlpSpec(
                layer_widths=(n_inputs, *hidden, n_classes),
                dropout_rate=spec.dropout_rate,
                seed=init_seed,
            )
        )
    return members


def train_ensemble(spec: EnsembleSpec, config: TrainConfig, data,
                   n_classes: int | None = None) -> list[Mlp]:
    """Independently train every member with its own derived seeds."""
    x, y = _training_arrays(data)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    member_specs = draw_architectures(spec, x.shape[1], n_classes)
    train_seqs = np.random.SeedSequence(spec.master_seed).spawn(spec.member_count + 1)[1:]
    models = []
    for member_spec, seq in zip(member_specs, train_seqs):
        member_config = TrainConfig(
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            batch_size=config.batch_size,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            seed=int(seq.generate_state(1, dtype=np.uint64)[0] % (2**63)),
        )
        models.append(train_mlp(member_spec, member_config, (x, y)))
    return models


def save_model(model: Mlp, path, manifest_digest: str | None = None) -> None:
    """Versioned JSON weight file; floats render exactly (repr round-trip)."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layer_widths": list(model.spec.layer_widths),
        "dropout_rate": model.spec.dropout_rate,
        "init_seed": model.spec.seed,
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    if manifest_digest is not None:
        payload["manifest_digest"] = manifest_digest
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path) -> Mlp:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ValidationError(f"{path}: not a {MODEL_FORMAT} file")
    if payload.get("version") != MODEL_VERSION:
        raise ValidationError(f"{path}: unsupported version {payload.get('version')}")
    spec = MlpSpec(
        layer_widths=tuple(payload["layer_widths"]),
        dropout_rate=float(payload["dropout_rate"]),
        seed=int(payload.get("init_seed", 0)),
    )
    model = Mlp(spec)
    widths = spec.layer_widths
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        w = np.array(payload["weights"][i], dtype=np.float64)
        if w.size != fan_in * fan_out:
            raise ValidationError(f"{path}: weight block {i} has wrong size")
        model.weights[i] = w.reshape(fan_in, fan_out)
        b = np.array(payload["biases"][i], dtype=np.float64)
        if b.size != fan_out:
            raise ValidationError(f"{path}: bias block {i} has wrong size")
        model.biases[i] = b
    return model
