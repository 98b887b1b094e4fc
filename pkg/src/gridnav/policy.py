"""Linear softmax action policy over annotation-derived features.

Three feature modes of increasing structure:

* ``pure_text``: detected-object counts, target one-hot, previous action,
  pitch, and normalized step index.
* ``cot``: adds the annotator's suggested action.
* ``hcot``: additionally scales object counts by their relevance to the
  target and appends the inferred room, its confidence, and the best
  relevance score.

Training is plain minibatch SGD with momentum on either the mean cross
entropy or a confidence-weighted variant that downweights steps the
annotator was unsure about.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDatasetError, TrainingDivergedError, VocabularyError
from .sim import Action
from .world import CategoryVocab

MODEL_FORMAT_VERSION = 1
N_ACTIONS = len(Action)
MODES = ("pure_text", "cot", "hcot")

DEFAULT_LEARNING_RATE = 0.05
DEFAULT_MOMENTUM = 0.9
DEFAULT_BATCH_SIZE = 64
DEFAULT_EPOCHS = 30
DEFAULT_ALPHA = 10.0
DEFAULT_BETA = 0.5


@dataclass
class TrainConfig:
    mode: str = "hcot"
    loss: str = "ce"
    learning_rate: float = DEFAULT_LEARNING_RATE
    momentum: float = DEFAULT_MOMENTUM
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = DEFAULT_EPOCHS
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    seed: int = 0


@dataclass
class PolicyParams:
    weights: np.ndarray  # (N_ACTIONS, D)
    bias: np.ndarray  # (N_ACTIONS,)
    mode: str
    vocab_fingerprint: str

    @property
    def feature_dim(self) -> int:
        return int(self.weights.shape[1])


def feature_dim(mode: str, vocab: CategoryVocab) -> int:
    n = len(vocab.categories)
    base = n + n + N_ACTIONS + 1 + 1
    if mode == "pure_text":
        return base
    if mode == "cot":
        return base + N_ACTIONS
    if mode == "hcot":
        return base + N_ACTIONS + len(vocab.room_types) + 1 + 1
    raise ValueError(f"unknown feature mode: {mode!r}")


def featurize(record, mode: str, vocab: CategoryVocab) -> np.ndarray:
    """Map one QA record to a float64 feature vector for `mode`."""
    if mode not in MODES:
        raise ValueError(f"unknown feature mode: {mode!r}")
    n = len(vocab.categories)
    bag = np.zeros(n, dtype=np.float64)
    for sub in record.subgoals:
        bag[vocab.category_index(sub.category)] += 1.0
    if mode == "hcot":
        for category, score in record.relevance_scores.items():
            bag[vocab.category_index(category)] *= score

    target = np.zeros(n, dtype=np.float64)
    target[vocab.category_index(record.target_category)] = 1.0

    last = np.zeros(N_ACTIONS, dtype=np.float64)
    if record.last_action is not None:
        last[int(record.last_action)] = 1.0

    parts = [bag, target, last, [float(record.pitch)], [record.step_index / 500.0]]

    if mode in ("cot", "hcot"):
        suggested = np.zeros(N_ACTIONS, dtype=np.float64)
        suggested[int(record.suggested_action)] = 1.0
        parts.append(suggested)
    if mode == "hcot":
        room = np.zeros(len(vocab.room_types), dtype=np.float64)
        room[vocab.room_index(record.inferred_room)] = 1.0
        parts.append(room)
        parts.append([record.room_confidence])
        best = max(record.relevance_scores.values()) if record.relevance_scores else 0.0
        parts.append([best])

    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def build_dataset(records, mode: str, vocab: CategoryVocab):
    """Stack labeled records into (X, y, confidence) arrays."""
    feats, labels, confs = [], [], []
    for record in records:
        if record.label_action is None:
            continue
        feats.append(featurize(record, mode, vocab))
        labels.append(int(record.label_action))
        confs.append(1.0 if record.confidence is None else float(record.confidence))
    if not feats:
        raise EmptyDatasetError("no labeled QA records to train on")
    return (
        np.stack(feats),
        np.asarray(labels, dtype=np.int64),
        np.asarray(confs, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# Losses


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _unpack(params_vec: np.ndarray, dim: int):
    w = params_vec[: N_ACTIONS * dim].reshape(N_ACTIONS, dim)
    b = params_vec[N_ACTIONS * dim :]
    return w, b


def ce_loss(params_vec: np.ndarray, features: np.ndarray, labels: np.ndarray):
    """Mean cross entropy and its gradient w.r.t. the flat parameter vector."""
    n, dim = features.shape
    w, b = _unpack(params_vec, dim)
    logits = features @ w.T + b
    logp = _log_softmax(logits)
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grad = np.concatenate([(dlogits.T @ features).ravel(), dlogits.sum(axis=0)])
    return float(loss), grad


def confidence_weights(confidence: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Logistic gate turning annotation confidence into sample weights."""
    return 1.0 / (1.0 + np.exp(-alpha * (confidence - beta)))


def adaptive_loss(
    params_vec: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    confidence: np.ndarray,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
):
    """Confidence-weighted cross entropy: each sample's CE term is scaled by
    a logistic weight of its annotation confidence. Weights are treated as
    constants, so with all weights at 1 this reduces to `ce_loss` exactly."""
    n, dim = features.shape
    w, b = _unpack(params_vec, dim)
    weights = confidence_weights(np.asarray(confidence, dtype=np.float64), alpha, beta)
    logits = features @ w.T + b
    logp = _log_softmax(logits)
    loss = float((-logp[np.arange(n), labels] * weights).mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits *= weights[:, None] / n
    grad = np.concatenate([(dlogits.T @ features).ravel(), dlogits.sum(axis=0)])
    return loss, grad


# ---------------------------------------------------------------------------
# Training


def train(
    records,
    mode: str,
    vocab: CategoryVocab,
    config: TrainConfig | None = None,
    log=None,
) -> tuple[PolicyParams, list[dict]]:
    """Fit the linear policy with minibatch SGD plus momentum.

    Returns the fitted parameters and a per-epoch history of training loss
    and accuracy. Raises TrainingDivergedError if the loss stops being
    finite.
    """
    if config is None:
        config = TrainConfig(mode=mode)
    features, labels, confidence = build_dataset(records, mode, vocab)
    n, dim = features.shape
    rng = np.random.default_rng(config.seed)
    params = np.zeros(N_ACTIONS * dim + N_ACTIONS, dtype=np.float64)
    velocity = np.zeros_like(params)

    history: list[dict] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            if config.loss == "adaptive":
                loss, grad = adaptive_loss(
                    params,
                    features[batch],
                    labels[batch],
                    confidence[batch],
                    config.alpha,
                    config.beta,
                )
            elif config.loss == "ce":
                loss, grad = ce_loss(params, features[batch], labels[batch])
            else:
                raise ValueError(f"unknown loss: {config.loss!r}")
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}: {loss}"
                )
            velocity = config.momentum * velocity - config.learning_rate * grad
            params = params + velocity

        epoch_loss, _ = ce_loss(params, features, labels)
        weights, bias = _unpack(params, dim)
        predicted = np.argmax(features @ weights.T + bias, axis=1)
        accuracy = float((predicted == labels).mean())
        history.append({"epoch": epoch, "loss": epoch_loss, "accuracy": accuracy})
        if log is not None:
            log(f"epoch {epoch:3d}  loss {epoch_loss:.4f}  accuracy {accuracy:.3f}")

    weights, bias = _unpack(params, dim)
    return (
        PolicyParams(
            weights=weights.copy(),
            bias=bias.copy(),
            mode=mode,
            vocab_fingerprint=vocab.fingerprint(),
        ),
        history,
    )


def predict(params: PolicyParams, features: np.ndarray) -> Action:
    """Greedy action for one feature vector; ties break to the lowest
    action ordinal."""
    if features.shape[-1] != params.feature_dim:
        raise VocabularyError(
            f"feature length {features.shape[-1]} does not match model "
            f"dimension {params.feature_dim}"
        )
    logits = params.weights @ features + params.bias
    return Action(int(np.argmax(logits)))


def action_logits(params: PolicyParams, features: np.ndarray) -> np.ndarray:
    return params.weights @ features + params.bias


# ---------------------------------------------------------------------------
# Numerical gradient verification


def gradient_check(
    loss_fn,
    params_vec: np.ndarray,
    *args,
    step: float = 1e-5,
    indices=None,
) -> float:
    """Worst relative error between analytic and central-difference
    gradients. Components whose magnitudes are both below 1e-7 are compared
    absolutely."""
    _, grad = loss_fn(params_vec, *args)
    if indices is None:
        indices = range(params_vec.size)
    worst = 0.0
    for i in indices:
        bumped = params_vec.copy()
        bumped[i] += step
        up, _ = loss_fn(bumped, *args)
        bumped[i] -= 2 * step
        down, _ = loss_fn(bumped, *args)
        numeric = (up - down) / (2 * step)
        analytic = grad[i]
        scale = max(abs(numeric), abs(analytic))
        if scale < 1e-7:
            err = abs(numeric - analytic)
        else:
            err = abs(numeric - analytic) / scale
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Model file IO


def write_model(path, params: PolicyParams, config: TrainConfig, manifest_hash=None):
    doc = {
        "kind": "policy_model",
        "format_version": MODEL_FORMAT_VERSION,
        "mode": params.mode,
        "vocab_fingerprint": params.vocab_fingerprint,
        "weights": [[float(v) for v in row] for row in params.weights],
        "bias": [float(v) for v in params.bias],
        "config": {
            "mode": config.mode,
            "loss": config.loss,
            "learning_rate": config.learning_rate,
            "momentum": config.momentum,
            "batch_size": config.batch_size,
            "epochs": config.epochs,
            "alpha": config.alpha,
            "beta": config.beta,
            "seed": config.seed,
        },
    }
    if manifest_hash is not None:
        doc["manifest_hash"] = manifest_hash
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True) + "\n")


def read_model(path) -> tuple[PolicyParams, TrainConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "policy_model":
        raise ValueError(f"{path}: not a policy model file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version")
    params = PolicyParams(
        weights=np.asarray(doc["weights"], dtype=np.float64),
        bias=np.asarray(doc["bias"], dtype=np.float64),
        mode=doc["mode"],
        vocab_fingerprint=doc["vocab_fingerprint"],
    )
    cfg = doc["config"]
    config = TrainConfig(
        mode=cfg["mode"],
        loss=cfg["loss"],
        learning_rate=float(cfg["learning_rate"]),
        momentum=float(cfg["momentum"]),
        batch_size=int(cfg["batch_size"]),
        epochs=int(cfg["epochs"]),
        alpha=float(cfg["alpha"]),
        beta=float(cfg["beta"]),
        seed=int(cfg["seed"]),
    )
    return params, config
