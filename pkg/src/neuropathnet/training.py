"""Cross-entropy training, optimisers and stratified k-fold evaluation."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import tensor as tn
from .dfc import PathSet, stack_paths
from .errors import ConfigError, ContractError, DataError, NumericError
from .metrics import METRIC_NAMES, evaluate
from .model import ForwardContext, ModelConfig, NeuroPathNet
from .tensor import Tensor

log = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "sgd_momentum", "adaptive")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    optimizer: str = "adaptive"
    momentum: float = 0.9
    seed: int = 0
    folds: int = 5
    patience: int | None = 5
    min_delta: float = 1e-3
    val_fraction: float = 0.1
    class_weighting: bool = False
    grad_clip: float | None = 1.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.patience is not None and self.patience < 1:
            raise ConfigError(f"patience must be >= 1 when set, got {self.patience}")
        if self.min_delta < 0:
            raise ConfigError(f"min_delta must be >= 0, got {self.min_delta}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"grad_clip must be positive when set, got {self.grad_clip}")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    """Subjects stacked as ``(B, L, T)`` trajectories with labels."""

    ids: list[str]
    labels: np.ndarray
    paths: np.ndarray

    @classmethod
    def from_pathsets(cls, sets: Sequence[PathSet]) -> "Dataset":
        ids = [ps.subject_id for ps in sets]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate subject ids in dataset")
        return cls(ids, np.array([ps.label for ps in sets], dtype=np.int64), stack_paths(sets))

    def __len__(self):
        return len(self.ids)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset([self.ids[i] for i in idx], self.labels[idx], self.paths[idx])

    def index_of(self, ids: Sequence[str]) -> np.ndarray:
        pos = {s: i for i, s in enumerate(self.ids)}
        return np.array([pos[s] for s in ids], dtype=np.int64)

    def shuffled_labels(self, seed: int) -> "Dataset":
        rng = np.random.default_rng(seed)
        return Dataset(list(self.ids), rng.permutation(self.labels), self.paths)


@dataclass
class FoldSplit:
    train: list[list[str]]
    test: list[list[str]]

    def __len__(self):
        return len(self.test)


# ---------------------------------------------------------------------------
# loss and optimisers
# ---------------------------------------------------------------------------

def cross_entropy(probs: Tensor, labels, weights=None, floor: float = 1e-12) -> Tensor:
    """Mean ``-log p[label]`` over the batch (optionally class-weighted)."""
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim == 1:
        probs = tn.reshape(probs, (1, -1))
        labels = labels.reshape(1)
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise ContractError(f"label outside [0, {probs.shape[1]})")
    nll = tn.scale(tn.log(tn.pick(probs, labels), floor), -1.0)
    if weights is None:
        return tn.mean(nll)
    w = np.asarray(weights, dtype=np.float64)[labels]
    return tn.scale(tn.sum(tn.mul(nll, Tensor(w))), 1.0 / w.sum())


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray]):
        for k, p in params.items():
            p.data -= self.lr * grads[k]


class Momentum:
    """``v <- mu * v + g``; ``p <- p - lr * v``."""

    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr, self.mu = lr, momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params, grads):
        for k, p in params.items():
            v = self.velocity.get(k)
            v = grads[k].copy() if v is None else self.mu * v + grads[k]
            self.velocity[k] = v
            p.data -= self.lr * v


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m = self.b1 * self.m.get(k, 0.0) + (1 - self.b1) * g
            v = self.b2 * self.v.get(k, 0.0) + (1 - self.b2) * g * g
            self.m[k], self.v[k] = m, v
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGD(cfg.learning_rate)
    if cfg.optimizer == "sgd_momentum":
        return Momentum(cfg.learning_rate, cfg.momentum)
    return Adam(cfg.learning_rate)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float | None) -> float:
    """Rescale ``grads`` in place to global L2 norm ``max_norm``; returns the norm before clipping."""
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        s = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * s
    return norm


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def stratified_kfold(subjects: Sequence[str], labels, folds: int, seed: int = 0) -> FoldSplit:
    """Shuffle each class, then deal the concatenated class lists round-robin over folds."""
    labels = np.asarray(labels)
    subjects = list(subjects)
    if len(subjects) != len(labels):
        raise ContractError("subjects and labels differ in length")
    rng = np.random.default_rng(seed)
    order = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < folds:
            raise ConfigError(f"class {c} has {members.size} subjects, fewer than folds={folds}")
        order.extend(rng.permutation(members).tolist())
    bucket = {idx: pos % folds for pos, idx in enumerate(order)}
    test = [[subjects[i] for i in range(len(subjects)) if bucket[i] == k] for k in range(folds)]
    train = [[subjects[i] for i in range(len(subjects)) if bucket[i] != k] for k in range(folds)]
    return FoldSplit(train, test)


def _holdout(labels: np.ndarray, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    val = []
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        n = int(round(fraction * members.size))
        val.extend(members[: min(max(n, 1), members.size - 1)].tolist())
    val = np.sort(np.array(val, dtype=np.int64))
    fit = np.setdiff1d(np.arange(labels.size), val)
    return fit, val


def _derive(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    model: NeuroPathNet
    losses: list[float]
    val_losses: list[float] = field(default_factory=list)
    test_ids: list[str] = field(default_factory=list)
    test_labels: np.ndarray | None = None
    test_probs: np.ndarray | None = None
    metrics: dict[str, float] = field(default_factory=dict)
    seen_ids: set[str] = field(default_factory=set)


def _class_weights(labels: np.ndarray, c: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=c).astype(np.float64)
    counts[counts == 0] = 1.0
    return labels.size / (c * counts)


def batch_loss(model: NeuroPathNet, paths, labels, ctx: ForwardContext, weights=None) -> Tensor:
    return cross_entropy(model(paths, ctx), labels, weights)


def fit(model: NeuroPathNet, data: Dataset, cfg: TrainConfig, fold: int = 0,
        val: Dataset | None = None, forbidden: set[str] | None = None) -> FoldResult:
    """Train ``model`` in place on ``data``; returns the per-epoch loss curve.

    Raises
    ------
    NumericError
        If a batch loss becomes NaN or infinite.
    ContractError
        If a subject listed in ``forbidden`` reaches a training batch.
    """
    opt = make_optimizer(cfg)
    weights = _class_weights(data.labels, model.cfg.num_classes) if cfg.class_weighting else None
    run_seed = _derive(cfg.seed, fold)
    result = FoldResult(fold, model, [])
    best_val, best_snap, stale = np.inf, None, 0
    step = 0
    n = len(data)
    for epoch in range(cfg.epochs):
        order = np.random.default_rng(_derive(cfg.seed, fold, epoch, 1)).permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch_ids = {data.ids[i] for i in idx}
            if forbidden and batch_ids & forbidden:
                raise ContractError(f"test subjects {sorted(batch_ids & forbidden)} leaked into a training batch")
            result.seen_ids |= batch_ids
            ctx = ForwardContext(training=True, seed=run_seed, step=step)
            loss = batch_loss(model, data.paths[idx], data.labels[idx], ctx, weights)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(
                    f"loss became {value} at epoch {epoch}, step {step}; "
                    f"try a smaller learning_rate (currently {cfg.learning_rate}) or enable grad_clip"
                )
            loss.backward()
            # parameters switched out of the graph get a zero gradient
            grads = {k: p.grad if p.grad is not None else np.zeros_like(p.data)
                     for k, p in model.params.items()}
            clip_gradients(grads, cfg.grad_clip)
            opt.step(model.params, grads)
            total += value * idx.size
            step += 1
        result.losses.append(total / n)
        if val is not None:
            v = evaluate_loss(model, val, weights)
            result.val_losses.append(v)
            if v < best_val - cfg.min_delta:
                best_val, best_snap, stale = v, model.snapshot(), 0
            else:
                stale += 1
                if cfg.patience is not None and stale >= cfg.patience:
                    log.info("fold %d: early stop at epoch %d", fold, epoch)
                    break
    if best_snap is not None:
        model.restore(best_snap)
    return result


def evaluate_loss(model: NeuroPathNet, data: Dataset, weights=None, batch_size: int = 64) -> float:
    probs = model.predict_proba(data.paths, batch_size)
    return cross_entropy(Tensor(probs), data.labels, weights).item()


def train_fold(data: Dataset, split: FoldSplit, fold: int, model_cfg: ModelConfig,
               train_cfg: TrainConfig) -> FoldResult:
    """Fit a fresh model on fold ``fold``'s training subjects and score its test subjects."""
    train_ids, test_ids = split.train[fold], split.test[fold]
    if set(train_ids) & set(test_ids):
        raise ContractError(f"fold {fold}: subjects appear in both train and test")
    train = data.subset(data.index_of(train_ids))
    test = data.subset(data.index_of(test_ids))
    val = None
    if train_cfg.patience is not None:
        fit_idx, val_idx = _holdout(train.labels, train_cfg.val_fraction, _derive(train_cfg.seed, fold, 2))
        train, val = train.subset(fit_idx), train.subset(val_idx)
    model = NeuroPathNet(model_cfg, seed=_derive(train_cfg.seed, fold, 3))
    result = fit(model, train, train_cfg, fold, val, forbidden=set(test_ids))
    result.test_ids = list(test.ids)
    result.test_labels = test.labels
    result.test_probs = model.predict_proba(test.paths)
    result.metrics = evaluate(result.test_probs, test.labels)
    return result


@dataclass
class CVResult:
    folds: list[FoldResult]

    @property
    def rows(self) -> list[dict[str, float]]:
        return [dict(fold=f.fold, **f.metrics) for f in self.folds]

    @property
    def mean(self) -> dict[str, float]:
        return {m: float(np.mean([f.metrics[m] for f in self.folds])) for m in METRIC_NAMES}

    @property
    def std(self) -> dict[str, float]:
        return {m: float(np.std([f.metrics[m] for f in self.folds])) for m in METRIC_NAMES}

    def table(self) -> list[list[str]]:
        """Header plus one row per fold, then ``mean`` and ``std`` rows."""
        out = [["fold", *METRIC_NAMES]]
        for r in self.rows:
            out.append([str(r["fold"])] + [repr(r[m]) for m in METRIC_NAMES])
        out.append(["mean"] + [repr(self.mean[m]) for m in METRIC_NAMES])
        out.append(["std"] + [repr(self.std[m]) for m in METRIC_NAMES])
        return out


def _fold_job(args):
    data, split, fold, model_cfg, train_cfg = args
    return train_fold(data, split, fold, model_cfg, train_cfg)


def run_cv(data: Dataset, model_cfg: ModelConfig, train_cfg: TrainConfig, jobs: int = 1) -> CVResult:
    """Stratified k-fold cross-validation; folds may run in parallel worker processes."""
    split = stratified_kfold(data.ids, data.labels, train_cfg.folds, train_cfg.seed)
    jobs_args = [(data, split, k, model_cfg, train_cfg) for k in range(train_cfg.folds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fold_job, jobs_args))
    else:
        results = [_fold_job(a) for a in jobs_args]
    return CVResult(results)


def fit_full(data: Dataset, model_cfg: ModelConfig, train_cfg: TrainConfig) -> FoldResult:
    """Train one model on every subject (seeded apart from the CV folds)."""
    model = NeuroPathNet(model_cfg, seed=_derive(train_cfg.seed, 10_000, 3))
    return fit(model, data, train_cfg, fold=10_000)
