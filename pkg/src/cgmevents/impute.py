"""Activity imputation: nearest neighbour, rolling mode, and a windowed
multinomial logistic classifier trained on the negative log-likelihood."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .core import ACTIVITY_CLASSES, N_CLASSES, STATIONARY, UNKNOWN, SlotGrid

ACTIVITY = "activity"
DEFAULT_K = 20
MISSING = N_CLASSES  # code used for unobserved slots inside windows


class ImputeError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 25
    batch_size: int = 256
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


@dataclass
class LogisticWeights:
    """W[a, c, j]: weight of observing class c at offset j - k for target a."""

    W: np.ndarray
    k: int
    losses: list = field(default_factory=list)

    def __post_init__(self):
        L = 2 * self.k + 1
        if self.W.shape != (N_CLASSES, N_CLASSES, L):
            raise ValueError(f"W must have shape {(N_CLASSES, N_CLASSES, L)}, got {self.W.shape}")
        if not np.all(np.isfinite(self.W)):
            raise ValueError("W has non-finite entries")

    def to_json(self):
        return {
            "classes": list(ACTIVITY_CLASSES),
            "k": self.k,
            "shape": list(self.W.shape),
            "data": [float(x) for x in self.W.ravel()],
            "losses": [float(x) for x in self.losses],
        }

    @classmethod
    def from_json(cls, d):
        W = np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])
        return cls(W, int(d["k"]), list(d.get("losses", [])))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def _codes(grid_or_codes, mask=None):
    if isinstance(grid_or_codes, SlotGrid):
        v, m = grid_or_codes.channel(ACTIVITY)
        return np.asarray(v, dtype=np.int64), np.asarray(m, dtype=bool)
    return np.asarray(grid_or_codes, dtype=np.int64), np.asarray(mask, dtype=bool)


def _padded(codes, mask, k):
    out = np.full(codes.size + 2 * k, MISSING, dtype=np.int8)
    out[k:k + codes.size] = np.where(mask, codes, MISSING)
    return out


def _neighbor_counts(mask, k):
    """Observed slots within +-k of each slot, the slot itself excluded."""
    cs = np.concatenate([[0], np.cumsum(mask.astype(np.int64))])
    n = mask.size
    idx = np.arange(n)
    lo = np.clip(idx - k, 0, n)
    hi = np.clip(idx + k + 1, 0, n)
    return cs[hi] - cs[lo] - mask.astype(np.int64)


# -- nearest neighbour ------------------------------------------------------

def nearest_fill(codes, mask):
    """Label of the temporally nearest observed slot, earlier wins ties."""
    codes, mask = _codes(codes, mask)
    n = codes.size
    obs = np.flatnonzero(mask)
    if obs.size == 0:
        raise ImputeError("no observed activity anywhere; nothing to impute from")
    idx = np.arange(n)
    pos = np.searchsorted(obs, idx, side="right")
    prev = obs[np.clip(pos - 1, 0, obs.size - 1)]
    nxt = obs[np.clip(pos, 0, obs.size - 1)]
    has_prev = pos > 0
    has_next = pos < obs.size
    d_prev = np.where(has_prev, idx - prev, np.iinfo(np.int64).max)
    d_next = np.where(has_next, nxt - idx, np.iinfo(np.int64).max)
    src = np.where(d_prev <= d_next, prev, nxt)
    return codes[src]


def impute_nn(grid: SlotGrid, t: int) -> int:
    codes, mask = _codes(grid)
    if mask[t]:
        return int(codes[t])
    return int(nearest_fill(codes, mask)[t])


# -- rolling mode -------------------------------------------------------------

def mode_of(labels) -> int:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ImputeError("empty window: no observations to take the mode of")
    return int(np.argmax(np.bincount(labels, minlength=N_CLASSES)))


def impute_mode(grid: SlotGrid, slots) -> int:
    """Most frequent observed label among ``slots``; ties go to alphabet order."""
    codes, mask = _codes(grid)
    slots = np.asarray(slots, dtype=np.int64)
    slots = slots[(slots >= 0) & (slots < codes.size)]
    return mode_of(codes[slots][mask[slots]])


def rolling_mode_fill(codes, mask, k=DEFAULT_K):
    """Modal observed label within +-k of every slot; -1 where the window is empty."""
    codes, mask = _codes(codes, mask)
    n = codes.size
    onehot = np.zeros((n + 1, N_CLASSES), dtype=np.int64)
    onehot[1:][mask, codes[mask]] = 1
    cs = np.cumsum(onehot, axis=0)
    idx = np.arange(n)
    counts = cs[np.clip(idx + k + 1, 0, n)] - cs[np.clip(idx - k, 0, n)]
    out = np.argmax(counts, axis=1)
    out[counts.sum(axis=1) == 0] = -1
    return out


# -- logistic ----------------------------------------------------------------

def softmax(scores):
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def nll_and_grad(W, codes_pad, idx, targets, l2=0.0, backend=None):
    """Mean negative log-likelihood over ``idx`` and its gradient in W."""
    impl = backend or kernels.impl
    k = (W.shape[2] - 1) // 2
    scores = impl.window_scores(codes_pad, idx, W, k)
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = idx.size
    loss = -logp[np.arange(n), targets].mean() + 0.5 * l2 * float(np.sum(W * W))
    R = np.exp(logp)
    R[np.arange(n), targets] -= 1.0
    R /= n
    G = impl.window_grad(codes_pad, idx, np.ascontiguousarray(R), W.shape[0], W.shape[2])
    G[:, :, k] = 0.0  # the centre slot never feeds its own prediction
    G += l2 * W
    return float(loss), G


def training_slots(codes, mask, k):
    """Observed, non-unknown slots with at least one observed neighbour."""
    codes, mask = _codes(codes, mask)
    nb = _neighbor_counts(mask, k)
    return np.flatnonzero(mask & (codes != UNKNOWN) & (nb > 0))


def logistic_train(grid, k: int = DEFAULT_K, config: TrainConfig = TrainConfig(), mask=None) -> LogisticWeights:
    """Fit W by plain mini-batch gradient descent on the mean NLL."""
    codes, mask = _codes(grid, mask)
    idx = training_slots(codes, mask, k)
    if idx.size == 0:
        raise ImputeError("no trainable slots: need an observed, non-unknown slot with an observed neighbour")
    codes_pad = _padded(codes, mask, k)
    targets = codes[idx]
    L = 2 * k + 1
    W = np.zeros((N_CLASSES, N_CLASSES, L))
    rng = np.random.default_rng(config.seed)
    losses = [nll_and_grad(W, codes_pad, idx, targets, config.l2)[0]]
    for _ in range(config.epochs):
        perm = rng.permutation(idx.size)
        for s in range(0, idx.size, config.batch_size):
            b = perm[s:s + config.batch_size]
            _, G = nll_and_grad(W, codes_pad, idx[b], targets[b], config.l2)
            W -= config.learning_rate * G
        losses.append(nll_and_grad(W, codes_pad, idx, targets, config.l2)[0])
    return LogisticWeights(W, k, losses)


def predict_proba_slots(weights: LogisticWeights, codes, mask, slots, chunk=65536):
    codes, mask = _codes(codes, mask)
    k = weights.k
    codes_pad = _padded(codes, mask, k)
    slots = np.asarray(slots, dtype=np.int64)
    out = np.empty((slots.size, N_CLASSES))
    for s in range(0, slots.size, chunk):
        out[s:s + chunk] = softmax(kernels.impl.window_scores(codes_pad, slots[s:s + chunk], weights.W, k))
    return out


def logistic_predict_proba(weights: LogisticWeights, grid: SlotGrid, t: int):
    """Class probabilities at slot t from its window (centre excluded)."""
    codes, mask = _codes(grid)
    return predict_proba_slots(weights, codes, mask, [t])[0]


def logistic_fill(weights, codes, mask):
    codes, mask = _codes(codes, mask)
    p = predict_proba_slots(weights, codes, mask, np.arange(codes.size))
    return np.argmax(p, axis=1)


def activity_likelihoods(grid: SlotGrid, weights: LogisticWeights):
    """Per-slot class probabilities for the whole grid.

    Observed (non-unknown) slots are one-hot; other slots use the logistic
    model when their window holds an observation; rows that cannot be
    imputed are NaN.
    """
    codes, mask = _codes(grid)
    proba = predict_proba_slots(weights, codes, mask, np.arange(codes.size))
    known = mask & (codes != UNKNOWN)
    proba[known] = 0.0
    proba[known, codes[known]] = 1.0
    imputable = known | (_neighbor_counts(mask, weights.k) > 0)
    proba[~imputable] = np.nan
    return proba


# -- evaluation ---------------------------------------------------------------

@dataclass
class ImputerScore:
    name: str
    accuracy: float
    f_scores: dict
    support: dict
    n: int


def f_scores(truth, pred, classes=range(N_CLASSES)):
    """One-vs-all F1 per class; NaN for classes absent from ``truth``."""
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    out, support = {}, {}
    for c in classes:
        tp = int(np.sum((truth == c) & (pred == c)))
        fp = int(np.sum((truth != c) & (pred == c)))
        fn = int(np.sum((truth == c) & (pred != c)))
        support[c] = tp + fn
        if tp + fn == 0:
            out[c] = float("nan")
        elif tp == 0:
            out[c] = 0.0
        else:
            prec, rec = tp / (tp + fp), tp / (tp + fn)
            out[c] = 2 * prec * rec / (prec + rec)
    return out, support


def score_imputer(name, truth, pred) -> ImputerScore:
    f, sup = f_scores(truth, pred)
    return ImputerScore(name, float(np.mean(np.asarray(truth) == np.asarray(pred))), f, sup, len(truth))


def holdout_split(codes, mask, fraction=0.2, seed=0):
    """Hide a random fraction of observed, non-unknown slots."""
    codes, mask = _codes(codes, mask)
    cand = np.flatnonzero(mask & (codes != UNKNOWN))
    if cand.size == 0:
        raise ImputeError("no observed activity to hold out")
    rng = np.random.default_rng(seed)
    n_out = max(1, int(round(fraction * cand.size)))
    held = np.sort(rng.choice(cand, size=n_out, replace=False))
    train_mask = mask.copy()
    train_mask[held] = False
    return held, train_mask


def evaluate_imputers(grid, fraction=0.2, seed=0, k=DEFAULT_K, config: TrainConfig = TrainConfig(),
                      heldout=None):
    """Hold out activity labels, impute them three ways, score each.

    Only held-out slots with an observation within +-k are scored, so that
    every imputer is judged on the same slots.
    """
    codes, mask = _codes(grid)
    if heldout is None:
        held, train_mask = holdout_split(codes, mask, fraction, seed)
    else:
        held = np.asarray(heldout, dtype=np.int64)
        if held.size == 0:
            raise ImputeError("held-out set is empty")
        train_mask = mask.copy()
        train_mask[held] = False
    held = held[_neighbor_counts(train_mask, k)[held] > 0]
    if held.size == 0:
        raise ImputeError("no held-out slot has an observation within the window")
    truth = codes[held]
    weights = logistic_train(codes, k, config, mask=train_mask)
    preds = {
        "rolling_mode": rolling_mode_fill(codes, train_mask, k)[held],
        "nearest_neighbor": nearest_fill(codes, train_mask)[held],
        "logistic": np.argmax(predict_proba_slots(weights, codes, train_mask, held), axis=1),
    }
    return [score_imputer(name, truth, p) for name, p in preds.items()], weights


def report_rows(scores):
    """CSV rows (imputer, class, f_score, support); one 'overall' accuracy row per imputer."""
    from .io import fmt
    rows = []
    for s in scores:
        for c in range(N_CLASSES):
            rows.append((s.name, ACTIVITY_CLASSES[c], fmt(s.f_scores[c]), s.support[c]))
        rows.append((s.name, "overall", fmt(s.accuracy), s.n))
    return rows


REPORT_HEADER = ("imputer", "class", "f_score", "support")
