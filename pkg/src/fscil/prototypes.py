"""Class prototypes with cosine scoring and cross-entropy training.

A classifier is a matrix of prototype rows, one per class. A feature f
scores against prototype w as s * cos(f, w), where s is a fixed scale
that sharpens the softmax (raw cosines live in [-1, 1]). Prototype rows
start as class means of the training features and are then updated by
gradient descent like ordinary classifier weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError


@dataclass
class PrototypeSet:
    """Prototype rows aligned with global class ids, plus the cosine scale."""

    class_ids: np.ndarray
    prototypes: np.ndarray
    scale: float = 16.0

    def __post_init__(self):
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        if self.prototypes.ndim != 2 or len(self.class_ids) != self.prototypes.shape[0]:
            raise ValueError("need one prototype row per class id")
        if len(np.unique(self.class_ids)) != len(self.class_ids):
            raise ValueError("duplicate class ids")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        norms = np.linalg.norm(self.prototypes, axis=1)
        if np.any(norms == 0):
            raise NumericError("zero-norm prototype row")

    @property
    def num_classes(self) -> int:
        return len(self.class_ids)

    @property
    def feature_dim(self) -> int:
        return self.prototypes.shape[1]

    def row_of(self, class_id: int) -> int:
        rows = np.nonzero(self.class_ids == class_id)[0]
        if len(rows) == 0:
            raise ValueError(f"unknown class id {class_id}")
        return int(rows[0])

    def copy(self) -> "PrototypeSet":
        return PrototypeSet(self.class_ids.copy(), self.prototypes.copy(), self.scale)


@dataclass
class ProbVector:
    """A probability distribution aligned with global class ids."""

    probs: np.ndarray
    class_ids: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        if self.probs.shape != self.class_ids.shape:
            raise ValueError("probs and class_ids must align")

    def argmax_class(self) -> int:
        return int(self.class_ids[int(np.argmax(self.probs))])


def compute_prototype(features) -> np.ndarray:
    """Elementwise mean of a nonempty list of equal-length feature vectors."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.size == 0:
        raise ValueError("cannot average an empty feature list")
    if feats.ndim == 1:
        feats = feats[None, :]
    return feats.mean(axis=0)


def cosine_logits(p: np.ndarray, protos: PrototypeSet) -> np.ndarray:
    """Scaled cosine of a feature against every prototype row."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (protos.feature_dim,):
        raise ValueError(f"feature dim {p.shape} != prototype dim {protos.feature_dim}")
    norm = np.linalg.norm(p)
    if norm == 0:
        raise NumericError("zero-norm feature has no direction")
    proto_norms = np.linalg.norm(protos.prototypes, axis=1)
    return protos.scale * (protos.prototypes @ p) / (proto_norms * norm)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax(logits, class_ids=None) -> ProbVector:
    """Max-subtracted softmax over one logit vector."""
    logits = np.asarray(logits, dtype=np.float64)
    if class_ids is None:
        class_ids = np.arange(len(logits))
    return ProbVector(_softmax_rows(logits[None, :])[0], class_ids)


def batched_cosine_probs(features: np.ndarray, protos: PrototypeSet) -> np.ndarray:
    """Softmax class probabilities for a feature batch, (B, num_classes)."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[None, :]
    fn = np.linalg.norm(feats, axis=1)
    if np.any(fn == 0):
        raise NumericError("zero-norm feature has no direction")
    wn = np.linalg.norm(protos.prototypes, axis=1)
    cos = (feats @ protos.prototypes.T) / (fn[:, None] * wn[None, :])
    return _softmax_rows(protos.scale * cos)


def cosine_ce_loss(features, labels, protos: PrototypeSet):
    """Mean negative log-likelihood of the true class under cosine softmax.

    For a batch of features f_j with true classes y_j and prototype rows
    w_k:

        cos_jk = f_j . w_k / (|f_j| |w_k|)
        loss   = -mean_j log softmax_k(s * cos_jk)[y_j]

    Returns (loss, d loss/d features, d loss/d prototypes); both
    gradients are analytic and exercised by finite-difference checks.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[None, :]
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(labels) != feats.shape[0]:
        raise ValueError("one label per feature row required")
    id_to_row = {int(c): i for i, c in enumerate(protos.class_ids)}
    try:
        rows = np.array([id_to_row[int(y)] for y in labels])
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]} not in the classifier") from None

    batch = feats.shape[0]
    w = protos.prototypes
    s = protos.scale
    fn = np.linalg.norm(feats, axis=1)
    if np.any(fn == 0):
        raise NumericError("zero-norm feature has no direction")
    wn = np.linalg.norm(w, axis=1)
    cos = (feats @ w.T) / (fn[:, None] * wn[None, :])
    logits = s * cos
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(batch), rows].mean())

    probs = np.exp(log_probs)
    dlogits = probs.copy()
    dlogits[np.arange(batch), rows] -= 1.0
    dlogits /= batch
    g = s * dlogits  # d loss / d cos

    # d cos/d f = w/(|f||w|) - cos f/|f|^2 ; d cos/d w symmetric
    gc = (g * cos).sum(axis=1)
    d_feats = (g / wn[None, :]) @ w / fn[:, None] - gc[:, None] * feats / (fn ** 2)[:, None]
    gw = (g * cos).sum(axis=0)
    d_protos = (g / fn[:, None]).T @ feats / wn[:, None] - gw[:, None] * w / (wn ** 2)[:, None]
    return loss, d_feats, d_protos


def class_means(features: np.ndarray, labels: np.ndarray,
                class_ids) -> np.ndarray:
    """Per-class feature means, one row per entry of class_ids."""
    feats = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    rows = []
    for cid in class_ids:
        members = feats[labels == cid]
        if len(members) == 0:
            raise ValueError(f"no features for class {cid}")
        rows.append(members.mean(axis=0))
    return np.stack(rows)
