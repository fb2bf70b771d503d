"""Per-session models and the parameter-isolation registry.

One shared frozen body feeds a separate (tail, classifier) pair per
session. The base session trains everything jointly, optionally with
CutMix virtual categories mixed into every batch and an optional
real-classes-only classifier fine-tune afterwards. Each incremental
session fine-tunes a fresh copy of the base tail plus a prototype
classifier on that session's few shots only, so completed models are
never touched again: earlier sessions stay bit-identical forever.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .config import TrainSettings
from .cutmix import assign_virtual_labels, make_virtual_samples
from .data import LabeledDataset
from .errors import FormatError, ProtocolError
from .nn import LayerStack, SgdConfig, dump_stack, parse_stack, split_freeze
from .prototypes import PrototypeSet, batched_cosine_probs, class_means, cosine_ce_loss

STORE_MAGIC = b"FSCS"
STORE_VERSION = 1


@dataclass
class SessionModel:
    """Immutable-after-training (tail, classifier) pair for one session."""

    session_id: int
    tail: LayerStack
    classifier: PrototypeSet
    class_ids: np.ndarray

    def __post_init__(self):
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)


class SessionModelStore:
    """Shared body plus the ordered list of completed session models."""

    def __init__(self, body: LayerStack, sessions: list[SessionModel] | None = None):
        self.body = body
        self.sessions = sessions or []

    def add(self, model: SessionModel) -> None:
        if model.session_id != len(self.sessions):
            raise ProtocolError(
                f"expected session {len(self.sessions)}, got {model.session_id}")
        seen = self.seen_class_ids()
        if np.intersect1d(seen, model.class_ids).size:
            raise ProtocolError("session class ids overlap an earlier session")
        self.sessions.append(model)

    def seen_class_ids(self) -> np.ndarray:
        if not self.sessions:
            return np.array([], dtype=np.int64)
        return np.concatenate([m.class_ids for m in self.sessions])

    def session_of_class(self) -> dict[int, int]:
        return {int(c): m.session_id for m in self.sessions for c in m.class_ids}

    def features(self, session_id: int, x: np.ndarray) -> np.ndarray:
        return self.sessions[session_id].tail.forward(self.body.forward(x))

    def predict_proba_all(self, x: np.ndarray) -> list[np.ndarray]:
        """Each session's class probabilities for a batch, body run once."""
        hidden = self.body.forward(x)
        return [batched_cosine_probs(m.tail.forward(hidden), m.classifier)
                for m in self.sessions]


@dataclass
class BaseTrainLog:
    """Bookkeeping from base training, used by tests and reports."""

    epoch_losses: list[float] = field(default_factory=list)
    finetune_losses: list[float] = field(default_factory=list)
    phase1_class_count: int = 0


def _rng_streams(seed: int, namespace: int, n: int) -> list[np.random.Generator]:
    seq = np.random.SeedSequence([int(seed), int(namespace)])
    return [np.random.default_rng(child) for child in seq.spawn(n)]


def _iter_batches(count: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def _sample_virtual_pairs(class_ids: np.ndarray, n_pairs: int,
                          rng: np.random.Generator) -> list[tuple[int, int]]:
    ids = [int(c) for c in class_ids]
    all_pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1:]]
    n_pairs = min(n_pairs, len(all_pairs))
    chosen = rng.choice(len(all_pairs), size=n_pairs, replace=False)
    return [all_pairs[i] for i in chosen]


def _make_virtual_batch(dataset: LabeledDataset, pairs, label_table,
                        per_pair: int, rng: np.random.Generator):
    virtual = make_virtual_samples(dataset.samples, dataset.labels, pairs,
                                   label_table, per_pair, rng)
    images = np.array([v.image.reshape(-1) for v in virtual])
    labels = np.array([v.virtual_label for v in virtual], dtype=np.int64)
    return images, labels


def _train_epoch(body_input: np.ndarray, labels: np.ndarray, stack: LayerStack,
                 protos: PrototypeSet, sgd: SgdConfig, batch_rng,
                 extra_x: np.ndarray | None = None,
                 extra_y: np.ndarray | None = None) -> float:
    """One epoch of joint SGD on the stack and the prototype rows.

    Virtual samples (extra_x/extra_y) are spread across the batches so
    every batch trains against some virtual categories.
    """
    losses = []
    batches = list(_iter_batches(len(labels), sgd.batch_size, batch_rng))
    extra_split = [None] * len(batches)
    if extra_x is not None and len(extra_x):
        order = batch_rng.permutation(len(extra_x))
        extra_split = [order[i::len(batches)] for i in range(len(batches))]
    for batch, extra in zip(batches, extra_split):
        xb, yb = body_input[batch], labels[batch]
        if extra is not None and len(extra):
            xb = np.concatenate([xb, extra_x[extra]])
            yb = np.concatenate([yb, extra_y[extra]])
        feats = stack.forward(xb, remember=True)
        loss, d_feats, d_protos = cosine_ce_loss(feats, yb, protos)
        grads = stack.backward(d_feats)
        stack.sgd_step(grads, sgd)
        protos.prototypes -= sgd.learning_rate * d_protos
        losses.append(loss)
    return float(np.mean(losses))


def train_base(dataset: LabeledDataset, cfg: TrainSettings, *,
               fc_enabled: bool, ft_enabled: bool,
               seed: int) -> tuple[SessionModelStore, BaseTrainLog]:
    """Train the shared body and the session-0 model.

    Phase 1 trains the full stack plus classifier on the base classes;
    with fc_enabled each epoch draws a fresh set of class pairs, mixes
    CutMix samples for them into every batch, and carries transient
    virtual prototype rows alongside the real ones. After phase 1 the
    stack is split into frozen body + tail. With ft_enabled the
    classifier is rebuilt from real-class feature means and fine-tuned
    on real samples only. The returned classifier always contains
    exactly the real base classes.
    """
    base_ids = dataset.class_ids
    if len(base_ids) < 2:
        raise ValueError("base session needs at least 2 classes")
    for cid in base_ids:
        if len(dataset.indices_of(int(cid))) < 2:
            raise ValueError(f"base class {cid} needs at least 2 samples")

    init_rng, batch_rng, virt_rng, ft_rng = _rng_streams(seed, 0, 4)
    x = dataset.flat
    y = dataset.labels
    stack = LayerStack.create([x.shape[1], *cfg.hidden_dims, cfg.feature_dim],
                              cfg.activation, init_rng)
    sgd = SgdConfig(cfg.lr, cfg.epochs_base, min(cfg.batch, len(y)), seed)

    real_protos = PrototypeSet(base_ids,
                               class_means(stack.forward(x), y, base_ids),
                               cfg.scale_s)
    n_pairs = cfg.virtual_pairs if cfg.virtual_pairs is not None else 2 * len(base_ids)
    virtual_label_base = int(base_ids.max()) + 1

    log = BaseTrainLog(phase1_class_count=len(base_ids))
    for _ in range(sgd.epochs):
        protos = real_protos
        extra_x = extra_y = None
        if fc_enabled and n_pairs > 0:
            pairs = _sample_virtual_pairs(base_ids, n_pairs, virt_rng)
            table = assign_virtual_labels(virtual_label_base, pairs)
            extra_x, extra_y = _make_virtual_batch(
                dataset, pairs, table, cfg.virtual_samples_per_pair, virt_rng)
            virt_rows = class_means(stack.forward(extra_x), extra_y,
                                    sorted(table.values()))
            protos = PrototypeSet(
                np.concatenate([base_ids, sorted(table.values())]),
                np.concatenate([real_protos.prototypes, virt_rows]),
                cfg.scale_s)
            log.phase1_class_count = protos.num_classes
        loss = _train_epoch(x, y, stack, protos, sgd, batch_rng, extra_x, extra_y)
        # virtual rows are per-epoch scaffolding; keep the trained real rows
        real_protos = PrototypeSet(base_ids,
                                   protos.prototypes[:len(base_ids)].copy(),
                                   cfg.scale_s)
        log.epoch_losses.append(loss)

    body, tail = split_freeze(stack, cfg.body_depth)
    classifier = real_protos

    if ft_enabled:
        feats = tail.forward(body.forward(x))
        classifier = PrototypeSet(base_ids, class_means(feats, y, base_ids),
                                  cfg.scale_s)
        ft_sgd = SgdConfig(cfg.lr, cfg.ft_epochs, min(cfg.batch, len(y)), seed)
        for _ in range(ft_sgd.epochs):
            losses = []
            for batch in _iter_batches(len(y), ft_sgd.batch_size, ft_rng):
                if cfg.ft_train_tail:
                    fb = tail.forward(body.forward(x[batch]), remember=True)
                    loss, d_feats, d_protos = cosine_ce_loss(fb, y[batch], classifier)
                    tail.sgd_step(tail.backward(d_feats), ft_sgd)
                else:
                    loss, _, d_protos = cosine_ce_loss(feats[batch], y[batch], classifier)
                classifier.prototypes -= ft_sgd.learning_rate * d_protos
                losses.append(loss)
            log.finetune_losses.append(float(np.mean(losses)))

    store = SessionModelStore(body)
    store.add(SessionModel(0, tail, classifier, base_ids))
    return store, log


def train_incremental(store: SessionModelStore, session_data: LabeledDataset,
                      cfg: TrainSettings, seed: int,
                      epochs: int | None = None) -> SessionModel:
    """Train the next session on its few shots and append it to the store.

    The new tail starts as a copy of the session-0 tail; the classifier
    starts from the session classes' feature means. Both are fine-tuned
    on this session's data only (epochs=0 keeps the pure prototype
    classifier). The shared body and all earlier models are untouched.
    """
    if not store.sessions:
        raise ProtocolError("base session must be trained first")
    session_id = len(store.sessions)
    ids = session_data.class_ids
    if np.intersect1d(store.seen_class_ids(), ids).size:
        raise ProtocolError("session classes overlap an earlier session")

    _, batch_rng, _, _ = _rng_streams(seed, session_id, 4)
    tail = store.sessions[0].tail.copy(trainable=True)
    x = session_data.flat
    y = session_data.labels
    hidden = store.body.forward(x)
    protos = PrototypeSet(ids, class_means(tail.forward(hidden), y, ids),
                          cfg.scale_s)

    epochs = cfg.epochs_inc if epochs is None else epochs
    sgd = SgdConfig(cfg.lr, max(epochs, 0), min(cfg.batch, len(y)), seed)
    for _ in range(sgd.epochs):
        _train_epoch(hidden, y, tail, protos, sgd, batch_rng)

    model = SessionModel(session_id, tail, protos, ids)
    store.add(model)
    return model


# --- store file format ------------------------------------------------
#
# magic "FSCS", u16 version, u16 session count, body checkpoint (FSC1),
# then per session: u32 session id, u32 class count + u32 class ids,
# tail checkpoint (FSC1), u32 rows, u32 cols, rows*cols f64 prototypes,
# f64 scale. Little-endian throughout; round-trips bit-exactly.

def dump_store(store: SessionModelStore) -> bytes:
    parts = [STORE_MAGIC, struct.pack("<HH", STORE_VERSION, len(store.sessions))]
    parts.append(dump_stack(store.body))
    for m in store.sessions:
        parts.append(struct.pack("<I", m.session_id))
        parts.append(struct.pack("<I", len(m.class_ids)))
        parts.append(np.ascontiguousarray(m.class_ids, dtype="<u4").tobytes())
        parts.append(dump_stack(m.tail))
        protos = m.classifier.prototypes
        parts.append(struct.pack("<II", *protos.shape))
        parts.append(np.ascontiguousarray(protos, dtype="<f8").tobytes())
        parts.append(struct.pack("<d", m.classifier.scale))
    return b"".join(parts)


def save_store(store: SessionModelStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_store(store))


def load_store(path, activation: str = "tanh") -> SessionModelStore:
    with open(path, "rb") as fh:
        buf = fh.read()
    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(buf):
            raise FormatError(f"truncated store file at byte {offset}")
        piece = buf[offset:offset + n]
        offset += n
        return piece

    if take(4) != STORE_MAGIC:
        raise FormatError("bad store magic, expected FSCS")
    version, count = struct.unpack("<HH", take(4))
    if version != STORE_VERSION:
        raise FormatError(f"unsupported store version {version}")
    body, offset = parse_stack(buf, offset, activation)
    sessions = []
    for _ in range(count):
        (session_id,) = struct.unpack("<I", take(4))
        (n_ids,) = struct.unpack("<I", take(4))
        ids = np.frombuffer(take(4 * n_ids), dtype="<u4").astype(np.int64)
        tail, offset = parse_stack(buf, offset, activation)
        rows, cols = struct.unpack("<II", take(8))
        protos = np.frombuffer(take(rows * cols * 8), dtype="<f8").reshape(rows, cols)
        (scale,) = struct.unpack("<d", take(8))
        sessions.append(SessionModel(session_id, tail,
                                     PrototypeSet(ids, protos.copy(), scale), ids))
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes in store file")
    store = SessionModelStore(body)
    for m in sessions:
        store.add(m)
    return store
