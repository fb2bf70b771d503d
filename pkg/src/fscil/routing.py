"""Entropy-based uncertainty and per-sample model selection.

Every session model scores a test sample; the model whose predictive
distribution has the lowest information entropy H(p) = -sum p log p
(natural log) wins and its argmax class is the prediction. Because the
base session has many more classes than an incremental one, its entropy
lives on a larger scale; sub-result partitioning (SR) fixes that by
splitting the base output into incremental-width blocks, renormalizing
each, and letting the base compete with its best block.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StateError
from .prototypes import ProbVector


def entropy(p) -> float:
    """Natural-log information entropy, with 0 * log 0 == 0."""
    probs = p.probs if isinstance(p, ProbVector) else np.asarray(p, dtype=np.float64)
    nz = probs[probs > 0]
    return float(-np.sum(nz * np.log(nz)))


@dataclass(frozen=True)
class SubBlockLayout:
    """Contiguous equal-width partition of the base model's class indices."""

    n_sub: int
    block_size: int

    def __post_init__(self):
        if self.n_sub < 1 or self.block_size < 1:
            raise ConfigError("layout sizes must be positive")

    @property
    def base_classes(self) -> int:
        return self.n_sub * self.block_size

    def block_slice(self, block: int) -> slice:
        return slice(block * self.block_size, (block + 1) * self.block_size)


def make_layout(base_classes: int, inc_classes: int) -> SubBlockLayout:
    """Partition base output into base_classes / inc_classes blocks.

    The incremental width must divide the base width exactly; anything
    else is a configuration error rather than silent padding.
    """
    if base_classes < 1 or inc_classes < 1:
        raise ConfigError("class counts must be positive")
    if base_classes % inc_classes != 0:
        raise ConfigError(
            f"incremental width {inc_classes} does not divide base width {base_classes}")
    return SubBlockLayout(base_classes // inc_classes, inc_classes)


def sub_entropies(p_base, layout: SubBlockLayout) -> np.ndarray:
    """Per-block entropy of the renormalized base output.

    A block with zero total mass gets the maximal value log(block_size).
    """
    probs = p_base.probs if isinstance(p_base, ProbVector) else np.asarray(p_base, dtype=np.float64)
    if probs.shape != (layout.base_classes,):
        raise ValueError(
            f"base output length {probs.shape} != layout width {layout.base_classes}")
    values = np.empty(layout.n_sub)
    for b in range(layout.n_sub):
        block = probs[layout.block_slice(b)]
        mass = float(np.sum(block))
        values[b] = math.log(layout.block_size) if mass == 0.0 else entropy(block / mass)
    return values


def base_uncertainty(p_base, layout: SubBlockLayout) -> tuple[float, int]:
    """Minimum renormalized block entropy and its block index.

    Ties break to the lowest block index; zero-mass blocks are excluded
    from winning unless every block is zero-mass.
    """
    probs = p_base.probs if isinstance(p_base, ProbVector) else np.asarray(p_base, dtype=np.float64)
    if probs.shape != (layout.base_classes,):
        raise ValueError(
            f"base output length {probs.shape} != layout width {layout.base_classes}")
    best = None
    for b in range(layout.n_sub):
        block = probs[layout.block_slice(b)]
        mass = float(np.sum(block))
        if mass == 0.0:
            continue
        h = entropy(block / mass)
        if best is None or h < best[0]:
            best = (h, b)
    if best is None:
        return math.log(layout.block_size), 0
    return best


@dataclass
class UncertaintyRecord:
    """Routing decision for one sample.

    `entropies` is the full uncertainty set: with SR the base model
    contributes one entry per sub-block, otherwise a single entry;
    incremental models always contribute one entry each.
    `session_entropies` collapses the base to its effective (minimum)
    value, one entry per session.
    """

    entropies: np.ndarray
    session_entropies: np.ndarray
    winner_session: int
    winner_block: int | None
    predicted_class: int


def _argmin_first(values) -> int:
    best = 0
    for i in range(1, len(values)):
        if values[i] < values[best]:
            best = i
    return best


def route_probs(prob_vectors: list[ProbVector], sr_enabled: bool,
                layout: SubBlockLayout | None,
                block_argmax: bool = False) -> UncertaintyRecord:
    """Pick the minimum-entropy model among per-session distributions.

    prob_vectors[0] is the base session. Ties break to the lowest
    session id, so the base beats an equally uncertain incremental
    model. By default the winning model predicts the argmax of its full
    distribution even when a base sub-block wins (the block selects the
    model, not the class set); block_argmax restricts the base
    prediction to the winning block instead.
    """
    if not prob_vectors:
        raise StateError("no session models to route over")
    base = prob_vectors[0]
    base_block = None
    if sr_enabled and layout is not None:
        base_subs = sub_entropies(base, layout)
        base_eff, base_block = base_uncertainty(base, layout)
        full_u = np.concatenate([base_subs, [entropy(pv) for pv in prob_vectors[1:]]])
    else:
        base_eff = entropy(base)
        full_u = np.array([base_eff] + [entropy(pv) for pv in prob_vectors[1:]])
    session_eff = np.array([base_eff] + [entropy(pv) for pv in prob_vectors[1:]])
    winner = _argmin_first(session_eff)
    winner_pv = prob_vectors[winner]
    if winner == 0 and block_argmax and base_block is not None:
        sl = layout.block_slice(base_block)
        offset = int(np.argmax(winner_pv.probs[sl]))
        predicted = int(winner_pv.class_ids[sl.start + offset])
    else:
        predicted = winner_pv.argmax_class()
    return UncertaintyRecord(full_u, session_eff, winner,
                             base_block if winner == 0 else None, predicted)


def store_layout(store, sr_enabled: bool) -> SubBlockLayout | None:
    """Sub-block layout implied by a store's session widths, if SR is on.

    Requires all incremental sessions to have equal width. Returns None
    when SR is off or the store has no incremental sessions yet.
    """
    if not sr_enabled or len(store.sessions) < 2:
        return None
    widths = {len(m.class_ids) for m in store.sessions[1:]}
    if len(widths) != 1:
        raise ConfigError("sub-result partitioning needs equal-width incremental sessions")
    return make_layout(len(store.sessions[0].class_ids), widths.pop())


def route(x: np.ndarray, store, sr_enabled: bool,
          block_argmax: bool = False) -> UncertaintyRecord:
    """Route one sample through every model in the store."""
    if not store.sessions:
        raise StateError("empty store")
    probs = store.predict_proba_all(np.asarray(x, dtype=np.float64)[None, :])
    pvs = [ProbVector(p[0], m.class_ids) for p, m in zip(probs, store.sessions)]
    return route_probs(pvs, sr_enabled, store_layout(store, sr_enabled), block_argmax)


def write_trace(path, records: list[UncertaintyRecord], true_labels) -> None:
    """Per-sample routing trace: entropies per session, winner, prediction."""
    n_sessions = len(records[0].session_entropies) if records else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "true_class",
                         *[f"entropy_s{t}" for t in range(n_sessions)],
                         "winner", "prediction"])
        for i, (rec, true) in enumerate(zip(records, true_labels)):
            writer.writerow([i, int(true), *[repr(float(h)) for h in rec.session_entropies],
                             rec.winner_session, rec.predicted_class])
