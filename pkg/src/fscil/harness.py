"""Protocol construction, the experiment runner, metrics, and reports.

A protocol run trains the base session, then each N-way K-shot session
in order, evaluating after every session on the union of all classes
seen so far. The ablation flags select base-session augmentation (fc),
incremental tail fine-tuning (dr), entropy routing (ms), base sub-result
partitioning (sr), and the real-class classifier fine-tune (ft). With ms
off, evaluation falls back to a single concatenated cosine classifier
over all seen prototypes with the base feature extractor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import Flags, ProtocolSpec, TrainSettings
from .data import LabeledDataset
from .errors import ProtocolError
from .prototypes import ProbVector, PrototypeSet, batched_cosine_probs, class_means
from .routing import UncertaintyRecord, route_probs, store_layout, write_trace
from .sessions import SessionModelStore, train_base, train_incremental


@dataclass
class SessionSplit:
    session_id: int
    class_ids: np.ndarray
    train: LabeledDataset


@dataclass
class ProtocolSplit:
    sessions: list[SessionSplit]
    cumulative_tests: list[LabeledDataset]


def load_class_split(path) -> list[list[int]]:
    """Read a class-to-session assignment file: {"base": [...], "sessions": [[...], ...]}."""
    with open(path) as fh:
        raw = json.load(fh)
    return [list(raw["base"])] + [list(s) for s in raw["sessions"]]


def split_protocol(train: LabeledDataset, test: LabeledDataset, spec: ProtocolSpec,
                   class_assignment: list[list[int]] | None = None) -> ProtocolSplit:
    """Carve the dataset into session train sets and cumulative test sets.

    The base session keeps every train sample of its classes; each
    incremental session keeps exactly K seeded-random samples per class.
    Classes default to id order; a split file may override that.
    """
    all_ids = np.union1d(train.class_ids, test.class_ids)
    if spec.total_classes > len(all_ids):
        raise ProtocolError(
            f"protocol needs {spec.total_classes} classes, dataset has {len(all_ids)}")
    if class_assignment is None:
        ordered = [int(c) for c in np.sort(all_ids)]
        class_assignment = [ordered[:spec.base_classes]]
        for t in range(spec.sessions):
            start = spec.base_classes + t * spec.way
            class_assignment.append(ordered[start:start + spec.way])
    if len(class_assignment) != spec.sessions + 1 \
            or len(class_assignment[0]) != spec.base_classes \
            or any(len(s) != spec.way for s in class_assignment[1:]):
        raise ProtocolError("class assignment does not match the protocol spec")
    flat = [c for group in class_assignment for c in group]
    if len(set(flat)) != len(flat):
        raise ProtocolError("class assignment repeats a class")

    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 1]))
    sessions = [SessionSplit(0, np.array(class_assignment[0], dtype=np.int64),
                             train.restrict_to(class_assignment[0]))]
    for t in range(1, spec.sessions + 1):
        picks = []
        for cid in class_assignment[t]:
            candidates = train.indices_of(cid)
            if len(candidates) < spec.shot:
                raise ProtocolError(
                    f"class {cid} has {len(candidates)} train samples, needs {spec.shot}")
            picks.extend(rng.choice(candidates, size=spec.shot, replace=False))
        sessions.append(SessionSplit(t, np.array(class_assignment[t], dtype=np.int64),
                                     train.subset(np.array(sorted(picks)))))

    cumulative, seen = [], []
    for split in sessions:
        seen.extend(split.class_ids)
        cumulative.append(test.restrict_to(seen))
    return ProtocolSplit(sessions, cumulative)


@dataclass
class EvalResult:
    accuracy: float
    routing_accuracy: float
    records: list[UncertaintyRecord] = field(default_factory=list)


def evaluate(store: SessionModelStore, test_set: LabeledDataset, flags: Flags,
             concat_classifier: PrototypeSet | None = None) -> EvalResult:
    """Accuracy and routing accuracy of the store on a test set.

    With ms on, every sample is routed by minimum entropy (sr per flag)
    and routing accuracy is the fraction sent to the session that owns
    the true class. With ms off, predictions come from the concatenated
    classifier and routing accuracy is NaN.
    """
    if len(test_set) == 0:
        raise ValueError("empty test set")
    if not flags.ms:
        if concat_classifier is None:
            raise ValueError("ms-off evaluation needs the concatenated classifier")
        feats = store.sessions[0].tail.forward(store.body.forward(test_set.flat))
        probs = batched_cosine_probs(feats, concat_classifier)
        predicted = concat_classifier.class_ids[np.argmax(probs, axis=1)]
        return EvalResult(float(np.mean(predicted == test_set.labels)), math.nan)

    layout = store_layout(store, flags.sr)
    all_probs = store.predict_proba_all(test_set.flat)
    owner = store.session_of_class()
    records, hits, routed = [], 0, 0
    for i in range(len(test_set)):
        pvs = [ProbVector(p[i], m.class_ids) for p, m in zip(all_probs, store.sessions)]
        rec = route_probs(pvs, flags.sr, layout, flags.sr_block_argmax)
        records.append(rec)
        true = int(test_set.labels[i])
        hits += rec.predicted_class == true
        routed += rec.winner_session == owner[true]
    n = len(test_set)
    return EvalResult(hits / n, routed / n, records)


@dataclass
class SessionReport:
    """Per-session union-test accuracies for one protocol run."""

    flags: dict[str, bool]
    seed: int
    classes_seen: list[int]
    accuracies: list[float]
    routing_accuracies: list[float]
    average_accuracy: float

    def to_json(self) -> str:
        return json.dumps(
            {"flags": self.flags, "seed": self.seed,
             "classes_seen": self.classes_seen,
             "accuracies": self.accuracies,
             "routing_accuracies": self.routing_accuracies,
             "average_accuracy": self.average_accuracy},
            indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SessionReport":
        raw = json.loads(text)
        return cls(raw["flags"], raw["seed"], raw["classes_seen"],
                   raw["accuracies"], raw["routing_accuracies"],
                   raw["average_accuracy"])


def build_concat_classifier(store: SessionModelStore,
                            session_train_sets: list[SessionSplit]) -> PrototypeSet:
    """The ms-off baseline classifier: trained base rows plus base-extractor
    feature-mean prototypes for every completed incremental session."""
    concat = store.sessions[0].classifier.copy()
    for model in store.sessions[1:]:
        split = session_train_sets[model.session_id]
        feats = store.sessions[0].tail.forward(store.body.forward(split.train.flat))
        rows = class_means(feats, split.train.labels, split.class_ids)
        concat = PrototypeSet(np.concatenate([concat.class_ids, split.class_ids]),
                              np.concatenate([concat.prototypes, rows]), concat.scale)
    return concat


def run_protocol(train: LabeledDataset, test: LabeledDataset, spec: ProtocolSpec,
                 flags: Flags, cfg: TrainSettings,
                 class_assignment: list[list[int]] | None = None,
                 trace_path=None) -> tuple[SessionReport, SessionModelStore]:
    """Run the full protocol and report per-session accuracies."""
    split = split_protocol(train, test, spec, class_assignment)
    store, _ = train_base(split.sessions[0].train, cfg,
                          fc_enabled=flags.fc, ft_enabled=flags.ft, seed=spec.seed)

    accuracies, routing, seen_counts, last_records = [], [], [], []

    def eval_session(t: int):
        nonlocal last_records
        concat = None if flags.ms else build_concat_classifier(store, split.sessions)
        result = evaluate(store, split.cumulative_tests[t], flags, concat)
        accuracies.append(result.accuracy)
        routing.append(result.routing_accuracy)
        seen_counts.append(sum(len(s.class_ids) for s in split.sessions[:t + 1]))
        last_records = result.records

    eval_session(0)
    for t in range(1, spec.sessions + 1):
        train_incremental(store, split.sessions[t].train, cfg, spec.seed,
                          epochs=cfg.epochs_inc if flags.dr else 0)
        eval_session(t)

    if trace_path is not None and last_records:
        write_trace(trace_path, last_records, split.cumulative_tests[-1].labels)

    report = SessionReport(flags.as_dict(), spec.seed, seen_counts,
                           accuracies, routing, float(np.mean(accuracies)))
    return report, store


def write_report(report: SessionReport, base_path) -> list[str]:
    """Write <base>.csv, <base>_plot.csv and <base>.json; returns the paths.

    The CSV carries the ablation flag vector as a header comment and one
    row per session plus a final AA row; the plot file is the session
    index vs accuracy series. Output is byte-deterministic.
    """
    base = str(base_path)
    csv_path, plot_path, json_path = base + ".csv", base + "_plot.csv", base + ".json"
    flag_names = ["FC", "DR", "MS", "SR", "FT"]
    with open(csv_path, "w", newline="") as fh:
        fh.write("# flags: " + ",".join(
            f"{n}={int(report.flags[n])}" for n in flag_names) + "\n")
        fh.write(f"# seed: {report.seed}\n")
        fh.write("session,classes_seen,accuracy,routing_accuracy\n")
        for t, (n, acc, r) in enumerate(zip(report.classes_seen, report.accuracies,
                                            report.routing_accuracies)):
            fh.write(f"{t},{n},{acc!r},{r!r}\n")
        fh.write(f"AA,,{report.average_accuracy!r},\n")
    with open(plot_path, "w", newline="") as fh:
        fh.write("session,accuracy\n")
        for t, acc in enumerate(report.accuracies):
            fh.write(f"{t},{acc!r}\n")
    with open(json_path, "w") as fh:
        fh.write(report.to_json())
    return [csv_path, plot_path, json_path]
