import json
import math

import numpy as np
import pytest

from fscil.config import Flags, ProtocolSpec, TrainSettings
from fscil.data import GaussianSpec, make_gaussian_dataset
from fscil.errors import ProtocolError
from fscil.harness import (SessionReport, evaluate, run_protocol, split_protocol,
                           write_report)
from fscil.sessions import train_base, train_incremental


class StubSession:
    def __init__(self, session_id, class_ids):
        self.session_id = session_id
        self.class_ids = np.asarray(class_ids, dtype=np.int64)


class StubStore:
    """Duck-typed store producing prescribed per-session distributions."""

    def __init__(self, class_groups, prob_fn):
        self.sessions = [StubSession(t, ids) for t, ids in enumerate(class_groups)]
        self._prob_fn = prob_fn

    def session_of_class(self):
        return {int(c): m.session_id for m in self.sessions for c in m.class_ids}

    def predict_proba_all(self, x):
        return self._prob_fn(x, self.sessions)


def oracle_store(base_n, way, n_inc):
    """One-hot on own-session samples (sample = its true class id), uniform elsewhere."""
    groups = [list(range(base_n))] + [
        list(range(base_n + t * way, base_n + (t + 1) * way)) for t in range(n_inc)]

    def prob_fn(x, sessions):
        true = x[:, 0].astype(int)  # first feature carries the class id
        out = []
        for m in sessions:
            probs = np.full((len(true), len(m.class_ids)), 1.0 / len(m.class_ids))
            for i, cls in enumerate(true):
                hit = np.nonzero(m.class_ids == cls)[0]
                if len(hit):
                    probs[i] = 0.0
                    probs[i, hit[0]] = 1.0
            out.append(probs)
        return out

    return StubStore(groups, prob_fn)


def class_id_dataset(num_classes, per_class, seed=0):
    """Samples whose first feature is the class id (for stub stores)."""
    from fscil.data import LabeledDataset
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(num_classes), per_class)
    samples = rng.random((len(labels), 4))
    samples[:, 0] = labels
    return LabeledDataset(samples, labels, "test")


def small_protocol_data(seed=0):
    return make_gaussian_dataset(GaussianSpec(100, 8, 6, 2, 0.15, seed))


def test_split_protocol_paper_shape():
    train, test = small_protocol_data()
    spec = ProtocolSpec(base_classes=60, way=5, shot=5, sessions=8, seed=1)
    split = split_protocol(train, test, spec)
    sizes = [len(s.class_ids) for s in split.sessions]
    assert sizes == [60] + [5] * 8
    assert len(split.sessions[0].train) == 60 * 6
    for s in split.sessions[1:]:
        assert len(s.train) == 25  # 5-way 5-shot
    assert sorted(split.cumulative_tests[0].class_ids) == list(range(60))
    assert sorted(split.cumulative_tests[8].class_ids) == list(range(100))


def test_split_protocol_disjoint_samples_and_classes():
    train, test = small_protocol_data()
    spec = ProtocolSpec(base_classes=20, way=5, shot=3, sessions=4, seed=2)
    split = split_protocol(train, test, spec)
    all_ids = np.concatenate([s.class_ids for s in split.sessions])
    assert len(np.unique(all_ids)) == len(all_ids)


def test_split_protocol_deterministic():
    train, test = small_protocol_data()
    spec = ProtocolSpec(base_classes=20, way=5, shot=3, sessions=4, seed=3)
    a = split_protocol(train, test, spec)
    b = split_protocol(train, test, spec)
    for sa, sb in zip(a.sessions, b.sessions):
        assert np.array_equal(sa.train.samples, sb.train.samples)


def test_split_protocol_shot_shortage():
    train, test = small_protocol_data()
    spec = ProtocolSpec(base_classes=20, way=5, shot=7, sessions=4, seed=0)
    with pytest.raises(ProtocolError):
        split_protocol(train, test, spec)  # only 6 train samples per class


def test_split_protocol_class_assignment_override():
    train, test = small_protocol_data()
    spec = ProtocolSpec(base_classes=96, way=2, shot=3, sessions=2, seed=0)
    assignment = [list(range(4, 100)), [0, 1], [2, 3]]
    split = split_protocol(train, test, spec, assignment)
    assert sorted(split.sessions[1].class_ids) == [0, 1]
    bad = [list(range(96)), [0, 1], [96, 97]]
    with pytest.raises(ProtocolError):
        split_protocol(train, test, spec, bad)


def test_evaluate_oracle_store_is_perfect():
    store = oracle_store(20, 5, 4)
    test = class_id_dataset(40, 30)
    for sr in (False, True):
        result = evaluate(store, test, Flags(ms=True, sr=sr))
        assert result.accuracy == 1.0
        assert result.routing_accuracy == 1.0


def test_evaluate_uniform_random_predictions():
    # single-session store predicting uniformly at random over 20 classes
    rng = np.random.default_rng(11)

    def prob_fn(x, sessions):
        probs = np.zeros((len(x), 20))
        probs[np.arange(len(x)), rng.integers(0, 20, size=len(x))] = 1.0
        return [probs]

    store = StubStore([list(range(20))], prob_fn)
    test = class_id_dataset(20, 100)  # 2000 samples
    result = evaluate(store, test, Flags(ms=True))
    assert abs(result.accuracy - 0.05) <= 0.02
    assert result.routing_accuracy == 1.0  # single candidate session


def test_evaluate_empty_test_set():
    store = oracle_store(4, 2, 1)
    ds = class_id_dataset(6, 1).subset(np.array([], dtype=int))
    with pytest.raises(ValueError):
        evaluate(store, ds, Flags(ms=True))


def run_small_protocol(flags, seed=0, spread=0.15):
    train, test = make_gaussian_dataset(GaussianSpec(40, 16, 30, 5, spread, seed))
    spec = ProtocolSpec(base_classes=20, way=5, shot=5, sessions=4, seed=seed)
    cfg = TrainSettings(epochs_base=10, epochs_inc=5, hidden_dims=(32,), body_depth=1)
    return run_protocol(train, test, spec, flags, cfg)


def test_run_protocol_class_counts_all_flags_off():
    report, _ = run_small_protocol(Flags())
    assert report.classes_seen == [20, 25, 30, 35, 40]
    assert len(report.accuracies) == 5
    assert all(math.isnan(r) for r in report.routing_accuracies)  # ms off


def test_run_protocol_average_accuracy_definition():
    report, _ = run_small_protocol(Flags(fc=False, dr=True, ms=True, sr=True))
    assert report.average_accuracy == pytest.approx(
        float(np.mean(report.accuracies)), abs=1e-12)
    assert all(not math.isnan(r) for r in report.routing_accuracies)


def test_run_protocol_isolation_forgetting_bound():
    # with routing replaced by per-model oracle evaluation, each session
    # model's accuracy on its own classes never changes afterwards
    train, test = make_gaussian_dataset(GaussianSpec(30, 8, 20, 5, 0.15, 4))
    spec = ProtocolSpec(base_classes=10, way=5, shot=5, sessions=4, seed=4)
    cfg = TrainSettings(epochs_base=5, epochs_inc=3, hidden_dims=(32,), body_depth=1)
    split = split_protocol(train, test, spec)
    store, _ = train_base(split.sessions[0].train, cfg, fc_enabled=False,
                          ft_enabled=False, seed=spec.seed)

    def own_accuracy(t):
        model = store.sessions[t]
        own = test.restrict_to(model.class_ids)
        probs = store.predict_proba_all(own.flat)[t]
        pred = model.class_ids[np.argmax(probs, axis=1)]
        return float(np.mean(pred == own.labels))

    history = {0: [own_accuracy(0)]}
    for t in range(1, 5):
        train_incremental(store, split.sessions[t].train, cfg, spec.seed)
        for s in list(history):
            history[s].append(own_accuracy(s))
        history[t] = [own_accuracy(t)]
    for accs in history.values():
        assert all(a == accs[0] for a in accs)  # exact equality


def test_run_protocol_sr_rejects_non_divisible_width():
    # 20 base classes with 3-way sessions: no equal-width partition exists
    from fscil.errors import ConfigError
    train, test = make_gaussian_dataset(GaussianSpec(26, 8, 10, 2, 0.2, 0))
    spec = ProtocolSpec(base_classes=20, way=3, shot=3, sessions=2, seed=0)
    cfg = TrainSettings(epochs_base=2, epochs_inc=1, hidden_dims=(16,), body_depth=1)
    with pytest.raises(ConfigError):
        run_protocol(train, test, spec, Flags(dr=True, ms=True, sr=True), cfg)
    # without SR the same protocol runs fine
    report, _ = run_protocol(train, test, spec, Flags(dr=True, ms=True), cfg)
    assert report.classes_seen == [20, 23, 26]


def test_report_files(tmp_path):
    report, _ = run_small_protocol(Flags(dr=True, ms=True, sr=True), seed=1)
    paths = write_report(report, tmp_path / "run")
    csv_text = (tmp_path / "run.csv").read_text()
    lines = csv_text.strip().split("\n")
    assert lines[0] == "# flags: FC=0,DR=1,MS=1,SR=1,FT=0"
    assert lines[2] == "session,classes_seen,accuracy,routing_accuracy"
    assert len(lines) == 3 + 5 + 1  # header x3, 5 sessions, AA row
    assert lines[-1].startswith("AA,,")
    plot = (tmp_path / "run_plot.csv").read_text().strip().split("\n")
    assert plot[0] == "session,accuracy"
    assert len(plot) == 6
    raw = json.loads((tmp_path / "run.json").read_text())
    assert raw["average_accuracy"] == report.average_accuracy
    assert set(paths) == {str(tmp_path / "run.csv"), str(tmp_path / "run_plot.csv"),
                          str(tmp_path / "run.json")}


def test_report_roundtrip_and_determinism(tmp_path):
    report, _ = run_small_protocol(Flags(ms=True), seed=2)
    write_report(report, tmp_path / "a")
    back = SessionReport.from_json((tmp_path / "a.json").read_text())
    write_report(back, tmp_path / "b")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_plot.csv").read_bytes() == (tmp_path / "b_plot.csv").read_bytes()


def test_nine_session_report_rows(tmp_path):
    rep = SessionReport({"FC": True, "DR": True, "MS": True, "SR": True, "FT": True},
                        7, list(range(60, 105, 5)),
                        [0.9 - 0.05 * t for t in range(9)],
                        [0.95] * 9, 0.7)
    write_report(rep, tmp_path / "nine")
    lines = (tmp_path / "nine.csv").read_text().strip().split("\n")
    assert len(lines) == 3 + 9 + 1
    assert lines[0] == "# flags: FC=1,DR=1,MS=1,SR=1,FT=1"
