import json

import numpy as np
import pytest

from fscil.cli import main
from fscil.config import ConfigError, load_config, save_config
from fscil.config import ExperimentConfig, Flags, Paths, ProtocolSpec, TrainSettings
from fscil.data import read_fds
from fscil.errors import StateError
from fscil.routing import route
from fscil.sessions import SessionModelStore, load_store
from fscil.nn import LayerStack

from test_sessions import gaussians, shots
from fscil.sessions import train_base, train_incremental


def write_config(tmp_path, **overrides):
    config = {
        "protocol": {"base_classes": 8, "way": 2, "shot": 3, "sessions": 2, "seed": 5},
        "train": {"epochs_base": 4, "epochs_inc": 2, "hidden_dims": [16],
                  "body_depth": 1, "feature_dim": 8, "batch": 16},
        "flags": {"fc": True, "dr": True, "ms": True, "sr": True, "ft": True},
        "paths": {"train_data": str(tmp_path / "train.fds"),
                  "test_data": str(tmp_path / "test.fds"),
                  "store": str(tmp_path / "run.fscs"),
                  "report": str(tmp_path / "run"),
                  "trace": str(tmp_path / "trace.csv")},
    }
    for section, values in overrides.items():
        config[section].update(values)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


def test_cli_full_flow(tmp_path, capsys):
    main(["gen-synth", "--classes", "12", "--dim", "8", "--train-per-class", "20",
          "--test-per-class", "5", "--spread", "0.15", "--seed", "5",
          "--out-train", str(tmp_path / "train.fds"),
          "--out-test", str(tmp_path / "test.fds")])
    cfg_path = write_config(tmp_path)

    main(["run-protocol", "--config", str(cfg_path)])
    assert (tmp_path / "run.csv").exists()
    assert (tmp_path / "run_plot.csv").exists()
    assert (tmp_path / "trace.csv").read_text().startswith("sample,true_class")
    store = load_store(tmp_path / "run.fscs")
    assert len(store.sessions) == 3

    main(["evaluate", "--config", str(cfg_path)])
    assert "routing accuracy" in capsys.readouterr().out

    main(["train-base", "--config", str(cfg_path)])
    main(["train-inc", "--config", str(cfg_path), "--session", "1"])
    assert len(load_store(tmp_path / "run.fscs").sessions) == 2

    main(["report", "--in", str(tmp_path / "run.json"), "--out", str(tmp_path / "re")])
    assert (tmp_path / "re.csv").read_bytes() == (tmp_path / "run.csv").read_bytes()


def test_cli_evaluate_ms_off(tmp_path, capsys):
    main(["gen-synth", "--classes", "12", "--dim", "8", "--train-per-class", "20",
          "--test-per-class", "5", "--spread", "0.15", "--seed", "5",
          "--out-train", str(tmp_path / "train.fds"),
          "--out-test", str(tmp_path / "test.fds")])
    cfg_path = write_config(tmp_path, flags={"ms": False, "sr": False})
    main(["run-protocol", "--config", str(cfg_path)])
    main(["evaluate", "--config", str(cfg_path)])
    out = capsys.readouterr().out
    assert "routing accuracy = nan" in out


def test_cli_seed_override(tmp_path):
    main(["gen-synth", "--classes", "12", "--dim", "8", "--train-per-class", "20",
          "--test-per-class", "5", "--spread", "0.15", "--seed", "5",
          "--out-train", str(tmp_path / "train.fds"),
          "--out-test", str(tmp_path / "test.fds")])
    cfg_path = write_config(tmp_path)
    main(["run-protocol", "--config", str(cfg_path), "--seed", "6"])
    raw = json.loads((tmp_path / "run.json").read_text())
    assert raw["seed"] == 6


def test_gen_synth_output_is_valid_fds(tmp_path):
    main(["gen-synth", "--classes", "5", "--dim", "6", "--train-per-class", "4",
          "--test-per-class", "2", "--out-train", str(tmp_path / "t.fds"),
          "--out-test", str(tmp_path / "e.fds")])
    ds = read_fds(tmp_path / "t.fds")
    assert len(ds) == 20
    assert sorted(ds.class_ids) == list(range(5))


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(
        protocol=ProtocolSpec(10, 2, 3, 4, seed=9),
        train=TrainSettings(lr=0.01, hidden_dims=(8, 8), body_depth=2),
        flags=Flags(fc=True, sr=True),
        paths=Paths(train_data="a.fds"))
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    back = load_config(path)
    assert back == cfg


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({
        "protocol": {"base_classes": 4, "way": 1, "shot": 1, "sessions": 1,
                     "seed": 0, "bogus": 3}}))
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text(json.dumps({"train": {}}))
    with pytest.raises(ConfigError):
        load_config(path)


def test_route_on_real_store():
    train, test = gaussians(8, 8, 30, 5, seed=12)
    cfg = TrainSettings(epochs_base=4, epochs_inc=2)
    store, _ = train_base(train.restrict_to(range(5)), cfg,
                          fc_enabled=False, ft_enabled=False, seed=12)
    # single-model store: base wins regardless of entropy
    rec = route(test.flat[0], store, sr_enabled=False)
    assert rec.winner_session == 0
    assert rec.predicted_class in range(5)

    train_incremental(store, shots(train, range(5, 8), 5), cfg, seed=12)
    rec = route(test.flat[0], store, sr_enabled=False)
    assert rec.winner_session in (0, 1)
    assert rec.session_entropies[rec.winner_session] == rec.entropies.min()


def test_route_empty_store():
    body = LayerStack.create([4, 4], "tanh", 0)
    with pytest.raises(StateError):
        route(np.zeros(4), SessionModelStore(body), sr_enabled=False)


def test_trained_store_is_finite():
    train, _ = gaussians(8, 8, 30, 5, seed=13)
    cfg = TrainSettings(epochs_base=6, epochs_inc=4)
    store, _ = train_base(train.restrict_to(range(5)), cfg,
                          fc_enabled=True, ft_enabled=True, seed=13)
    train_incremental(store, shots(train, range(5, 8), 5), cfg, seed=13)
    for stack in [store.body] + [m.tail for m in store.sessions]:
        for layer in stack.layers:
            assert np.all(np.isfinite(layer.weights))
            assert np.all(np.isfinite(layer.bias))
    for m in store.sessions:
        assert np.all(np.isfinite(m.classifier.prototypes))
    probs = store.predict_proba_all(train.flat)
    assert all(np.all(np.isfinite(p)) for p in probs)
