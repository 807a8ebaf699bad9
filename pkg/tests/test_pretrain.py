"""Contrastive pretraining: sanity values, learning, determinism, resume."""

import dataclasses
import json
import math

import numpy as np
import pytest

from mimoclr import pretrain as P
from mimoclr.errors import ConfigError, ContractError
from mimoclr.rngstream import stream

SMALL = P.PretrainConfig(seed=0, batch_size=32, lr=2e-3, max_epochs=6,
                         patience=30, holdout_fraction=0.15,
                         widths=(4, 8, 16), embed_dim=32)


def make_state(config=SMALL, h=32, w=64):
    return P.init_pretrain_state(config, h, w)


def train_pairs(dataset, n=None):
    idx = dataset.train_indices()
    if n is not None:
        idx = idx[:n]
    return P.load_pairs(dataset, idx)


def test_config_validation():
    with pytest.raises(ConfigError):
        P.PretrainConfig(batch_size=1).validated()
    with pytest.raises(ConfigError):
        P.PretrainConfig(tau_init=0.005, tau_min=0.01).validated()
    with pytest.raises(ConfigError):
        P.PretrainConfig(holdout_fraction=0.0).validated()
    with pytest.raises(ConfigError):
        P.PretrainConfig.from_dict({"learning_rate": 1e-3})


def test_loss_at_random_init_is_near_log_batch(mini_dataset):
    # untrained encoders score each pairing about equally, so the loss over
    # a batch of N pairs should sit near log(N)
    cfg = dataclasses.replace(SMALL, tau_init=1.0)
    state = make_state(cfg)
    pairs = train_pairs(mini_dataset, 64)
    loss, _ = P.evaluate_pairs(state, pairs, batch_size=64)
    assert abs(loss - math.log(64)) < 0.2


def test_retrieval_at_random_init_is_chance(mini_dataset):
    state = make_state()
    pool = train_pairs(mini_dataset)
    z_csi = P.encode_batch(state.csi_encoder, pool.x_csi)
    z_cir = P.encode_batch(state.cir_encoder, pool.x_cir)
    rng = np.random.default_rng(123)
    accs = []
    for _ in range(50):
        idx = rng.choice(pool.n, size=32, replace=False)
        a = z_csi[idx] / np.linalg.norm(z_csi[idx], axis=1, keepdims=True)
        b = z_cir[idx] / np.linalg.norm(z_cir[idx], axis=1, keepdims=True)
        hits = np.argmax(a @ b.T, axis=1) == np.arange(32)
        accs.append(hits.mean())
    assert abs(np.mean(accs) - 1.0 / 32) < 0.03


def test_retrieval_api_matches_direct_computation(mini_dataset):
    state = make_state()
    pairs = train_pairs(mini_dataset, 16)
    got = P.retrieval_accuracy(state, pairs)
    z = P.encode_batch(state.csi_encoder, pairs.x_csi)
    w = P.encode_batch(state.cir_encoder, pairs.x_cir)
    zn = z / np.linalg.norm(z, axis=1, keepdims=True)
    wn = w / np.linalg.norm(w, axis=1, keepdims=True)
    want = float(np.mean(np.argmax(zn @ wn.T, axis=1) == np.arange(16)))
    assert got == want


def test_single_pair_epoch_rejected(mini_dataset):
    state = make_state()
    pairs = train_pairs(mini_dataset, 1)
    with pytest.raises(ContractError):
        P.pretrain_epoch(state, pairs)
    with pytest.raises(ContractError):
        P.retrieval_accuracy(state, pairs)


def test_embedding_spread():
    z = np.tile(np.array([1.0, 2.0, 3.0]), (5, 1))
    assert P.embedding_spread(z) == 0.0  # collapsed: every cosine is 1
    rng = np.random.default_rng(0)
    assert P.embedding_spread(rng.normal(size=(20, 8))) > 0.1
    with pytest.raises(ContractError):
        P.embedding_spread(z[:2])
    z[0] = 0.0
    with pytest.raises(ContractError):
        P.embedding_spread(z)


def test_early_stop_examples():
    assert not P.early_stop_check([5.0, 4.0, 6.0, 6.0, 6.0], patience=3)
    assert P.early_stop_check([5.0, 4.0, 6.0, 6.0, 6.0, 6.0], patience=3)
    # flat history: first value opens the streak, so patience+1 entries stop
    assert not P.early_stop_check([3.0, 3.0, 3.0], patience=3)
    assert P.early_stop_check([3.0, 3.0, 3.0, 3.0], patience=3)
    # strictly improving never stops
    assert not P.early_stop_check(list(np.linspace(10, 1, 40)), patience=3)
    with pytest.raises(ContractError):
        P.early_stop_check([], patience=3)


def test_epoch_metrics_and_tail_handling(mini_dataset):
    state = make_state()
    pairs = train_pairs(mini_dataset, 65)  # 32 + 32 + 1 at batch 32
    m = P.pretrain_epoch(state, pairs)
    assert m["epoch"] == 1 and state.epoch == 1
    assert m["n_used"] == 64 and m["n_dropped"] == 1
    assert math.isfinite(m["train_loss"]) and 0.0 <= m["train_retrieval"] <= 1.0


def test_training_reduces_loss(mini_dataset):
    state = make_state()
    pairs = train_pairs(mini_dataset)
    loss0, _ = P.evaluate_pairs(state, pairs, state.config.batch_size)
    for _ in range(30):
        P.pretrain_epoch(state, pairs)
    loss1, ret1 = P.evaluate_pairs(state, pairs, state.config.batch_size)
    assert loss1 < 0.5 * loss0
    assert ret1 > 0.2  # far above the 1/32 chance level


def test_tau_stays_above_floor(mini_dataset):
    cfg = dataclasses.replace(SMALL, tau_init=0.011, tau_min=0.01, lr=0.05)
    state = make_state(cfg)
    pairs = train_pairs(mini_dataset, 32)
    for _ in range(5):
        P.pretrain_epoch(state, pairs)
    assert state.tau() >= cfg.tau_min - 1e-7


def test_same_seed_same_trace(mini_dataset):
    pairs = train_pairs(mini_dataset, 64)
    traces = []
    finals = []
    for _ in range(2):
        state = make_state()
        tr = [P.pretrain_epoch(state, pairs)["train_loss"] for _ in range(3)]
        traces.append(tr)
        finals.append({k: p.data.copy() for k, p in state.parameters().items()})
    assert traces[0] == traces[1]
    for k in finals[0]:
        assert np.array_equal(finals[0][k], finals[1][k]), k


def test_different_seed_different_trace(mini_dataset):
    pairs = train_pairs(mini_dataset, 64)
    a = P.pretrain_epoch(make_state(), pairs)["train_loss"]
    b = P.pretrain_epoch(make_state(dataclasses.replace(SMALL, seed=1)), pairs)["train_loss"]
    assert a != b


def test_checkpoint_round_trip(mini_dataset, tmp_path):
    state = make_state()
    pairs = train_pairs(mini_dataset, 64)
    for _ in range(2):
        P.pretrain_epoch(state, pairs)
    state.val_history = [2.0, 1.5]
    state.best_val_loss = 1.5
    path = str(tmp_path / "pre.ckpt")
    P.save_pretrain_checkpoint(state, path)
    loaded, meta = P.load_pretrain_state(path)
    assert loaded.epoch == 2
    assert loaded.config == state.config
    assert loaded.best_val_loss == 1.5
    assert loaded.val_history == [2.0, 1.5]
    assert meta["rng"] == {"scheme": "counter-based", "seed": 0}
    for k, p in state.parameters().items():
        assert np.array_equal(loaded.parameters()[k].data, p.data), k
    want_m = state.optimizer.state_arrays()
    got_m = loaded.optimizer.state_arrays()
    for k in want_m:
        assert np.array_equal(got_m[k], want_m[k]), k
    # training continues identically from the restored state
    m1 = P.pretrain_epoch(state, pairs)
    m2 = P.pretrain_epoch(loaded, pairs)
    assert m1 == m2


def test_run_writes_metrics_and_checkpoint(mini_dataset, tmp_path):
    cfg = dataclasses.replace(SMALL, max_epochs=3)
    state, rows = P.run_pretraining(mini_dataset, cfg, str(tmp_path))
    assert state.epoch == 3 and len(rows) == 3
    lines = open(tmp_path / "pretrain_metrics.jsonl").read().splitlines()
    assert len(lines) == 3
    for i, line in enumerate(lines):
        row = json.loads(line)
        assert row == rows[i]
        assert set(row) == {"epoch", "train_loss", "val_loss", "retrieval",
                            "train_retrieval", "lr", "tau"}
        assert row["epoch"] == i + 1
    assert (tmp_path / "pretrain.ckpt").exists()


def test_resume_reproduces_uninterrupted_run(mini_dataset, tmp_path):
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    state_a, rows_a = P.run_pretraining(mini_dataset, SMALL, str(a_dir))

    P.run_pretraining(mini_dataset, SMALL, str(b_dir), max_epochs=3)
    state_b, _ = P.run_pretraining(mini_dataset, SMALL, str(b_dir), resume=True)

    assert state_b.epoch == state_a.epoch == 6
    for k, p in state_a.parameters().items():
        assert np.array_equal(state_b.parameters()[k].data, p.data), k
    assert open(a_dir / "pretrain_metrics.jsonl").read() == \
        open(b_dir / "pretrain_metrics.jsonl").read()
    assert open(a_dir / "pretrain.ckpt", "rb").read() == \
        open(b_dir / "pretrain.ckpt", "rb").read()


def test_holdout_never_uses_validation_split(mini_dataset):
    fit, hold = P._inner_split(mini_dataset, SMALL)
    train = set(mini_dataset.train_indices().tolist())
    assert set(fit.tolist()) | set(hold.tolist()) == train
    assert set(fit.tolist()) & set(hold.tolist()) == set()
    assert len(hold) == math.floor(len(train) * SMALL.holdout_fraction)


def test_shuffle_stream_is_epoch_keyed():
    a = stream(0, "pretrain-shuffle", 3).permutation(10)
    b = stream(0, "pretrain-shuffle", 3).permutation(10)
    c = stream(0, "pretrain-shuffle", 4).permutation(10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
