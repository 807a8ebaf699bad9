"""Dual-encoder contrastive pretraining over aligned CSI/CIR pairs.

Two structurally identical encoders with separate weights embed the
frequency view (anchor side) and the delay view of each sample; the batch
alignment loss with a learnable temperature pulls matched pairs together
against in-batch negatives.  Training tracks in-batch retrieval (does each
anchor rank its own pair first?) as the pretext diagnostic, cuts the
learning rate on validation plateaus, early-stops, and checkpoints every
epoch so a run can resume bit-identically.
"""

import dataclasses
import json
import logging
import math
import os

import numpy as np

from .datapipe import Dataset, load_batch
from .errors import ConfigError, ContractError
from .nncore import checkpoint as ckpt
from .nncore import tensor as T
from .nncore.layers import Encoder, EncoderConfig, prefixed
from .nncore.losses import contrastive_loss
from .nncore.optim import AdamW, LRPlateau
from .nncore.tensor import Tensor
from .rngstream import stream

log = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class PretrainConfig:
    seed: int = 0
    batch_size: int = 128
    lr: float = 8e-4
    weight_decay: float = 0.01
    max_epochs: int = 300
    patience: int = 30
    lr_factor: float = 0.8
    lr_interval: int = 10
    tau_init: float = 0.07
    tau_min: float = 0.01
    symmetric: bool = False
    holdout_fraction: float = 0.1
    widths: tuple = (16, 32, 64)
    kernel_size: int = 3
    embed_dim: int = 128

    def validated(self) -> "PretrainConfig":
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if not (0.0 < self.holdout_fraction < 1.0):
            raise ConfigError(f"holdout_fraction must be in (0,1), got {self.holdout_fraction}")
        if self.tau_init < self.tau_min or self.tau_min <= 0:
            raise ConfigError(f"need tau_init >= tau_min > 0, got {self.tau_init}, {self.tau_min}")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError(f"max_epochs and patience must be >= 1")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "PretrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown pretrain config keys: {sorted(unknown)}")
        d = dict(d)
        if "widths" in d:
            d["widths"] = tuple(d["widths"])
        return cls(**d).validated()


@dataclasses.dataclass
class PretrainState:
    config: PretrainConfig
    encoder_config: EncoderConfig
    csi_encoder: Encoder
    cir_encoder: Encoder
    log_tau: Tensor
    optimizer: AdamW
    schedule: LRPlateau
    epoch: int = 0
    best_val_loss: float = math.inf
    val_history: list = dataclasses.field(default_factory=list)

    def tau(self) -> float:
        return float(np.exp(self.log_tau.data))

    def parameters(self) -> dict:
        p = prefixed(self.csi_encoder.params, "csi.")
        p.update(prefixed(self.cir_encoder.params, "cir."))
        p["log_tau"] = self.log_tau
        return p


@dataclasses.dataclass
class PairArrays:
    """Preloaded aligned views: x_csi / x_cir are float32 [N, 2, P, K]."""
    x_csi: np.ndarray
    x_cir: np.ndarray

    def __post_init__(self):
        if self.x_csi.shape != self.x_cir.shape:
            raise ContractError(
                f"pair arrays must align, got {self.x_csi.shape} vs {self.x_cir.shape}")

    @property
    def n(self) -> int:
        return self.x_csi.shape[0]


def load_pairs(dataset: Dataset, indices) -> PairArrays:
    x_csi, _ = load_batch(dataset, indices, "csi")
    x_cir, _ = load_batch(dataset, indices, "cir")
    return PairArrays(x_csi=x_csi, x_cir=x_cir)


def init_pretrain_state(config: PretrainConfig, in_height: int, in_width: int) -> PretrainState:
    config = config.validated()
    enc_cfg = EncoderConfig(in_height=in_height, in_width=in_width,
                            widths=config.widths, kernel_size=config.kernel_size,
                            embed_dim=config.embed_dim).validated()
    csi_enc = Encoder.init(enc_cfg, stream(config.seed, "csi-encoder-init"))
    cir_enc = Encoder.init(enc_cfg, stream(config.seed, "cir-encoder-init"))
    log_tau = Tensor(np.float32(np.log(config.tau_init)), requires_grad=True)
    params = prefixed(csi_enc.params, "csi.")
    params.update(prefixed(cir_enc.params, "cir."))
    params["log_tau"] = log_tau
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    sched = LRPlateau(factor=config.lr_factor, interval=config.lr_interval)
    return PretrainState(config=config, encoder_config=enc_cfg,
                         csi_encoder=csi_enc, cir_encoder=cir_enc,
                         log_tau=log_tau, optimizer=opt, schedule=sched)


def encode_batch(encoder: Encoder, x: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Forward without training, chunked to bound graph memory."""
    outs = []
    for lo in range(0, x.shape[0], chunk):
        outs.append(encoder.forward(Tensor(x[lo:lo + chunk])).data)
    return np.concatenate(outs, axis=0)


def _batch_retrieval(z_csi: np.ndarray, z_cir: np.ndarray) -> float:
    """CSI-anchored top-1 under cosine; ties go to the lowest index."""
    na = np.linalg.norm(z_csi, axis=1, keepdims=True)
    nb = np.linalg.norm(z_cir, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise ContractError("retrieval undefined: zero embedding in batch")
    sim = (z_csi / na) @ (z_cir / nb).T
    return float(np.mean(np.argmax(sim, axis=1) == np.arange(sim.shape[0])))


def retrieval_accuracy(state: PretrainState, pairs: PairArrays) -> float:
    """In-batch pair retrieval on one batch of aligned views (>= 2 pairs)."""
    if pairs.n < 2:
        raise ContractError(f"retrieval needs a batch of >= 2, got {pairs.n}")
    z_csi = encode_batch(state.csi_encoder, pairs.x_csi)
    z_cir = encode_batch(state.cir_encoder, pairs.x_cir)
    return _batch_retrieval(z_csi, z_cir)


def embedding_spread(z: np.ndarray) -> float:
    """Std of pairwise cosine similarities among distinct rows (collapse
    indicator: a constant embedding has spread 0)."""
    if z.shape[0] < 3:
        raise ContractError("spread needs at least 3 embeddings")
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ContractError("spread undefined: zero embedding")
    zn = z / norms
    sims = (zn @ zn.T)[np.triu_indices(z.shape[0], k=1)]
    return float(np.std(sims))


def _tau_graph(state: PretrainState):
    return T.maximum_const(T.exp(state.log_tau), state.config.tau_min)


def pretrain_epoch(state: PretrainState, pairs: PairArrays, batch_size=None) -> dict:
    """One seeded-shuffle pass over the training pairs; returns epoch metrics.

    Size-1 tail batches are dropped (a single pair has no negatives and
    zero loss).  The shuffle derives from (seed, epoch), so resuming from a
    checkpoint replays the identical order.
    """
    cfg = state.config
    bs = cfg.batch_size if batch_size is None else int(batch_size)
    if bs < 2:
        raise ContractError(f"pretraining needs batch_size >= 2, got {bs}")
    perm = stream(cfg.seed, "pretrain-shuffle", state.epoch).permutation(pairs.n)
    loss_sum = 0.0
    hit_sum = 0.0
    n_used = 0
    n_dropped = 0
    for lo in range(0, pairs.n, bs):
        idx = perm[lo:lo + bs]
        if idx.size < 2:
            n_dropped += idx.size
            log.info("dropping size-%d tail batch at epoch %d", idx.size, state.epoch)
            continue
        z_csi = state.csi_encoder.forward(Tensor(pairs.x_csi[idx]))
        z_cir = state.cir_encoder.forward(Tensor(pairs.x_cir[idx]))
        loss = contrastive_loss(z_csi, z_cir, _tau_graph(state), symmetric=cfg.symmetric)
        state.optimizer.zero_grad()
        loss.backward()
        state.optimizer.step()
        state.log_tau.data = np.maximum(state.log_tau.data,
                                        np.asarray(np.log(cfg.tau_min), dtype=state.log_tau.dtype))
        loss_sum += float(loss.data) * idx.size
        hit_sum += _batch_retrieval(z_csi.data, z_cir.data) * idx.size
        n_used += idx.size
    if n_used == 0:
        raise ContractError("epoch had no usable batches")
    state.epoch += 1
    return {"epoch": state.epoch, "train_loss": loss_sum / n_used,
            "train_retrieval": hit_sum / n_used, "n_used": n_used, "n_dropped": n_dropped}


def evaluate_pairs(state: PretrainState, pairs: PairArrays, batch_size: int) -> tuple:
    """(mean loss, mean in-batch retrieval) over fixed-order batches; the
    final partial batch is kept if it still has a negative (>= 2)."""
    if batch_size < 2:
        raise ContractError(f"evaluation needs batch_size >= 2, got {batch_size}")
    tau = max(state.tau(), state.config.tau_min)
    loss_sum = 0.0
    hit_sum = 0.0
    n_used = 0
    for lo in range(0, pairs.n, batch_size):
        sl = slice(lo, min(lo + batch_size, pairs.n))
        if sl.stop - sl.start < 2:
            continue
        z_csi = encode_batch(state.csi_encoder, pairs.x_csi[sl])
        z_cir = encode_batch(state.cir_encoder, pairs.x_cir[sl])
        loss = contrastive_loss(Tensor(z_csi), Tensor(z_cir), tau,
                                symmetric=state.config.symmetric)
        n = sl.stop - sl.start
        loss_sum += float(loss.data) * n
        hit_sum += _batch_retrieval(z_csi, z_cir) * n
        n_used += n
    if n_used == 0:
        raise ContractError("no usable evaluation batches")
    return loss_sum / n_used, hit_sum / n_used


def early_stop_check(history, patience: int) -> bool:
    """Stop when the streak of epochs without a new best loss exceeds
    `patience`.  The opening epoch starts a streak of 1; only a strict
    improvement over the running best clears it."""
    if len(history) == 0:
        raise ContractError("early stop needs a nonempty history")
    if patience < 1:
        raise ContractError(f"patience must be >= 1, got {patience}")
    best = None
    streak = 0
    for v in history:
        if best is not None and v < best:
            best = v
            streak = 0
        else:
            if best is None:
                best = v
            streak += 1
    return streak > patience


def _inner_split(dataset: Dataset, config: PretrainConfig):
    """Carve an early-stopping holdout out of the training split; the
    dataset's validation split is never touched by pretraining."""
    train = dataset.train_indices()
    perm = stream(config.seed, "pretrain-holdout").permutation(len(train))
    n_hold = max(1, math.floor(len(train) * config.holdout_fraction))
    if n_hold < 2 or len(train) - n_hold < 2:
        raise ContractError(f"training split of {len(train)} too small to hold out from")
    hold = np.sort(train[perm[:n_hold]])
    fit = np.sort(train[perm[n_hold:]])
    return fit, hold


def save_pretrain_checkpoint(state: PretrainState, path: str, extra_meta=None) -> None:
    meta = {
        "kind": "pretrain",
        "config": dataclasses.asdict(state.config),
        "encoder_config": dataclasses.asdict(state.encoder_config),
        "epoch": state.epoch,
        "best_val_loss": state.best_val_loss if math.isfinite(state.best_val_loss) else None,
        "lr": state.optimizer.lr,
        "opt_t": state.optimizer.t,
        "schedule": state.schedule.state(),
        "val_history": list(state.val_history),
        "rng": {"scheme": "counter-based", "seed": state.config.seed},
    }
    if extra_meta:
        meta.update(extra_meta)
    tensors = {k: p.data for k, p in state.parameters().items()}
    tensors.update(state.optimizer.state_arrays())
    ckpt.save_checkpoint(path, meta, tensors)


def load_pretrain_state(path: str):
    """Rebuild a live PretrainState from a checkpoint; returns (state, meta)."""
    meta, tensors = ckpt.load_checkpoint(path)
    if meta.get("kind") != "pretrain":
        raise ContractError(f"{path} is not a pretraining checkpoint")
    config = PretrainConfig.from_dict(meta["config"])
    ec = meta["encoder_config"]
    enc_cfg = EncoderConfig(in_height=ec["in_height"], in_width=ec["in_width"],
                            in_channels=ec["in_channels"], widths=tuple(ec["widths"]),
                            kernel_size=ec["kernel_size"], embed_dim=ec["embed_dim"])
    state = init_pretrain_state(config, enc_cfg.in_height, enc_cfg.in_width)
    for name, p in state.parameters().items():
        p.data = np.array(tensors[name], dtype=np.float32).reshape(p.data.shape)
    state.optimizer.load_state_arrays(tensors, meta["opt_t"])
    state.optimizer.lr = float(meta["lr"])
    state.schedule = LRPlateau.from_state(meta["schedule"])
    state.epoch = int(meta["epoch"])
    best = meta["best_val_loss"]
    state.best_val_loss = math.inf if best is None else float(best)
    state.val_history = list(meta["val_history"])
    return state, meta


def run_pretraining(dataset: Dataset, config: PretrainConfig, out_dir: str,
                    resume: bool = False, max_epochs=None) -> tuple:
    """Train to early stop or the epoch cap; returns (state, metrics rows).

    Writes `pretrain.ckpt` (every epoch, atomically) and
    `pretrain_metrics.jsonl` (one record per epoch) under out_dir.  With
    resume=True training continues from the checkpoint and reproduces the
    exact trace an uninterrupted run would have produced.
    """
    config = config.validated()
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "pretrain.ckpt")
    metrics_path = os.path.join(out_dir, "pretrain_metrics.jsonl")
    cap = config.max_epochs if max_epochs is None else int(max_epochs)

    fit_idx, hold_idx = _inner_split(dataset, config)
    pairs_fit = load_pairs(dataset, fit_idx)
    pairs_hold = load_pairs(dataset, hold_idx)

    kept_lines = []
    if resume:
        state, _ = load_pretrain_state(ckpt_path)
        if os.path.exists(metrics_path):
            with open(metrics_path, "r", encoding="utf-8") as f:
                for line in f:
                    if line.strip() and json.loads(line)["epoch"] <= state.epoch:
                        kept_lines.append(line.rstrip("\n"))
    else:
        p = dataset.n_rx * dataset.n_tx
        state = init_pretrain_state(config, p, dataset.n_subcarriers)

    rows = []
    with open(metrics_path, "w", encoding="utf-8") as mf:
        for line in kept_lines:
            mf.write(line + "\n")
        mf.flush()
        while state.epoch < cap and not state.schedule.stale > config.patience:
            em = pretrain_epoch(state, pairs_fit)
            val_loss, val_ret = evaluate_pairs(state, pairs_hold, config.batch_size)
            state.optimizer.lr = state.schedule.observe(val_loss, state.optimizer.lr)
            state.val_history.append(val_loss)
            if val_loss < state.best_val_loss:
                state.best_val_loss = val_loss
            row = {"epoch": state.epoch, "train_loss": em["train_loss"],
                   "val_loss": val_loss, "retrieval": val_ret,
                   "train_retrieval": em["train_retrieval"],
                   "lr": state.optimizer.lr, "tau": state.tau()}
            rows.append(row)
            mf.write(json.dumps(row) + "\n")
            mf.flush()
            save_pretrain_checkpoint(state, ckpt_path)
            if state.schedule.stale > config.patience:
                log.info("early stop at epoch %d (stale %d > patience %d)",
                         state.epoch, state.schedule.stale, config.patience)
                break
    return state, rows
