"""Dequantization, the joint NLL objective, and the Adam training loop."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import NOISE_STREAM, SHUFFLE_STREAM, TrainConfig
from .encoding import encode
from .errors import BadNoiseScale, NonFinite
from .graph import MolGraph, bfs_reorder
from .model import FlowModel, build_model
from .numerics import Rng, Tape, Tensor, ops


def dequantize(x_onehot: np.ndarray, a_onehot: np.ndarray, noise_scale: float,
               rng: Rng, dtype=np.float32) -> tuple[Tensor, Tensor]:
    """Add c * U[0,1) noise to one-hot tensors; argmax still recovers the input."""
    if not 0.0 < noise_scale < 1.0:
        raise BadNoiseScale(f"noise scale must lie in (0,1), got {noise_scale}")
    x = x_onehot.astype(dtype) + noise_scale * rng.uniform(x_onehot.shape, dtype=np.float64).astype(dtype)
    a = a_onehot.astype(dtype) + noise_scale * rng.uniform(a_onehot.shape, dtype=np.float64).astype(dtype)
    return Tensor(x), Tensor(a)


def encode_dataset(graphs: list[MolGraph], n: int, d_pad: int, table) -> tuple[np.ndarray, np.ndarray]:
    """BFS-reorder and one-hot encode a dataset into stacked (X, A) arrays."""
    xs, as_ = [], []
    for g in graphs:
        e = encode(bfs_reorder(g), n, d_pad, table)
        xs.append(e.X)
        as_.append(e.A)
    return np.stack(xs), np.stack(as_)


def nll(model: FlowModel, x_deq: Tensor, a_deq: Tensor, a_onehot: np.ndarray) -> Tensor:
    """Mean over the batch of -(log P(A) + log P(X|A)), in nats."""
    _, logp_a, logp_x = model.forward(x_deq, a_deq, a_onehot)
    loss = ops.neg(ops.mean(ops.add(logp_a, logp_x)))
    if not np.isfinite(loss.data):
        # rerun with per-layer checks on, so the error names the first
        # offending layer
        from .numerics.tensor import set_layer_checks

        set_layer_checks(True)
        try:
            model.forward(x_deq, a_deq, a_onehot)
            raise NonFinite("nll non-finite but every layer output is finite")
        finally:
            set_layer_checks(False)
    return loss


class Adam:
    """Adam with bias correction; state is checkpointable."""

    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1 ** self.t
        correction2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - (self.lr / correction1) * m / (np.sqrt(v / correction2) + self.eps)

    def state_arrays(self, named_params) -> dict[str, np.ndarray]:
        out = {"optim.t": np.array([float(self.t)])}
        for (name, _), m, v in zip(named_params, self.m, self.v):
            out[f"optim.m.{name}"] = m
            out[f"optim.v.{name}"] = v
        return out

    def load_state(self, named_params, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays["optim.t"][0])
        for i, (name, _) in enumerate(named_params):
            self.m[i] = arrays[f"optim.m.{name}"].reshape(self.m[i].shape).astype(self.m[i].dtype)
            self.v[i] = arrays[f"optim.v.{name}"].reshape(self.v[i].shape).astype(self.v[i].dtype)


@dataclass
class TrainResult:
    checkpoint_prefix: str
    epoch_losses: list[float]
    log_path: str


def train(cfg: TrainConfig, graphs: list[MolGraph], out_prefix: str,
          resume_prefix: str | None = None, log_every: int = 1) -> TrainResult:
    """Run the optimization loop; writes `<out_prefix>.json/.bin` checkpoints on
    every epoch boundary and a TSV training log. Deterministic given cfg.seed."""
    from .checkpoint import load_checkpoint, save_checkpoint

    x_all, a_all = encode_dataset(graphs, cfg.n, cfg.d_pad, cfg.table)
    count = x_all.shape[0]
    if count == 0:
        raise ValueError("empty training set")

    start_epoch = 0
    epoch_losses: list[float] = []
    if resume_prefix is not None:
        model, _, extra = load_checkpoint(resume_prefix)
        start_epoch = int(extra["epochs_done"])
        epoch_losses = [float(x) for x in extra.get("epoch_losses", [])]
        optimizer = Adam(model.parameters(), lr=cfg.lr)
        named = list(model.named_parameters())
        optimizer.load_state(named, {k: np.asarray(v) for k, v in extra["optim_arrays"].items()})
    else:
        model = build_model(cfg)
        optimizer = Adam(model.parameters(), lr=cfg.lr)

    rng = Rng(cfg.seed)
    log_path = out_prefix + ".log.tsv"
    log_mode = "a" if resume_prefix is not None else "w"
    with open(log_path, log_mode, encoding="utf-8") as log:
        if log_mode == "w":
            log.write("epoch\tstep\tnll\tseconds\n")
        for epoch in range(start_epoch, cfg.epochs):
            order = rng.child(SHUFFLE_STREAM, epoch).permutation(count)
            losses = []
            for step, lo in enumerate(range(0, count, cfg.batch_size)):
                idx = order[lo : lo + cfg.batch_size]
                t0 = time.perf_counter()
                noise_rng = rng.child(NOISE_STREAM, epoch, step)
                x_deq, a_deq = dequantize(x_all[idx], a_all[idx], cfg.noise_scale, noise_rng, dtype=cfg.dtype)
                with Tape() as tape:
                    loss = nll(model, x_deq, a_deq, a_all[idx])
                grads = tape.gradients(loss, model.parameters())
                optimizer.step(grads)
                losses.append(float(loss.data))
                if step % log_every == 0:
                    log.write(f"{epoch}\t{step}\t{losses[-1]:.6f}\t{time.perf_counter() - t0:.3f}\n")
            log.flush()
            epoch_losses.append(float(np.mean(losses)))
            extra = {
                "epochs_done": epoch + 1,
                "epoch_losses": epoch_losses,
            }
            optim_arrays = optimizer.state_arrays(list(model.named_parameters()))
            save_checkpoint(out_prefix, model, cfg, extra, optim_arrays)
    return TrainResult(out_prefix, epoch_losses, log_path)
