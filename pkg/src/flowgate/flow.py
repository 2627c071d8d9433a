"""Bidirectional normalizing flow over the latent space.

A stack of affine coupling blocks with alternating complementary half-masks.
The normalize direction maps latents toward a standard normal base
distribution and accumulates the exact log-determinant; the generate
direction is the algebraic inverse, applied blockwise in reverse. Scale
outputs are bounded by clamp * tanh(raw) and the final subnet layers start at
zero, so an untrained flow is the identity.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import nn
from .checkpoint import Checkpoint, STAGE_FLOW, config_fingerprint
from .errors import (
    EmptyDataset, NonFiniteInput, NonFiniteIntermediate, ShapeMismatch,
)
from .nn import Activation, GradTape, MLP, Tensor
from .seeding import rng_for

LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass
class FlowConfig:
    dim: int = 70
    blocks: int = 8
    hidden: int = 128
    s_clamp: float = 2.0
    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.999
    patience: int = 10
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("flow needs at least 2 dimensions")
        if self.blocks < 1:
            raise ValueError("flow needs at least one block")
        if self.s_clamp <= 0:
            raise ValueError("s_clamp must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class CouplingBlock:
    """One affine coupling step.

    Coordinates where the mask is 1 pass through unchanged and condition the
    scale/shift subnets applied to the remaining coordinates.
    """

    def __init__(self, mask: np.ndarray, s_net: MLP, t_net: MLP,
                 s_clamp: float = 2.0) -> None:
        mask = np.asarray(mask)
        self.mask = mask
        self.keep_idx = np.flatnonzero(mask == 1)
        self.change_idx = np.flatnonzero(mask == 0)
        self.s_net = s_net
        self.t_net = t_net
        self.s_clamp = float(s_clamp)
        self.dim = mask.size

    @classmethod
    def create(cls, rng: np.random.Generator, mask: np.ndarray,
               hidden: int = 128, s_clamp: float = 2.0) -> "CouplingBlock":
        n_keep = int(np.sum(mask == 1))
        n_change = int(mask.size - n_keep)
        widths = [n_keep, hidden, hidden, n_change]
        s_net = MLP.create(rng, widths, Activation.RELU, Activation.LINEAR,
                           zero_init_final=True)
        t_net = MLP.create(rng, widths, Activation.RELU, Activation.LINEAR,
                           zero_init_final=True)
        return cls(mask, s_net, t_net, s_clamp)

    @property
    def params(self) -> list[Tensor]:
        return self.s_net.params + self.t_net.params

    def _scale_t(self, a: Tensor) -> Tensor:
        return self.s_clamp * nn.tanh(self.s_net(a))

    def forward_t(self, h: Tensor) -> tuple[Tensor, Tensor]:
        """Normalization step on tape tensors; returns (h_next, per-row log-det)."""
        a = nn.take_cols(h, self.keep_idx)
        b = nn.take_cols(h, self.change_idx)
        s = self._scale_t(a)
        t = self.t_net(a)
        b_next = b * nn.exp(s) + t
        h_next = nn.put_cols(a, self.keep_idx, self.dim) + \
            nn.put_cols(b_next, self.change_idx, self.dim)
        return h_next, nn.reduce_sum(s, axis=-1)

    def forward_np(self, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = h[:, self.keep_idx]
        s = self.s_clamp * np.tanh(self.s_net.eval_np(a))
        t = self.t_net.eval_np(a)
        out = np.empty_like(h)
        out[:, self.keep_idx] = a
        out[:, self.change_idx] = h[:, self.change_idx] * np.exp(s) + t
        return out, s.sum(axis=-1)

    def inverse_np(self, h: np.ndarray) -> np.ndarray:
        a = h[:, self.keep_idx]
        s = self.s_clamp * np.tanh(self.s_net.eval_np(a))
        t = self.t_net.eval_np(a)
        out = np.empty_like(h)
        out[:, self.keep_idx] = a
        out[:, self.change_idx] = (h[:, self.change_idx] - t) * np.exp(-s)
        return out


class FlowModel:
    """Ordered coupling blocks with alternating complementary masks."""

    def __init__(self, blocks: Sequence[CouplingBlock], dim: int) -> None:
        self.blocks = list(blocks)
        self.dim = dim

    @classmethod
    def create(cls, cfg: FlowConfig, seed: int) -> "FlowModel":
        rng = rng_for(seed, "flow-init")
        base = np.zeros(cfg.dim, dtype=np.int64)
        base[:cfg.dim - cfg.dim // 2] = 1  # first half (rounded up) passes through
        blocks = []
        for k in range(cfg.blocks):
            mask = base if k % 2 == 0 else 1 - base
            blocks.append(CouplingBlock.create(rng, mask, cfg.hidden, cfg.s_clamp))
        return cls(blocks, cfg.dim)

    @property
    def params(self) -> list[Tensor]:
        out: list[Tensor] = []
        for block in self.blocks:
            out.extend(block.params)
        return out

    def param_items(self) -> list[tuple[str, Tensor]]:
        items = []
        for i, block in enumerate(self.blocks):
            items.extend(block.s_net.param_items(f"flow.block{i}.s."))
            items.extend(block.t_net.param_items(f"flow.block{i}.t."))
        return items

    def _check_input(self, z: np.ndarray) -> tuple[np.ndarray, bool]:
        arr = np.asarray(z, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.dim:
            raise ShapeMismatch(f"expected vectors of dim {self.dim}, got {arr.shape}")
        if arr.size and not np.isfinite(arr).all():
            raise NonFiniteInput("input contains NaN or infinity")
        return arr, single

    def normalize_t(self, h: Tensor) -> tuple[Tensor, Tensor]:
        """Tape version used in training; input must be [n, dim]."""
        log_det: Optional[Tensor] = None
        for block in self.blocks:
            h, ld = block.forward_t(h)
            if not np.isfinite(h.data).all():
                raise NonFiniteIntermediate("coupling block overflowed")
            log_det = ld if log_det is None else log_det + ld
        return h, log_det

    def normalize(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray | float]:
        """Map latents toward the base distribution; returns (c, log_det)."""
        h, single = self._check_input(z)
        total = np.zeros(h.shape[0])
        for block in self.blocks:
            h, ld = block.forward_np(h)
            if h.size and not np.isfinite(h).all():
                raise NonFiniteIntermediate("coupling block overflowed")
            total += ld
        if single:
            return h[0], float(total[0])
        return h, total

    def generate(self, c: np.ndarray) -> np.ndarray:
        """Exact inverse of normalize, blocks applied in reverse order."""
        h, single = self._check_input(c)
        for block in reversed(self.blocks):
            h = block.inverse_np(h)
            if h.size and not np.isfinite(h).all():
                raise NonFiniteIntermediate("coupling block overflowed")
        return h[0] if single else h

    def log_likelihood(self, z: np.ndarray) -> np.ndarray | float:
        """log density of z under the flow with a standard normal base."""
        c, log_det = self.normalize(z)
        if np.ndim(c) == 1:
            return float(-0.5 * np.sum(c * c) - 0.5 * self.dim * LOG_TWO_PI + log_det)
        return -0.5 * np.sum(c * c, axis=1) - 0.5 * self.dim * LOG_TWO_PI + log_det


def nll_t(model: FlowModel, h: Tensor) -> Tensor:
    """Mean negative log-likelihood of a batch, on tape."""
    c, log_det = model.normalize_t(h)
    row_nll = 0.5 * nn.reduce_sum(c * c, axis=-1) - log_det
    return nn.mean(row_nll) + 0.5 * model.dim * LOG_TWO_PI


def train_flow(model: FlowModel, latents: np.ndarray, cfg: FlowConfig,
               seed: int) -> Checkpoint:
    """Fit the flow to normal latents by minimizing NLL; early stops on a held-out split."""
    data = np.asarray(latents, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise EmptyDataset("flow training needs a non-empty [n, dim] latent matrix")
    if data.shape[1] != model.dim:
        raise ShapeMismatch(f"latents have dim {data.shape[1]}, flow wants {model.dim}")
    if not np.isfinite(data).all():
        raise NonFiniteInput("latents contain NaN or infinity")

    n = data.shape[0]
    split_rng = rng_for(seed, "flow-split")
    perm = split_rng.permutation(n)
    n_hold = min(n - 1, max(1, int(round(n * cfg.holdout_fraction)))) if n > 1 else 0
    hold, train = data[perm[:n_hold]], data[perm[n_hold:]]
    eval_set = hold if n_hold else train

    def holdout_nll() -> float:
        return float(-np.mean(model.log_likelihood(eval_set)))

    params = model.params
    opt = nn.AdamState(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    batch_rng = rng_for(seed, "flow-batches")
    stopper = nn.EarlyStopper(cfg.patience)
    history = [holdout_nll()]
    stopper.update(history[0], epoch=0)
    best = nn.snapshot(params)

    for epoch in range(1, cfg.epochs + 1):
        for idx in nn.minibatches(batch_rng, train.shape[0], cfg.batch_size):
            with GradTape() as tape:
                loss = nll_t(model, Tensor(train[idx]))
            grads = nn.backward(tape, loss)
            nn.adam_step(opt, params, nn.grads_for(grads, params))
        metric = holdout_nll()
        history.append(metric)
        if stopper.update(metric, epoch):
            best = nn.snapshot(params)
        if stopper.should_stop:
            break

    nn.restore(params, best)
    tensors = {name: t.data.copy() for name, t in model.param_items()}
    meta = {
        "config": cfg.to_dict(),
        "best_epoch": stopper.best_epoch,
        "epochs_run": len(history) - 1,
        "holdout_nll": [float(v) for v in history],
        "n_train": int(train.shape[0]),
    }
    return Checkpoint(stage=STAGE_FLOW, seed=seed,
                      config_fingerprint=config_fingerprint(cfg.to_dict()),
                      tensors=tensors, meta=meta)


def flow_from_checkpoint(ckpt: Checkpoint) -> FlowModel:
    cfg = FlowConfig(**ckpt.meta["config"])
    model = FlowModel.create(cfg, ckpt.seed)
    for name, tensor in model.param_items():
        if name not in ckpt.tensors:
            raise ShapeMismatch(f"checkpoint is missing tensor {name}")
        saved = ckpt.tensors[name]
        if saved.shape != tensor.data.shape:
            raise ShapeMismatch(f"tensor {name} has shape {saved.shape}, "
                                f"expected {tensor.data.shape}")
        tensor.data = saved.copy()
    return model
