"""Adversarially trained reconstruction model.

An encoder compresses each 1600-value packet vector to a 70-dim latent, a
mirrored decoder reconstructs it, and a discriminator drives the adversarial
term. The generator objective mixes reconstruction error with feature
matching on the discriminator's last hidden layer; generator and
discriminator are updated alternately with separate Adam states. Only the
encoder is kept for inference.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .checkpoint import Checkpoint, STAGE_EXTRACTOR, config_fingerprint
from .errors import AnomalyInTrainingSet, EmptyDataset, ShapeMismatch
from .nn import Activation, GradTape, MLP, Tensor
from .packets import EncodedPacket, Label
from .seeding import rng_for


@dataclass
class ExtractorConfig:
    input_dim: int = 1600
    latent_dim: int = 70
    w_adv: float = 1.0
    w_rec: float = 50.0
    encoder_widths: tuple[int, ...] = (1600, 512, 128, 70)
    disc_widths: tuple[int, ...] = (1600, 256, 64, 1)
    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.999
    patience: int = 10
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.encoder_widths[0] != self.input_dim:
            raise ValueError("encoder input width must match input_dim")
        if self.encoder_widths[-1] != self.latent_dim:
            raise ValueError("encoder output width must match latent_dim")
        if self.disc_widths[0] != self.input_dim or self.disc_widths[-1] != 1:
            raise ValueError("discriminator must map input_dim to a scalar")
        if self.w_adv < 0 or self.w_rec < 0:
            raise ValueError("loss weights must be non-negative")

    @property
    def decoder_widths(self) -> tuple[int, ...]:
        return tuple(reversed(self.encoder_widths))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim, "latent_dim": self.latent_dim,
            "w_adv": self.w_adv, "w_rec": self.w_rec,
            "encoder_widths": list(self.encoder_widths),
            "disc_widths": list(self.disc_widths),
            "epochs": self.epochs, "batch_size": self.batch_size,
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
            "patience": self.patience, "holdout_fraction": self.holdout_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractorConfig":
        d = dict(d)
        d["encoder_widths"] = tuple(d["encoder_widths"])
        d["disc_widths"] = tuple(d["disc_widths"])
        return cls(**d)


def generator_objective(feat_real: Tensor, feat_fake: Tensor, x: Tensor,
                        x_hat: Tensor, w_adv: float, w_rec: float) -> Tensor:
    """w_adv * mean||feat(x) - feat(x_hat)||^2 + w_rec * mean||x - x_hat||^2."""
    return w_adv * nn.mse(feat_real, feat_fake) + w_rec * nn.mse(x, x_hat)


def discriminator_objective(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """mean[1 - D(x)] + mean[D(G(x))]."""
    return nn.mean(1.0 - d_real) + nn.mean(d_fake)


class FeatureExtractor:
    def __init__(self, encoder: MLP, decoder: MLP, discriminator: MLP,
                 config: ExtractorConfig) -> None:
        self.encoder = encoder
        self.decoder = decoder
        self.discriminator = discriminator
        self.config = config

    @classmethod
    def create(cls, cfg: ExtractorConfig, seed: int) -> "FeatureExtractor":
        rng = rng_for(seed, "extractor-init")
        encoder = MLP.create(rng, cfg.encoder_widths, Activation.RELU, Activation.LINEAR)
        decoder = MLP.create(rng, cfg.decoder_widths, Activation.RELU, Activation.SIGMOID)
        disc = MLP.create(rng, cfg.disc_widths, Activation.LEAKY_RELU, Activation.SIGMOID)
        return cls(encoder, decoder, disc, cfg)

    # --- inference paths (frozen model, plain numpy) ---

    def _check(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.config.input_dim:
            raise ShapeMismatch(
                f"expected vectors of length {self.config.input_dim}, got {arr.shape}")
        return arr, single

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Latent representation; the only piece retained for inference."""
        arr, single = self._check(x)
        z = self.encoder.eval_np(arr)
        return z[0] if single else z

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        arr, single = self._check(x)
        out = self.decoder.eval_np(self.encoder.eval_np(arr))
        return out[0] if single else out

    # --- objectives ---

    def generator_loss(self, x: np.ndarray) -> float:
        arr, _ = self._check(x)
        return self._generator_loss_t(Tensor(arr)).item()

    def discriminator_loss(self, x: np.ndarray) -> float:
        arr, _ = self._check(x)
        x_hat = self.decoder.eval_np(self.encoder.eval_np(arr))
        d_real = Tensor(self.discriminator.eval_np(arr))
        d_fake = Tensor(self.discriminator.eval_np(x_hat))
        return discriminator_objective(d_real, d_fake).item()

    def _generator_loss_t(self, x: Tensor) -> Tensor:
        z = self.encoder(x)
        x_hat = self.decoder(z)
        _, feat_fake = self.discriminator.forward_hidden(x_hat)
        feat_real = Tensor(self.discriminator.hidden_np(x.data))
        return generator_objective(feat_real, feat_fake, x, x_hat,
                                   self.config.w_adv, self.config.w_rec)

    # --- parameters ---

    @property
    def generator_params(self) -> list[Tensor]:
        return self.encoder.params + self.decoder.params

    @property
    def discriminator_params(self) -> list[Tensor]:
        return self.discriminator.params

    def param_items(self) -> list[tuple[str, Tensor]]:
        return (self.encoder.param_items("encoder.")
                + self.decoder.param_items("decoder.")
                + self.discriminator.param_items("discriminator."))


def training_matrix(dataset: Sequence[EncodedPacket] | np.ndarray,
                    input_dim: int) -> np.ndarray:
    """Stack training inputs, rejecting anything labeled as an anomaly."""
    if isinstance(dataset, np.ndarray):
        if dataset.ndim != 2 or dataset.shape[0] == 0:
            raise EmptyDataset("training needs a non-empty [n, input_dim] matrix")
        return np.asarray(dataset, dtype=np.float64)
    packets = list(dataset)
    if not packets:
        raise EmptyDataset("training needs at least one packet")
    for p in packets:
        if p.label is Label.ANOMALY:
            raise AnomalyInTrainingSet(
                f"labeled anomaly {p.source_id} in a training set")
    matrix = np.stack([p.values for p in packets])
    if matrix.shape[1] != input_dim:
        raise ShapeMismatch(f"packets have {matrix.shape[1]} values, "
                            f"config expects {input_dim}")
    return matrix


def train_extractor(dataset: Sequence[EncodedPacket] | np.ndarray,
                    cfg: ExtractorConfig, seed: int) -> Checkpoint:
    """Alternating per-batch discriminator/generator updates with early stopping."""
    data = training_matrix(dataset, cfg.input_dim)
    n = data.shape[0]
    split_rng = rng_for(seed, "extractor-split")
    perm = split_rng.permutation(n)
    n_hold = min(n - 1, max(1, int(round(n * cfg.holdout_fraction)))) if n > 1 else 0
    hold, train = data[perm[:n_hold]], data[perm[n_hold:]]
    eval_set = hold if n_hold else train

    model = FeatureExtractor.create(cfg, seed)
    gen_params = model.generator_params
    disc_params = model.discriminator_params
    all_params = gen_params + disc_params
    gen_opt = nn.AdamState(gen_params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    disc_opt = nn.AdamState(disc_params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)

    batch_rng = rng_for(seed, "extractor-batches")
    stopper = nn.EarlyStopper(cfg.patience)
    history = [model.generator_loss(eval_set)]
    stopper.update(history[0], epoch=0)
    best = nn.snapshot(all_params)

    for epoch in range(1, cfg.epochs + 1):
        for idx in nn.minibatches(batch_rng, train.shape[0], cfg.batch_size):
            xb = train[idx]
            # discriminator step; reconstructions are constants here
            x_hat = model.decoder.eval_np(model.encoder.eval_np(xb))
            with GradTape() as tape:
                d_real = model.discriminator(Tensor(xb))
                d_fake = model.discriminator(Tensor(x_hat))
                d_loss = discriminator_objective(d_real, d_fake)
            grads = nn.backward(tape, d_loss)
            nn.adam_step(disc_opt, disc_params, nn.grads_for(grads, disc_params))
            # generator step; discriminator parameters receive no update
            with GradTape() as tape:
                g_loss = model._generator_loss_t(Tensor(xb))
            grads = nn.backward(tape, g_loss)
            nn.adam_step(gen_opt, gen_params, nn.grads_for(grads, gen_params))
        metric = model.generator_loss(eval_set)
        history.append(metric)
        if stopper.update(metric, epoch):
            best = nn.snapshot(all_params)
        if stopper.should_stop:
            break

    nn.restore(all_params, best)
    tensors = {name: t.data.copy() for name, t in model.param_items()}
    meta = {
        "config": cfg.to_dict(),
        "best_epoch": stopper.best_epoch,
        "epochs_run": len(history) - 1,
        "holdout_generator_loss": [float(v) for v in history],
        "n_train": int(train.shape[0]),
    }
    return Checkpoint(stage=STAGE_EXTRACTOR, seed=seed,
                      config_fingerprint=config_fingerprint(cfg.to_dict()),
                      tensors=tensors, meta=meta)


def extractor_from_checkpoint(ckpt: Checkpoint) -> FeatureExtractor:
    cfg = ExtractorConfig.from_dict(ckpt.meta["config"])
    model = FeatureExtractor.create(cfg, ckpt.seed)
    for name, tensor in model.param_items():
        if name not in ckpt.tensors:
            raise ShapeMismatch(f"checkpoint is missing tensor {name}")
        saved = ckpt.tensors[name]
        if saved.shape != tensor.data.shape:
            raise ShapeMismatch(f"tensor {name} has shape {saved.shape}, "
                                f"expected {tensor.data.shape}")
        tensor.data = saved.copy()
    return model


def encoder_from_checkpoint(ckpt: Checkpoint) -> MLP:
    """Rebuild just the encoder; usable with a checkpoint loaded with
    include=("encoder.",) so no other parameter table is ever materialized."""
    cfg = ExtractorConfig.from_dict(ckpt.meta["config"])
    rng = rng_for(ckpt.seed, "extractor-init")
    encoder = MLP.create(rng, cfg.encoder_widths, Activation.RELU, Activation.LINEAR)
    for name, tensor in encoder.param_items("encoder."):
        if name not in ckpt.tensors:
            raise ShapeMismatch(f"checkpoint is missing tensor {name}")
        saved = ckpt.tensors[name]
        if saved.shape != tensor.data.shape:
            raise ShapeMismatch(f"tensor {name} has shape {saved.shape}, "
                                f"expected {tensor.data.shape}")
        tensor.data = saved.copy()
    return encoder
