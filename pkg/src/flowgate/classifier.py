"""Latent-space binary classifier; its sigmoid output is the anomaly score."""
from __future__ import annotations

from dataclasses import asdict, dataclass
import numpy as np

from . import nn
from .checkpoint import Checkpoint, STAGE_CLASSIFIER, config_fingerprint
from .errors import BadThreshold, EmptyClass, ShapeMismatch
from .nn import Activation, GradTape, MLP, Tensor
from .packets import Label
from .seeding import rng_for


@dataclass
class ClassifierConfig:
    widths: tuple[int, ...] = (70, 64, 32, 1)
    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.999
    patience: int = 10
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.widths[-1] != 1:
            raise ValueError("classifier must end in a scalar output")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return cls(**d)


class ClassifierModel:
    def __init__(self, net: MLP, config: ClassifierConfig) -> None:
        self.net = net
        self.config = config

    @classmethod
    def create(cls, cfg: ClassifierConfig, seed: int) -> "ClassifierModel":
        rng = rng_for(seed, "classifier-init")
        net = MLP.create(rng, cfg.widths, Activation.RELU, Activation.SIGMOID)
        return cls(net, cfg)

    @property
    def input_dim(self) -> int:
        return self.net.layers[0].n_in

    @property
    def params(self) -> list[Tensor]:
        return self.net.params

    def param_items(self) -> list[tuple[str, Tensor]]:
        return self.net.param_items("classifier.")

    def score(self, z: np.ndarray) -> np.ndarray | float:
        """Anomaly score in (0, 1); higher means more anomalous."""
        arr = np.asarray(z, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.input_dim:
            raise ShapeMismatch(
                f"expected latents of dim {self.input_dim}, got {arr.shape}")
        out = self.net.eval_np(arr)[:, 0]
        return float(out[0]) if single else out

    def predict(self, z: np.ndarray, threshold: float = 0.5) -> Label | list[Label]:
        """ANOMALY iff score >= threshold."""
        if not 0.0 < threshold < 1.0:
            raise BadThreshold(f"threshold must be in (0, 1), got {threshold}")
        s = self.score(z)
        if isinstance(s, float):
            return Label.ANOMALY if s >= threshold else Label.NORMAL
        return [Label.ANOMALY if v >= threshold else Label.NORMAL for v in s]


def train_classifier(normals: np.ndarray, pseudo: np.ndarray,
                     cfg: ClassifierConfig, seed: int) -> Checkpoint:
    """Binary cross-entropy training: normals -> 0, pseudo-anomalies -> 1."""
    normals = np.asarray(normals, dtype=np.float64)
    pseudo = np.asarray(pseudo, dtype=np.float64)
    if normals.ndim != 2 or normals.shape[0] == 0:
        raise EmptyClass("no normal latents to train on")
    if pseudo.ndim != 2 or pseudo.shape[0] == 0:
        raise EmptyClass("no pseudo-anomaly latents to train on")
    if normals.shape[1] != cfg.widths[0] or pseudo.shape[1] != cfg.widths[0]:
        raise ShapeMismatch(f"latent dim does not match classifier input "
                            f"width {cfg.widths[0]}")

    X = np.vstack([normals, pseudo])
    y = np.concatenate([np.zeros(normals.shape[0]), np.ones(pseudo.shape[0])])
    n = X.shape[0]
    split_rng = rng_for(seed, "classifier-split")
    perm = split_rng.permutation(n)
    n_hold = min(n - 1, max(1, int(round(n * cfg.holdout_fraction)))) if n > 1 else 0
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    X_train, y_train = X[train_idx], y[train_idx]
    X_hold, y_hold = (X[hold_idx], y[hold_idx]) if n_hold else (X_train, y_train)

    model = ClassifierModel.create(cfg, seed)

    def holdout_loss() -> float:
        pred = Tensor(model.net.eval_np(X_hold)[:, 0])
        return nn.bce(pred, Tensor(y_hold)).item()

    params = model.params
    opt = nn.AdamState(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    batch_rng = rng_for(seed, "classifier-batches")
    stopper = nn.EarlyStopper(cfg.patience)
    history = [holdout_loss()]
    stopper.update(history[0], epoch=0)
    best = nn.snapshot(params)

    for epoch in range(1, cfg.epochs + 1):
        for idx in nn.minibatches(batch_rng, X_train.shape[0], cfg.batch_size):
            with GradTape() as tape:
                pred = model.net(Tensor(X_train[idx]))
                loss = nn.bce(pred, Tensor(y_train[idx][:, None]))
            grads = nn.backward(tape, loss)
            nn.adam_step(opt, params, nn.grads_for(grads, params))
        metric = holdout_loss()
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
        "holdout_bce": [float(v) for v in history],
        "n_normal": int(normals.shape[0]),
        "n_pseudo": int(pseudo.shape[0]),
    }
    return Checkpoint(stage=STAGE_CLASSIFIER, seed=seed,
                      config_fingerprint=config_fingerprint(cfg.to_dict()),
                      tensors=tensors, meta=meta)


def classifier_from_checkpoint(ckpt: Checkpoint) -> ClassifierModel:
    cfg = ClassifierConfig.from_dict(ckpt.meta["config"])
    model = ClassifierModel.create(cfg, ckpt.seed)
    for name, tensor in model.param_items():
        if name not in ckpt.tensors:
            raise ShapeMismatch(f"checkpoint is missing tensor {name}")
        saved = ckpt.tensors[name]
        if saved.shape != tensor.data.shape:
            raise ShapeMismatch(f"tensor {name} has shape {saved.shape}, "
                                f"expected {tensor.data.shape}")
        tensor.data = saved.copy()
    return model
