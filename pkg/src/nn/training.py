"""
Mini-batch training of an encoder/decoder pair on reconstruction error.
"""
import copy
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from torch.utils.data import DataLoader, TensorDataset

from src.nn.layers import DTYPE, LayerSpec, Network
from src.utils.errors import ConfigError, DivergenceError, ShapeError

logger = logging.getLogger(__name__)

VALIDATION_METRICS = ("loss", "relative")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    step_size: int = 50
    gamma: float = 0.95
    weight_decay: float = 1e-11
    patience: int = 100
    max_epochs: int = 5000
    seed: int = 0
    validation_metric: str = "loss"
    log_every: int = 50

    def __post_init__(self):
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate must be positive and weight_decay non-negative")
        if min(self.batch_size, self.step_size, self.patience, self.max_epochs, self.log_every) < 1:
            raise ConfigError("batch_size, step_size, patience, max_epochs and log_every must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.validation_metric not in VALIDATION_METRICS:
            raise ConfigError(f"validation_metric must be one of {VALIDATION_METRICS}")


def scheduled_lr(cfg: TrainConfig, epoch: int) -> float:
    """Step decay: ``lr * gamma ** floor(epoch / step_size)``."""
    return cfg.learning_rate * cfg.gamma ** (epoch // cfg.step_size)


def make_optimizer(params: Sequence[torch.Tensor], cfg: TrainConfig) -> torch.optim.Adam:
    # torch's Adam adds weight_decay * theta to the gradient before the moment updates
    return torch.optim.Adam(
        params, lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8,
        weight_decay=cfg.weight_decay, foreach=False,
    )


def adam_step(
    optimizer: torch.optim.Adam,
    params: Sequence[torch.Tensor],
    grads: Sequence[torch.Tensor],
    cfg: TrainConfig,
    epoch: int,
) -> None:
    """
    One Adam update of ``params`` with the learning rate scheduled for ``epoch``.
    """
    for index, grad in enumerate(grads):
        if not torch.all(torch.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient for parameter tensor {index} at epoch {epoch}")

    lr = scheduled_lr(cfg, epoch)
    for group in optimizer.param_groups:
        group["lr"] = lr
    for param, grad in zip(params, grads):
        param.grad = grad.detach()
    optimizer.step()


def reconstruction_loss(reconstruction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of squared 2-norms of the residual."""
    return (reconstruction - target).pow(2).flatten(1).sum(dim=1).mean()


def relative_error(reconstruction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of ``|u - rec| / |u|``."""
    residual = (reconstruction - target).flatten(1).norm(dim=1)
    return (residual / target.flatten(1).norm(dim=1)).mean()


class EarlyStopping:
    """
    Tracks the best validation value; stops once it has not improved for
    ``patience`` epochs.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1

    def update(self, epoch: int, value: float) -> bool:
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return self.best_epoch >= 0 and epoch - self.best_epoch >= self.patience


@dataclass
class TrainingResult:
    encoder: Network
    decoder: Network
    log: pd.DataFrame
    best_epoch: int
    best_validation: float
    stopped_epoch: int


def _as_tensor(values, name: str) -> torch.Tensor:
    tensor = torch.as_tensor(np.asarray(values), dtype=DTYPE)
    if tensor.ndim < 2 or tensor.shape[0] == 0:
        raise ShapeError(f"{name} set must be a non-empty batch, got shape {tuple(tensor.shape)}")
    return tensor


def evaluate_validation(encoder: Network, decoder: Network, data: torch.Tensor, metric: str) -> float:
    with torch.no_grad():
        reconstruction = decoder(encoder(data))
        if metric == "relative":
            return float(relative_error(reconstruction, data))
        return float(reconstruction_loss(reconstruction, data))


def train_autoencoder(
    encoder_specs: Sequence[LayerSpec],
    decoder_specs: Sequence[LayerSpec],
    train,
    validation,
    cfg: TrainConfig,
) -> TrainingResult:
    """
    Train encoder and decoder jointly on the reconstruction loss.

    Mini-batches are reshuffled every epoch from a generator seeded with
    ``cfg.seed``; the returned networks carry the parameters of the epoch with
    the best validation value.
    """
    train_t = _as_tensor(train, "training")
    val_t = _as_tensor(validation, "validation")

    init_generator = torch.Generator().manual_seed(cfg.seed)
    encoder = Network(encoder_specs, generator=init_generator)
    decoder = Network(decoder_specs, generator=init_generator)
    expected = encoder.specs[0].in_size
    if train_t.shape[1] != expected or val_t.shape[1:] != train_t.shape[1:]:
        raise ShapeError(
            f"training data {tuple(train_t.shape)} / validation data {tuple(val_t.shape)} "
            f"do not match the first layer ({expected} channels)"
        )

    params: List[torch.Tensor] = list(encoder.parameters()) + list(decoder.parameters())
    optimizer = make_optimizer(params, cfg)
    batches = DataLoader(
        TensorDataset(train_t), batch_size=cfg.batch_size, shuffle=True,
        generator=torch.Generator().manual_seed(cfg.seed),
    )
    stopper = EarlyStopping(cfg.patience)
    best_state = None
    rows = []

    logger.info(
        f"Training autoencoder on {train_t.shape[0]} samples ({val_t.shape[0]} validation), "
        f"seed={cfg.seed}, max_epochs={cfg.max_epochs}"
    )
    epoch = 0
    for epoch in range(cfg.max_epochs):
        total = 0.0
        for (batch,) in batches:
            loss = reconstruction_loss(decoder(encoder(batch)), batch)
            if not torch.isfinite(loss):
                raise DivergenceError(f"training loss became non-finite at epoch {epoch}")
            grads = torch.autograd.grad(loss, params)
            adam_step(optimizer, params, grads, cfg, epoch)
            total += float(loss) * batch.shape[0]

        train_loss = total / train_t.shape[0]
        val_value = evaluate_validation(encoder, decoder, val_t, cfg.validation_metric)
        if not math.isfinite(val_value):
            raise DivergenceError(f"validation error became non-finite at epoch {epoch}")
        rows.append(
            {"epoch": epoch, "learning_rate": scheduled_lr(cfg, epoch), "train_loss": train_loss, "val_loss": val_value}
        )

        if stopper.update(epoch, val_value):
            best_state = (copy.deepcopy(encoder.state_dict()), copy.deepcopy(decoder.state_dict()))
        logger.debug(f"epoch {epoch}: train={train_loss:.6e} val={val_value:.6e}")
        if epoch % cfg.log_every == 0:
            logger.info(f"epoch {epoch}: lr={scheduled_lr(cfg, epoch):.3e} train={train_loss:.6e} val={val_value:.6e}")
        if stopper.should_stop(epoch):
            logger.info(f"Early stop at epoch {epoch}; best validation {stopper.best:.6e} at epoch {stopper.best_epoch}")
            break

    encoder.load_state_dict(best_state[0])
    decoder.load_state_dict(best_state[1])

    log = pd.DataFrame(rows, columns=["epoch", "learning_rate", "train_loss", "val_loss"])
    log.attrs["seed"] = cfg.seed
    return TrainingResult(
        encoder=encoder,
        decoder=decoder,
        log=log,
        best_epoch=stopper.best_epoch,
        best_validation=stopper.best,
        stopped_epoch=epoch,
    )
