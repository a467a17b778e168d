"""Adam trainer with reduce-on-plateau learning-rate decay.

Training is bit-deterministic for a fixed seed: weight init, per-epoch data
order, and augmentation draws all derive from it. Targets are regenerated
from (possibly augmented) points each time, never warped as images.
"""

from dataclasses import dataclass

import numpy as np

from .augment import augment
from .codec import DistributionSpec, encode
from .losses import LossConfig, loss_l1, loss_l2
from .model import build_forward, build_model
from .tape import Tape


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    plateau_factor: float = 0.1
    plateau_patience: int = 10
    plateau_rel_threshold: float = 1e-4
    epochs: int = 30
    batch_size: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def adam_init(weights):
    return {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in weights.items()}


def adam_step(weights, grads, state, t, cfg, lr=None):
    """One bias-corrected Adam update, in place; t counts from 1."""
    if t < 1:
        raise ValueError("step index t must be >= 1")
    lr = cfg.learning_rate if lr is None else lr
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for name, w in weights.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} != weight shape {w.shape} "
                             f"for {name!r}")
        m, v = state[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        w -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return weights, state


def lr_schedule(history, current_lr, cfg):
    """New learning rate after the latest epoch in ``history``.

    A reduction by ``plateau_factor`` fires when the monitored loss has not
    improved by at least ``plateau_rel_threshold`` (relative) for
    ``plateau_patience`` consecutive epochs; the patience counter resets on
    every reduction. The decision is replayed from the full history, so the
    function is pure.
    """
    if not history:
        raise ValueError("history must be non-empty")
    best = history[0]
    wait = 0
    fired_last = False
    for loss in history[1:]:
        if loss < best * (1.0 - cfg.plateau_rel_threshold):
            best = loss
            wait = 0
            fired_last = False
        else:
            wait += 1
            if wait >= cfg.plateau_patience:
                fired_last = True
                wait = 0
            else:
                fired_last = False
    return current_lr * cfg.plateau_factor if fired_last else current_lr


def make_targets(points, cfg):
    """(heatmap, binary) target pair for a point set, per model config."""
    g_heat = encode(points, cfg.target_spec())
    g_bin = encode(points, DistributionSpec("binary"))
    return g_heat, g_bin


def _item_pass(weights, model_cfg, loss_cfg, image, g_heat, g_bin):
    tape = Tape()
    pnodes = {k: tape.param(k, v) for k, v in weights.items()}
    s1, s2 = build_forward(tape, model_cfg, pnodes, image)
    l1 = loss_l1(tape, s1, tape.const(g_heat), loss_cfg.epsilon)
    target2 = g_heat if loss_cfg.variant == 1 else g_bin
    l2 = loss_l2(tape, s2, tape.const(target2), loss_cfg)
    total = tape.add(l1, l2)
    grads = tape.backward(total)
    scalars = tuple(float(tape.value(n).ravel()[0]) for n in (l1, l2, total))
    return grads, scalars


def train(samples, model_cfg, train_cfg, loss_cfg=None, augment_cfg=None):
    """Minimise the mean joint loss over mini-batches.

    Returns (weights, log) where log is one dict per epoch with keys
    epoch, loss_total, loss_l1, loss_l2, lr. Raises TrainingDiverged on the
    first non-finite batch loss.
    """
    if not samples:
        raise ValueError("dataset must be non-empty")
    if loss_cfg is None:
        loss_cfg = LossConfig(variant=model_cfg.variant)
    if loss_cfg.variant != model_cfg.variant:
        raise ValueError("loss and model variants disagree")

    weights = build_model(model_cfg, seed=train_cfg.seed)
    state = adam_init(weights)
    lr = train_cfg.learning_rate
    history = []
    log = []
    t = 0

    static_targets = None
    if augment_cfg is None:
        static_targets = [make_targets(s.points, model_cfg) for s in samples]

    for epoch in range(1, train_cfg.epochs + 1):
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(len(samples))
        sums = np.zeros(3)
        count = 0
        for b0 in range(0, len(order), train_cfg.batch_size):
            batch = order[b0 : b0 + train_cfg.batch_size]
            grad_sum = None
            for idx in batch:
                sample = samples[idx]
                if augment_cfg is not None:
                    rng = np.random.default_rng([train_cfg.seed, epoch, int(idx)])
                    sample = augment(sample, augment_cfg, rng)
                    g_heat, g_bin = make_targets(sample.points, model_cfg)
                else:
                    g_heat, g_bin = static_targets[idx]
                grads, scalars = _item_pass(weights, model_cfg, loss_cfg,
                                            sample.image, g_heat, g_bin)
                if not np.isfinite(scalars[2]):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, "
                        f"batch starting at item {b0} (sample {sample.sample_id!r})"
                    )
                if grad_sum is None:
                    grad_sum = grads
                else:
                    for k in grad_sum:
                        grad_sum[k] += grads[k]
                sums += scalars
                count += 1
            for k in grad_sum:
                grad_sum[k] /= len(batch)
            t += 1
            adam_step(weights, grad_sum, state, t, train_cfg, lr=lr)
        epoch_l1, epoch_l2, epoch_total = sums / count
        log.append({"epoch": epoch, "loss_total": epoch_total, "loss_l1": epoch_l1,
                    "loss_l2": epoch_l2, "lr": lr})
        history.append(epoch_total)
        lr = lr_schedule(history, lr, train_cfg)
    return weights, log
