"""Robust training: adversarial training with an online inner attack,
adversarial Lipschitz regularization, and white-noise augmentation.

All three drive the same Adam loop as plain training through its per-batch
hook, so seeds, crops and batch order line up exactly with the undefended
run."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import diffgraph as dg
from .attacks import AttackConfig, _frozen, _pgd_batch
from .models import OptimizerConfig, cross_entropy, train_erm

log = logging.getLogger(__name__)

_CLAMP = (-1.0, 1.0)


@dataclass(frozen=True)
class AdvTrainConfig:
    """Inner attack plus the combined-loss weight.

    The combined objective is (1-w_at)*L(x) + w_at*L(x_adv); w_at=0 collapses
    to plain training.
    """

    attack: AttackConfig
    optimizer: OptimizerConfig
    w_at: float = 0.5

    def __post_init__(self):
        if self.attack.kind not in ("fgsm", "pgd"):
            raise ValueError("inner attack must be an l-inf attack (fgsm or pgd), "
                             f"got {self.attack.kind!r}")
        if not 0.0 <= self.w_at <= 1.0:
            raise ValueError(f"w_at must lie in [0, 1], got {self.w_at}")


@dataclass(frozen=True)
class AlrConfig:
    """Lipschitz-penalty training settings.

    The penalty hinges the ratio of l1 output distance over l2 input distance
    at lipschitz_target; the probe direction comes from power iterations with
    scale xi, and the applied perturbation has l2 norm epsilon_alr.
    """

    optimizer: OptimizerConfig
    xi: float = 10.0
    n_power_iterations: int = 1
    epsilon_alr: float = 0.002
    lipschitz_target: float = 1.0
    lambda_alr: float = 0.1

    def __post_init__(self):
        if self.xi <= 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        if self.n_power_iterations < 1:
            raise ValueError("n_power_iterations must be at least 1, got "
                             f"{self.n_power_iterations}")
        if self.epsilon_alr <= 0:
            raise ValueError(f"epsilon_alr must be positive, got {self.epsilon_alr}")
        if self.lipschitz_target < 0:
            raise ValueError("lipschitz_target must be nonnegative, got "
                             f"{self.lipschitz_target}")
        if self.lambda_alr < 0:
            raise ValueError(f"lambda_alr must be nonnegative, got {self.lambda_alr}")


@dataclass(frozen=True)
class DefenseTrace:
    """Per-epoch means: combined loss, its clean and defense components, and
    clean train accuracy."""

    losses: tuple
    clean_losses: tuple
    other_losses: tuple
    accuracies: tuple


class _ComponentLog:
    """Accumulates per-batch component losses into per-epoch means."""

    def __init__(self):
        self.sums = {}

    def add(self, epoch, clean, other, n):
        c, o, t = self.sums.get(epoch, (0.0, 0.0, 0))
        self.sums[epoch] = (c + clean * n, o + other * n, t + n)

    def epoch_means(self):
        clean, other = [], []
        for epoch in sorted(self.sums):
            c, o, t = self.sums[epoch]
            clean.append(c / t)
            other.append(o / t)
        return tuple(clean), tuple(other)


def _erm_as_defense_trace(model, dataset, optimizer_config):
    model, trace = train_erm(model, dataset, optimizer_config)
    losses = tuple(trace.losses)
    return model, DefenseTrace(losses=losses, clean_losses=losses,
                               other_losses=(0.0,) * len(losses),
                               accuracies=tuple(trace.accuracies))


def _row_ce(logp_data, labels):
    rows = np.arange(len(labels))
    return float(-logp_data[rows, labels].mean())


def adversarial_train(model, dataset, config):
    """Minimize (1-w)*CE(x) + w*CE(x_adv) with the attack re-run per batch.

    Each minibatch holds equal counts of clean and adversarial rows. Inner
    attack failures fall back to the clean rows for that batch and are
    logged. w_at=0 reproduces the plain training trajectory bit-exactly.
    """
    if config.w_at == 0.0:
        return _erm_as_defense_trace(model, dataset, config.optimizer)
    atk = config.attack
    attack_rng = np.random.default_rng(atk.seed)
    iterations = 1 if atk.kind == "fgsm" else atk.iterations
    alpha = atk.epsilon if atk.kind == "fgsm" else atk.effective_alpha
    components = _ComponentLog()
    w = config.w_at

    def step(mdl, xb, yb, epoch):
        with _frozen(mdl):
            try:
                xt = _pgd_batch(mdl, xb, yb, atk.epsilon, alpha, iterations,
                                atk.clamp, random_start=atk.random_start,
                                grad_at_original=atk.grad_at_original,
                                rng=attack_rng)
            except Exception as exc:  # noqa: BLE001 - clean fallback per batch
                log.warning("inner attack failed (%s); using clean rows", exc)
                xt = xb.copy()
        mdl.train_mode()
        b = len(xb)
        _, logp_all = mdl.posterior_graph(np.concatenate([xb, xt], axis=0))
        pick = np.zeros_like(logp_all.data)
        pick[np.arange(b), yb] = -(1.0 - w) / b
        pick[b + np.arange(b), yb] = -w / b
        loss = dg.tensor_sum(dg.mul(logp_all, dg.constant(pick)))
        components.add(epoch, _row_ce(logp_all.data[:b], yb),
                       _row_ce(logp_all.data[b:], yb), b)
        return loss, dg.constant(logp_all.data[:b])

    model, trace = train_erm(model, dataset, config.optimizer, step_fn=step)
    clean, other = components.epoch_means()
    return model, DefenseTrace(losses=tuple(trace.losses), clean_losses=clean,
                               other_losses=other,
                               accuracies=tuple(trace.accuracies))


# ---------------------------------------------------------------------------
# Adversarial Lipschitz regularization
# ---------------------------------------------------------------------------

def _alr_direction_batch(model, x, config, rng):
    """Unit probe directions, one per row, via power iteration.

    Each round probes the network at x + xi*eta and normalizes the gradient
    of the l1 output distance. Rows with an exactly zero gradient keep their
    previous direction. Caller freezes the model.
    """
    eta = rng.normal(size=x.shape)
    eta /= np.linalg.norm(eta, axis=-1, keepdims=True)
    _, ref = model.posterior_graph(x)
    ref_c = dg.constant(ref.data)
    for _ in range(config.n_power_iterations):
        leaf, out = model.posterior_graph(x + config.xi * eta,
                                          input_requires_grad=True)
        dg.tensor_sum(dg.absolute(dg.sub(ref_c, out))).backward()
        g = leaf.grad
        norms = np.linalg.norm(g, axis=-1)
        live = norms > 0.0
        if not live.all():
            log.warning("zero gradient for %d rows in power iteration; "
                        "keeping previous direction", int((~live).sum()))
        eta = np.where(live[:, None], g / np.where(live, norms, 1.0)[:, None], eta)
    return eta


def alr_perturbation(model, x, config, rng=None):
    """(unit direction, scaled perturbation) for one waveform."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single waveform, got shape {x.shape}")
    if rng is None:
        rng = np.random.default_rng(config.optimizer.seed)
    with _frozen(model):
        unit = _alr_direction_batch(model, x[None, :], config, rng)[0]
    return unit, config.epsilon_alr * unit


def alr_penalty(model, x, x_tilde, config):
    """Hinged ratio of l1 output distance over l2 input distance."""
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    d_x = float(np.linalg.norm(x_tilde - x))
    if d_x < 1e-12:
        raise ValueError("inputs are (numerically) identical; ratio undefined")
    with _frozen(model):
        _, f_clean = model.posterior_graph(x[None, :])
        _, f_tilde = model.posterior_graph(x_tilde[None, :])
    d_y = float(np.abs(f_clean.data - f_tilde.data).sum())
    return max(0.0, d_y / d_x - config.lipschitz_target)


def alr_train(model, dataset, config):
    """Cross-entropy plus lambda_alr * mean hinged Lipschitz penalty.

    The probe direction is refreshed per batch against the frozen current
    weights; the penalty itself is differentiated through evaluation-mode
    forwards of both the clean and the perturbed batch. lambda_alr=0
    reproduces the plain training trajectory bit-exactly.
    """
    if config.lambda_alr == 0.0:
        return _erm_as_defense_trace(model, dataset, config.optimizer)
    probe_rng = np.random.default_rng(config.optimizer.seed)
    components = _ComponentLog()
    target = config.lipschitz_target

    def step(mdl, xb, yb, epoch):
        with _frozen(mdl):
            unit = _alr_direction_batch(mdl, xb, config, probe_rng)
        eta = config.epsilon_alr * unit
        mdl.train_mode()
        _, logp = mdl.posterior_graph(xb)
        ce = cross_entropy(logp, yb)
        mdl.eval_mode()
        _, f_clean = mdl.posterior_graph(xb)
        _, f_tilde = mdl.posterior_graph(xb + eta)
        mdl.train_mode()
        d_y = dg.tensor_sum(dg.absolute(dg.sub(f_clean, f_tilde)), axis=1)
        ratio = dg.mul(d_y, dg.constant(1.0 / np.linalg.norm(eta, axis=1)))
        penalty = dg.mean(dg.relu(dg.sub(ratio, dg.constant(
            np.full(len(xb), target)))))
        loss = dg.add(ce, dg.mul(penalty, config.lambda_alr))
        components.add(epoch, float(ce.data), float(penalty.data), len(xb))
        return loss, logp

    model, trace = train_erm(model, dataset, config.optimizer, step_fn=step)
    clean, other = components.epoch_means()
    return model, DefenseTrace(losses=tuple(trace.losses), clean_losses=clean,
                               other_losses=other,
                               accuracies=tuple(trace.accuracies))


def noise_augment_train(model, dataset, sigma, optimizer_config):
    """Train on each batch plus a white-noise copy (additive Gaussian,
    standard deviation sigma, clamped to the valid range)."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    noise_rng = np.random.default_rng(optimizer_config.seed)
    components = _ComponentLog()

    def step(mdl, xb, yb, epoch):
        noisy = np.clip(xb + noise_rng.normal(size=xb.shape) * sigma, *_CLAMP)
        b = len(xb)
        _, logp_all = mdl.posterior_graph(np.concatenate([xb, noisy], axis=0))
        loss = cross_entropy(logp_all, np.concatenate([yb, yb]))
        components.add(epoch, _row_ce(logp_all.data[:b], yb),
                       _row_ce(logp_all.data[b:], yb), b)
        return loss, dg.constant(logp_all.data[:b])

    model, trace = train_erm(model, dataset, optimizer_config, step_fn=step)
    clean, other = components.epoch_means()
    return model, DefenseTrace(losses=tuple(trace.losses), clean_losses=clean,
                               other_losses=other,
                               accuracies=tuple(trace.accuracies))
