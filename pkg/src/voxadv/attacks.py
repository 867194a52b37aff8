"""White-box untargeted attacks on raw waveforms: FGSM, PGD, Carlini l2/linf.

All attacks differentiate the model's loss through the front-end down to the
time-domain samples. The model is treated as frozen: evaluation-mode
batchnorm, no weight gradients. Attacks operate on batches of equal-length
waveforms internally; single-sample wrappers are provided.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, replace

import numpy as np

from . import diffgraph as dg

_VALID_KINDS = ("fgsm", "pgd", "cw_l2", "cw_linf")


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    epsilon: float = 0.002
    alpha: float | None = None          # PGD step size; defaults to epsilon / 5
    iterations: int = 100               # PGD T
    random_start: bool = False
    grad_at_original: bool = False      # PGD variant: gradient held at x instead of the iterate
    delta: float = 0.0                  # CW confidence margin
    c_init: float = 0.01
    c_search_steps: int = 9
    cw_iterations: int = 1000
    cw_learning_rate: float = 0.005
    clamp: tuple = (-1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _VALID_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}; expected one of {_VALID_KINDS}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.c_init <= 0 or self.c_search_steps < 1 or self.cw_iterations < 1 \
                or self.cw_learning_rate <= 0:
            raise ValueError("CW settings must be positive (c_init, c_search_steps, "
                             "cw_iterations, cw_learning_rate)")
        if not (self.clamp[0] < self.clamp[1]):
            raise ValueError(f"clamp range must be ordered, got {self.clamp}")

    @property
    def effective_alpha(self):
        return self.alpha if self.alpha is not None else self.epsilon / 5.0


@dataclass(frozen=True)
class Perturbation:
    eta: np.ndarray
    linf: float
    l2: float
    iterations: int
    success: bool

    @staticmethod
    def from_eta(eta, iterations, success):
        eta = np.asarray(eta, dtype=np.float64)
        return Perturbation(eta=eta, linf=float(np.abs(eta).max(initial=0.0)),
                            l2=float(np.sqrt((eta ** 2).sum())),
                            iterations=iterations, success=bool(success))


@dataclass
class AttackBatchResult:
    examples: list                      # (x_tilde, Perturbation) in input order
    adversarial_accuracy: float
    benign_accuracy: float
    errors: list                        # (sample index, message)
    benign_predictions: np.ndarray      # -1 where the attack group errored
    adversarial_predictions: np.ndarray


@contextmanager
def _frozen(model):
    """Evaluation mode with weight gradients off; restores prior state."""
    params = getattr(model, "params", None)
    was_training = getattr(model, "training", False)
    was_enabled = params.grad_enabled if params is not None else None
    if hasattr(model, "eval_mode"):
        model.eval_mode()
    if params is not None:
        params.set_grad_enabled(False)
    try:
        yield
    finally:
        if params is not None:
            params.set_grad_enabled(was_enabled)
        model.training = was_training


def _sum_ce(logp, labels):
    """Per-sample cross-entropies summed, so sample gradients stay uncoupled."""
    b, c = logp.data.shape
    mask = np.zeros((b, c))
    mask[np.arange(b), labels] = 1.0
    return dg.neg(dg.tensor_sum(dg.mul(logp, dg.constant(mask))))


def _input_ce_grad(model, x_batch, labels):
    """d(sum CE)/dx and the forward log-posteriors, model frozen by caller."""
    x, logp = model.posterior_graph(x_batch, input_requires_grad=True)
    loss = _sum_ce(logp, labels)
    loss.backward()
    return x.grad, logp.data


def cw_objective(log_posteriors, true_class, delta):
    """Hinge margin [score_t - max_{j != t} score_j + delta]_+ for one vector."""
    scores = np.asarray(log_posteriors, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] < 2:
        raise ValueError(f"need a score vector of length >= 2, got shape {scores.shape}")
    if not (0 <= true_class < scores.shape[0]):
        raise ValueError(f"true class {true_class} out of range for {scores.shape[0]} classes")
    masked = scores.copy()
    masked[true_class] = -np.inf
    runner_up = masked.max()
    return float(max(scores[true_class] - runner_up + delta, 0.0))


def _runner_up_indices(logp, labels):
    """argmax over j != t per row; ties resolve to the lowest index."""
    masked = logp.copy()
    masked[np.arange(len(labels)), labels] = -np.inf
    return np.argmax(masked, axis=1)


# ---------------------------------------------------------------------------
# FGSM / PGD
# ---------------------------------------------------------------------------

def _pgd_batch(model, x_batch, labels, epsilon, alpha, iterations, clamp,
               random_start=False, grad_at_original=False, rng=None,
               iterate_callback=None):
    """Core sign-step loop; FGSM is the T=1, alpha=epsilon special case."""
    x = np.asarray(x_batch, dtype=np.float64)
    lo, hi = clamp
    xt = x.copy()
    if random_start:
        if rng is None:
            rng = np.random.default_rng(0)
        xt = np.clip(x + rng.uniform(-epsilon, epsilon, size=x.shape), lo, hi)
    frozen_grad = None
    with _frozen(model):
        for _ in range(iterations):
            if grad_at_original:
                if frozen_grad is None:
                    frozen_grad, _ = _input_ce_grad(model, x, labels)
                g = frozen_grad
            else:
                g, _ = _input_ce_grad(model, xt, labels)
            xt = xt + alpha * np.sign(g)
            xt = np.clip(xt, x - epsilon, x + epsilon)
            xt = np.clip(xt, lo, hi)
            if iterate_callback is not None:
                iterate_callback(xt.copy())
    return xt


def fgsm(model, x, y, epsilon, clamp=(-1.0, 1.0)):
    """One sign step of size epsilon; returns (x_tilde, Perturbation)."""
    x = np.asarray(x, dtype=np.float64)
    xt = _pgd_batch(model, x[None, :], np.array([y]), epsilon, epsilon, 1, clamp)
    return _finish_single(model, x, xt[0], y, iterations=1)


def pgd(model, x, y, config):
    """Projected sign-gradient ascent for config.iterations steps."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    xt = _pgd_batch(model, x[None, :], np.array([y]), config.epsilon,
                    config.effective_alpha, config.iterations, config.clamp,
                    random_start=config.random_start,
                    grad_at_original=config.grad_at_original, rng=rng)
    return _finish_single(model, x, xt[0], y, iterations=config.iterations)


# ---------------------------------------------------------------------------
# Carlini-Wagner
# ---------------------------------------------------------------------------

def _cw_margin_grad(model, x_tilde, labels, delta, c_vec):
    """Gradient of sum_i c_i * g_i(x_tilde) w.r.t. x_tilde, plus diagnostics.

    g_i is the hinge margin on log-posteriors with the runner-up class frozen
    from this forward pass.
    """
    x, logp = model.posterior_graph(x_tilde, input_requires_grad=True)
    b, c = logp.data.shape
    runners = _runner_up_indices(logp.data, labels)
    pick = np.zeros((b, c))
    pick[np.arange(b), labels] = 1.0
    pick[np.arange(b), runners] -= 1.0
    margin = dg.add(dg.tensor_sum(dg.mul(logp, dg.constant(pick)), axis=1), delta)
    g = dg.relu(margin)
    total = dg.tensor_sum(dg.mul(g, dg.constant(np.asarray(c_vec, dtype=np.float64))))
    total.backward()
    grad = x.grad if x.grad is not None else np.zeros_like(x_tilde)
    return grad, g.data, np.argmax(logp.data, axis=1)


def _cw_l2_batch(model, x_batch, labels, config):
    """Plain gradient descent on ||eta||^2 + c*g with geometric c search."""
    x = np.asarray(x_batch, dtype=np.float64)
    lo, hi = config.clamp
    b = x.shape[0]
    c = np.full(b, config.c_init)
    c_lo = np.zeros(b)
    c_hi = np.full(b, np.inf)
    best_eta = np.zeros_like(x)
    best_l2 = np.full(b, np.inf)
    ever_success = np.zeros(b, dtype=bool)
    last_eta = np.zeros_like(x)
    with _frozen(model):
        for _ in range(config.c_search_steps):
            eta = np.zeros_like(x)
            round_success = np.zeros(b, dtype=bool)
            for _ in range(config.cw_iterations):
                xt = np.clip(x + eta, lo, hi)
                grad_xt, _, preds = _cw_margin_grad(model, xt, labels, config.delta, c)
                clip_mask = (xt > lo) & (xt < hi)
                eta = eta - config.cw_learning_rate * (2.0 * eta + grad_xt * clip_mask)
                adversarial = preds != labels
                round_success |= adversarial
                eta_eff = xt - x
                l2 = np.sqrt((eta_eff ** 2).sum(axis=1))
                better = adversarial & (l2 < best_l2)
                best_l2[better] = l2[better]
                best_eta[better] = eta_eff[better]
                ever_success |= adversarial
            last_eta = np.clip(x + eta, lo, hi) - x
            c_hi = np.where(round_success, c, c_hi)
            c_lo = np.where(round_success, c_lo, c)
            c = np.where(np.isinf(c_hi), c_lo * 2.0, (c_lo + c_hi) / 2.0)
    eta_out = np.where(ever_success[:, None], best_eta, last_eta)
    return x + eta_out, ever_success


def _cw_linf_batch(model, x_batch, labels, config):
    """Gradient descent on c*g + sum_i [(|eta_i| - tau)]_+ with tau shrinking.

    tau starts at epsilon and shrinks by 0.9 whenever the current iterate is
    adversarial with every |eta_i| < tau (the success gate keeps tau from
    collapsing while eta is still near zero). eta warm-starts across c rounds;
    c doubles after a failed round and bisects after a successful one.
    """
    x = np.asarray(x_batch, dtype=np.float64)
    lo, hi = config.clamp
    b = x.shape[0]
    c = np.full(b, config.c_init)
    c_lo = np.zeros(b)
    c_hi = np.full(b, np.inf)
    best_eta = np.zeros_like(x)
    best_linf = np.full(b, np.inf)
    ever_success = np.zeros(b, dtype=bool)
    eta = np.zeros_like(x)
    tau = np.full(b, config.epsilon)
    with _frozen(model):
        for _ in range(config.c_search_steps):
            round_success = np.zeros(b, dtype=bool)
            for _ in range(config.cw_iterations):
                xt = np.clip(x + eta, lo, hi)
                grad_xt, _, preds = _cw_margin_grad(model, xt, labels, config.delta, c)
                clip_mask = (xt > lo) & (xt < hi)
                hinge_grad = np.sign(eta) * (np.abs(eta) > tau[:, None])
                eta = eta - config.cw_learning_rate * (grad_xt * clip_mask + hinge_grad)
                adversarial = preds != labels
                round_success |= adversarial
                eta_eff = xt - x
                linf = np.abs(eta_eff).max(axis=1)
                better = adversarial & (linf < best_linf)
                best_linf[better] = linf[better]
                best_eta[better] = eta_eff[better]
                ever_success |= adversarial
                shrink = adversarial & (np.abs(eta).max(axis=1) < tau)
                tau[shrink] *= 0.9
            c_hi = np.where(round_success, c, c_hi)
            c_lo = np.where(round_success, c_lo, c)
            c = np.where(np.isinf(c_hi), c_lo * 2.0, (c_lo + c_hi) / 2.0)
        last_eta = np.clip(x + eta, lo, hi) - x
    eta_out = np.where(ever_success[:, None], best_eta, last_eta)
    # the l-inf budget is a hard bound for this attack family
    eta_out = np.clip(eta_out, -config.epsilon, config.epsilon)
    return np.clip(x + eta_out, lo, hi), ever_success


def cw_l2(model, x, y, config):
    x = np.asarray(x, dtype=np.float64)
    xt, _ = _cw_l2_batch(model, x[None, :], np.array([y]), config)
    return _finish_single(model, x, xt[0], y,
                          iterations=config.c_search_steps * config.cw_iterations)


def cw_linf(model, x, y, config):
    x = np.asarray(x, dtype=np.float64)
    xt, _ = _cw_linf_batch(model, x[None, :], np.array([y]), config)
    return _finish_single(model, x, xt[0], y,
                          iterations=config.c_search_steps * config.cw_iterations)


def _predict_frozen(model, x_batch):
    with _frozen(model):
        _, logp = model.posterior_graph(np.atleast_2d(x_batch))
    return np.argmax(logp.data, axis=1)


def _finish_single(model, x, xt, y, iterations):
    pred = _predict_frozen(model, xt[None, :])[0]
    pert = Perturbation.from_eta(xt - x, iterations=iterations, success=pred != y)
    return xt, pert


# ---------------------------------------------------------------------------
# Batch driver
# ---------------------------------------------------------------------------

def _run_group(model, x, y, config, rng):
    if config.kind == "fgsm":
        return _pgd_batch(model, x, y, config.epsilon, config.epsilon, 1, config.clamp)
    if config.kind == "pgd":
        return _pgd_batch(model, x, y, config.epsilon, config.effective_alpha,
                          config.iterations, config.clamp,
                          random_start=config.random_start,
                          grad_at_original=config.grad_at_original, rng=rng)
    if config.kind == "cw_l2":
        return _cw_l2_batch(model, x, y, config)[0]
    return _cw_linf_batch(model, x, y, config)[0]


def _config_iterations(config):
    if config.kind == "fgsm":
        return 1
    if config.kind == "pgd":
        return config.iterations
    return config.c_search_steps * config.cw_iterations


def attack_batch(model, samples, config):
    """Attack every sample; returns examples, accuracies, per-sample errors.

    Samples of equal length are attacked together. Per-sample failures are
    collected rather than raised; an errored sample keeps its clean waveform.
    """
    samples = list(samples)
    waves = [np.asarray(s.waveform, dtype=np.float64) for s in samples]
    labels = np.array([s.speaker_label for s in samples])
    n = len(samples)
    adv = [w.copy() for w in waves]
    errors = []
    rng = np.random.default_rng(config.seed)
    by_len = {}
    for i, w in enumerate(waves):
        by_len.setdefault(len(w), []).append(i)
    failed = np.zeros(n, dtype=bool)
    for _, idxs in sorted(by_len.items()):
        x = np.stack([waves[i] for i in idxs])
        y = labels[idxs]
        try:
            xt = _run_group(model, x, y, config, rng)
            for j, i in enumerate(idxs):
                adv[i] = xt[j]
        except Exception as exc:  # noqa: BLE001 - per-sample error aggregation
            for i in idxs:
                errors.append((i, str(exc)))
                failed[i] = True
    benign_preds = np.full(n, -1, dtype=int)
    adv_preds = np.full(n, -1, dtype=int)
    for _, idxs in sorted(by_len.items()):
        live = [i for i in idxs if not failed[i]]
        if not live:
            continue
        benign_preds[live] = _predict_frozen(model, np.stack([waves[i] for i in live]))
        adv_preds[live] = _predict_frozen(model, np.stack([adv[i] for i in live]))
    iterations = _config_iterations(config)
    examples = [
        (adv[i], Perturbation.from_eta(adv[i] - waves[i], iterations=iterations,
                                       success=bool(adv_preds[i] != labels[i])
                                       and not failed[i]))
        for i in range(n)
    ]
    ok = ~failed
    return AttackBatchResult(
        examples=examples,
        adversarial_accuracy=float(np.mean(adv_preds[ok] == labels[ok])) if ok.any() else 0.0,
        benign_accuracy=float(np.mean(benign_preds[ok] == labels[ok])) if ok.any() else 0.0,
        errors=errors,
        benign_predictions=benign_preds,
        adversarial_predictions=adv_preds,
    )


def make_config(kind, **overrides):
    """AttackConfig for the given kind with field overrides applied."""
    base = AttackConfig(kind=kind)
    return replace(base, **overrides)
