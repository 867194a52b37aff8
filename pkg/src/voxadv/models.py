"""Speaker-identification models over the log-mel front-end, plus ERM training.

Two back-ends: an 8-layer 1D CNN (global average pooling into a 32-wide
penultimate layer) and a TDNN with dilated convolutions and statistics
pooling. Both consume the differentiable front-end, so waveform gradients are
available to the attack code.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffgraph as dg
from .frontend import FrontendConfig, log_mel

_BN_EPS = 1e-5
_BN_MOMENTUM = 0.9  # fraction of the running statistic kept per update

# maxpool follows layers 2, 4, 6, 8 (1-indexed); fixed by the architecture
_CNN_POOL_AFTER = (2, 4, 6, 8)
# (kernel, dilation) per TDNN frame-level layer
_TDNN_PLAN = ((5, 1), (3, 2), (3, 3), (1, 1), (1, 1))


@dataclass(frozen=True)
class CnnConfig:
    n_classes: int
    channels: tuple = (64, 64, 128, 128, 128, 96, 64, 32)
    kernel_sizes: tuple = (3, 3, 3, 3, 3, 3, 3, 3)
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        if len(self.channels) != 8 or len(self.kernel_sizes) != 8:
            raise ValueError("the CNN has exactly 8 conv layers; channel and kernel "
                             f"plans must have length 8, got {len(self.channels)} "
                             f"and {len(self.kernel_sizes)}")
        if self.channels[-1] != 32:
            raise ValueError(f"penultimate width is fixed at 32, got {self.channels[-1]}")
        if any(c < 1 for c in self.channels) or any(k < 1 for k in self.kernel_sizes):
            raise ValueError("channels and kernel sizes must be positive")


@dataclass(frozen=True)
class TdnnConfig:
    n_classes: int
    channels: tuple = (64, 64, 64, 64, 128)
    embedding_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        if len(self.channels) != 5:
            raise ValueError(f"the TDNN has exactly 5 frame-level layers, got "
                             f"{len(self.channels)}")
        if any(c < 1 for c in self.channels) or self.embedding_dim < 1:
            raise ValueError("channels and embedding_dim must be positive")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    crop_s: float = 2.0  # fixed-length training crops; evaluation uses full utterances

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class TrainTrace:
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)


class Model:
    """Architecture tag + frontend config + parameter store + BN mode flag."""

    def __init__(self, arch, config, frontend, params):
        self.arch = arch
        self.config = config
        self.frontend = frontend
        self.params = params
        self.n_classes = config.n_classes
        self.training = False

    def train_mode(self):
        self.training = True
        return self

    def eval_mode(self):
        self.training = False
        return self

    def n_trainable(self):
        return self.params.n_scalars(trainable_only=True)

    def posterior_graph(self, waveforms, input_requires_grad=False):
        """Build the forward graph; returns (input leaf, log-posterior Tensor).

        waveforms: array of shape (B, L). The input leaf is the handle the
        attack code differentiates against.
        """
        wf = np.asarray(waveforms, dtype=np.float64)
        if wf.ndim != 2:
            raise ValueError(f"expected a (batch, samples) array, got {wf.shape}")
        x = dg.Tensor(wf, requires_grad=input_requires_grad, op="waveform")
        feats = log_mel(x, self.frontend)
        if self.arch == "cnn":
            logits = _cnn_logits(self.params, self.config, feats, self.training)
        elif self.arch == "tdnn":
            logits = _tdnn_logits(self.params, self.config, feats, self.training)
        else:
            raise ValueError(f"unknown architecture {self.arch!r}")
        return x, dg.log_softmax(logits, axis=-1)


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

def _he_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _batchnorm(params, name, x, training):
    """Channel batchnorm over (B, C, T); batch stats in training, running in eval."""
    gamma = params[f"{name}.gamma"]
    beta = params[f"{name}.beta"]
    rmean = params[f"{name}.running_mean"]
    rvar = params[f"{name}.running_var"]
    c = gamma.data.shape[0]
    bshape = (1, c, 1)
    if training:
        mu = dg.mean(x, axis=(0, 2), keepdims=True)
        diff = dg.sub(x, mu)
        var = dg.mean(dg.mul(diff, diff), axis=(0, 2), keepdims=True)
        rmean.data[...] = _BN_MOMENTUM * rmean.data + (1 - _BN_MOMENTUM) * mu.data.reshape(c)
        rvar.data[...] = _BN_MOMENTUM * rvar.data + (1 - _BN_MOMENTUM) * var.data.reshape(c)
        xhat = dg.div(diff, dg.sqrt(dg.add(var, _BN_EPS)))
    else:
        mu = dg.constant(rmean.data.reshape(bshape))
        denom = dg.constant(np.sqrt(rvar.data.reshape(bshape) + _BN_EPS))
        xhat = dg.div(dg.sub(x, mu), denom)
    return dg.add(dg.mul(xhat, dg.reshape(gamma, bshape)), dg.reshape(beta, bshape))


def _affine(params, name, x):
    return dg.add(dg.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def _cnn_logits(params, config, feats, training):
    h = feats
    for i in range(8):
        k = config.kernel_sizes[i]
        h = dg.conv1d(h, params[f"conv{i + 1}.w"], params[f"conv{i + 1}.b"],
                      dilation=1, padding=(k - 1) // 2)
        h = dg.relu(h)
        h = _batchnorm(params, f"bn{i + 1}", h, training)
        if (i + 1) in _CNN_POOL_AFTER and h.data.shape[2] >= 2:
            h = dg.maxpool1d(h, 2)
    pooled = dg.mean(h, axis=2)  # global average pooling over time -> (B, 32)
    return _affine(params, "head", pooled)


def stats_pool(h):
    """Statistics pooling: per-channel mean and std over time, concatenated.

    h: (B, C, T) -> (B, 2C). The std component is exactly 0 for a signal that
    is constant over time (population std, sqrt with zero subgradient).
    """
    mu = dg.mean(h, axis=2, keepdims=True)
    diff = dg.sub(h, mu)
    std = dg.sqrt(dg.mean(dg.mul(diff, diff), axis=2))
    return dg.concat([dg.reshape(mu, mu.data.shape[:2]), std], axis=1)


def _tdnn_logits(params, config, feats, training):
    h = feats
    for i, (k, dilation) in enumerate(_TDNN_PLAN):
        h = dg.conv1d(h, params[f"frame{i + 1}.w"], params[f"frame{i + 1}.b"],
                      dilation=dilation, padding=(k - 1) // 2 * dilation)
        h = dg.relu(h)
        h = _batchnorm(params, f"fbn{i + 1}", h, training)
    emb = dg.relu(_affine(params, "seg1", stats_pool(h)))
    return _affine(params, "head", emb)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _cnn_param_specs(config, n_mels):
    specs = []
    c_in = n_mels
    for i, (c_out, k) in enumerate(zip(config.channels, config.kernel_sizes)):
        specs.append((f"conv{i + 1}.w", (c_out, c_in, k), True))
        specs.append((f"conv{i + 1}.b", (c_out,), True))
        specs.extend(_bn_specs(f"bn{i + 1}", c_out))
        c_in = c_out
    specs.append(("head.w", (config.channels[-1], config.n_classes), True))
    specs.append(("head.b", (config.n_classes,), True))
    return specs


def _tdnn_param_specs(config, n_mels):
    specs = []
    c_in = n_mels
    for i, ((k, _), c_out) in enumerate(zip(_TDNN_PLAN, config.channels)):
        specs.append((f"frame{i + 1}.w", (c_out, c_in, k), True))
        specs.append((f"frame{i + 1}.b", (c_out,), True))
        specs.extend(_bn_specs(f"fbn{i + 1}", c_out))
        c_in = c_out
    stats_dim = 2 * config.channels[-1]
    specs.append(("seg1.w", (stats_dim, config.embedding_dim), True))
    specs.append(("seg1.b", (config.embedding_dim,), True))
    specs.append(("head.w", (config.embedding_dim, config.n_classes), True))
    specs.append(("head.b", (config.n_classes,), True))
    return specs


def _bn_specs(name, c):
    return [(f"{name}.gamma", (c,), True), (f"{name}.beta", (c,), True),
            (f"{name}.running_mean", (c,), False), (f"{name}.running_var", (c,), False)]


def _init_params(specs, seed):
    rng = np.random.default_rng(seed)
    params = dg.Parameters()
    for name, shape, trainable in specs:
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[:-1])) if name.startswith(("head", "seg")) \
                else shape[1] * shape[2]
            arr = _he_uniform(rng, shape, fan_in)
        elif name.endswith((".gamma", ".running_var")):
            arr = np.ones(shape)
        else:  # biases, beta, running_mean
            arr = np.zeros(shape)
        params.add(name, arr, trainable=trainable)
    return params


def build_cnn(config, frontend=None):
    frontend = frontend if frontend is not None else FrontendConfig()
    params = _init_params(_cnn_param_specs(config, frontend.n_mels), config.seed)
    return Model("cnn", config, frontend, params)


def build_tdnn(config, frontend=None):
    frontend = frontend if frontend is not None else FrontendConfig()
    params = _init_params(_tdnn_param_specs(config, frontend.n_mels), config.seed)
    return Model("tdnn", config, frontend, params)


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def forward_log_posteriors(model, waveforms):
    """Log-posteriors for a (B, L) batch, under the model's current BN mode."""
    _, logp = model.posterior_graph(waveforms)
    return logp.data


def argmax_labels(log_posteriors):
    """Highest-posterior class per row; ties go to the lowest index."""
    return np.argmax(log_posteriors, axis=-1)


def batched_log_posteriors(model, waveforms, batch_size=32):
    """Run a list of 1-D waveforms (lengths may differ) in equal-length batches."""
    waveforms = [np.asarray(w, dtype=np.float64) for w in waveforms]
    out = np.zeros((len(waveforms), model.n_classes))
    by_len = {}
    for i, w in enumerate(waveforms):
        by_len.setdefault(len(w), []).append(i)
    for _, idxs in sorted(by_len.items()):
        for start in range(0, len(idxs), batch_size):
            chunk = idxs[start:start + batch_size]
            batch = np.stack([waveforms[i] for i in chunk])
            out[chunk] = forward_log_posteriors(model, batch)
    return out


def predict(model, waveforms, batch_size=32):
    """Argmax labels under evaluation-mode batchnorm."""
    was_training = model.training
    model.eval_mode()
    try:
        if isinstance(waveforms, np.ndarray) and waveforms.ndim == 2:
            logp = forward_log_posteriors(model, waveforms)
        else:
            logp = batched_log_posteriors(model, waveforms, batch_size)
    finally:
        model.training = was_training
    return argmax_labels(logp)


def evaluate(model, dataset, batch_size=32):
    """Classification accuracy on full utterances."""
    preds = predict(model, [s.waveform for s in dataset], batch_size)
    return float(np.mean(preds == dataset.labels()))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

class Adam:
    def __init__(self, params, config):
        self.params = params
        self.lr = config.learning_rate
        self.b1 = config.beta1
        self.b2 = config.beta2
        self.eps = 1e-8
        self.t = 0
        self.m = {n: np.zeros_like(t.data) for n, t in params.trainable_items()}
        self.v = {n: np.zeros_like(t.data) for n, t in params.trainable_items()}

    def step(self):
        self.t += 1
        for name, tensor in self.params.trainable_items():
            if tensor.grad is None:
                continue
            g = tensor.grad
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            mhat = self.m[name] / (1 - self.b1 ** self.t)
            vhat = self.v[name] / (1 - self.b2 ** self.t)
            tensor.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def cross_entropy(log_posteriors, labels):
    """Mean negative log-posterior of the true class, as a graph node."""
    b, c = log_posteriors.data.shape
    mask = np.zeros((b, c))
    mask[np.arange(b), labels] = 1.0 / b
    return dg.neg(dg.tensor_sum(dg.mul(log_posteriors, dg.constant(mask))))


def epoch_crops(dataset, crop_len, rng):
    """Fixed-length crop of every utterance, fresh random offsets each call."""
    n = len(dataset)
    crop_len = min(crop_len, min(len(s.waveform) for s in dataset))
    crops = np.zeros((n, crop_len))
    labels = np.zeros(n, dtype=int)
    for i, sample in enumerate(dataset):
        slack = len(sample.waveform) - crop_len
        off = int(rng.integers(0, slack + 1)) if slack > 0 else 0
        crops[i] = sample.waveform[off:off + crop_len]
        labels[i] = sample.speaker_label
    return crops, labels


def validate_labels(dataset, n_classes):
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    labels = dataset.labels()
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")


def train_erm(model, dataset, config, step_fn=None):
    """Adam on cross-entropy; returns (model, TrainTrace).

    step_fn, when given, replaces the per-batch loss construction: it receives
    (model, x_batch, y_batch, epoch) and returns a scalar loss Tensor plus the
    clean-batch log-posteriors used for the accuracy trace. The defenses build
    their augmented objectives through this hook.
    """
    validate_labels(dataset, model.n_classes)
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.params, config)
    trace = TrainTrace()
    crop_len = int(round(config.crop_s * dataset[0].sample_rate))
    for epoch in range(config.epochs):
        crops, labels = epoch_crops(dataset, crop_len, rng)
        order = rng.permutation(len(dataset))
        epoch_loss = 0.0
        epoch_hits = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = crops[idx], labels[idx]
            model.train_mode()
            if step_fn is None:
                _, logp = model.posterior_graph(xb)
                loss = cross_entropy(logp, yb)
            else:
                loss, logp = step_fn(model, xb, yb, epoch)
            model.params.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.data) * len(idx)
            epoch_hits += int((argmax_labels(logp.data) == yb).sum())
        trace.losses.append(epoch_loss / len(order))
        trace.accuracies.append(epoch_hits / len(order))
    model.eval_mode()
    return model, trace


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_model(model, path):
    extra = {
        "arch": model.arch,
        "n_classes": model.n_classes,
        "frontend": asdict(model.frontend),
        "model_config": _config_dict(model.config),
    }
    dg.save_checkpoint(model.params, path, extra=extra)


def load_model(path):
    """Rebuild a Model from a checkpoint; validates shapes against the config."""
    params, extra = dg.load_checkpoint(path)
    frontend = FrontendConfig(**extra["frontend"])
    cfg_dict = dict(extra["model_config"])
    arch = extra["arch"]
    if arch == "cnn":
        config = CnnConfig(n_classes=extra["n_classes"],
                           channels=tuple(cfg_dict["channels"]),
                           kernel_sizes=tuple(cfg_dict["kernel_sizes"]),
                           seed=cfg_dict["seed"])
        specs = _cnn_param_specs(config, frontend.n_mels)
    elif arch == "tdnn":
        config = TdnnConfig(n_classes=extra["n_classes"],
                            channels=tuple(cfg_dict["channels"]),
                            embedding_dim=cfg_dict["embedding_dim"],
                            seed=cfg_dict["seed"])
        specs = _tdnn_param_specs(config, frontend.n_mels)
    else:
        raise ValueError(f"unknown architecture {arch!r} in checkpoint")
    for name, shape, trainable in specs:
        if name not in params:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        got = params[name].data.shape
        if tuple(got) != tuple(shape):
            raise ValueError(f"checkpoint shape mismatch for {name!r}: "
                             f"expected {shape}, found {tuple(got)}")
        if params.is_trainable(name) != trainable:
            raise ValueError(f"checkpoint trainable flag mismatch for {name!r}")
    return Model(arch, config, frontend, params)


def _config_dict(config):
    d = asdict(config)
    d.pop("n_classes", None)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
