"""Experiment configuration: JSON files merged over documented defaults, with
dotted-path CLI overrides.

Schema (all keys optional; shown with defaults):

    corpus:    kind="synth" (n_speakers=10, utterances_per_speaker=20,
               duration_s=2.0, sample_rate=16000, seed=0)
               or kind="wav_dir" (path=...)
    split:     train_fraction=0.9, seed=0
    frontend:  FrontendConfig fields
    model:     arch="cnn" plus the architecture config fields (channels, ...)
    optimizer: OptimizerConfig fields
    defense:   kind="none" | "adv" (attack={...}, w_at=0.5)
               | "alr" (xi, n_power_iterations, epsilon_alr, lipschitz_target,
                        lambda_alr)
               | "noise" (sigma=0.002)
    attacks:   list of {kind, strengths, ...AttackConfig overrides}; strength
               means epsilon for l-inf attacks and delta for cw_l2
    pgd_iterations: [10, 20, 30, 50, 100]
    output_dir: "voxadv_run"

The resolved config is echoed verbatim into every output file. Relative
output_dir is rooted at $VOXADV_OUTPUT_ROOT when that variable is set.
"""

import copy
import json
import os
from dataclasses import fields, replace

from ..attacks import AttackConfig
from ..corpus import SynthSpec
from ..frontend import FrontendConfig
from ..models import CnnConfig, OptimizerConfig, TdnnConfig

OUTPUT_ROOT_ENV = "VOXADV_OUTPUT_ROOT"

DEFAULTS = {
    "corpus": {
        "kind": "synth",
        "n_speakers": 10,
        "utterances_per_speaker": 20,
        "duration_s": 2.0,
        "sample_rate": 16000,
        "seed": 0,
    },
    "split": {"train_fraction": 0.9, "seed": 0},
    "frontend": {},
    "model": {"arch": "cnn", "seed": 0},
    "optimizer": {},
    "defense": {"kind": "none"},
    "attacks": [
        {"kind": "fgsm", "strengths": [0.0005, 0.002, 0.0035, 0.005]},
    ],
    "pgd_iterations": [10, 20, 30, 50, 100],
    "output_dir": "voxadv_run",
}

_ATTACK_KINDS = ("fgsm", "pgd", "cw_l2", "cw_linf")
_DEFENSE_KINDS = ("none", "adv", "alr", "noise")


def _deep_merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None):
    """Resolved config dict: file contents (if any) merged over DEFAULTS."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    with open(path) as fh:
        user = json.load(fh)
    if not isinstance(user, dict):
        raise ValueError(f"config root must be a JSON object, got {type(user).__name__}")
    return _deep_merge(DEFAULTS, user)


def apply_overrides(config, assignments):
    """Apply 'dotted.path=json_value' strings; bare words fall back to text."""
    config = copy.deepcopy(config)
    for item in assignments:
        if "=" not in item:
            raise ValueError(f"override must look like key.path=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"cannot descend into non-object at {part!r} in {dotted!r}")
        node[parts[-1]] = value
    return config


def _known_fields(cls):
    return {f.name for f in fields(cls)}


def _check_keys(problems, section, given, allowed):
    for key in given:
        if key not in allowed:
            problems.append(f"{section}: unknown key {key!r}")


def validate_config(config):
    """Collect every problem at once; raises ValueError listing all of them."""
    problems = []
    corpus = config.get("corpus", {})
    kind = corpus.get("kind")
    if kind == "synth":
        allowed = _known_fields(SynthSpec) | {"kind"}
        _check_keys(problems, "corpus", corpus, allowed)
    elif kind == "wav_dir":
        _check_keys(problems, "corpus", corpus, {"kind", "path"})
        if not corpus.get("path"):
            problems.append("corpus: wav_dir needs a path")
    else:
        problems.append(f"corpus: kind must be 'synth' or 'wav_dir', got {kind!r}")
    _check_keys(problems, "split", config.get("split", {}),
                {"train_fraction", "seed"})
    _check_keys(problems, "frontend", config.get("frontend", {}),
                _known_fields(FrontendConfig))
    model = config.get("model", {})
    arch = model.get("arch")
    if arch == "cnn":
        _check_keys(problems, "model", model,
                    (_known_fields(CnnConfig) | {"arch"}) - {"n_classes"})
    elif arch == "tdnn":
        _check_keys(problems, "model", model,
                    (_known_fields(TdnnConfig) | {"arch"}) - {"n_classes"})
    else:
        problems.append(f"model: arch must be 'cnn' or 'tdnn', got {arch!r}")
    _check_keys(problems, "optimizer", config.get("optimizer", {}),
                _known_fields(OptimizerConfig))
    defense = config.get("defense", {})
    dkind = defense.get("kind")
    if dkind not in _DEFENSE_KINDS:
        problems.append(f"defense: kind must be one of {_DEFENSE_KINDS}, got {dkind!r}")
    elif dkind == "adv":
        _check_keys(problems, "defense", defense, {"kind", "attack", "w_at"})
        inner = defense.get("attack", {})
        if inner.get("kind") not in ("fgsm", "pgd"):
            problems.append("defense: adversarial training needs an fgsm or pgd "
                            "inner attack")
    elif dkind == "alr":
        _check_keys(problems, "defense", defense,
                    {"kind", "xi", "n_power_iterations", "epsilon_alr",
                     "lipschitz_target", "lambda_alr"})
    elif dkind == "noise":
        _check_keys(problems, "defense", defense, {"kind", "sigma"})
    attacks = config.get("attacks", [])
    if not isinstance(attacks, list):
        problems.append("attacks: must be a list")
        attacks = []
    for i, spec in enumerate(attacks):
        akind = spec.get("kind")
        if akind not in _ATTACK_KINDS:
            problems.append(f"attacks[{i}]: kind must be one of {_ATTACK_KINDS}, "
                            f"got {akind!r}")
        strengths = spec.get("strengths", [])
        if not strengths:
            problems.append(f"attacks[{i}]: strength grid must be nonempty")
        allowed = _known_fields(AttackConfig) | {"strengths"}
        _check_keys(problems, f"attacks[{i}]", spec, allowed)
    iters = config.get("pgd_iterations", [])
    if not iters or any((not isinstance(t, int)) or t < 1 for t in iters):
        problems.append("pgd_iterations: must be a nonempty list of positive ints")
    if problems:
        raise ValueError("invalid config:\n  " + "\n  ".join(problems))
    return config


def resolve_output_dir(config, cli_out=None):
    """--out beats config output_dir; relative paths root at the env var."""
    out = cli_out if cli_out is not None else config.get("output_dir", "voxadv_run")
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    return out


def resolve_frontend(config):
    return FrontendConfig(**config.get("frontend", {}))


def resolve_synth_spec(config):
    corpus = dict(config["corpus"])
    corpus.pop("kind")
    return SynthSpec(**corpus)


def resolve_model_config(config, n_classes):
    model = dict(config["model"])
    arch = model.pop("arch")
    for key in ("channels", "kernel_sizes"):
        if key in model:
            model[key] = tuple(model[key])
    if arch == "cnn":
        return arch, CnnConfig(n_classes=n_classes, **model)
    return arch, TdnnConfig(n_classes=n_classes, **model)


def resolve_optimizer(config):
    return OptimizerConfig(**config.get("optimizer", {}))


def _strength_field(kind):
    # Fig-3 convention: the swept strength is epsilon for l-inf attacks and
    # the confidence margin delta for cw_l2
    return "delta" if kind == "cw_l2" else "epsilon"


def resolve_attack_configs(config):
    """[(attack kind, strength, AttackConfig)] over every grid point."""
    out = []
    for spec in config.get("attacks", []):
        spec = dict(spec)
        kind = spec.pop("kind")
        strengths = spec.pop("strengths")
        base = AttackConfig(kind=kind, **spec)
        for strength in strengths:
            out.append((kind, float(strength),
                        replace(base, **{_strength_field(kind): float(strength)})))
    return out


def resolve_attack_config(spec):
    """One AttackConfig from a defense-style attack dict (no strength grid)."""
    return AttackConfig(**spec)
