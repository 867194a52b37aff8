"""Benchmark harness: experiment configs, commands, and the CLI entry point."""

from .config import (
    DEFAULTS,
    apply_overrides,
    load_config,
    resolve_attack_configs,
    resolve_output_dir,
    validate_config,
)
from .commands import (
    cmd_attack,
    cmd_pgd_iters,
    cmd_similarity,
    cmd_spectrogram,
    cmd_sweep,
    cmd_train,
    cmd_transfer,
    cmd_verify,
)

__all__ = [
    "DEFAULTS",
    "apply_overrides",
    "cmd_attack",
    "cmd_pgd_iters",
    "cmd_similarity",
    "cmd_spectrogram",
    "cmd_sweep",
    "cmd_train",
    "cmd_transfer",
    "cmd_verify",
    "load_config",
    "resolve_attack_configs",
    "resolve_output_dir",
    "validate_config",
]
