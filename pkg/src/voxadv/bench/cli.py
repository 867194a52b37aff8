"""Command-line entry point.

Subcommands: train, attack, sweep, pgd-iters, transfer, spectrogram,
similarity, verify. Exit code 0 on success; on failure a single JSON error
line goes to stderr and the exit code is nonzero.
"""

import argparse
import json
import sys

from . import commands
from .config import apply_overrides, load_config, resolve_output_dir


def _add_common(parser, checkpoint=False):
    parser.add_argument("--config", help="JSON experiment config; defaults apply "
                                         "to missing keys")
    parser.add_argument("--out", help="output directory (overrides config; "
                                      "relative paths root at $VOXADV_OUTPUT_ROOT)")
    parser.add_argument("--force", action="store_true",
                        help="overwrite existing outputs")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        dest="overrides",
                        help="override a config field by dotted path, value "
                             "parsed as JSON (repeatable)")
    if checkpoint:
        parser.add_argument("--checkpoint", required=True,
                            help="model checkpoint to evaluate")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="voxadv",
        description="Benchmark harness for time-domain adversarial attacks on "
                    "speaker-identification models.")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("train", help="train a model, optionally with "
                                             "a defense"))
    _add_common(sub.add_parser("attack", help="run the configured attack grids "
                                              "against a checkpoint"),
                checkpoint=True)

    sweep = sub.add_parser("sweep", help="strength sweep across defense arms")
    _add_common(sweep)
    sweep.add_argument("--arm", action="append", required=True, metavar="NAME=CKPT",
                       dest="arms", help="defense arm (repeatable)")

    iters = sub.add_parser("pgd-iters", help="accuracy vs PGD iteration count")
    _add_common(iters, checkpoint=True)
    iters.add_argument("--epsilon", type=float, default=0.002,
                       help="attack strength (default 0.002)")

    transfer = sub.add_parser("transfer", help="cross-model transfer of "
                                               "adversarial samples")
    _add_common(transfer)
    transfer.add_argument("--source", required=True, help="attacked checkpoint")
    transfer.add_argument("--target", required=True, help="evaluated checkpoint")
    transfer.add_argument("--both", action="store_true",
                          help="also run target->source")

    spec = sub.add_parser("spectrogram", help="log-mel dumps for a clean and "
                                              "perturbed pair")
    _add_common(spec)
    spec.add_argument("--wav", required=True, help="clean waveform (WAV)")
    spec.add_argument("--perturbed", required=True, help="perturbed waveform (WAV)")

    sim = sub.add_parser("similarity", help="wrong-prediction similarity "
                                            "matrices per strength")
    _add_common(sim, checkpoint=True)

    verify = sub.add_parser("verify", help="recompute a report's accuracies "
                                           "from its manifests")
    verify.add_argument("--report", required=True, help="attack_report.json path")
    return parser


def _dispatch(args):
    if args.command == "verify":
        return commands.cmd_verify(args.report)
    config = apply_overrides(load_config(args.config), args.overrides)
    out_dir = resolve_output_dir(config, args.out)
    if args.command == "train":
        return commands.cmd_train(config, out_dir, force=args.force)
    if args.command == "attack":
        return commands.cmd_attack(config, args.checkpoint, out_dir,
                                   force=args.force)
    if args.command == "sweep":
        arms = {}
        for item in args.arms:
            if "=" not in item:
                raise ValueError(f"--arm must look like NAME=CKPT, got {item!r}")
            name, path = item.split("=", 1)
            arms[name] = path
        return commands.cmd_sweep(config, arms, out_dir, force=args.force)
    if args.command == "pgd-iters":
        return commands.cmd_pgd_iters(config, args.checkpoint, out_dir,
                                      epsilon=args.epsilon, force=args.force)
    if args.command == "transfer":
        return commands.cmd_transfer(config, args.source, args.target, out_dir,
                                     force=args.force, both=args.both)
    if args.command == "spectrogram":
        return commands.cmd_spectrogram(config, args.wav, args.perturbed,
                                        out_dir, force=args.force)
    return commands.cmd_similarity(config, args.checkpoint, out_dir,
                                   force=args.force)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        report = _dispatch(args)
    except Exception as exc:  # noqa: BLE001 - single machine-readable error line
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1
    summary = {k: report[k] for k in ("kind", "benign_accuracy", "ok")
               if k in report}
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
