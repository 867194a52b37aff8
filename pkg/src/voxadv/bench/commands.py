"""Benchmark commands. Each writes CSV tables plus a JSON report into an
output directory; every file embeds the resolved config for provenance, and
equal configs and seeds reproduce equal numbers.

Reports are plain dicts mirroring the JSON on disk. Accuracies in a report
are recomputable from the per-sample manifest CSVs; cmd_verify performs that
cross-check."""

import csv
import hashlib
import json
import os
import time

import numpy as np

from .. import diffgraph as dg
from ..attacks import AttackConfig, _config_iterations, attack_batch
from ..corpus import load_wav, load_wav_dir, save_wav, split, synth_corpus
from ..defenses import (
    AdvTrainConfig,
    AlrConfig,
    adversarial_train,
    alr_train,
    noise_augment_train,
)
from ..frontend import dump_spectrogram, log_mel
from ..metrics import lsd_db, measure_quality, misclassification_similarity, snr_db
from ..models import build_cnn, build_tdnn, evaluate, load_model, predict, save_model, train_erm
from .config import (
    resolve_attack_config,
    resolve_attack_configs,
    resolve_frontend,
    resolve_model_config,
    resolve_optimizer,
    resolve_synth_spec,
    validate_config,
)

MANIFEST_COLUMNS = ("sample_id", "true_label", "benign_pred", "adversarial_pred",
                    "linf", "l2", "snr_db", "success", "attack", "epsilon",
                    "delta", "iterations")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _ensure_fresh(path, force):
    if os.path.exists(path) and not force:
        raise ValueError(f"output {path} already exists; pass force=True "
                         "(--force) to overwrite")


def _config_line(config):
    return "# config: " + json.dumps(config, sort_keys=True)


def _write_csv(path, config, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(_config_line(config) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _write_report(path, report):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x):
    return format(float(x), ".17g")


def _fmt_or_empty(x):
    return "" if x is None else _fmt(x)


def _datasets(config):
    corpus_cfg = config["corpus"]
    if corpus_cfg["kind"] == "synth":
        full = synth_corpus(resolve_synth_spec(config))
    else:
        full = load_wav_dir(corpus_cfg["path"])
    split_cfg = config.get("split", {})
    train, test = split(full, split_cfg.get("train_fraction", 0.9),
                        seed=split_cfg.get("seed", 0))
    return full, train, test


def _build_model(config, n_classes):
    frontend = resolve_frontend(config)
    arch, model_config = resolve_model_config(config, n_classes)
    builder = build_cnn if arch == "cnn" else build_tdnn
    return builder(model_config, frontend)


def _train_with_defense(model, dataset, config):
    optimizer = resolve_optimizer(config)
    defense = config.get("defense", {"kind": "none"})
    kind = defense.get("kind", "none")
    if kind == "none":
        model, trace = train_erm(model, dataset, optimizer)
        zeros = (0.0,) * len(trace.losses)
        return model, (tuple(trace.losses), tuple(trace.losses), zeros,
                       tuple(trace.accuracies))
    if kind == "adv":
        cfg = AdvTrainConfig(attack=resolve_attack_config(defense["attack"]),
                             optimizer=optimizer,
                             w_at=defense.get("w_at", 0.5))
        model, trace = adversarial_train(model, dataset, cfg)
    elif kind == "alr":
        fields = {k: v for k, v in defense.items() if k != "kind"}
        model, trace = alr_train(model, dataset,
                                 AlrConfig(optimizer=optimizer, **fields))
    else:
        model, trace = noise_augment_train(model, dataset,
                                           defense.get("sigma", 0.002), optimizer)
    return model, (trace.losses, trace.clean_losses, trace.other_losses,
                   trace.accuracies)


def cmd_train(config, out_dir, force=False):
    """Train (with the configured defense) and write checkpoint, per-epoch
    log, and a summary report."""
    validate_config(config)
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    report_path = os.path.join(out_dir, "train_report.json")
    for path in (ckpt_path, report_path):
        _ensure_fresh(path, force)
    full, train, test = _datasets(config)
    model = _build_model(config, full.n_speakers)
    model, (losses, clean, other, accs) = _train_with_defense(model, train, config)
    save_model(model, ckpt_path)
    log_path = os.path.join(out_dir, "train_log.csv")
    _write_csv(log_path, config,
               ("epoch", "loss", "clean_loss", "defense_loss", "train_accuracy"),
               [(e, _fmt(l), _fmt(c), _fmt(o), _fmt(a))
                for e, (l, c, o, a) in enumerate(zip(losses, clean, other, accs))])
    report = {
        "kind": "train",
        "config": config,
        "checkpoint": ckpt_path,
        "checkpoint_sha256": _sha256(ckpt_path),
        "n_train": len(train),
        "n_test": len(test),
        "train_accuracy": evaluate(model, train),
        "benign_accuracy": evaluate(model, test),
        "epochs": len(losses),
        "runtime_s": time.time() - started,
    }
    _write_report(report_path, report)
    return report


def _check_arch(config, checkpoint):
    declared = config["model"]["arch"]
    meta = dg.checkpoint_meta(checkpoint)
    found = meta.get("arch")
    if found != declared:
        raise ValueError(f"architecture mismatch: config declares {declared!r} "
                         f"but checkpoint {checkpoint} holds {found!r}")


def _quality_stats(samples, result, frontend):
    values = {"snr_db": [], "lsd": []}
    failed = {i for i, _ in result.errors}
    for i, (sample, (xt, _)) in enumerate(zip(samples, result.examples)):
        if i in failed:
            continue
        rep = measure_quality(sample.waveform, xt, frontend)
        values["snr_db"].append(rep.snr_db)
        values["lsd"].append(rep.lsd)
    stats = {}
    for key, vals in values.items():
        arr = np.asarray(vals)
        stats[f"{key}_mean"] = float(arr.mean()) if arr.size else None
        stats[f"{key}_std"] = float(arr.std()) if arr.size else None
    stats["n_scored"] = len(values["snr_db"])
    return stats


def _manifest_rows(samples, result, attack_config, frontend):
    rows = []
    for sample, (xt, pert), bp, ap in zip(samples, result.examples,
                                          result.benign_predictions,
                                          result.adversarial_predictions):
        rows.append((sample.utterance_id, sample.speaker_label, int(bp), int(ap),
                     _fmt(pert.linf), _fmt(pert.l2),
                     _fmt(snr_db(sample.waveform, xt)), int(pert.success),
                     attack_config.kind, _fmt(attack_config.epsilon),
                     _fmt(attack_config.delta), _config_iterations(attack_config)))
    return rows


def _safe_id(utterance_id):
    return utterance_id.replace("/", "__")


def _run_attack_grid(model, samples, config, out_dir, frontend, dump_wavs):
    entries = []
    for kind, strength, attack_config in resolve_attack_configs(config):
        result = attack_batch(model, samples, attack_config)
        tag = f"{kind}_{strength:g}"
        manifest = os.path.join(out_dir, f"manifest_{tag}.csv")
        _write_csv(manifest, config, MANIFEST_COLUMNS,
                   _manifest_rows(samples, result, attack_config, frontend))
        if dump_wavs:
            wav_dir = os.path.join(out_dir, "adv", tag)
            os.makedirs(wav_dir, exist_ok=True)
            for sample, (xt, _) in zip(samples, result.examples):
                save_wav(os.path.join(wav_dir, f"{_safe_id(sample.utterance_id)}.wav"),
                         xt, sample.sample_rate)
        entry = {
            "attack": kind,
            "strength": strength,
            "epsilon": attack_config.epsilon,
            "delta": attack_config.delta,
            "iterations": _config_iterations(attack_config),
            "adversarial_accuracy": result.adversarial_accuracy,
            "n_samples": len(samples),
            "n_errors": len(result.errors),
            "errors": [[i, msg] for i, msg in result.errors],
            "manifest": os.path.basename(manifest),
        }
        entry.update(_quality_stats(samples, result, frontend))
        entries.append(entry)
    return entries


def cmd_attack(config, checkpoint, out_dir, force=False, dump_wavs=True):
    """Attack a checkpoint over the configured strength grids; write one
    manifest per grid point plus an aggregate report."""
    validate_config(config)
    _check_arch(config, checkpoint)
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "attack_report.json")
    _ensure_fresh(report_path, force)
    model = load_model(checkpoint)
    _, _, test = _datasets(config)
    samples = list(test)
    entries = _run_attack_grid(model, samples, config, out_dir, model.frontend,
                               dump_wavs)
    report = {
        "kind": "attack",
        "config": config,
        "checkpoint": checkpoint,
        "checkpoint_sha256": _sha256(checkpoint),
        "benign_accuracy": evaluate(model, test),
        "n_test": len(samples),
        "attacks": entries,
        "runtime_s": time.time() - started,
    }
    _write_report(report_path, report)
    return report


def cmd_sweep(config, arms, out_dir, force=False):
    """Strength sweep across defense arms; one CSV row per grid point."""
    validate_config(config)
    for name, path in arms.items():
        if not os.path.exists(path):
            raise ValueError(f"sweep arm {name!r}: checkpoint {path} not found")
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "sweep.csv")
    report_path = os.path.join(out_dir, "sweep_report.json")
    for path in (csv_path, report_path):
        _ensure_fresh(path, force)
    _, _, test = _datasets(config)
    samples = list(test)
    rows = []
    arm_reports = {}
    for name, ckpt in sorted(arms.items()):
        model = load_model(ckpt)
        arm_rows = []
        for kind, strength, attack_config in resolve_attack_configs(config):
            result = attack_batch(model, samples, attack_config)
            stats = _quality_stats(samples, result, model.frontend)
            rows.append((name, kind, _fmt(strength),
                         _fmt(result.adversarial_accuracy),
                         _fmt_or_empty(stats["snr_db_mean"]),
                         _fmt_or_empty(stats["lsd_mean"])))
            arm_rows.append({
                "attack": kind,
                "strength": strength,
                "adversarial_accuracy": result.adversarial_accuracy,
                "snr_db_mean": stats["snr_db_mean"],
                "lsd_mean": stats["lsd_mean"],
                "n_samples": len(samples),
            })
        arm_reports[name] = {
            "checkpoint": ckpt,
            "checkpoint_sha256": _sha256(ckpt),
            "benign_accuracy": evaluate(model, test),
            "rows": arm_rows,
        }
    _write_csv(csv_path, config,
               ("defense", "attack", "strength", "adversarial_accuracy",
                "snr_db_mean", "lsd_mean"), rows)
    report = {
        "kind": "sweep",
        "config": config,
        "arms": arm_reports,
        "n_test": len(samples),
        "runtime_s": time.time() - started,
    }
    _write_report(report_path, report)
    return report


def cmd_pgd_iters(config, checkpoint, out_dir, epsilon=0.002, force=False):
    """Adversarial accuracy vs iteration count at a fixed strength."""
    validate_config(config)
    _check_arch(config, checkpoint)
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "pgd_iters.csv")
    report_path = os.path.join(out_dir, "pgd_iters_report.json")
    for path in (csv_path, report_path):
        _ensure_fresh(path, force)
    model = load_model(checkpoint)
    _, _, test = _datasets(config)
    samples = list(test)
    rows = []
    table = []
    for iterations in config["pgd_iterations"]:
        attack_config = AttackConfig(kind="pgd", epsilon=epsilon,
                                     iterations=iterations)
        result = attack_batch(model, samples, attack_config)
        rows.append((_fmt(epsilon), iterations,
                     _fmt(result.adversarial_accuracy)))
        table.append({"epsilon": epsilon, "iterations": iterations,
                      "adversarial_accuracy": result.adversarial_accuracy,
                      "n_samples": len(samples)})
    _write_csv(csv_path, config,
               ("epsilon", "iterations", "adversarial_accuracy"), rows)
    report = {
        "kind": "pgd_iters",
        "config": config,
        "checkpoint": checkpoint,
        "checkpoint_sha256": _sha256(checkpoint),
        "benign_accuracy": evaluate(model, test),
        "rows": table,
        "n_test": len(samples),
        "runtime_s": time.time() - started,
    }
    _write_report(report_path, report)
    return report


def _group_indices(waves):
    by_len = {}
    for i, w in enumerate(waves):
        by_len.setdefault(len(w), []).append(i)
    return sorted(by_len.items())


def _accuracy_on(model, waves, labels):
    preds = np.full(len(waves), -1, dtype=int)
    for _, idxs in _group_indices(waves):
        preds[idxs] = predict(model, np.stack([waves[i] for i in idxs]))
    return float(np.mean(preds == labels)), preds


def _transfer_rows(source_model, target_model, samples, config):
    labels = np.array([s.speaker_label for s in samples])
    rows = []
    for kind, strength, attack_config in resolve_attack_configs(config):
        result = attack_batch(source_model, samples, attack_config)
        adv_waves = [xt for xt, _ in result.examples]
        target_acc, _ = _accuracy_on(target_model, adv_waves, labels)
        rows.append({
            "attack": kind,
            "strength": strength,
            "source_adversarial_accuracy": result.adversarial_accuracy,
            "target_accuracy": target_acc,
            "n_samples": len(samples),
        })
    return rows


def cmd_transfer(config, source, target, out_dir, force=False, both=False):
    """Attack the source model, evaluate the target on the transferred
    samples; optionally in both directions."""
    validate_config(config)
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "transfer.csv")
    report_path = os.path.join(out_dir, "transfer_report.json")
    for path in (csv_path, report_path):
        _ensure_fresh(path, force)
    source_model = load_model(source)
    target_model = load_model(target)
    if source_model.frontend != target_model.frontend:
        raise ValueError("front-end mismatch between source and target models: "
                         f"{source_model.frontend} vs {target_model.frontend}")
    _, _, test = _datasets(config)
    samples = list(test)
    labels = np.array([s.speaker_label for s in samples])
    waves = [s.waveform for s in samples]
    directions = [("source->target", source_model, target_model)]
    if both:
        directions.append(("target->source", target_model, source_model))
    rows = []
    blocks = {}
    for tag, src_m, tgt_m in directions:
        block_rows = _transfer_rows(src_m, tgt_m, samples, config)
        benign_acc, _ = _accuracy_on(tgt_m, waves, labels)
        blocks[tag] = {"target_benign_accuracy": benign_acc, "rows": block_rows}
        for r in block_rows:
            rows.append((tag, r["attack"], _fmt(r["strength"]),
                         _fmt(r["source_adversarial_accuracy"]),
                         _fmt(r["target_accuracy"])))
    _write_csv(csv_path, config,
               ("direction", "attack", "strength",
                "source_adversarial_accuracy", "target_accuracy"), rows)
    report = {
        "kind": "transfer",
        "config": config,
        "source": source,
        "source_sha256": _sha256(source),
        "target": target,
        "target_sha256": _sha256(target),
        "directions": blocks,
        "n_test": len(samples),
        "runtime_s": time.time() - started,
    }
    _write_report(report_path, report)
    return report


def cmd_spectrogram(config, wav_path, perturbed_path, out_dir, force=False):
    """Log-mel CSV dumps for a clean/perturbed pair plus SNR and distortion."""
    validate_config(config)
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "spectrogram_report.json")
    _ensure_fresh(report_path, force)
    frontend = resolve_frontend(config)
    clean, sr_clean = load_wav(wav_path)
    perturbed, sr_pert = load_wav(perturbed_path)
    if sr_clean != sr_pert:
        raise ValueError(f"sample-rate mismatch: {sr_clean} vs {sr_pert}")
    if sr_clean != frontend.sample_rate:
        raise ValueError(f"wav sample rate {sr_clean} does not match the "
                         f"front-end's {frontend.sample_rate}")
    if clean.shape != perturbed.shape:
        raise ValueError(f"length mismatch: {clean.shape} vs {perturbed.shape}")
    clean_csv = os.path.join(out_dir, "clean_logmel.csv")
    pert_csv = os.path.join(out_dir, "perturbed_logmel.csv")
    dump_spectrogram(log_mel(clean, frontend).data, clean_csv, frontend)
    dump_spectrogram(log_mel(perturbed, frontend).data, pert_csv, frontend)
    report = {
        "kind": "spectrogram",
        "config": config,
        "wav": wav_path,
        "perturbed": perturbed_path,
        "snr_db": snr_db(clean, perturbed),
        "lsd": lsd_db(clean, perturbed, frontend),
        "clean_csv": os.path.basename(clean_csv),
        "perturbed_csv": os.path.basename(pert_csv),
    }
    _write_report(report_path, report)
    return report


def cmd_similarity(config, checkpoint, out_dir, force=False):
    """Wrong-prediction similarity matrix per strength, across the configured
    attacks. Diagonal is 1 by definition; undefined pairs are NaN."""
    validate_config(config)
    _check_arch(config, checkpoint)
    started = time.time()
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "similarity_report.json")
    _ensure_fresh(report_path, force)
    model = load_model(checkpoint)
    _, _, test = _datasets(config)
    samples = list(test)
    labels = np.array([s.speaker_label for s in samples])
    by_strength = {}
    for kind, strength, attack_config in resolve_attack_configs(config):
        result = attack_batch(model, samples, attack_config)
        by_strength.setdefault(strength, {})[kind] = result.adversarial_predictions
    matrices = {}
    for strength in sorted(by_strength):
        preds = by_strength[strength]
        kinds = list(preds)
        n = len(kinds)
        matrix = np.full((n, n), np.nan)
        for i in range(n):
            matrix[i, i] = 1.0
            for j in range(i + 1, n):
                value = misclassification_similarity(preds[kinds[i]],
                                                     preds[kinds[j]], labels)
                if value is not None:
                    matrix[i, j] = matrix[j, i] = value
        csv_path = os.path.join(out_dir, f"similarity_{strength:g}.csv")
        _write_csv(csv_path, config, ["attack"] + kinds,
                   [[kinds[i]] + [_fmt(matrix[i, j]) for j in range(n)]
                    for i in range(n)])
        matrices[str(strength)] = {
            "attacks": kinds,
            "matrix": [[None if np.isnan(v) else float(v) for v in row]
                       for row in matrix],
            "csv": os.path.basename(csv_path),
        }
    report = {
        "kind": "similarity",
        "config": config,
        "checkpoint": checkpoint,
        "checkpoint_sha256": _sha256(checkpoint),
        "n_test": len(samples),
        "matrices": matrices,
        "runtime_s": time.time() - started,
    }
    _write_report(report_path, report)
    return report


def cmd_verify(report_path):
    """Recompute a report's accuracies from its manifests; raises on any
    mismatch."""
    with open(report_path) as fh:
        report = json.load(fh)
    if report.get("kind") != "attack":
        raise ValueError("verify expects an attack report, got kind="
                         f"{report.get('kind')!r}")
    base = os.path.dirname(os.path.abspath(report_path))
    problems = []
    checked = 0
    for entry in report.get("attacks", []):
        header, rows = _read_csv(os.path.join(base, entry["manifest"]))
        cols = {name: header.index(name) for name in
                ("true_label", "benign_pred", "adversarial_pred", "success")}
        labels = np.array([int(r[cols["true_label"]]) for r in rows])
        benign = np.array([int(r[cols["benign_pred"]]) for r in rows])
        adv = np.array([int(r[cols["adversarial_pred"]]) for r in rows])
        success = np.array([bool(int(r[cols["success"]])) for r in rows])
        errored = {i for i, _ in entry.get("errors", [])}
        ok = np.array([i not in errored for i in range(len(rows))])
        adv_acc = float(np.mean(adv[ok] == labels[ok])) if ok.any() else 0.0
        benign_acc = float(np.mean(benign[ok] == labels[ok])) if ok.any() else 0.0
        if abs(adv_acc - entry["adversarial_accuracy"]) > 1e-12:
            problems.append(f"{entry['manifest']}: adversarial accuracy "
                            f"{entry['adversarial_accuracy']} != recomputed {adv_acc}")
        if abs(benign_acc - report["benign_accuracy"]) > 1e-12:
            problems.append(f"{entry['manifest']}: benign accuracy "
                            f"{report['benign_accuracy']} != recomputed {benign_acc}")
        mismatch = success[ok] != (adv[ok] != labels[ok])
        if mismatch.any():
            problems.append(f"{entry['manifest']}: success flags disagree with "
                            "predictions on "
                            f"{int(mismatch.sum())} rows")
        checked += 1
    if problems:
        raise ValueError("report does not match its manifests:\n  "
                         + "\n  ".join(problems))
    return {"kind": "verify", "report": report_path, "attacks_checked": checked,
            "ok": True}
