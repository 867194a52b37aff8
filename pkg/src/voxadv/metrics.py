"""Evaluation metrics: SNR, a log-spectral distortion proxy for perceptual
quality, accuracy, and similarity between the wrong predictions of two
attacks."""

from dataclasses import dataclass

import numpy as np

from .frontend import FrontendConfig, _hann_window

SNR_CAP_DB = 200.0


@dataclass(frozen=True)
class QualityReport:
    """Perturbation quality numbers for one (clean, adversarial) pair."""

    snr_db: float
    lsd: float
    linf_norm: float
    l2_norm: float


def snr_db(x, x_tilde):
    """10*log10(sum(x^2) / sum((x_tilde - x)^2)).

    Exactly zero noise returns the cap value +200 dB; any nonzero noise uses
    the plain formula so the scaling identity
    snr(x, x + a*eta) = snr(x, x + eta) - 20*log10(a) holds exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x.shape != x_tilde.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_tilde.shape}")
    signal_power = float(np.sum(x * x))
    if signal_power == 0.0:
        raise ValueError("reference signal is all zero; SNR undefined")
    noise_power = float(np.sum((x_tilde - x) ** 2))
    if noise_power == 0.0:
        return SNR_CAP_DB
    return float(10.0 * np.log10(signal_power / noise_power))


def _log_power_frames(x, config):
    # same framing/window/FFT as the model front-end, in dB, mel stage skipped
    n_frames = config.n_frames(len(x))
    stride = x.strides[0]
    frames = np.lib.stride_tricks.as_strided(
        x, shape=(n_frames, config.frame_length),
        strides=(config.hop_length * stride, stride)).copy()
    frames *= _hann_window(config.frame_length)
    power = np.abs(np.fft.rfft(frames, n=config.fft_size, axis=-1)) ** 2
    return 10.0 * np.log10(power + config.log_floor)


def lsd_db(x, x_tilde, config):
    """Root-mean-square difference of the log power spectra, in dB.

    Stand-in for a perceptual quality score: monotone in perturbation
    strength, zero for identical signals.
    """
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x.shape != x_tilde.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_tilde.shape}")
    diff = _log_power_frames(x, config) - _log_power_frames(x_tilde, config)
    return float(np.sqrt(np.mean(diff ** 2)))


def accuracy(predictions, labels):
    """Fraction of predictions equal to labels."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {labels.shape}")
    if predictions.size == 0:
        raise ValueError("accuracy of an empty prediction set is undefined")
    return float(np.mean(predictions == labels))


def misclassification_similarity(preds_a, preds_b, labels):
    """Agreement rate of two attacks' wrong predictions.

    Over the samples misclassified under BOTH attacks, the fraction where the
    two wrong predictions coincide. Returns None when no sample is
    misclassified under both (undefined, distinct from 0).
    """
    preds_a = np.asarray(preds_a)
    preds_b = np.asarray(preds_b)
    labels = np.asarray(labels)
    if not (preds_a.shape == preds_b.shape == labels.shape):
        raise ValueError("prediction and label arrays must share a shape")
    both_wrong = (preds_a != labels) & (preds_b != labels)
    if not both_wrong.any():
        return None
    return float(np.mean(preds_a[both_wrong] == preds_b[both_wrong]))


def measure_quality(x, x_tilde, config):
    """QualityReport for one clean/adversarial pair."""
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    eta = x_tilde - x
    return QualityReport(
        snr_db=snr_db(x, x_tilde),
        lsd=lsd_db(x, x_tilde, config),
        linf_norm=float(np.abs(eta).max()) if eta.size else 0.0,
        l2_norm=float(np.sqrt(np.sum(eta * eta))),
    )
