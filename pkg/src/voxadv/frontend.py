"""Differentiable log-mel front-end.

Maps a raw waveform to an n_mels x n_frames feature signal through framing,
Hann windowing, magnitude-squared DFT, a triangular mel filterbank, and
log(. + log_floor). Every stage is built from diffgraph primitives so the
gradient flows back to the waveform samples.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import diffgraph as dg


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 16000
    frame_length: int = 400
    hop_length: int = 160
    fft_size: int = 512
    n_mels: int = 64
    fmin: float = 20.0
    fmax: float = 7600.0
    log_floor: float = 1e-6

    def __post_init__(self):
        if self.frame_length > self.fft_size:
            raise ValueError(f"frame_length {self.frame_length} exceeds fft_size {self.fft_size}")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ValueError(f"need 0 <= fmin < fmax <= nyquist, got fmin={self.fmin} "
                             f"fmax={self.fmax} sample_rate={self.sample_rate}")
        if self.n_mels < 1:
            raise ValueError(f"n_mels must be >= 1, got {self.n_mels}")
        if self.log_floor <= 0:
            raise ValueError(f"log_floor must be positive, got {self.log_floor}")
        if self.hop_length < 1 or self.frame_length < 1:
            raise ValueError("frame_length and hop_length must be positive")

    def n_frames(self, n_samples):
        if n_samples < self.frame_length:
            raise ValueError(f"waveform of {n_samples} samples is shorter than one "
                             f"frame ({self.frame_length} samples)")
        return 1 + (n_samples - self.frame_length) // self.hop_length


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def build_filterbank(config):
    """Triangular filters with centers uniformly spaced on the mel scale.

    Returns an (n_mels, fft_size // 2 + 1) nonnegative matrix. Filter m rises
    from mel point m-1 to m and falls to m+1, evaluated on the FFT bin grid.
    """
    n_bins = config.fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * config.sample_rate / config.fft_size
    mel_points = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax),
                             config.n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    fb = np.zeros((config.n_mels, n_bins))
    for m in range(config.n_mels):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


@lru_cache(maxsize=8)
def _hann_window(frame_length):
    # periodic form, the usual STFT analysis window
    n = np.arange(frame_length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_length)


def log_mel(waveform, config):
    """log(mel_energies + log_floor) with gradients back to the waveform.

    Accepts a Tensor or array of shape (L,) or (B, L); returns a Tensor of
    shape (n_mels, n_frames) or (B, n_mels, n_frames) respectively.
    """
    if not isinstance(waveform, dg.Tensor):
        waveform = dg.constant(np.asarray(waveform, dtype=np.float64))
    squeeze = waveform.data.ndim == 1
    if squeeze:
        waveform = dg.reshape(waveform, (1, waveform.data.shape[0]))
    if waveform.data.ndim != 2:
        raise ValueError(f"log_mel expects (L,) or (B, L), got {waveform.data.shape}")
    config.n_frames(waveform.data.shape[1])

    frames = dg.frame_signal(waveform, config.frame_length, config.hop_length)
    windowed = dg.mul(frames, dg.constant(_hann_window(config.frame_length)))
    power = dg.power_spectrum(windowed, config.fft_size)          # (B, T, K)
    fb_t = dg.constant(build_filterbank(config).T)                # (K, M)
    mel_energy = dg.matmul(power, fb_t)                            # (B, T, M)
    feats = dg.swapaxes(dg.log(dg.add(mel_energy, config.log_floor)), 1, 2)
    if squeeze:
        feats = dg.reshape(feats, feats.data.shape[1:])
    return feats


def dump_spectrogram(features, path, config):
    """Write a feature matrix as CSV (rows = mel channels, columns = frames).

    A sidecar text file ``<path>.meta.txt`` records the front-end config so a
    dump is interpretable on its own.
    """
    features = np.asarray(features)
    if features.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {features.shape}")
    # %.17g round-trips float64, so a parsed dump is bit-equal to the source
    np.savetxt(path, features, delimiter=",", fmt="%.17g")
    lines = [f"{key}={value}" for key, value in asdict(config).items()]
    lines.append(f"n_frames={features.shape[1]}")
    with open(f"{path}.meta.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")
