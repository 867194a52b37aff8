"""Desk-scale audio data: synthetic speakers, WAV ingestion, stratified splits."""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class AudioSample:
    waveform: np.ndarray
    sample_rate: int
    speaker_label: int
    utterance_id: str


@dataclass(frozen=True)
class Dataset:
    samples: tuple
    n_speakers: int
    split_tag: str = "full"

    def __post_init__(self):
        seen = set()
        for s in self.samples:
            if s.utterance_id in seen:
                raise ValueError(f"duplicate utterance_id {s.utterance_id!r}")
            seen.add(s.utterance_id)
            if not (0 <= s.speaker_label < self.n_speakers):
                raise ValueError(f"label {s.speaker_label} outside vocabulary of "
                                 f"{self.n_speakers} speakers")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def labels(self):
        return np.array([s.speaker_label for s in self.samples])


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic multi-speaker corpus.

    Speakers differ in fundamental frequency (spaced >= 20 Hz so the classes
    stay linearly separable in mel space) and in two formant-like resonances.
    """
    n_speakers: int = 10
    utterances_per_speaker: int = 10
    duration_s: float = 2.0
    sample_rate: int = 16000
    seed: int = 0
    f0_base: float = 90.0
    f0_spacing: float = 22.0
    noise_floor: float = 0.003
    formant_bands: tuple = field(default=((400.0, 1400.0), (1600.0, 3200.0)))

    def __post_init__(self):
        if self.n_speakers < 2:
            raise ValueError(f"need at least 2 speakers, got {self.n_speakers}")
        if self.f0_spacing < 20.0:
            raise ValueError(f"f0_spacing must be >= 20 Hz, got {self.f0_spacing}")
        if self.utterances_per_speaker < 1:
            raise ValueError("utterances_per_speaker must be positive")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")


def _speaker_voices(spec):
    """Deterministic per-speaker (f0, formant1, formant2) tuples, pairwise distinct."""
    rng = np.random.default_rng(spec.seed)
    voices = []
    for s in range(spec.n_speakers):
        f0 = spec.f0_base + s * spec.f0_spacing
        (lo1, hi1), (lo2, hi2) = spec.formant_bands
        f1 = rng.uniform(lo1, hi1)
        f2 = rng.uniform(lo2, hi2)
        voices.append((f0, f1, f2))
    return voices


def synth_corpus(spec):
    """Generate a Dataset of harmonic utterances, peak-normalized to 0.9.

    Each utterance sums the speaker's harmonics weighted by two Lorentzian
    resonance gains, with per-utterance F0 jitter and random harmonic phases,
    plus a Gaussian noise floor. Fixed resonance bandwidth of 150 Hz.
    """
    voices = _speaker_voices(spec)
    n = int(round(spec.duration_s * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    bandwidth = 150.0
    samples = []
    for speaker, (f0, f1, f2) in enumerate(voices):
        rng = np.random.default_rng((spec.seed, speaker))
        for u in range(spec.utterances_per_speaker):
            f0_jitter = f0 * (1.0 + rng.uniform(-0.01, 0.01))
            n_harmonics = int(7600.0 // f0_jitter)
            x = np.zeros(n)
            for h in range(1, n_harmonics + 1):
                freq = h * f0_jitter
                gain = (1.0 / (1.0 + ((freq - f1) / bandwidth) ** 2)
                        + 1.0 / (1.0 + ((freq - f2) / bandwidth) ** 2))
                phase = rng.uniform(0.0, 2.0 * np.pi)
                x += gain / h * np.sin(2.0 * np.pi * freq * t + phase)
            x += rng.normal(0.0, spec.noise_floor, size=n)
            x *= 0.9 / np.abs(x).max()
            samples.append(AudioSample(waveform=x, sample_rate=spec.sample_rate,
                                       speaker_label=speaker,
                                       utterance_id=f"spk{speaker:03d}_utt{u:03d}"))
    return Dataset(samples=tuple(samples), n_speakers=spec.n_speakers)


def split(dataset, train_fraction, seed):
    """Per-speaker deterministic split; every speaker lands on both sides.

    Each speaker contributes floor(train_fraction * n) utterances to train,
    clamped so both sides keep at least one.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    by_speaker = {}
    for sample in dataset:
        by_speaker.setdefault(sample.speaker_label, []).append(sample)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for speaker in sorted(by_speaker):
        group = sorted(by_speaker[speaker], key=lambda s: s.utterance_id)
        if len(group) < 2:
            raise ValueError(f"speaker {speaker} has a single utterance; cannot "
                             f"appear in both splits")
        n_train = int(np.floor(train_fraction * len(group)))
        n_train = min(max(n_train, 1), len(group) - 1)
        perm = rng.permutation(len(group))
        train.extend(group[i] for i in sorted(perm[:n_train]))
        test.extend(group[i] for i in sorted(perm[n_train:]))
    return (Dataset(samples=tuple(train), n_speakers=dataset.n_speakers, split_tag="train"),
            Dataset(samples=tuple(test), n_speakers=dataset.n_speakers, split_tag="test"))


# ---------------------------------------------------------------------------
# WAV I/O: 16-bit PCM mono only
# ---------------------------------------------------------------------------

def save_wav(path, waveform, sample_rate):
    """Write mono PCM16, scaled by 32768 (load's exact inverse) and clipped."""
    x = np.asarray(waveform, dtype=np.float64)
    ints = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(ints.tobytes())


def load_wav(path):
    """Read mono PCM16, rescaled to [-1, 1) by /32768. Returns (waveform, rate)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got "
                             f"{8 * wf.getsampwidth()}-bit")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    ints = np.frombuffer(raw, dtype="<i2")
    return ints.astype(np.float64) / 32768.0, rate


def save_wav_dir(dataset, root):
    """Lay a dataset out as root/<speaker>/<utterance>.wav."""
    root = Path(root)
    for sample in dataset:
        d = root / f"spk{sample.speaker_label:03d}"
        d.mkdir(parents=True, exist_ok=True)
        save_wav(d / f"{sample.utterance_id}.wav", sample.waveform, sample.sample_rate)


def load_wav_dir(root):
    """Read root/<speaker>/<utterance>.wav; labels follow sorted directory names."""
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"{root} is not a directory")
    speaker_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not speaker_dirs:
        raise ValueError(f"{root} contains no speaker directories")
    samples = []
    rates = set()
    for label, d in enumerate(speaker_dirs):
        wavs = sorted(d.glob("*.wav"))
        if not wavs:
            raise ValueError(f"speaker directory {d} contains no .wav files")
        for w in wavs:
            waveform, rate = load_wav(w)
            rates.add(rate)
            samples.append(AudioSample(waveform=waveform, sample_rate=rate,
                                       speaker_label=label,
                                       utterance_id=f"{d.name}/{w.stem}"))
    if len(rates) > 1:
        raise ValueError(f"mixed sample rates in {root}: {sorted(rates)}")
    return Dataset(samples=tuple(samples), n_speakers=len(speaker_dirs))
