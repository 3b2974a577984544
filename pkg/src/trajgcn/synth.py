"""Smooth synthetic motion: sums of slow random-phase sinusoids plus drift.

Frequencies stay within 0.1-0.5 Hz, so almost all of a 35-frame window's
DCT energy sits in its first ten coefficients.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError
from .formats import Sequence, write_sequence
from .numeric import make_rng

__all__ = ["generate_sequence", "generate_corpus", "write_corpus", "SPLITS"]

SPLITS = ("train", "val", "test")
MIN_HZ, MAX_HZ = 0.1, 0.5
# per-representation amplitude range: millimetres or radians
AMPLITUDE = {"xyz": (20.0, 100.0), "expmap": (0.1, 0.5)}


def generate_sequence(rng, channels, frames, fps=25, repr_="xyz", action=0):
    """One ``(channels, frames)`` clip; ``action`` shifts the frequency band."""
    if channels < 1 or frames < 1 or fps < 1:
        raise ConfigError("channels, frames and fps must be positive")
    lo_amp, hi_amp = AMPLITUDE[repr_]
    top = min(MAX_HZ, 0.3 + 0.1 * action)
    t = np.arange(frames) / fps
    out = np.empty((channels, frames))
    for k in range(channels):
        n = rng.integers(2, 5)
        amp = rng.uniform(lo_amp, hi_amp, n)
        freq = rng.uniform(MIN_HZ, top, n)
        phase = rng.uniform(0.0, 2.0 * np.pi, n)
        x = (amp[:, None] * np.sin(2 * np.pi * freq[:, None] * t + phase[:, None])).sum(0)
        drift = rng.normal(0.0, 0.3 * lo_amp)
        out[k] = x + drift * t
    return out


def generate_corpus(seed, n_sequences, channels, frames, fps=25, repr_="xyz",
                    n_actions=3, split=(0.7, 0.1, 0.2)):
    """``{split: [(name, values), ...]}`` with names ``<action>_<index>``."""
    if n_sequences < 1 or n_actions < 1:
        raise ConfigError("need at least one sequence and one action")
    rng = make_rng(seed)
    counts = _split_counts(n_sequences, split)
    corpus = {}
    idx = 0
    for name, count in zip(SPLITS, counts):
        items = []
        for _ in range(count):
            action = idx % n_actions
            values = generate_sequence(rng, channels, frames, fps, repr_, action)
            items.append((f"synth{action}_{idx:04d}", values))
            idx += 1
        corpus[name] = items
    return corpus


def _split_counts(n, split):
    split = np.asarray(split, dtype=np.float64)
    if split.shape != (3,) or np.any(split < 0) or split.sum() <= 0:
        raise ConfigError(f"split must be three non-negative fractions, got {split}")
    split = split / split.sum()
    counts = [int(round(n * split[0])), int(round(n * split[1]))]
    counts.append(max(n - sum(counts), 0))
    return counts


def write_corpus(out_dir, corpus, fps=25, repr_="xyz"):
    out_dir = Path(out_dir)
    written = []
    for split, items in corpus.items():
        d = out_dir / split
        d.mkdir(parents=True, exist_ok=True)
        for name, values in items:
            p = d / f"{name}.seq"
            write_sequence(p, Sequence(values, fps, repr_))
            written.append(p)
    return written
