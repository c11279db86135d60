"""Linear domain probe: how separable day and night remain in the
generator's context space. A logistic regression trained on pooled context
vectors with a fixed split measures the alignment quality; chance-level
accuracy means the domains are indistinguishable."""

from __future__ import annotations

import numpy as np
import torch
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import train_test_split

from .generator import TemporalFeatureGenerator, frames_to_tensor


def pooled_context_vectors(
    generator: TemporalFeatureGenerator,
    sequences: list[np.ndarray],
    chunk: int = 32,
) -> np.ndarray:
    """One vector per sequence: the mean of its context rows."""
    out = []
    with torch.no_grad():
        for start in range(0, len(sequences), chunk):
            frames = torch.stack(
                [frames_to_tensor(s, generator.dtype) for s in sequences[start : start + chunk]]
            )
            _, contexts = generator.forward_sequence(frames)
            out.append(contexts.mean(dim=1).cpu().numpy())
    return np.concatenate(out)


def probe_accuracy(
    day_vectors: np.ndarray,
    night_vectors: np.ndarray,
    seed: int = 0,
    test_fraction: float = 0.2,
) -> float:
    """Accuracy of a freshly trained logistic-regression domain classifier."""
    x = np.concatenate([day_vectors, night_vectors])
    y = np.concatenate([np.ones(len(day_vectors)), np.zeros(len(night_vectors))])
    x_train, x_test, y_train, y_test = train_test_split(
        x, y, test_size=test_fraction, random_state=seed, stratify=y
    )
    clf = LogisticRegression(max_iter=2000, random_state=seed)
    clf.fit(x_train, y_train)
    return float(clf.score(x_test, y_test))


def pixel_statistics(frames: np.ndarray) -> np.ndarray:
    """Raw per-channel mean and standard deviation of a frame stack."""
    flat = frames.reshape(frames.shape[0], 3, -1)
    return np.concatenate([flat.mean(axis=2), flat.std(axis=2)], axis=1)
