"""Map-quality metrics over an evaluation set of reliably labelled cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ENTROPY_EPS = 1e-9

# Metric polarity: +1 means higher is better, -1 means lower is better.
METRIC_POLARITY = {
    "cell_accuracy": +1,
    "boundary_sharpness": +1,
    "brier": -1,
    "entropy": -1,
}


class EmptyEvalSetError(ValueError):
    pass


class EmptyBoundaryError(ValueError):
    pass


@dataclass
class EvalSet:
    """Cells with reliable ground truth plus their binary labels.

    ``mask`` marks evaluation cells, ``labels`` their occupancy (1 occupied),
    ``boundary_mask`` the subset adjacent (4-neighborhood) to an eval cell of
    opposite label.
    """

    mask: np.ndarray
    labels: np.ndarray
    boundary_mask: np.ndarray

    @property
    def n_eval(self) -> int:
        return int(self.mask.sum())

    @property
    def n_boundary(self) -> int:
        return int(self.boundary_mask.sum())


def build_eval_set(occ_counts: np.ndarray, free_counts: np.ndarray,
                   min_observations: int = 3) -> EvalSet:
    """Label cells by majority vote over test observations; ties excluded."""
    total = occ_counts + free_counts
    mask = (total >= min_observations) & (occ_counts != free_counts)
    if not mask.any():
        raise EmptyEvalSetError("no cell has enough test observations")
    labels = (occ_counts > free_counts).astype(np.int8)

    boundary = np.zeros_like(mask)
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        nb_mask = np.roll(mask, shift, axis=axis)
        nb_labels = np.roll(labels, shift, axis=axis)
        # roll wraps around; kill the wrapped edge
        edge = [slice(None), slice(None)]
        edge[axis] = slice(0, 1) if shift == 1 else slice(-1, None)
        nb_mask = nb_mask.copy()
        nb_mask[tuple(edge)] = False
        boundary |= mask & nb_mask & (nb_labels != labels)
    return EvalSet(mask=mask, labels=labels, boundary_mask=boundary)


def cell_accuracy(probs: np.ndarray, ev: EvalSet) -> float:
    """Fraction of eval cells whose thresholded probability matches the label."""
    pred = probs[ev.mask] > 0.5
    return float(np.mean(pred == (ev.labels[ev.mask] == 1)))


def boundary_sharpness(probs: np.ndarray, ev: EvalSet) -> float:
    """Mean probability-gradient magnitude over boundary cells."""
    if ev.n_boundary == 0:
        raise EmptyBoundaryError("no boundary cells in evaluation set")
    gy, gx = np.gradient(probs)
    mag = np.hypot(gx, gy)
    return float(np.mean(mag[ev.boundary_mask]))


def brier(probs: np.ndarray, ev: EvalSet) -> float:
    """Mean squared error of predicted probabilities against labels."""
    p = probs[ev.mask]
    g = ev.labels[ev.mask].astype(np.float64)
    return float(np.mean((p - g) ** 2))


def map_entropy(probs: np.ndarray, ev: EvalSet) -> float:
    """Mean per-cell binary entropy in bits over the evaluation set."""
    p = np.clip(probs[ev.mask], ENTROPY_EPS, 1.0 - ENTROPY_EPS)
    h = -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))
    return float(np.mean(h))


@dataclass
class MetricsReport:
    cell_accuracy: float
    boundary_sharpness: float
    brier: float
    entropy: float
    n_eval: int
    n_boundary: int

    def as_dict(self) -> dict:
        return {
            "cell_accuracy": self.cell_accuracy,
            "boundary_sharpness": self.boundary_sharpness,
            "brier": self.brier,
            "entropy": self.entropy,
            "n_eval": self.n_eval,
            "n_boundary": self.n_boundary,
        }


def evaluate(probs: np.ndarray, ev: EvalSet) -> MetricsReport:
    return MetricsReport(
        cell_accuracy=cell_accuracy(probs, ev),
        boundary_sharpness=boundary_sharpness(probs, ev) if ev.n_boundary else 0.0,
        brier=brier(probs, ev),
        entropy=map_entropy(probs, ev),
        n_eval=ev.n_eval,
        n_boundary=ev.n_boundary,
    )
