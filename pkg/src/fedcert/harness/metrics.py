"""Certified accuracy curves, average certified radius, and per-client tables."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..smoothing import CertificationResult


def correctness(results: Sequence[CertificationResult], labels) -> np.ndarray:
    """True where the smoothed prediction is the label (abstentions never are)."""
    return np.array([not r.abstained and r.prediction == y for r, y in zip(results, labels)], dtype=bool)


def _radii(results, correct):
    if len(results) == 0:
        raise ValueError("no certification results")
    correct = np.asarray(correct, dtype=bool)
    if correct.shape != (len(results),):
        raise ValueError(f"{len(results)} results but {correct.size} correctness flags")
    radii = np.array([0.0 if r.abstained else r.radius for r in results])
    ok = correct & np.array([not r.abstained for r in results], dtype=bool)
    return radii, ok


def certified_accuracy_curve(results, correct, radius_grid) -> np.ndarray:
    """Fraction of all samples that are correct and certified at radius >= R."""
    radii, ok = _radii(results, correct)
    grid = np.asarray(radius_grid, dtype=np.float64)
    return ((radii[None, :] >= grid[:, None]) & ok[None, :]).sum(axis=1) / len(results)


def acr(results, correct) -> float:
    """Average certified radius; wrong and abstaining samples count as radius 0."""
    radii, ok = _radii(results, correct)
    return float(np.where(ok, radii, 0.0).sum() / len(results))


def radius_grid(sigma: float, points: int = 50, max_radius=None) -> np.ndarray:
    top = 2 * sigma if max_radius is None else max_radius
    return np.linspace(0.0, top, points)


@dataclass(frozen=True, eq=False)
class CurveTable:
    """Certified accuracy per client on a shared radius grid."""

    radii: np.ndarray
    curves: dict  # client id -> accuracy at each radius
    acrs: dict    # client id -> ACR

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=np.float64)
        if radii.size == 0:
            raise ValueError("curve table needs a non-empty radius grid")
        if radii[0] != 0 or np.any(np.diff(radii) <= 0):
            raise ValueError("radius grid must start at 0 and be strictly increasing")
        if not self.curves:
            raise ValueError("curve table needs at least one client")
        curves = {}
        for cid, curve in self.curves.items():
            curve = np.asarray(curve, dtype=np.float64)
            if curve.shape != radii.shape:
                raise ValueError(f"client {cid}: curve has {curve.size} points, grid has {radii.size}")
            curves[cid] = curve
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "acrs", {cid: float(self.acrs[cid]) for cid in curves})

    @property
    def clients(self):
        return list(self.curves)

    def _stack(self):
        return np.stack([self.curves[c] for c in self.clients])

    @property
    def mean(self) -> np.ndarray:
        return self._stack().mean(axis=0)

    @property
    def min(self) -> np.ndarray:
        return self._stack().min(axis=0)

    @property
    def max(self) -> np.ndarray:
        return self._stack().max(axis=0)

    def aggregate_acr(self) -> dict:
        values = np.array([self.acrs[c] for c in self.clients])
        return {"mean": float(values.mean()), "min": float(values.min()), "max": float(values.max())}

    def accuracy_at(self, radius: float, which: str = "mean") -> float:
        idx = int(np.searchsorted(self.radii, radius, side="right")) - 1
        return float(getattr(self, which)[idx])

    def spread_at(self, radius: float) -> float:
        return self.accuracy_at(radius, "max") - self.accuracy_at(radius, "min")
