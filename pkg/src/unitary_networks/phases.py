"""Helpers for eigenphases on the unit circle."""

from __future__ import annotations

import numpy as np

TWO_PI = 2 * np.pi


def wrap(theta):
    """Reduce to ``[-pi, pi)``."""
    return (np.asarray(theta) + np.pi) % TWO_PI - np.pi


def to_unit_interval(theta):
    """Reduce to ``[0, 2 pi)``."""
    out = np.asarray(theta, dtype=float) % TWO_PI
    # -0.0 and values within rounding of 2 pi fold back to 0
    return np.where(out >= TWO_PI, 0.0, out)


def circular_distance(a, b):
    return np.abs(wrap(np.asarray(a) - np.asarray(b)))


def eigenphases(matrix) -> np.ndarray:
    """Eigenphases of a dense unitary in ``[0, 2 pi)``, sorted."""
    return np.sort(to_unit_interval(np.angle(np.linalg.eigvals(matrix))))


def _cut_rotation(phases):
    """Angle that moves the widest gap of ``phases`` onto the 0 / 2 pi cut."""
    s = np.sort(to_unit_interval(phases))
    if s.size == 0:
        return 0.0
    gaps = np.diff(np.concatenate([s, [s[0] + TWO_PI]]))
    k = int(np.argmax(gaps))
    return -(s[k] + gaps[k] / 2)


def multiset_deviation(a, b) -> float:
    """Largest circular deviation between two phase multisets of equal size.

    Both sets are rotated so the cut falls in the widest gap of their union,
    then compared in sorted order.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"multisets differ in size: {a.size} vs {b.size}")
    if a.size == 0:
        return 0.0
    rot = _cut_rotation(np.concatenate([a, b]))
    sa = np.sort(to_unit_interval(a + rot))
    sb = np.sort(to_unit_interval(b + rot))
    return float(np.max(circular_distance(sa, sb)))


def cluster(phases, radius) -> np.ndarray:
    """Merge phases closer than ``radius`` (transitively); return circular means, sorted."""
    s = np.sort(to_unit_interval(phases))
    if s.size == 0:
        return s
    rot = _cut_rotation(s)
    s = np.sort(to_unit_interval(s + rot))
    breaks = np.flatnonzero(np.diff(s) > radius) + 1
    centers = [np.mean(g) for g in np.split(s, breaks)]
    return np.sort(to_unit_interval(np.array(centers) - rot))
