"""Cubic lane fits: plain least squares and the uncertainty-bounded weighted fit."""

from __future__ import annotations

import numpy as np

from .core import (
    POLY_DEGREE,
    DomainError,
    LanePointSet,
    PolyCurve,
    RankError,
    ShapeError,
    UncertaintyProfile,
)


def weighted_polyfit(s, t, weights=None, degree: int = POLY_DEGREE, valid_range=None) -> PolyCurve:
    """Minimize ``sum(w_i * (p(s_i) - t_i)**2)`` over polynomials of ``degree``.

    Solved by SVD least squares on a column-scaled Vandermonde matrix. A rank
    deficient system raises RankError instead of being regularized.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.shape != t.shape or s.ndim != 1:
        raise ShapeError(f"stations {s.shape} and targets {t.shape} differ")
    if s.size < degree + 1:
        raise RankError(f"need at least {degree + 1} points, got {s.size}")
    w = np.ones_like(s) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != s.shape:
        raise ShapeError("weights must match stations")
    if np.any(~(w > 0)) or np.any(~np.isfinite(w)):
        raise DomainError("weights must be positive and finite")

    scale = float(np.max(np.abs(s))) or 1.0
    vander = np.vander(s / scale, degree + 1, increasing=True)
    root_w = np.sqrt(w)
    coef, _, rank, _ = np.linalg.lstsq(root_w[:, None] * vander, root_w * t, rcond=None)
    if rank < degree + 1:
        raise RankError(f"design matrix has rank {rank} < {degree + 1}")
    coef = coef / scale ** np.arange(degree + 1)
    if valid_range is None:
        valid_range = (0.0, float(s.max()))
    return PolyCurve(tuple(coef), valid_range)


def bounded_targets(points: LanePointSet, unc: UncertaintyProfile, side: str) -> np.ndarray:
    """Shift lane points inward by one total standard deviation."""
    sigma_total = unc.sigma_total
    if side == "left":
        return points.offsets - sigma_total
    if side == "right":
        return points.offsets + sigma_total
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def fit_bounded_lane(points: LanePointSet, unc: UncertaintyProfile, side: str, weight_source: str = "data") -> PolyCurve:
    """Conservative lane bound.

    Left lanes are fit to ``mu - sigma_total`` and right lanes to
    ``mu + sigma_total``, with weights ``1 / sigma_data`` so near points
    (smaller noise) dominate. ``weight_source="total"`` weights by
    ``1 / sigma_total`` instead.
    """
    if unc.sigma_data_sq.shape != points.offsets.shape:
        raise ShapeError("uncertainty profile does not match point count")
    if weight_source == "data":
        sigma = unc.sigma_data
    elif weight_source == "total":
        sigma = unc.sigma_total
    else:
        raise ValueError(f"unknown weight source {weight_source!r}")
    if np.any(~(sigma > 0)):
        raise DomainError("sigma must be strictly positive for every point")
    return weighted_polyfit(
        points.stations,
        bounded_targets(points, unc, side),
        1.0 / sigma,
        valid_range=(0.0, float(points.stations[-1])),
    )


def fit_plain_lane(points: LanePointSet) -> PolyCurve:
    return weighted_polyfit(points.stations, points.offsets, valid_range=(0.0, float(points.stations[-1])))
