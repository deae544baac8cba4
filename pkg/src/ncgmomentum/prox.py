"""Sparsity regularizers, their proximal operators and stationarity residuals."""

from enum import Enum

import numpy as np

from .linalg import DimensionError, Vector, norm2, norm_inf


class RegularizerKind(str, Enum):
    """Supported sparsity penalties."""

    L1 = "l1"
    L1_MINUS_L2 = "l12"

    @classmethod
    def parse(cls, text: str) -> "RegularizerKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown regularizer {text!r} (valid: {valid})") from None


def reg_value(kind: RegularizerKind, x: Vector) -> float:
    """||x||_1 for L1, ||x||_1 - ||x||_2 for L1_MINUS_L2."""
    l1 = float(np.sum(np.abs(x)))
    if kind is RegularizerKind.L1:
        return l1
    # Cauchy-Schwarz keeps this >= 0; clip rounding noise on 1-sparse inputs
    return max(l1 - norm2(x), 0.0)


def _require_positive(value: float, name: str) -> None:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")


def prox_l1(x: Vector, mu: float) -> Vector:
    """
    Soft thresholding, the proximal operator of mu * ||.||_1.

    Args:
        x: Point to shrink
        mu: Threshold (must be positive)

    Returns:
        sign(x) * max(|x| - mu, 0)
    """
    _require_positive(mu, "mu")
    return np.sign(x) * np.maximum(np.abs(x) - mu, 0.0)


def prox_l1_minus_l2(y: Vector, lam: float) -> Vector:
    """
    Proximal operator of lam * (||.||_1 - ||.||_2).

    For ||y||_inf > lam the minimizer is the soft-thresholded point pushed
    outward by lam along its own direction. Otherwise the minimizer set is a
    family of 1-sparse points; the one on the smallest index attaining
    ||y||_inf is returned. y = 0 maps to 0.
    """
    _require_positive(lam, "lam")
    y_max = norm_inf(y)
    if y_max > lam:
        z = prox_l1(y, lam)
        z_norm = norm2(z)
        return z * (z_norm + lam) / z_norm
    out = np.zeros_like(y, dtype=np.float64)
    if y_max == 0.0:
        return out
    # np.argmax returns the first index on exact ties
    i = int(np.argmax(np.abs(y)))
    out[i] = np.sign(y[i]) * y_max
    return out


def prox(kind: RegularizerKind, x: Vector, mu: float) -> Vector:
    """Dispatch to the proximal operator of kind."""
    if kind is RegularizerKind.L1:
        return prox_l1(x, mu)
    return prox_l1_minus_l2(x, mu)


def l1_subdiff_distance(x: Vector, v: Vector) -> float:
    """
    Euclidean distance from v to the subdifferential of ||.||_1 at x.

    Coordinates where x is nonzero are pinned to sign(x); zero coordinates
    clamp v into [-1, 1].
    """
    if x.shape != v.shape:
        raise DimensionError(f"subdifferential distance of lengths {x.shape[0]} and {v.shape[0]}")
    nearest = np.where(x != 0, np.sign(x), np.clip(v, -1.0, 1.0))
    return norm2(v - nearest)


def l12_subdiff_distance(x: Vector, v: Vector) -> float:
    """
    Distance from v to the subdifferential of ||.||_1 - ||.||_2 at x.

    The ||.||_2 part contributes -x/||x||_2, or 0 at x = 0.
    """
    x_norm = norm2(x)
    if x_norm == 0.0:
        return l1_subdiff_distance(x, v)
    return l1_subdiff_distance(x, v + x / x_norm)


def subdiff_distance(kind: RegularizerKind, x: Vector, v: Vector) -> float:
    """Dispatch to the subdifferential distance of kind."""
    if kind is RegularizerKind.L1:
        return l1_subdiff_distance(x, v)
    return l12_subdiff_distance(x, v)
