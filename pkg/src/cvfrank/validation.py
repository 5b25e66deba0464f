"""Input validation shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from cvfrank.errors import ConfigurationError, InvalidInputError


def check_features(X, width: int | None = None) -> np.ndarray:
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True)
    except ValueError as exc:
        raise InvalidInputError(str(exc)) from exc
    if width is not None and X.shape[1] != width:
        raise InvalidInputError(f"X has {X.shape[1]} features, expected {width}")
    return X


def check_xy(X, y, width: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    X = check_features(X, width)
    y = np.asarray(y, dtype=np.float64).ravel()
    try:
        check_consistent_length(X, y)
    except ValueError as exc:
        raise InvalidInputError(str(exc)) from exc
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("labels contain NaN or infinity")
    return X, y


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ConfigurationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_fraction(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not 0.0 < float(value) < 1.0:
        raise ConfigurationError(f"{name} must lie strictly between 0 and 1, got {value!r}")
    return float(value)


def parse_node_range(text: str) -> list[int]:
    """``"3..7"`` -> [3, 4, 5, 6, 7]; ``"3,5"`` -> [3, 5]; ``"4"`` -> [4]."""
    out: list[int] = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError as exc:
        raise ConfigurationError(f"bad node range {text!r}") from exc
    if not out or min(out) < 2:
        raise ConfigurationError(f"node range {text!r} must name ring sizes >= 2")
    return sorted(set(out))
