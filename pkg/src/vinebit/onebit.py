"""One-bit measurement model: t = step(A x + w) with unit-norm sensing columns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SNR_CAP_DB = 150.0


@dataclass(frozen=True)
class MeasurementEnsemble:
    A: np.ndarray = field(repr=False)
    sigma_n: float
    seed: int

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]


def generate_matrix(n: int, m: int, seed: int) -> np.ndarray:
    """Draw iid standard normal entries and normalize each column to unit l2."""
    if n < 1 or m < 1:
        raise ValueError(f"matrix dimensions must be positive, got ({n}, {m})")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, m))
    A /= np.linalg.norm(A, axis=0, keepdims=True)
    return A


def build_ensemble(n: int, m: int, sigma_n: float, seed: int) -> MeasurementEnsemble:
    if sigma_n < 0:
        raise ValueError("noise level must be non-negative")
    return MeasurementEnsemble(A=generate_matrix(n, m, seed), sigma_n=sigma_n, seed=seed)


def measure(A: np.ndarray, x: np.ndarray, sigma_n: float, seed: int) -> np.ndarray:
    """Quantize A x + w to bits in {0, 1}; exact zeros map to 1."""
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float).ravel()
    if A.ndim != 2 or A.shape[1] != x.size:
        raise ValueError(f"shape mismatch: A {A.shape} vs x ({x.size},)")
    if sigma_n < 0:
        raise ValueError("noise level must be non-negative")
    y = A @ x
    if sigma_n > 0:
        y = y + sigma_n * np.random.default_rng(seed).standard_normal(y.size)
    return (y >= 0).astype(np.int8)


def reconstruction_snr(x_true: np.ndarray, x_hat: np.ndarray) -> float:
    """SNR in dB between unit-sphere projections, capped at 150 dB.

    Amplitude is unobservable from one-bit data, so both arguments are
    normalized before comparison; the sign is kept as is.
    """
    xt = np.asarray(x_true, dtype=float).ravel()
    xh = np.asarray(x_hat, dtype=float).ravel()
    if xt.shape != xh.shape:
        raise ValueError(f"shape mismatch: {xt.shape} vs {xh.shape}")
    nt, nh = np.linalg.norm(xt), np.linalg.norm(xh)
    if nt == 0 or nh == 0 or not (np.isfinite(nt) and np.isfinite(nh)):
        raise ValueError("inputs must be nonzero with finite norm")
    err = np.sum((xt / nt - xh / nh) ** 2)
    if err <= 10.0 ** (-SNR_CAP_DB / 10.0):
        return SNR_CAP_DB
    return min(float(-10.0 * np.log10(err)), SNR_CAP_DB)


def sign_consistency(A: np.ndarray, x_hat: np.ndarray, t: np.ndarray) -> float:
    """Fraction of measurements whose sign the estimate reproduces."""
    t = np.asarray(t).ravel()
    pred = (np.asarray(A, dtype=float) @ np.asarray(x_hat, dtype=float).ravel()) >= 0
    if pred.size != t.size:
        raise ValueError(f"got {pred.size} predictions for {t.size} bits")
    if np.any((t != 0) & (t != 1)):
        raise ValueError("bits must be 0/1 valued")
    return float(np.mean(pred == (t == 1)))
