"""Binary iterative hard thresholding baseline for one-bit recovery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BihtConfig:
    sparsity: int
    step: float = 1.0
    max_iter: int = 100
    halve_on_increase: bool = True

    def __post_init__(self):
        if self.sparsity < 1:
            raise ValueError("sparsity must be >= 1")
        if self.step <= 0:
            raise ValueError("step must be positive")


def hard_threshold(x: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest-magnitude entries, zero the rest."""
    x = np.asarray(x, dtype=float)
    if k >= x.size:
        return x.copy()
    out = np.zeros_like(x)
    keep = np.argpartition(np.abs(x), -k)[-k:]
    out[keep] = x[keep]
    return out


def _hamming(A, x, s):
    return int(np.sum(np.where(A @ x >= 0, 1.0, -1.0) != s))


def biht_recover(t: np.ndarray, A: np.ndarray, cfg: BihtConfig, x0: np.ndarray | None = None):
    """Sign-consistency descent x <- H_k(x + (step/2) A'(s - sign(Ax))).

    The step is halved whenever a candidate raises the sign mismatch count
    (when enabled), so accepted iterations never increase it. Returns the
    final iterate on the unit sphere and the number of iterations used.
    """
    A = np.asarray(A, dtype=float)
    t = np.asarray(t).ravel()
    n, m = A.shape
    if t.size != n:
        raise ValueError(f"got {t.size} bits for {n} measurements")
    if np.any((t != 0) & (t != 1)):
        raise ValueError("bits must be 0/1 valued")
    if cfg.sparsity > m:
        raise ValueError(f"sparsity {cfg.sparsity} exceeds dimension {m}")
    s = 2.0 * t.astype(float) - 1.0

    x = hard_threshold(A.T @ s, cfg.sparsity) if x0 is None else np.asarray(x0, dtype=float).copy()
    step = cfg.step
    errors = _hamming(A, x, s)
    iterations = 0
    for _ in range(cfg.max_iter):
        iterations += 1
        residual = s - np.where(A @ x >= 0, 1.0, -1.0)
        if not residual.any():
            break
        cand = hard_threshold(x + 0.5 * step * (A.T @ residual), cfg.sparsity)
        cand_errors = _hamming(A, cand, s)
        if cfg.halve_on_increase and cand_errors > errors:
            step *= 0.5
            continue
        if np.array_equal(cand, x):
            break
        x, errors = cand, cand_errors

    nrm = np.linalg.norm(x)
    if nrm > 0:
        x = x / nrm
    return x, iterations
