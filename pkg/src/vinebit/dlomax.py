"""Double-Lomax marginal: density, CDF pair, sampler, and ML fitting.

The density is symmetric and heavy-tailed,

    p(x) = (eta/2) * (1 + eta*|x|/f)^-(f+1),    eta > 0, f > 0,

with scale parameter ``eta`` (larger means more concentrated) and tail shape
``f`` (Laplace limit as f -> inf). It arises as a Gaussian scale mixture:
variance tau ~ Exponential(rate lam^2/2) gives a Laplace with rate lam, and
lam ~ Gamma(f, f) thickens the tail; the unit-scale mixture divided by eta
has the density above.

ML estimation: eta solves the fixed point

    eta = M / sum_i (f+1)|x_i| / (f + eta|x_i|)

for fixed f; f maximizes the profile log-likelihood via a safeguarded
Newton iteration on a bracket.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class DegenerateDataError(ValueError):
    """Input sample carries no scale information (empty or all zero)."""


class ConvergenceError(RuntimeError):
    """An iterative estimator exhausted its iteration budget."""


@dataclass(frozen=True)
class DLParams:
    """Marginal parameters: scale ``eta`` and tail shape ``shape`` (both > 0)."""

    eta: float
    shape: float

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive and finite, got {self.eta}")
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise ValueError(f"shape must be positive and finite, got {self.shape}")


@dataclass(frozen=True)
class HierarchicalSample:
    """A draw from the scale-mixture hierarchy (x already rescaled by 1/eta)."""

    x: np.ndarray
    tau: np.ndarray
    lam: np.ndarray


def logpdf(x, p: DLParams):
    x = np.asarray(x, dtype=float)
    eta, f = p.eta, p.shape
    return np.log(eta / 2.0) - (f + 1.0) * np.log1p(eta * np.abs(x) / f)


def pdf(x, p: DLParams):
    return np.exp(logpdf(x, p))


def cdf(x, p: DLParams):
    """Piecewise closed form; equals 1/2 at x = 0."""
    x = np.asarray(x, dtype=float)
    eta, f = p.eta, p.shape
    half_tail = 0.5 * np.exp(-f * np.log1p(eta * np.abs(x) / f))
    return np.where(x <= 0, half_tail, 1.0 - half_tail)


def ppf(u, p: DLParams):
    """Inverse CDF on the open interval (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("quantile argument must lie strictly inside (0, 1)")
    eta, f = p.eta, p.shape
    lo = np.minimum(u, 1.0 - u)
    mag = (f / eta) * np.expm1(-np.log(2.0 * lo) / f)
    return np.where(u < 0.5, -mag, np.where(u > 0.5, mag, 0.0))


def sample_hierarchical(p: DLParams, size: int, rng: np.random.Generator) -> HierarchicalSample:
    """Draw via the three-stage hierarchy rather than inverse-CDF.

    lam ~ Gamma(f, rate f); tau | lam ~ Exponential(rate lam^2/2);
    x' | tau ~ Normal(0, tau); returned x = x'/eta so that x has the
    double-Lomax marginal with parameters (eta, f).
    """
    if size < 0:
        raise ValueError("size must be non-negative")
    eta, f = p.eta, p.shape
    lam = rng.gamma(shape=f, scale=1.0 / f, size=size)
    tau = rng.exponential(scale=2.0 / lam**2, size=size)
    x = rng.normal(0.0, np.sqrt(tau))
    return HierarchicalSample(x=x / eta, tau=tau, lam=lam)


def _check_sample(x) -> np.ndarray:
    ax = np.abs(np.asarray(x, dtype=float).ravel())
    if ax.size == 0:
        raise DegenerateDataError("empty sample")
    if not np.all(np.isfinite(ax)):
        raise ValueError("sample contains non-finite values")
    if not np.any(ax > 0):
        raise DegenerateDataError("all-zero sample has no scale information")
    return ax


def fit_eta(x, f: float, eta0: float = 1.0, tol: float = 1e-8, max_iter: int = 500) -> float:
    """Fixed-point ML estimate of eta for a known tail shape.

    The returned value satisfies |eta - M/sum((f+1)|x|/(f+eta|x|))| <= tol.
    Oscillating updates are damped by 0.5.
    """
    ax = _check_sample(x)
    if not (np.isfinite(f) and f > 0):
        raise ValueError(f"shape must be positive and finite, got {f}")
    m = ax.size
    eta = float(eta0)
    prev_step = 0.0
    for _ in range(max_iter):
        resid = m / np.sum((f + 1.0) * ax / (f + eta * ax)) - eta
        if abs(resid) <= tol:
            return eta
        step = 0.5 * resid if resid * prev_step < 0 else resid
        eta += step
        prev_step = step
    raise ConvergenceError(f"eta fixed point did not reach tol={tol} in {max_iter} iterations")


def _profile_shape_grad(f: float, u: np.ndarray):
    # d/df and d2/df2 of  -(f+1) * sum log(1 + u/f)  at fixed eta (u = eta|x|).
    r = u / (f + u)
    g = -np.sum(np.log1p(u / f)) + (f + 1.0) / f * np.sum(r)
    h = 2.0 / f * np.sum(r) - (f + 1.0) / f**2 * np.sum(r * (2.0 * f + u) / (f + u))
    return g, h


def fit_shape(
    x,
    f0: float = 1.0,
    bracket: tuple[float, float] = (1e-3, 1e3),
    tol: float = 1e-8,
    max_iter: int = 200,
) -> DLParams:
    """Joint ML fit of (eta, f) by alternating the eta fixed point with a
    safeguarded Newton step on the shape.

    Because eta is refit before each gradient evaluation, the shape gradient
    equals the profile-likelihood gradient (envelope theorem). Newton steps
    that leave the running sign-change bracket fall back to bisection; if the
    profile gradient never changes sign inside ``bracket`` the shape is
    clamped to the nearer edge with a warning.
    """
    ax = _check_sample(x)
    m = ax.size
    lo, hi = bracket
    if not (0 < lo < hi):
        raise ValueError(f"invalid shape bracket {bracket}")
    f = float(np.clip(f0, lo, hi))
    eta = fit_eta(ax, f, tol=tol)
    gtol = tol * m

    g = np.inf
    for _ in range(max_iter):
        g, h = _profile_shape_grad(f, eta * ax)
        if abs(g) <= gtol:
            break
        # Positive profile gradient means the optimum lies above f.
        if g > 0:
            lo = f
        else:
            hi = f
        f_new = f - g / h if h < 0 else None
        if f_new is None or not (lo < f_new < hi):
            f_new = 0.5 * (lo + hi)
        converged = abs(f_new - f) <= tol * max(1.0, abs(f))
        f = f_new
        eta = fit_eta(ax, f, eta0=eta, tol=tol)
        if converged:
            break
    else:
        raise ConvergenceError(f"shape estimate did not converge in {max_iter} iterations")

    if abs(g) > gtol:
        # steps collapsed before the gradient vanished: either the optimum
        # sits on a bracket edge (monotone profile) or the search stalled
        edge = bracket[0] if g < 0 else bracket[1]
        if abs(f - edge) <= 100.0 * tol * max(1.0, edge):
            warnings.warn(
                f"profile gradient does not vanish on {bracket}; clamping shape to {edge}",
                RuntimeWarning,
            )
            f = edge
        else:
            raise ConvergenceError(
                f"shape search stalled at f={f:.6g} with profile gradient {g:.3g}"
            )

    eta = fit_eta(ax, f, eta0=eta, tol=tol)
    return DLParams(eta=eta, shape=f)
