"""Directional Gaussian copulas over wavelet neighborhoods.

Dependence between nearby coefficients in a subband is modeled in probit
space: each coefficient is pushed through its double-Lomax CDF and the
standard normal quantile (the "v-transform"), sliding windows of v-values
are collected per direction (row/column/diagonal), and a window covariance
is fit and normalized to a correlation matrix. A Gaussian copula on a
window has density

    c(u) = |Sigma|^(-1/2) * exp(-v' (Sigma^{-1} - I) v / 2),   v = probit(u),

and a drawable (path-structured) vine of Gaussian pair copulas with partial
correlation parameters reproduces exactly the same joint copula.

The fitted window correlations are also embedded into a sparse m x m
precision correction for the recovery engine: each window contributes
Sigma^{-1} - I on its global index block, entries covered by several windows
are averaged, and the three directions are combined with fixed weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import ndtri

from . import dlomax
from .wavelet import DIRECTIONS, NeighborhoodSet

CDF_CLAMP = 1e-15
EIG_FLOOR = 1e-6
DEFAULT_DIRECTION_WEIGHTS = {d: 1.0 / 3.0 for d in DIRECTIONS}


class EstimationError(RuntimeError):
    """Raised when a dependence estimate cannot be formed from the data."""


def v_transform(x, p: dlomax.DLParams, clamp: float = CDF_CLAMP):
    """Map coefficients to probit space: Phi^-1(dl_cdf(x)), CDF clamped away
    from {0, 1} so the quantile stays finite."""
    u = np.clip(dlomax.cdf(x, p), clamp, 1.0 - clamp)
    return ndtri(u)


def v_jacobian(x, p: dlomax.DLParams, clamp: float = CDF_CLAMP):
    """Pointwise derivative dv/dx = dl_pdf(x) / phi(v(x)) of the v-transform."""
    v = v_transform(x, p, clamp)
    phi = np.exp(-0.5 * v**2) / np.sqrt(2.0 * np.pi)
    return dlomax.pdf(x, p) / phi


def gaussian_copula_log_density(u, sigma) -> float:
    u = np.asarray(u, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    d = u.size
    if sigma.shape != (d, d):
        raise ValueError(f"correlation matrix shape {sigma.shape} does not match u of size {d}")
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("copula arguments must lie strictly inside (0, 1)")
    v = ndtri(u)
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise ValueError("correlation matrix must be positive definite")
    w = np.linalg.solve(sigma, v)
    return -0.5 * logdet - 0.5 * (v @ w - v @ v)


def gaussian_copula_density(u, sigma) -> float:
    """Gaussian copula density |Sigma|^{-1/2} exp(-v'(Sigma^{-1}-I)v/2)."""
    return float(np.exp(gaussian_copula_log_density(u, sigma)))


@dataclass(frozen=True)
class DirectionalCopula:
    """A fitted window correlation for one (subband, direction) family.

    ``windows`` holds the window index sets in *global* flattened-pyramid
    coordinates so the precision correction can be assembled without a
    layout lookup.
    """

    scale: int
    orientation: str
    direction: str
    length: int
    sigma: np.ndarray = field(repr=False)
    windows: np.ndarray = field(repr=False)

    def __post_init__(self):
        L = self.length
        if self.sigma.shape != (L, L):
            raise ValueError(f"sigma shape {self.sigma.shape} does not match length {L}")
        if self.windows.ndim != 2 or self.windows.shape[1] != L:
            raise ValueError("windows must be (count, length) index rows")


def _spd_correlation(sigma: np.ndarray, eig_floor: float) -> np.ndarray:
    # Normalize to unit diagonal, then clip eigenvalues from below and
    # renormalize; diagonal scaling of an SPD matrix stays SPD.
    d = np.sqrt(np.clip(np.diag(sigma), 1e-300, None))
    corr = sigma / np.outer(d, d)
    vals, vecs = np.linalg.eigh(corr)
    if vals[0] < eig_floor:
        vals = np.clip(vals, eig_floor, None)
        corr = (vecs * vals) @ vecs.T
        d = np.sqrt(np.diag(corr))
        corr = corr / np.outer(d, d)
    return 0.5 * (corr + corr.T)


def fit_sigma(
    windows: NeighborhoodSet,
    coeffs: np.ndarray,
    p: dlomax.DLParams,
    global_offset: int = 0,
    eig_floor: float = EIG_FLOOR,
) -> DirectionalCopula:
    """Estimate the window correlation of v-transformed coefficients.

    ``coeffs`` is the flattened subband the window indices refer to;
    ``global_offset`` shifts the stored windows into whole-pyramid
    coordinates.
    """
    coeffs = np.asarray(coeffs, dtype=float).ravel()
    expected = windows.subband_shape[0] * windows.subband_shape[1]
    if coeffs.size != expected:
        raise ValueError(f"expected {expected} subband coefficients, got {coeffs.size}")
    v = v_transform(coeffs, p)
    h = v[windows.windows]  # (count, L)
    sigma = h.T @ h / windows.count
    if not np.all(np.isfinite(sigma)):
        raise EstimationError("window covariance estimate is not finite")
    corr = _spd_correlation(sigma, eig_floor)
    return DirectionalCopula(
        scale=windows.scale,
        orientation=windows.orientation,
        direction=windows.direction,
        length=windows.length,
        sigma=corr,
        windows=windows.windows + global_offset,
    )


@dataclass(frozen=True)
class VineStructure:
    """Drawable-vine (path) structure with one partial correlation per edge.

    Tree t (1-based) couples variables (i, i+t) given the in-between path
    variables; ``params[t-1][i-1]`` is that edge's correlation.
    """

    dim: int
    params: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        d = self.dim
        if d < 2:
            raise ValueError("vine needs at least two variables")
        if len(self.params) != d - 1:
            raise ValueError(f"expected {d - 1} tree levels, got {len(self.params)}")
        for t, level in enumerate(self.params, start=1):
            if len(level) != d - t:
                raise ValueError(f"tree {t} must have {d - t} edges, got {len(level)}")
            if any(not (-1.0 < r < 1.0) for r in level):
                raise ValueError("pair correlations must lie in (-1, 1)")

    def edges(self):
        """Yield (tree, i, j, conditioning) with 1-based variable labels."""
        for t, level in enumerate(self.params, start=1):
            for i in range(1, self.dim - t + 1):
                yield t, i, i + t, tuple(range(i + 1, i + t))

    @classmethod
    def from_correlation(cls, sigma) -> "VineStructure":
        """Partial-correlation parameterization reproducing a joint Gaussian
        copula with correlation ``sigma`` exactly."""
        sigma = np.asarray(sigma, dtype=float)
        d = sigma.shape[0]
        if sigma.shape != (d, d):
            raise ValueError("correlation matrix must be square")
        params = []
        for t in range(1, d):
            level = []
            for i in range(d - t):
                idx = list(range(i, i + t + 1))
                prec = np.linalg.inv(sigma[np.ix_(idx, idx)])
                level.append(float(-prec[0, -1] / np.sqrt(prec[0, 0] * prec[-1, -1])))
            params.append(tuple(level))
        return cls(dim=d, params=tuple(params))


def _pair_log_density(z1, z2, rho):
    q = 1.0 - rho**2
    return -0.5 * np.log(q) - (rho**2 * (z1**2 + z2**2) - 2.0 * rho * z1 * z2) / (2.0 * q)


def dvine_log_density(x, p: dlomax.DLParams, vine: VineStructure, clamp: float = CDF_CLAMP) -> float:
    """Joint log density: double-Lomax marginals times Gaussian pair copulas
    along the drawable-vine path, conditionals propagated by h-functions.

    For Gaussian pairs the h-function is Phi((z1 - rho z2)/sqrt(1 - rho^2)),
    so the recursion closes over probit scores; staying in score space avoids
    the precision loss of a ndtr/ndtri round trip per tree, which dominates
    the error once a conditional saturates.
    """
    x = np.asarray(x, dtype=float).ravel()
    d = x.size
    if d != vine.dim:
        raise ValueError(f"x has {d} entries but vine couples {vine.dim} variables")
    ll = float(np.sum(dlomax.logpdf(x, p)))
    u = np.clip(dlomax.cdf(x, p), clamp, 1.0 - clamp)

    # fwd[i] = score of F(x_i | next t vars), bwd[i] = score of
    # F(x_{i+t} | previous t vars).
    fwd = list(ndtri(u))
    bwd = list(fwd)
    for level in vine.params:
        new_fwd = []
        new_bwd = []
        for i, rho in enumerate(level):
            z1 = fwd[i]
            z2 = bwd[i + 1]
            ll += float(_pair_log_density(z1, z2, rho))
            root = np.sqrt(1.0 - rho**2)
            new_fwd.append((z1 - rho * z2) / root)
            new_bwd.append((z2 - rho * z1) / root)
        fwd = new_fwd
        bwd = new_bwd
    return ll


def assemble_precision_correction(
    copulas: list[DirectionalCopula],
    m: int,
    direction_weights: dict[str, float] | None = None,
) -> sp.csr_matrix:
    """Embed fitted window correlations into a sparse m x m correction.

    Every window of a family adds Sigma^{-1} - I on its global index block;
    entries covered by several windows of the family are averaged, and the
    per-direction results are combined with ``direction_weights`` (default
    1/3 each). The result is symmetric but in general indefinite; making the
    full precision SPD is the recovery engine's job.
    """
    weights = dict(DEFAULT_DIRECTION_WEIGHTS if direction_weights is None else direction_weights)
    unknown = {c.direction for c in copulas} - set(weights)
    if unknown:
        raise ValueError(f"no weight for directions {sorted(unknown)}")
    total = sp.csr_matrix((m, m))
    for cop in copulas:
        if cop.windows.size and (cop.windows.min() < 0 or cop.windows.max() >= m):
            raise ValueError("window indices fall outside the pyramid vector")
        block = np.linalg.inv(cop.sigma) - np.eye(cop.length)
        L = cop.length
        rows = np.repeat(cop.windows, L, axis=1).ravel()
        cols = np.tile(cop.windows, (1, L)).ravel()
        vals = np.tile(block.ravel(), cop.windows.shape[0])
        num = sp.coo_matrix((vals, (rows, cols)), shape=(m, m)).tocsr()
        cnt = sp.coo_matrix((np.ones_like(vals), (rows, cols)), shape=(m, m)).tocsr()
        num.sort_indices()
        cnt.sort_indices()
        averaged = sp.csr_matrix((num.data / cnt.data, num.indices, num.indptr), shape=(m, m))
        total = total + weights[cop.direction] * averaged
    return total.tocsr()


def write_copula_model(path: str, entries: list[tuple[DirectionalCopula, dlomax.DLParams]]) -> None:
    """Serialize fitted copulas with their marginals as plain text, one line
    per (subband, direction): scale, orientation, direction, L, eta, f, and
    Sigma in row-major order."""
    with open(path, "w") as fh:
        fh.write("# scale orientation direction L eta f sigma_row_major\n")
        for cop, p in entries:
            sig = " ".join(f"{v:.17g}" for v in cop.sigma.ravel())
            fh.write(
                f"{cop.scale} {cop.orientation} {cop.direction} {cop.length} "
                f"{p.eta:.17g} {p.shape:.17g} {sig}\n"
            )


def read_copula_model(path: str) -> list[tuple[dict, np.ndarray, dlomax.DLParams]]:
    """Parse :func:`write_copula_model` output; returns (header fields,
    sigma, marginal params) per line."""
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            scale, orient, direction, L = int(parts[0]), parts[1], parts[2], int(parts[3])
            eta, f = float(parts[4]), float(parts[5])
            sig = np.array([float(v) for v in parts[6:]]).reshape(L, L)
            meta = {"scale": scale, "orientation": orient, "direction": direction, "length": L}
            out.append((meta, sig, dlomax.DLParams(eta=eta, shape=f)))
    return out
