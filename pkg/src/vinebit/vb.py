"""Variational Bayes recovery from one-bit measurements.

Model: bits t = step(A x + w); the logistic likelihood is lower-bounded by
the standard quadratic tangent bound with one variational knot delta_i per
measurement,

    p(t|y) >= prod_i sigmoid(delta_i)
              * exp((z_i - delta_i)/2 - lam(delta_i) (z_i^2 - delta_i^2)),

with z_i = (2 t_i - 1) y_i and lam(d) = tanh(d/2) / (4 d). The signal prior
is the double-Lomax scale mixture per coefficient (variance tau_i with
exponential mixing driven by lam_i) plus an optional copula precision
correction that couples nearby wavelet coefficients.

All posterior factors stay conjugate under the bound: x is Gaussian, tau_i
generalized-inverse-Gaussian with index 1/2 (closed-form moments), lam_i
Rayleigh, the noise Gaussian, and delta has the closed tightness condition
delta_i^2 = <y_i^2>. Every update increases the evaluated lower bound when
the copula term is off; with the copula on, the correction is relinearized
each sweep, so the bound is monotone only up to that approximation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack as _lapack

from . import copula as _copula
from . import dlomax
from .wavelet import DIRECTIONS, NeighborhoodSet, PyramidLayout, neighborhood_windows

MIN_EIG = 1e-10
RIDGE_SCALE = 1e-8
GIG_B_FLOOR = 1e-12
_EULER = np.euler_gamma


class NumericalError(RuntimeError):
    """Linear algebra failed beyond what ridge safeguards can absorb.

    When raised from inside :func:`recover`, ``partial_trace`` holds the
    per-sweep diagnostics accumulated before the failure.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.partial_trace: list[dict] = []


@dataclass
class RecoveryConfig:
    """Knobs for :func:`recover`. Defaults follow the reference protocol.

    ``tau0``, ``lambda0`` and ``delta0`` seed the moments the sweep updates
    consume: the initial ``<tau>``, ``<lam^2>`` and ``delta`` respectively.
    """

    layout: PyramidLayout
    sigma_n: float = 0.0
    max_iter: int = 300
    tol: float = 1e-6
    tau0: float = 1e-8
    lambda0: float = 1e-8
    delta0: float = 1.0
    copula_enabled: bool = True
    window_length: int = 3
    direction_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    sigma_refit: bool = False
    refit_f: bool = True
    copula_burn_in: int = 3
    copula_activation_tol: float = 1e-2
    x_true: np.ndarray | None = None  # diagnostics only: per-sweep SNR in the trace

    def weight_map(self) -> dict[str, float]:
        w = {d: float(v) for d, v in zip(DIRECTIONS, self.direction_weights)}
        if any(v < 0 for v in w.values()):
            raise ValueError("direction weights must be non-negative")
        return w


@dataclass
class VBState:
    """Current posterior factors (moments) plus solver caches."""

    mu_x: np.ndarray
    sigma_x: np.ndarray | None
    tau_mean: np.ndarray
    tau_inv_mean: np.ndarray
    lambda_sq_mean: np.ndarray
    delta: np.ndarray
    mu_n: np.ndarray
    noise_var_diag: np.ndarray
    gig_a: np.ndarray | None = None
    gig_b: np.ndarray | None = None
    _linv: np.ndarray | None = field(default=None, repr=False)
    _logdet_sigma: float = 0.0
    _g: np.ndarray | None = field(default=None, repr=False)  # A @ mu_x
    _quad: np.ndarray | None = field(default=None, repr=False)  # a_i' Sigma a_i
    _af: np.ndarray | None = field(default=None, repr=False)  # Fortran copy of A
    _bf: np.ndarray | None = field(default=None, repr=False)  # row-scaled A workspace


def init_state(n: int, m: int, cfg: RecoveryConfig) -> VBState:
    # tau0 and lambda0 seed the moments the updates actually consume:
    # <tau> = tau0 and <lam^2> = lambda0.
    return VBState(
        mu_x=np.zeros(m),
        sigma_x=None,
        tau_mean=np.full(m, cfg.tau0),
        tau_inv_mean=np.full(m, 1.0 / cfg.tau0),
        lambda_sq_mean=np.full(m, cfg.lambda0),
        delta=np.full(n, cfg.delta0),
        mu_n=np.zeros(n),
        noise_var_diag=np.zeros(n),
    )


def jj_lambda(delta):
    """Quadratic-bound curvature tanh(d/2)/(4d), continued with 1/8 at 0."""
    d = np.abs(np.asarray(delta, dtype=float))
    small = d < 1e-4
    safe = np.where(small, 1.0, d)
    out = np.where(small, 0.125 - d**2 / 96.0, np.tanh(safe / 2.0) / (4.0 * safe))
    return out if out.ndim else float(out)


def _min_eig_estimate(linv: np.ndarray, iters: int = 8) -> float:
    # Inverse power iteration through the inverted factor; cheap lower-bound
    # probe for the SPD safeguard, not a full eigensolve.
    m = linv.shape[0]
    v = np.ones(m) + np.linspace(0.0, 0.5, m)
    v /= np.linalg.norm(v)
    mu = 0.0
    for _ in range(iters):
        w = linv.T @ (linv @ v)
        mu = np.linalg.norm(w)
        if mu == 0 or not np.isfinite(mu):
            return 0.0
        v = w / mu
    return 1.0 / mu


def _factor_spd(h: np.ndarray):
    """Cholesky plus inverted factor, with the ridge safeguard: if the
    precision is numerically indefinite or its smallest eigenvalue drops
    below MIN_EIG, add RIDGE_SCALE * mean(diag) to the diagonal and retry
    (escalating)."""
    mean_diag = float(np.mean(np.diagonal(h)))
    bump = RIDGE_SCALE * max(mean_diag, np.finfo(float).tiny)
    total = 0.0
    work = h
    for _ in range(8):
        c, info = _lapack.dpotrf(work, lower=1, clean=1, overwrite_a=0)
        if info == 0:
            linv, info_inv = _lapack.dtrtri(c, lower=1)
            if info_inv == 0 and _min_eig_estimate(linv) >= MIN_EIG:
                return c, linv, total
        if work is h:
            work = h.copy()
        work[np.diag_indices_from(work)] += bump
        total += bump
        bump *= 100.0
    raise NumericalError(
        "posterior precision could not be made positive definite",
        {"mean_diag": mean_diag, "ridge_added": total},
    )


def update_x(state: VBState, A: np.ndarray, t: np.ndarray, W=None) -> VBState:
    """Gaussian x-update:

    Sigma_x = (diag<1/tau> + 2 A' Lam_delta A + W_copula)^-1,
    mu_x    = Sigma_x A' ((2t-1)/2 - 2 Lam_delta mu_n).
    """
    n, m = A.shape
    lam = jj_lambda(state.delta)
    if state._af is None or state._af.shape != A.shape:
        state._af = np.asfortranarray(A)
        state._bf = np.empty_like(state._af)
    np.multiply(state._af, np.sqrt(2.0 * lam)[:, None], out=state._bf)
    h = state._bf.T @ state._bf  # 2 A' Lam A, symmetric
    h[np.diag_indices(m)] += state.tau_inv_mean
    if W is not None:
        if sp.issparse(W):
            wc = W.tocsr().tocoo()  # csr roundtrip removes duplicate entries
            h[wc.row, wc.col] += wc.data
        else:
            h += np.asarray(W)
    chol, linv, _ = _factor_spd(h)
    sigma = linv.T @ linv

    s = 2.0 * np.asarray(t, dtype=float) - 1.0
    rhs = A.T @ (0.5 * s - 2.0 * lam * state.mu_n)
    mu, info = _lapack.dpotrs(chol, rhs, lower=1)
    if info != 0:
        raise NumericalError("posterior mean solve failed", {"info": int(info)})

    state.mu_x = mu
    state.sigma_x = sigma
    state._linv = linv
    state._logdet_sigma = -2.0 * float(np.sum(np.log(np.diagonal(chol))))
    state._g = A @ mu
    state._quad = None
    return state


def gig_moments(a, b):
    """Closed moments of GIG(p=1/2, b, a) with density
    proportional to tau^(-1/2) exp(-(a tau + b/tau)/2):
    <tau> = sqrt(b/a) + 1/a and <1/tau> = sqrt(a/b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("GIG parameters must be positive")
    return np.sqrt(b / a) + 1.0 / a, np.sqrt(a / b)


def update_tau(state: VBState, copula_share=None) -> VBState:
    """GIG tau-update: a = <lam^2>, b = <x^2> plus the coordinate's share of
    the copula quadratic form, floored at GIG_B_FLOOR."""
    x2 = state.mu_x**2 + np.diagonal(state.sigma_x)
    b = x2 if copula_share is None else x2 + copula_share
    state.gig_b = np.maximum(b, GIG_B_FLOOR)
    state.gig_a = state.lambda_sq_mean.copy()
    state.tau_mean, state.tau_inv_mean = gig_moments(state.gig_a, state.gig_b)
    return state


def update_lambda(state: VBState) -> VBState:
    """Rayleigh lam-update (flat-shape limit of the Gamma mixing prior):
    scale 1/sqrt<tau>, so <lam^2> = 2/<tau>."""
    state.lambda_sq_mean = 2.0 / state.tau_mean
    return state


def _measurement_quad(state: VBState, A: np.ndarray) -> np.ndarray:
    # a_i' Sigma a_i for every measurement row.
    if state._quad is not None:
        return state._quad
    if state._linv is not None:
        tmp = A @ state._linv.T
        quad = np.einsum("ij,ij->i", tmp, tmp)
    else:
        quad = np.einsum("ij,jk,ik->i", A, state.sigma_x, A)
    state._quad = quad
    return quad


def update_delta(state: VBState, A: np.ndarray) -> VBState:
    """Tighten the bound: delta_i = sqrt(<y_i^2>) with
    <y_i^2> = a_i'(Sigma_x + mu mu')a_i + 2 (a_i'mu) mu_ni + <n_i^2>."""
    g = state._g if state._g is not None else A @ state.mu_x
    quad = _measurement_quad(state, A)
    y2 = quad + (g + state.mu_n) ** 2 + state.noise_var_diag
    state.delta = np.sqrt(np.maximum(y2, 0.0))
    return state


def update_noise(state: VBState, A: np.ndarray, t: np.ndarray, sigma_n: float) -> VBState:
    """Gaussian noise update; sigma_n = 0 short-circuits to a zero posterior."""
    if sigma_n < 0:
        raise ValueError("noise level must be non-negative")
    n = A.shape[0]
    if sigma_n == 0.0:
        state.mu_n = np.zeros(n)
        state.noise_var_diag = np.zeros(n)
        return state
    lam = jj_lambda(state.delta)
    s = 2.0 * np.asarray(t, dtype=float) - 1.0
    g = state._g if state._g is not None else A @ state.mu_x
    var = 1.0 / (sigma_n**-2 + 2.0 * lam)
    state.noise_var_diag = var
    state.mu_n = var * (0.5 * s - 2.0 * lam * g)
    return state


def copula_share(P: sp.spmatrix, state: VBState) -> np.ndarray:
    """Coordinate i's share of the coupling quadratic, fed to the scale
    update: c_i = P_ii <x_i^2> with P the assembled (unit-scale) correction.

    Only the diagonal is conjugate to the inverse-scale factor. The cross
    terms carry a tau^(-1/2) weight that the GIG form cannot absorb, and
    folding them in anyway drives negative row shares into the b floor and
    kills well-supported coefficients."""
    pc = P.tocoo()
    mask = pc.row == pc.col
    diag = np.bincount(pc.row[mask], weights=pc.data[mask], minlength=state.mu_x.size)
    return diag * (state.mu_x**2 + np.diagonal(state.sigma_x))


def evaluate_bound(state: VBState, A: np.ndarray, t: np.ndarray, sigma_n: float, W=None) -> float:
    """Evaluated lower bound: expected log of the tangent-bound likelihood
    and priors under the current factors plus their entropies. Exact for the
    copula-off model; with the copula on, the relinearized quadratic is used
    as is (diagnostic)."""
    n, m = A.shape
    s = 2.0 * np.asarray(t, dtype=float) - 1.0
    lam = jj_lambda(state.delta)
    g = state._g if state._g is not None else A @ state.mu_x
    quad = _measurement_quad(state, A)
    zmean = s * (g + state.mu_n)
    z2 = quad + (g + state.mu_n) ** 2 + state.noise_var_diag
    total = float(
        np.sum(
            -np.logaddexp(0.0, -state.delta)
            + 0.5 * (zmean - state.delta)
            - lam * (z2 - state.delta**2)
        )
    )

    x2 = state.mu_x**2 + np.diagonal(state.sigma_x)
    a, b = state.gig_a, state.gig_b
    if a is None or b is None:  # tau never updated: treat as fixed point masses
        total += float(np.sum(-0.5 * np.log(2.0 * np.pi * state.tau_mean) - 0.5 * state.tau_inv_mean * x2))
    else:
        z = np.sqrt(a * b)
        ln_k_half = 0.5 * (np.log(np.pi) - np.log(2.0) - np.log(z)) - z
        sigma_r_sq = 1.0 / state.tau_mean  # Rayleigh scale^2 of q(lam)
        mean_ln_lam = 0.5 * np.log(2.0 * sigma_r_sq) - 0.5 * _EULER
        total += float(
            np.sum(
                -0.5 * np.log(2.0 * np.pi)
                - 0.5 * state.tau_inv_mean * x2
                + 2.0 * mean_ln_lam
                - np.log(2.0)
                - 0.5 * state.lambda_sq_mean * state.tau_mean
                - mean_ln_lam
                - 0.25 * np.log(a / b)
                + np.log(2.0)
                + ln_k_half
                + 0.5 * (a * state.tau_mean + b * state.tau_inv_mean)
                + 1.0
                + 0.5 * np.log(sigma_r_sq / 2.0)
                + 0.5 * _EULER
            )
        )
    total += 0.5 * state._logdet_sigma + 0.5 * m * (1.0 + np.log(2.0 * np.pi))

    if W is not None:
        Wm = W.tocsr() if sp.issparse(W) else sp.csr_matrix(np.asarray(W))
        wc = Wm.tocoo()
        tr = float(np.sum(wc.data * state.sigma_x[wc.row, wc.col]))
        total += -0.5 * (float(state.mu_x @ (Wm @ state.mu_x)) + tr)

    if sigma_n > 0:
        n2 = state.mu_n**2 + state.noise_var_diag
        total += float(np.sum(-0.5 * np.log(2.0 * np.pi * sigma_n**2) - n2 / (2.0 * sigma_n**2)))
        total += float(np.sum(0.5 * np.log(2.0 * np.pi * np.e * state.noise_var_diag)))
    return total


@dataclass(frozen=True)
class _SubbandPlan:
    key: tuple[int, str]
    offset: int
    shape: tuple[int, int]
    neighborhoods: dict[str, NeighborhoodSet]

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]


MIN_WINDOWS_PER_LENGTH = 5  # window correlations need >= 5L windows to fit


def _subband_plans(layout: PyramidLayout, length: int, weights: dict[str, float]) -> list[_SubbandPlan]:
    plans = []
    for scale, orient, offset, shape in layout.entries():
        if orient == "LL":
            continue  # the low-pass residual keeps the plain marginal prior
        hoods = {}
        for direction, w in weights.items():
            if w == 0.0:
                continue
            try:
                windows = neighborhood_windows(shape, direction, length)
            except ValueError:
                continue  # subband too small for this window length
            if windows.shape[0] < MIN_WINDOWS_PER_LENGTH * length:
                # Stride-1 windows overlap heavily, so a handful of them
                # cannot support an L x L correlation estimate; tiny
                # subbands keep the plain marginal prior.
                continue
            hoods[direction] = NeighborhoodSet(scale, orient, direction, length, shape, windows)
        if hoods:
            plans.append(_SubbandPlan((scale, orient), offset, shape, hoods))
    return plans


def _refit_marginals(
    mu: np.ndarray,
    plans: list[_SubbandPlan],
    params: dict[tuple[int, str], dlomax.DLParams],
    fit_full: bool,
) -> dict[tuple[int, str], dlomax.DLParams]:
    out = dict(params)
    for plan in plans:
        coeffs = mu[plan.offset:plan.offset + plan.size]
        prev = out.get(plan.key, dlomax.DLParams(eta=1.0, shape=1.0))
        try:
            with warnings.catch_warnings():
                # bracket-edge clamps are routine on early, barely-shrunk
                # posteriors; the next sweep refits anyway
                warnings.simplefilter("ignore", RuntimeWarning)
                if fit_full:
                    out[plan.key] = dlomax.fit_shape(coeffs, f0=prev.shape)
                else:
                    eta = dlomax.fit_eta(coeffs, prev.shape, eta0=prev.eta)
                    out[plan.key] = replace(prev, eta=eta)
        except (dlomax.DegenerateDataError, dlomax.ConvergenceError):
            out[plan.key] = prev
    return out


def _fit_copulas(mu, plans, params, weights):
    cops = []
    for plan in plans:
        coeffs = mu[plan.offset:plan.offset + plan.size]
        for direction, hood in plan.neighborhoods.items():
            if weights.get(direction, 0.0) == 0.0:
                continue
            cops.append(_copula.fit_sigma(hood, coeffs, params[plan.key], global_offset=plan.offset))
    return cops


def write_trace_csv(path: str, trace: list[dict]) -> None:
    cols = ("iteration", "bound_value", "eta", "f", "delta_mean", "snr_if_known")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in trace:
            vals = []
            for c in cols:
                v = row.get(c)
                vals.append("" if v is None else (str(v) if c == "iteration" else f"{v:.10g}"))
            fh.write(",".join(vals) + "\n")


def recover(t: np.ndarray, A: np.ndarray, cfg: RecoveryConfig):
    """Run mean-field sweeps until the relative change of mu_x drops below
    ``cfg.tol`` or ``cfg.max_iter`` is hit.

    Returns ``(x_hat, trace)`` where ``x_hat = mu_x / ||mu_x||`` and trace
    rows record (iteration, bound_value, eta, f, delta_mean, snr_if_known).
    """
    A = np.asarray(A, dtype=float)
    t = np.asarray(t)
    n, m = A.shape
    if t.shape != (n,):
        raise ValueError(f"expected {n} bits, got shape {t.shape}")
    if np.any((t != 0) & (t != 1)):
        raise ValueError("bits must be 0/1 valued")
    if cfg.layout.size != m:
        raise ValueError(f"layout size {cfg.layout.size} does not match signal length {m}")

    weights = cfg.weight_map()
    plans = _subband_plans(cfg.layout, cfg.window_length, weights) if cfg.copula_enabled else []
    state = init_state(n, m, cfg)
    params: dict[tuple[int, str], dlomax.DLParams] = {}
    copulas = None
    P = None
    activated = False
    trace: list[dict] = []
    mu_prev = state.mu_x.copy()
    rel = math.inf

    for it in range(1, cfg.max_iter + 1):
        # The coupling engages once the marginal-only phase quasi-converges.
        # Correlations fitted from a still-moving posterior mean mostly encode
        # shrinkage artefacts, and coupling to them costs several dB at low
        # measurement rates; waiting for the mean to settle makes the one
        # dependence fit as informed as the data allows.
        if plans and not activated and it > cfg.copula_burn_in and rel < cfg.copula_activation_tol:
            activated = True
        if activated:
            fit_full = cfg.refit_f or not params
            params = _refit_marginals(state.mu_x, plans, params, fit_full)
        active = activated and bool(params)
        W = None
        if active:
            if copulas is None or cfg.sigma_refit:
                copulas = _fit_copulas(state.mu_x, plans, params, weights)
                P = _copula.assemble_precision_correction(copulas, m, weights)
            # The fitted correction couples coefficients standardized to unit
            # scale; the prior precision root carries it back to coefficient
            # space. diag<1/tau> + W then factors as a congruence of I + P,
            # which the window eigenvalue floor keeps positive definite, and
            # the coupling stays negligible until the scale prior tightens.
            # Standardizing through the fitted marginal slope instead feeds
            # back on itself: a shrunk mean inflates the fitted rate, which
            # inflates the slope and shrinks the mean further, and the loop
            # diverges within a few sweeps.
            d_root = sp.diags(np.sqrt(state.tau_inv_mean))
            W = (d_root @ P @ d_root).tocsr()

        try:
            update_x(state, A, t, W)
            share = copula_share(P, state) if active else None
            update_tau(state, share)
            update_lambda(state)
            update_delta(state, A)
            update_noise(state, A, t, cfg.sigma_n)
        except NumericalError as err:
            err.partial_trace = trace
            raise

        bound = evaluate_bound(state, A, t, cfg.sigma_n, W)
        if params:
            sizes = np.array([p.size for p in plans], dtype=float)
            etas = np.array([params[p.key].eta for p in plans])
            shapes = np.array([params[p.key].shape for p in plans])
            eta_mean = float(np.sum(sizes * etas) / np.sum(sizes))
            f_mean = float(np.sum(sizes * shapes) / np.sum(sizes))
        else:
            eta_mean = f_mean = float("nan")
        snr = None
        if cfg.x_true is not None:
            from .onebit import reconstruction_snr

            nrm = float(np.linalg.norm(state.mu_x))
            snr = reconstruction_snr(cfg.x_true, state.mu_x) if nrm > 0 else float("nan")
        trace.append(
            {
                "iteration": it,
                "bound_value": bound,
                "eta": eta_mean,
                "f": f_mean,
                "delta_mean": float(np.mean(state.delta)),
                "snr_if_known": snr,
            }
        )

        nrm = float(np.linalg.norm(state.mu_x))
        rel = float(np.linalg.norm(state.mu_x - mu_prev)) / max(nrm, np.finfo(float).tiny)
        mu_prev = state.mu_x.copy()
        if rel < cfg.tol and (activated or not plans):
            # While the coupling is still pending, a settled mean is the
            # activation trigger, not the exit.
            break

    nrm = float(np.linalg.norm(state.mu_x))
    if nrm == 0 or not np.isfinite(nrm):
        err = NumericalError("posterior mean collapsed to zero", {"iterations": len(trace)})
        err.partial_trace = trace
        raise err
    return state.mu_x / nrm, trace
