"""Gaussian window copulas, the drawable vine, and the precision correction."""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy.stats import norm

from vinebit.copula import (
    DirectionalCopula,
    EstimationError,
    VineStructure,
    assemble_precision_correction,
    dvine_log_density,
    fit_sigma,
    gaussian_copula_density,
    gaussian_copula_log_density,
    read_copula_model,
    v_jacobian,
    v_transform,
    write_copula_model,
)
from vinebit.dlomax import DLParams, cdf, logpdf, ppf
from vinebit.wavelet import NeighborhoodSet, neighborhood_windows

P23 = DLParams(eta=2.0, shape=3.0)


def corr2(rho):
    return np.array([[1.0, rho], [rho, 1.0]])


def test_identity_sigma_density_is_one():
    rng = np.random.default_rng(0)
    for d in (2, 3, 5):
        u = rng.uniform(0.05, 0.95, size=d)
        assert gaussian_copula_log_density(u, np.eye(d)) == pytest.approx(0.0, abs=1e-12)
        assert gaussian_copula_density(u, np.eye(d)) == pytest.approx(1.0, rel=1e-12)


def test_bivariate_density_closed_form():
    rho = 0.7
    u = np.array([0.3, 0.8])
    z = norm.ppf(u)
    q = 1.0 - rho**2
    expected = np.exp(
        -(rho**2 * (z[0] ** 2 + z[1] ** 2) - 2.0 * rho * z[0] * z[1]) / (2.0 * q)
    ) / np.sqrt(q)
    assert gaussian_copula_density(u, corr2(rho)) == pytest.approx(expected, rel=1e-12)
    # at the median point the exponent dies and only |Sigma|^-1/2 remains
    assert gaussian_copula_density([0.5, 0.5], corr2(0.5)) == pytest.approx(
        1.0 / np.sqrt(0.75), rel=1e-12
    )


def test_copula_density_integrates_to_one():
    # Probit change of variables: the integral over (0,1)^2 becomes the
    # bivariate normal mass, which Gauss-Legendre on [-8, 8]^2 nails.
    nodes, wts = leggauss(80)
    z = 8.0 * nodes
    w = 8.0 * wts
    for rho in (0.0, 0.5, 0.9):
        sig = corr2(rho)
        total = 0.0
        for z1, w1 in zip(z, w):
            u1 = norm.cdf(z1)
            row = np.array(
                [gaussian_copula_density([u1, norm.cdf(z2)], sig) for z2 in z]
            )
            total += w1 * np.sum(w * row * norm.pdf(z) * norm.pdf(z1))
        assert total == pytest.approx(1.0, abs=1e-3)


def test_copula_argument_validation():
    with pytest.raises(ValueError):
        gaussian_copula_density([0.0, 0.5], np.eye(2))
    with pytest.raises(ValueError):
        gaussian_copula_density([0.5, 1.0], np.eye(2))
    with pytest.raises(ValueError):
        gaussian_copula_density([0.5, 0.5], np.eye(3))
    with pytest.raises(ValueError):
        gaussian_copula_density([0.5, 0.5], corr2(1.0))  # singular


def test_v_transform_basics():
    assert v_transform(np.array([0.0]), P23)[0] == pytest.approx(0.0, abs=1e-12)
    x = np.linspace(-20.0, 20.0, 101)
    v = v_transform(x, P23)
    assert np.all(np.isfinite(v))
    assert np.all(np.diff(v) > 0)
    # antisymmetric marginal -> antisymmetric probit map
    np.testing.assert_allclose(v, -v[::-1], atol=1e-10)
    # the clamp keeps even absurd inputs finite
    assert np.isfinite(v_transform(np.array([1e300]), P23))[0]


def test_v_transform_standardizes_matched_samples():
    from vinebit.dlomax import sample_hierarchical

    draw = sample_hierarchical(P23, 100_000, np.random.default_rng(7))
    v = v_transform(draw.x, P23)
    assert abs(np.mean(v)) < 0.02
    assert 0.98 < np.var(v) < 1.02


def test_fit_sigma_rejects_non_finite_coefficients():
    coeffs = np.linspace(-1, 1, 64)
    coeffs[10] = np.nan
    with pytest.raises(EstimationError):
        fit_sigma(make_set((8, 8), "row", 3), coeffs, P23)


def test_v_jacobian_matches_finite_differences():
    xs = np.array([-3.0, -0.7, 0.2, 1.1, 4.0])
    h = 1e-6
    fd = (v_transform(xs + h, P23) - v_transform(xs - h, P23)) / (2.0 * h)
    np.testing.assert_allclose(v_jacobian(xs, P23), fd, rtol=1e-6)


def make_set(shape, direction, length):
    return NeighborhoodSet(
        scale=1,
        orientation="LH",
        direction=direction,
        length=length,
        subband_shape=shape,
        windows=neighborhood_windows(shape, direction, length),
    )


def test_fit_sigma_independence():
    rng = np.random.default_rng(3)
    shape = (48, 48)
    lat = rng.standard_normal(shape[0] * shape[1])
    coeffs = ppf(norm.cdf(lat), P23)
    cop = fit_sigma(make_set(shape, "row", 3), coeffs, P23)
    np.testing.assert_allclose(np.diag(cop.sigma), 1.0, atol=1e-12)
    off = cop.sigma[~np.eye(3, dtype=bool)]
    assert np.max(np.abs(off)) < 0.1


def test_fit_sigma_recovers_row_correlation():
    # AR(1) latent field along rows, mapped through the marginal quantile:
    # the v-transform undoes the marginal, so the window correlation of the
    # v-values is the latent one.
    rng = np.random.default_rng(11)
    rho = 0.6
    rows, cols = 64, 256
    z = np.empty((rows, cols))
    z[:, 0] = rng.standard_normal(rows)
    for j in range(1, cols):
        z[:, j] = rho * z[:, j - 1] + np.sqrt(1 - rho**2) * rng.standard_normal(rows)
    coeffs = ppf(norm.cdf(z.ravel()), P23)
    cop = fit_sigma(make_set((rows, cols), "row", 3), coeffs, P23)
    assert cop.sigma[0, 1] == pytest.approx(rho, abs=0.03)
    assert cop.sigma[0, 2] == pytest.approx(rho**2, abs=0.04)


def test_fit_sigma_validates_length_and_offsets():
    with pytest.raises(ValueError):
        fit_sigma(make_set((8, 8), "row", 3), np.zeros(63), P23)
    coeffs = np.linspace(-1, 1, 64)
    cop = fit_sigma(make_set((8, 8), "row", 3), coeffs, P23, global_offset=100)
    assert cop.windows.min() == 100
    assert cop.windows.max() == 163


def test_vine_structure_validation():
    with pytest.raises(ValueError):
        VineStructure(dim=1, params=())
    with pytest.raises(ValueError):
        VineStructure(dim=3, params=((0.5, 0.5),))  # missing tree 2
    with pytest.raises(ValueError):
        VineStructure(dim=3, params=((0.5,), (0.1,)))  # tree 1 too short
    with pytest.raises(ValueError):
        VineStructure(dim=2, params=((1.0,),))  # |rho| = 1
    vine = VineStructure(dim=3, params=((0.5, 0.4), (0.2,)))
    assert list(vine.edges()) == [
        (1, 1, 2, ()),
        (1, 2, 3, ()),
        (2, 1, 3, (2,)),
    ]


def test_from_correlation_bivariate_is_plain_correlation():
    vine = VineStructure.from_correlation(corr2(0.37))
    assert vine.params == ((0.37,),)


def ar1_corr(d, rho):
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :])


@pytest.mark.parametrize("d", [3, 4])
def test_vine_collapses_to_joint_gaussian_copula(d):
    # A path vine of Gaussian pair copulas with partial-correlation
    # parameters is exactly the d-variate Gaussian copula.
    rng = np.random.default_rng(17)
    base = rng.standard_normal((d + 3, d))
    sigma = base.T @ base / (d + 3)
    dd = np.sqrt(np.diag(sigma))
    sigma = sigma / np.outer(dd, dd)
    vine = VineStructure.from_correlation(sigma)
    for _ in range(100):
        x = rng.standard_normal(d) * rng.uniform(0.2, 3.0)
        direct = float(np.sum(logpdf(x, P23))) + gaussian_copula_log_density(
            np.clip(cdf(x, P23), 1e-15, 1 - 1e-15), sigma
        )
        via_vine = dvine_log_density(x, P23, vine)
        assert via_vine == pytest.approx(direct, rel=1e-8)


def test_vine_dimension_mismatch():
    vine = VineStructure.from_correlation(ar1_corr(3, 0.5))
    with pytest.raises(ValueError):
        dvine_log_density(np.zeros(4), P23, vine)


def window_copula(windows, sigma, direction="row"):
    return DirectionalCopula(
        scale=1,
        orientation="LH",
        direction=direction,
        length=sigma.shape[0],
        sigma=sigma,
        windows=np.asarray(windows),
    )


def test_assemble_single_window_block():
    rho = 0.5
    cop = window_copula([[1, 3]], corr2(rho))
    P = assemble_precision_correction([cop], 5, {"row": 1.0})
    block = np.linalg.inv(corr2(rho)) - np.eye(2)
    dense = P.toarray()
    expected = np.zeros((5, 5))
    expected[np.ix_([1, 3], [1, 3])] = block
    np.testing.assert_allclose(dense, expected, atol=1e-14)


def test_assemble_averages_overlaps_and_weights_directions():
    rho = 0.6
    block = np.linalg.inv(corr2(rho)) - np.eye(2)
    # windows (0,1) and (1,2) overlap only on the diagonal entry (1,1)
    cop_r = window_copula([[0, 1], [1, 2]], corr2(rho), "row")
    P = assemble_precision_correction([cop_r], 3, {"row": 1.0}).toarray()
    assert P[0, 0] == pytest.approx(block[0, 0])
    assert P[1, 1] == pytest.approx(0.5 * (block[1, 1] + block[0, 0]))
    assert P[0, 1] == pytest.approx(block[0, 1])
    # a second direction contributes through its weight
    cop_c = window_copula([[0, 2]], corr2(-0.4), "column")
    blk_c = np.linalg.inv(corr2(-0.4)) - np.eye(2)
    P2 = assemble_precision_correction(
        [cop_r, cop_c], 3, {"row": 0.25, "column": 0.75}
    ).toarray()
    assert P2[0, 2] == pytest.approx(0.75 * blk_c[0, 1])
    assert P2[0, 1] == pytest.approx(0.25 * block[0, 1])
    np.testing.assert_allclose(P2, P2.T, atol=1e-14)


def test_assemble_identity_sigma_gives_zero():
    cop = window_copula([[0, 1], [1, 2]], np.eye(2))
    P = assemble_precision_correction([cop], 4, {"row": 1.0})
    assert P.nnz == 0 or np.max(np.abs(P.toarray())) < 1e-14


def test_assemble_validates_indices_and_weights():
    cop = window_copula([[0, 9]], corr2(0.2))
    with pytest.raises(ValueError):
        assemble_precision_correction([cop], 5, {"row": 1.0})
    cop2 = window_copula([[0, 1]], corr2(0.2), direction="row")
    with pytest.raises(ValueError):
        assemble_precision_correction([cop2], 5, {"column": 1.0})


def test_copula_model_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    sig = ar1_corr(3, 0.45)
    cop = window_copula([[0, 1, 2]], sig)
    path = tmp_path / "model.txt"
    write_copula_model(str(path), [(cop, P23)])
    entries = read_copula_model(str(path))
    assert len(entries) == 1
    meta, sigma, params = entries[0]
    assert meta == {"scale": 1, "orientation": "LH", "direction": "row", "length": 3}
    np.testing.assert_allclose(sigma, sig, atol=1e-15)
    assert params.eta == P23.eta and params.shape == P23.shape
