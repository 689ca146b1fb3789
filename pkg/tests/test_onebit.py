"""Measurement model: matrix generation, quantization, quality metrics."""

import numpy as np
import pytest

from vinebit.onebit import (
    SNR_CAP_DB,
    build_ensemble,
    generate_matrix,
    measure,
    reconstruction_snr,
    sign_consistency,
)


def test_generate_matrix_unit_columns():
    A = generate_matrix(128, 32, 7)
    assert A.shape == (128, 32)
    np.testing.assert_allclose(np.linalg.norm(A, axis=0), 1.0, atol=1e-12)


def test_generate_matrix_deterministic():
    np.testing.assert_array_equal(generate_matrix(16, 4, 3), generate_matrix(16, 4, 3))
    assert np.any(generate_matrix(16, 4, 3) != generate_matrix(16, 4, 4))


def test_generate_matrix_validation():
    with pytest.raises(ValueError):
        generate_matrix(0, 4, 1)
    with pytest.raises(ValueError):
        generate_matrix(4, -1, 1)


def test_measure_signs_and_tie_rule():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, -1.0] / np.sqrt(2)])
    x = np.array([2.0, 2.0])  # third row hits exactly zero
    t = measure(A, x, 0.0, 0)
    np.testing.assert_array_equal(t, [1, 1, 1])
    t2 = measure(A, np.array([-2.0, 2.0]), 0.0, 0)
    np.testing.assert_array_equal(t2, [0, 1, 0])
    assert t.dtype == np.int8


def test_measure_noiseless_ignores_seed():
    A = generate_matrix(64, 8, 0)
    x = np.arange(8.0) - 3.5
    np.testing.assert_array_equal(measure(A, x, 0.0, 1), measure(A, x, 0.0, 2))


def test_measure_noise_is_seeded_and_flips_bits():
    A = generate_matrix(512, 8, 0)
    x = np.arange(8.0) - 3.5
    clean = measure(A, x, 0.0, 0)
    noisy1 = measure(A, x, 5.0, 42)
    noisy2 = measure(A, x, 5.0, 42)
    np.testing.assert_array_equal(noisy1, noisy2)
    assert np.any(noisy1 != clean)
    assert np.any(measure(A, x, 5.0, 43) != noisy1)


def test_measure_validation():
    A = generate_matrix(8, 4, 0)
    with pytest.raises(ValueError):
        measure(A, np.zeros(5), 0.0, 0)
    with pytest.raises(ValueError):
        measure(A, np.zeros(4), -1.0, 0)


def test_build_ensemble():
    ens = build_ensemble(32, 8, 0.1, 9)
    assert ens.n == 32 and ens.m == 8
    np.testing.assert_array_equal(ens.A, generate_matrix(32, 8, 9))
    with pytest.raises(ValueError):
        build_ensemble(32, 8, -0.1, 9)


def test_snr_reference_points():
    x = np.array([1.0, 2.0, -3.0])
    assert reconstruction_snr(x, x) == SNR_CAP_DB
    assert reconstruction_snr(x, 7.5 * x) == SNR_CAP_DB  # scale is quotiented out
    # antipodal: squared distance 4 on the sphere
    assert reconstruction_snr(x, -x) == pytest.approx(-10.0 * np.log10(4.0), rel=1e-12)
    # orthogonal unit vectors: squared distance 2
    assert reconstruction_snr([1.0, 0.0], [0.0, 1.0]) == pytest.approx(
        -10.0 * np.log10(2.0), rel=1e-12
    )


def test_snr_monotone_in_alignment():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(64)
    e = rng.standard_normal(64)
    snrs = [reconstruction_snr(x, x + a * e) for a in (0.5, 0.1, 0.02)]
    assert snrs[0] < snrs[1] < snrs[2]


def test_snr_validation():
    with pytest.raises(ValueError):
        reconstruction_snr([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        reconstruction_snr([1.0, np.inf], [1.0, 0.0])
    with pytest.raises(ValueError):
        reconstruction_snr([1.0, 0.0], [1.0, 0.0, 0.0])


def test_sign_consistency_counts_matches():
    A = np.eye(4)
    t = np.array([1, 0, 1, 1])
    x_perfect = np.array([1.0, -1.0, 2.0, 0.5])
    assert sign_consistency(A, x_perfect, t) == 1.0
    assert sign_consistency(A, -x_perfect, t) == 0.0
    x_half = np.array([1.0, 1.0, 2.0, -0.5])  # flips bits 1 and 3
    assert sign_consistency(A, x_half, t) == 0.5
    x_tie = np.array([1.0, -1.0, 2.0, 0.0])  # a'x = 0 counts as predicting 1
    assert sign_consistency(A, x_tie, t) == 1.0
    with pytest.raises(ValueError):
        sign_consistency(A, x_perfect, np.array([1, 0, 2, 1]))
    with pytest.raises(ValueError):
        sign_consistency(A, x_perfect, t[:3])
