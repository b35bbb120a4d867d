import math

import numpy as np
import pytest

from sparsedet.scene import (
    NoiseSpec,
    TargetScene,
    matched_filter,
    noise_variance,
    parse_targets,
    sample_noise,
    snr_db_to_sigma,
    synthesize_measurement,
)

from .conftest import random_orthonormal


@pytest.mark.parametrize(
    "snr_db,sigma",
    [(0, 1.0), (19, 10 ** (-19 / 20)), (33, 10 ** (-33 / 20))],
)
def test_snr_to_sigma(snr_db, sigma):
    assert snr_db_to_sigma(snr_db) == pytest.approx(sigma, rel=1e-15)


def test_snr_to_sigma_quoted_digits():
    assert snr_db_to_sigma(19) == pytest.approx(0.112202, abs=5e-7)
    assert snr_db_to_sigma(33) == pytest.approx(0.0223872, abs=5e-8)
    assert snr_db_to_sigma(19) ** 2 == pytest.approx(1 / 10 ** 1.9, rel=1e-14)


def test_scene_validation():
    s = TargetScene(250, (100, 104), (1.0, 1.0))
    assert s.K == 2
    np.testing.assert_array_equal(s.support0, [99, 103])
    with pytest.raises(ValueError):
        TargetScene(10, (0,), (1.0,))
    with pytest.raises(ValueError):
        TargetScene(10, (11,), (1.0,))
    with pytest.raises(ValueError):
        TargetScene(10, (3, 3), (1.0, 1.0))
    with pytest.raises(ValueError):
        TargetScene(10, (3,), (0.0,))
    with pytest.raises(ValueError):
        TargetScene(10, (3, 4), (1.0,))


def test_parse_targets():
    s = parse_targets("100:1.0,104:0.5", 250)
    assert s.support == (100, 104)
    assert s.amplitudes == (1.0, 0.5)
    assert parse_targets("7", 10).amplitudes == (1.0,)
    assert parse_targets("3:1+1j", 10).amplitudes == (1 + 1j,)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(1.0, family="cauchy")
    with pytest.raises(ValueError):
        NoiseSpec(1.0, variance_convention="both")


@pytest.mark.parametrize("family", ["gaussian", "rademacher", "uniform"])
@pytest.mark.parametrize("cplx", [False, True])
def test_zero_sigma_gives_zero_noise(family, cplx):
    e = sample_noise(NoiseSpec(0.0, family, cplx, seed=3), 17)
    assert np.all(e == 0)


def test_gaussian_variance_law_of_large_numbers():
    e = sample_noise(NoiseSpec(1.0, "gaussian", False, seed=11), 100_000)
    assert abs(e.var() - 1.0) < 0.03


def test_rademacher_support():
    e = sample_noise(NoiseSpec(1.0, "rademacher", False, seed=5), 1000)
    assert set(np.unique(e)) == {-1.0, 1.0}


def test_uniform_range():
    e = sample_noise(NoiseSpec(2.0, "uniform", False, seed=5), 10_000)
    assert e.min() >= -2.0 and e.max() <= 2.0


@pytest.mark.parametrize("family", ["gaussian", "rademacher", "uniform"])
@pytest.mark.parametrize("cplx", [False, True])
def test_mean_and_documented_variance(family, cplx):
    sigma = 0.7
    spec = NoiseSpec(sigma, family, cplx, seed=99)
    e = sample_noise(spec, 1_000_000)
    tol = 4 * sigma / math.sqrt(1e6)
    assert abs(e.real.mean()) < tol
    assert abs(e.imag.mean()) < tol
    v = noise_variance(spec)
    # relative sd of a sample variance of 1e6 draws is at most ~0.15%
    assert np.mean(np.abs(e) ** 2) == pytest.approx(v, rel=0.01)


def test_variance_values():
    assert noise_variance(NoiseSpec(2.0, "uniform", False)) == pytest.approx(4 / 3)
    assert noise_variance(NoiseSpec(2.0, "rademacher", True)) == pytest.approx(4.0)
    assert noise_variance(NoiseSpec(2.0, "gaussian", True, variance_convention="per_component")) == pytest.approx(8.0)


def test_complex_total_variance_split_evenly():
    e = sample_noise(NoiseSpec(1.0, "gaussian", True, seed=8), 400_000)
    assert e.real.var() == pytest.approx(0.5, rel=0.01)
    assert e.imag.var() == pytest.approx(0.5, rel=0.01)
    assert np.mean(e.real * e.imag) == pytest.approx(0.0, abs=0.01)


@pytest.mark.parametrize("family", ["gaussian", "rademacher", "uniform"])
def test_subgaussian_mgf_bound(family):
    # Closed-form MGFs of the unit-parameter laws versus exp(t^2/2).
    t = np.linspace(-8, 8, 2001)
    t = t[t != 0]
    mgf = {
        "gaussian": np.exp(t**2 / 2),
        "rademacher": np.cosh(t),
        "uniform": np.sinh(t) / t,
    }[family]
    assert np.all(mgf <= np.exp(t**2 / 2) * (1 + 1e-12))


def test_noise_is_reproducible_and_frozen():
    spec = NoiseSpec(1.0, "gaussian", False, seed=2024)
    a = sample_noise(spec, 3, trial_index=7)
    b = sample_noise(spec, 3, trial_index=7)
    assert a.tobytes() == b.tobytes()
    # PCG64 + numpy's ziggurat; fixed across platforms.
    assert a.tolist() == [0.5984669544714114, 0.4791346147045022, 1.9138907214090037]
    assert not np.array_equal(a, sample_noise(spec, 3, trial_index=8))


def test_synthesize_noiseless_single_target(paper_dict):
    scene = TargetScene(250, (100,), (1.0,))
    rec = synthesize_measurement(paper_dict, scene, NoiseSpec(0.0))
    np.testing.assert_array_equal(rec.y, paper_dict.entries[:, 99])


def test_synthesize_matches_dense_product(paper_dict):
    scene = TargetScene(250, (100, 104), (1.0, 0.5 - 0.25j))
    rec = synthesize_measurement(paper_dict, scene, NoiseSpec(0.0))
    np.testing.assert_allclose(rec.y, paper_dict.entries @ scene.dense(), atol=1e-12)


def test_synthesize_adds_noise_from_sample_noise(paper_dict):
    scene = TargetScene(250, (100,), (1.0,))
    spec = NoiseSpec(0.1, seed=4)
    rec = synthesize_measurement(paper_dict, scene, spec, trial_index=3)
    np.testing.assert_allclose(rec.y - paper_dict.entries[:, 99], sample_noise(spec, 108, 3), atol=1e-15)


def test_synthesize_dimension_mismatch(paper_dict):
    with pytest.raises(ValueError):
        synthesize_measurement(paper_dict, TargetScene(100, (1,), (1.0,)), NoiseSpec(0.0))


def test_paper_resolution_cell_record(paper_dict):
    scene = TargetScene(250, (100, 104), (1.0, 1.0))
    rec = synthesize_measurement(paper_dict, scene, NoiseSpec(snr_db_to_sigma(33), seed=1))
    assert rec.y.shape == (108,)
    assert rec.scene is scene


def test_matched_filter_examples(rng):
    Q = random_orthonormal(rng, 6)
    b = matched_filter(Q, Q[:, 2])
    np.testing.assert_allclose(b, np.eye(6)[2], atol=1e-12)
    np.testing.assert_array_equal(matched_filter(Q, np.zeros(6)), np.zeros(6))
    with pytest.raises(ValueError):
        matched_filter(Q, np.zeros(5))


def test_matched_filter_per_column_oracle(rng):
    A = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    y = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    oracle = [sum(np.conj(A[p, i]) * y[p] for p in range(5)) for i in range(3)]
    np.testing.assert_allclose(matched_filter(A, y), oracle, atol=1e-12)
