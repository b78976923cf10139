import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuselage_qbo import rff
from fuselage_qbo.errors import DomainError


def test_rbf_values():
    spec = rff.KernelSpec(0.5)
    assert rff.rbf(np.zeros(8), np.zeros(8), spec) == 1.0
    x, y = np.zeros(3), np.array([0.5, 0.0, 0.0])
    assert rff.rbf(x, y, spec) == pytest.approx(np.exp(-0.5), rel=1e-15)
    with pytest.raises(DomainError):
        rff.rbf(np.zeros(2), np.zeros(3), spec)
    with pytest.raises(DomainError):
        rff.KernelSpec(0.0)


def test_rbf_matrix_matches_pairwise(rng):
    spec = rff.KernelSpec(0.7)
    X, Y = rng.uniform(-1, 1, (5, 4)), rng.uniform(-1, 1, (3, 4))
    K = rff.rbf_matrix(X, Y, spec)
    for i in range(5):
        for j in range(3):
            assert K[i, j] == pytest.approx(rff.rbf(X[i], Y[j], spec), rel=1e-14)


def test_feature_map_shape_and_determinism():
    a = rff.sample_feature_map(8, 64, rff.KernelSpec(0.5), seed=3)
    b = rff.sample_feature_map(8, 64, rff.KernelSpec(0.5), seed=3)
    c = rff.sample_feature_map(8, 64, rff.KernelSpec(0.5), seed=4)
    np.testing.assert_array_equal(a.frequencies, b.frequencies)
    assert not np.array_equal(a.frequencies, c.frequencies)
    x = np.linspace(-1, 1, 8)
    phi = rff.features(a, x)
    assert phi.shape == (64,)
    np.testing.assert_array_equal(phi, rff.features(b, x))
    assert np.all(np.abs(phi) <= np.sqrt(2 / 64) + 1e-15)


def test_feature_map_frozen():
    fm = rff.sample_feature_map(2, 16, seed=0)
    with pytest.raises(ValueError):
        fm.frequencies[0, 0] = 1.0


def test_feature_map_spectral_scale():
    fm = rff.sample_feature_map(4, 20000, rff.KernelSpec(0.5), seed=0)
    # W ~ N(0, 1/l^2) so std(W) = 2, phases U[0, 2pi)
    assert fm.frequencies.std() == pytest.approx(2.0, rel=0.02)
    assert 0 <= fm.phases.min() and fm.phases.max() < 2 * np.pi


def test_features_dimension_mismatch():
    fm = rff.sample_feature_map(8, 16, seed=0)
    with pytest.raises(DomainError):
        rff.features(fm, np.zeros(7))
    with pytest.raises(DomainError):
        rff.sample_feature_map(0, 16)


def test_self_inner_product_near_one():
    fm = rff.sample_feature_map(8, 4096, rff.KernelSpec(0.5), seed=1)
    phi = rff.features(fm, np.full(8, 0.3))
    # sum of 2/R cos^2 concentrates at 1 with std about sqrt(0.5/R)
    assert abs(phi @ phi - 1.0) < 5 * np.sqrt(0.5 / 4096)


def test_approximation_error_shrinks():
    rng = np.random.default_rng(0)
    spec = rff.KernelSpec(0.5)
    X, Y = rng.uniform(-1, 1, (200, 8)), rng.uniform(-1, 1, (200, 8))
    K = np.exp(-((X - Y) ** 2).sum(1) / (2 * 0.25))
    errs = []
    for R in (64, 4096):
        fm = rff.sample_feature_map(8, R, spec, seed=11)
        approx = (fm.transform(X) * fm.transform(Y)).sum(1)
        errs.append(np.mean(np.abs(approx - K)))
    assert errs[1] < errs[0] / 4


def test_identity_feature_map():
    fm = rff.IdentityFeatureMap(3)
    X = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(fm.transform(X), X)
    np.testing.assert_array_equal(fm.kernel(X, X), X @ X.T)


def test_normalize_roundtrip_and_endpoints():
    b = (-500.0, 500.0)
    np.testing.assert_array_equal(rff.normalize([-500, 0, 500], b), [-1, 0, 1])
    np.testing.assert_array_equal(rff.denormalize([-1, 0, 1], b), [-500, 0, 500])
    assert rff.denormalize([1 + 1e-12], b)[0] == 500.0


@settings(max_examples=100)
@given(st.lists(st.floats(-500, 500), min_size=1, max_size=8))
def test_normalize_roundtrip_property(F):
    b = (-500.0, 500.0)
    x = rff.normalize(F, b)
    assert np.all(np.abs(x) <= 1)
    np.testing.assert_allclose(rff.denormalize(x, b), F, atol=1e-10)


def test_frequency_std_matches_inverse_lengthscale():
    for l in (0.5, 1.5):
        fm = rff.sample_feature_map(1, 100_000, rff.KernelSpec(l), seed=0)
        assert fm.frequencies.std() == pytest.approx(1 / l, rel=0.02)


def test_rff_error_at_4096_unit_lengthscale():
    rng = np.random.default_rng(9)
    spec = rff.KernelSpec(1.0)
    X, Y = rng.uniform(-1, 1, (200, 8)), rng.uniform(-1, 1, (200, 8))
    fm = rff.sample_feature_map(8, 4096, spec, seed=9)
    K = np.array([rff.rbf(x, y, spec) for x, y in zip(X, Y)])
    assert np.mean(np.abs((fm.transform(X) * fm.transform(Y)).sum(1) - K)) <= 0.03


def test_translation_invariance_in_distribution():
    rng = np.random.default_rng(4)
    x, y, c = rng.uniform(-1, 1, (3, 8))
    diffs = []
    for seed in range(100):
        fm = rff.sample_feature_map(8, 256, rff.KernelSpec(1.0), seed=seed)
        shifted = rff.features(fm, x + c) @ rff.features(fm, y + c)
        diffs.append(shifted - rff.features(fm, x) @ rff.features(fm, y))
    assert abs(np.mean(diffs)) <= 0.05


def test_error_scales_as_inverse_sqrt_r():
    rng = np.random.default_rng(5)
    spec = rff.KernelSpec(1.0)
    X, Y = rng.uniform(-1, 1, (200, 8)), rng.uniform(-1, 1, (200, 8))
    K = rff.rbf_matrix(X, Y, spec).diagonal()
    Rs = np.array([64, 256, 1024, 4096])
    errs = []
    for R in Rs:
        e = [np.mean(np.abs((fm.transform(X) * fm.transform(Y)).sum(1) - K))
             for fm in (rff.sample_feature_map(8, R, spec, seed=s) for s in range(5))]
        errs.append(np.mean(e))
    slope = np.polyfit(np.log(Rs), np.log(errs), 1)[0]
    assert -1.0 <= slope <= -0.25
