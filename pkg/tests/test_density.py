import numpy as np
import pytest

from conftest import make_store
from reanno.density import DensityError, DensityModel, fit


def direct_log_density(members, h, x):
    """Direct-space oracle: average of multivariate Gaussian kernels."""
    d = len(x)
    total = 0.0
    for m in members:
        sq = float(np.sum((np.asarray(x, dtype=np.float64) - m) ** 2))
        total += np.exp(-sq / (2 * h * h))
    norm = len(members) * (h ** d) * (2 * np.pi) ** (d / 2)
    return np.log(total / norm)


def test_fit_class_counts():
    store = make_store(np.zeros((5, 2)), [0, 0, 0, 1, 1])
    model = fit(store, h=1.0)
    assert model.class_count(0) == 3 and model.class_count(1) == 2


def test_fit_paper_default_bandwidth(two_cluster_store):
    model = fit(two_cluster_store, h=0.25)
    assert model.h == 0.25


def test_fit_deterministic(two_cluster_store):
    m1 = fit(two_cluster_store, h=0.5)
    m2 = fit(two_cluster_store, h=0.5)
    x = np.full(4, 0.2)
    assert m1.log_density(0, x) == m2.log_density(0, x)


def test_nonpositive_bandwidth_rejected(two_cluster_store):
    with pytest.raises(DensityError):
        fit(two_cluster_store, h=0.0)


def test_single_member_standard_normal_at_mode():
    model = DensityModel([np.array([[0.0]])], h=1.0, dim=1)
    logf = model.log_density(0, np.array([0.0]))
    assert logf == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)
    assert np.exp(logf) == pytest.approx(0.3989422804014327, abs=1e-12)


def test_two_kernel_mixture_at_midpoint():
    model = DensityModel([np.array([[-1.0], [1.0]])], h=1.0, dim=1)
    f = np.exp(model.log_density(0, np.array([0.0])))
    # both kernels contribute phi(1)
    assert f == pytest.approx(0.24197072451914337, abs=1e-12)


def test_empty_class_sentinel():
    model = DensityModel([np.array([[0.0]]), np.zeros((0, 1))], h=1.0, dim=1)
    assert model.log_density(1, np.array([0.0])) == -np.inf


def test_unknown_class_rejected():
    model = DensityModel([np.array([[0.0]])], h=1.0, dim=1)
    with pytest.raises(DensityError):
        model.log_density(1, np.array([0.0]))


def test_log_space_fidelity_against_direct_oracle():
    rng = np.random.default_rng(12)
    for d in (1, 2, 3):
        members = rng.normal(size=(rng.integers(1, 100), d))
        h = float(rng.uniform(0.2, 2.0))
        model = DensityModel([members], h=h, dim=d)
        for _ in range(10):
            x = rng.normal(size=d)
            got = model.log_density(0, x)
            want = direct_log_density(members, h, x)
            assert got == pytest.approx(want, rel=1e-9)


def test_soft_label_symmetry():
    model = DensityModel([np.array([[-1.0]]), np.array([[1.0]])], h=0.7, dim=1)
    sl = model.soft_label(np.array([0.0]))
    assert sl.probs == pytest.approx([0.5, 0.5], abs=1e-12)


def test_soft_label_empty_class_zero():
    model = DensityModel(
        [np.array([[-1.0]]), np.zeros((0, 1)), np.array([[1.0]])], h=1.0, dim=1
    )
    sl = model.soft_label(np.array([0.5]))
    assert sl.probs[1] == 0.0
    assert sl.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert sl.probs[2] > sl.probs[0]


def test_soft_label_sums_to_one(two_cluster_store):
    model = fit(two_cluster_store, h=0.5)
    rng = np.random.default_rng(4)
    probs = model.soft_label_batch(rng.normal(size=(50, 4)))
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_all_classes_empty_rejected():
    model = DensityModel([np.zeros((0, 1)), np.zeros((0, 1))], h=1.0, dim=1)
    with pytest.raises(DensityError):
        model.soft_label(np.array([0.0]))


def test_shift_invariance_of_soft_labels():
    """Adding a constant to all class log-densities changes no soft label."""
    rng = np.random.default_rng(9)
    members = [rng.normal(size=(8, 2)), rng.normal(size=(5, 2)) + 2.0]
    model = DensityModel(members, h=0.8, dim=2)

    class Shifted:
        def __init__(self, base, c):
            self.base, self.c = base, c
            self.n_classes = base.n_classes
            self.dim = base.dim

        def class_count(self, cls):
            return self.base.class_count(cls)

        def log_density_matrix(self, vectors):
            return self.base.log_density_matrix(vectors) + self.c

        soft_label_batch = DensityModel.soft_label_batch

    x = rng.normal(size=(20, 2))
    base = model.soft_label_batch(x)
    for c in (-50.0, 50.0, 123.4):
        shifted = Shifted(model, c).soft_label_batch(x)
        assert np.allclose(base, shifted, atol=1e-12)


def test_mode_bound():
    """No point's density exceeds what a single-member class attains at its member."""
    rng = np.random.default_rng(2)
    members = rng.normal(size=(30, 2))
    h = 0.6
    model = DensityModel([members, np.array([[0.0, 0.0]])], h=h, dim=2)
    peak = model.log_density(1, np.array([0.0, 0.0]))
    for _ in range(50):
        x = rng.normal(size=2) * 2
        assert model.log_density(0, x) <= peak + 1e-12
        assert model.log_density(1, x) <= peak + 1e-12
