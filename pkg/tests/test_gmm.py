import math

import numpy as np
import pytest

from actseg import gmm
from actseg.errors import InsufficientData


def iso_cluster(d=2, var=1.0, weight=1.0, mean=None):
    mean = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
    return gmm.GaussianCluster(mean, var * np.eye(d), weight)


# --- densities ----------------------------------------------------------------

def test_cluster_likelihood_values():
    c = iso_cluster()
    assert gmm.cluster_likelihood(np.zeros(2), c) == pytest.approx(
        1 / (2 * math.pi), abs=1e-9)
    assert gmm.cluster_likelihood(np.array([1.0, 0.0]), c) == pytest.approx(
        math.exp(-0.5) / (2 * math.pi), abs=1e-9)
    tight = iso_cluster(var=0.01)
    assert gmm.cluster_likelihood(np.zeros(2), tight) == pytest.approx(
        1 / (2 * math.pi * 0.01), rel=1e-9)
    assert gmm.cluster_likelihood(np.zeros(2), tight) > 1.0


def test_mixture_log_likelihood_single_point():
    model = gmm.CategoryModel([iso_cluster()])
    ll = gmm.mixture_log_likelihood(model, np.zeros((1, 2)))
    assert ll == pytest.approx(math.log(1 / (2 * math.pi)), abs=1e-9)


def test_mixture_log_likelihood_duplication_doubles():
    rng = np.random.default_rng(0)
    model = gmm.CategoryModel([iso_cluster(mean=[0, 0], weight=0.4),
                               iso_cluster(mean=[3, 1], weight=0.6)])
    Z = rng.normal(size=(20, 2))
    once = gmm.mixture_log_likelihood(model, Z)
    twice = gmm.mixture_log_likelihood(model, np.concatenate([Z, Z]))
    assert twice == pytest.approx(2 * once, rel=1e-12)


def test_mixture_identity_two_equal_clusters():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(30, 2))
    one = gmm.CategoryModel([iso_cluster(weight=1.0)])
    two = gmm.CategoryModel([iso_cluster(weight=0.5), iso_cluster(weight=0.5)])
    assert gmm.mixture_log_likelihood(two, Z) == pytest.approx(
        gmm.mixture_log_likelihood(one, Z), rel=1e-12)


def test_density_mass_in_3_sigma_box():
    # Monte-Carlo quadrature over [-3, 3]^2 for the standard normal
    rng = np.random.default_rng(12345)
    c = iso_cluster()
    pts = rng.uniform(-3.0, 3.0, size=(200_000, 2))
    dens = np.array([0.0])
    model = gmm.CategoryModel([c])
    dens = np.exp(model.log_densities(pts)[:, 0])
    mass = dens.mean() * 36.0
    assert mass >= 0.98
    assert mass == pytest.approx(0.99461, abs=0.01)


# --- EM fitting -----------------------------------------------------------------

def test_fit_em_single_gaussian_recovers_sample_stats():
    rng = np.random.default_rng(7)
    Z = rng.normal(loc=[2.0, -1.0], scale=1.0, size=(400, 2))
    model = gmm.fit_em(Z, 1, gmm.EMConfig(rng_seed=0))
    mean = Z.mean(axis=0)
    se = Z.std(axis=0, ddof=1) / math.sqrt(len(Z))
    assert np.all(np.abs(model.clusters[0].mean - mean) <= 3 * se)
    sample_cov = np.cov(Z.T, bias=True)
    frob = np.linalg.norm(model.clusters[0].cov - sample_cov) / np.linalg.norm(sample_cov)
    assert frob < 0.10


def test_fit_em_two_blobs_assignment():
    rng = np.random.default_rng(3)
    a = rng.normal([0, 0], 1.0, size=(120, 2))
    b = rng.normal([10, 10], 1.0, size=(120, 2))  # 10 sigma apart
    Z = np.concatenate([a, b])
    truth = np.array([0] * 120 + [1] * 120)
    model = gmm.fit_em(Z, 2, gmm.EMConfig(rng_seed=0))
    logp = model.log_densities(Z)
    logw = np.log([c.weight for c in model.clusters])
    assign = (logp + logw).argmax(axis=1)
    if assign[0] == 1:
        assign = 1 - assign
    assert np.mean(assign == truth) == 1.0


def test_em_log_likelihood_monotone_on_random_instances():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(40, 120))
        d = int(rng.integers(1, 4))
        m = int(rng.integers(1, 4))
        if n < m * (d + 1):
            n = m * (d + 1) + 10
        Z = rng.normal(size=(n, d)) * rng.uniform(0.5, 2.0)
        model = gmm.fit_em(Z, m, gmm.EMConfig(rng_seed=seed, n_restarts=2))
        trace = model.fit_stats["ll_trace"]
        assert all(b >= a - 1e-8 for a, b in zip(trace, trace[1:])), (seed, trace)


def test_fit_em_insufficient_data():
    rng = np.random.default_rng(0)
    with pytest.raises(InsufficientData):
        gmm.fit_em(rng.normal(size=(5, 2)), 2)


def test_fit_em_permutation_invariance():
    rng = np.random.default_rng(5)
    Z = np.concatenate([rng.normal([0, 0], 1, (80, 2)),
                        rng.normal([12, 0], 1, (80, 2))])
    m1 = gmm.fit_em(Z, 2, gmm.EMConfig(rng_seed=1))
    perm = rng.permutation(len(Z))
    m2 = gmm.fit_em(Z[perm], 2, gmm.EMConfig(rng_seed=1))
    assert m1.fit_stats["log_likelihood"] == pytest.approx(
        m2.fit_stats["log_likelihood"], abs=1e-6)


def _reference_em(Z, m, seeds=25, max_iter=200, tol=1e-6, reg=1e-6):
    """Plain-loop EM restarted from a grid of k-means++ style seeds."""
    n, d = Z.shape
    best = -np.inf
    rng = np.random.default_rng(999)
    for _ in range(seeds):
        means = gmm._kmeanspp_seeds(Z, m, rng)
        covs = np.repeat((np.cov(Z.T, bias=True).reshape(d, d)
                          + reg * np.eye(d))[None], m, axis=0)
        weights = np.full(m, 1.0 / m)
        prev = -np.inf
        for _ in range(max_iter):
            dens = np.zeros((n, m))
            for k in range(m):
                diff = Z - means[k]
                inv = np.linalg.inv(covs[k])
                maha = np.einsum("ni,ij,nj->n", diff, inv, diff)
                det = np.linalg.det(covs[k])
                dens[:, k] = weights[k] * np.exp(-0.5 * maha) / np.sqrt(
                    (2 * np.pi) ** d * det)
            total = dens.sum(axis=1)
            ll = float(np.log(total).sum())
            resp = dens / total[:, None]
            if prev > -np.inf and (ll - prev) / max(1.0, abs(prev)) < tol:
                break
            prev = ll
            nk = resp.sum(axis=0)
            if np.any(nk < 1e-10):
                ll = -np.inf
                break
            weights = nk / n
            means = (resp.T @ Z) / nk[:, None]
            for k in range(m):
                diff = Z - means[k]
                covs[k] = (resp[:, k][:, None] * diff).T @ diff / nk[k] + reg * np.eye(d)
        best = max(best, ll)
    return best


@pytest.mark.parametrize("m", [2, 3])
def test_fit_em_matches_restart_grid_oracle(m):
    rng = np.random.default_rng(2024 + m)
    centers = rng.uniform(-8, 8, size=(m, 2))
    Z = np.concatenate([rng.normal(c, 1.0, size=(60, 2)) for c in centers])
    model = gmm.fit_em(Z, m, gmm.EMConfig(rng_seed=0, n_restarts=25))
    oracle = _reference_em(Z, m, seeds=25)
    assert model.fit_stats["log_likelihood"] >= oracle - 1e-6


# --- BIC ------------------------------------------------------------------------

def test_bic_parameter_counts():
    assert gmm.free_parameter_count(1, 2) == 5
    assert gmm.free_parameter_count(2, 2) == 11


def test_bic_worked_value():
    # u = 5 free parameters, N = 100, log L = -180
    model = gmm.CategoryModel([iso_cluster()])
    Z = np.random.default_rng(0).normal(size=(100, 2))
    ll = gmm.mixture_log_likelihood(model, Z)
    expected = -2 * ll + 5 * math.log(100)
    assert gmm.bic(model, Z) == pytest.approx(expected, rel=1e-12)
    # with the spec'd numbers plugged into the same formula
    assert -2 * (-180.0) + 5 * math.log(100) == pytest.approx(383.03, abs=0.01)


def test_bic_penalty_monotone_in_n():
    model = gmm.CategoryModel([iso_cluster()])
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(50, 2))
    ll = gmm.mixture_log_likelihood(model, Z)
    u = gmm.free_parameter_count(1, 2)
    for n1, n2 in [(10, 20), (100, 1000)]:
        assert -2 * ll + u * math.log(n2) > -2 * ll + u * math.log(n1)


# --- model selection --------------------------------------------------------------

def _stub_fit_from_bics(bic_by_m, n, d):
    """fit_fn stub yielding models whose BIC equals a prescribed value."""
    def fit(Z, m, cfg):
        target = bic_by_m[m]
        u = gmm.free_parameter_count(m, d)
        ll = (u * math.log(n) - target) / 2.0
        model = gmm.CategoryModel(
            [iso_cluster(d=d, weight=1.0 / m, mean=[10 * k] * d) for k in range(m)])
        model.fit_stats = {"log_likelihood": ll}
        return model
    return fit


def test_select_model_first_local_minimum(monkeypatch):
    bics = {2: 100.0, 3: 90.0, 4: 95.0, 5: 80.0}

    def fake_bic(model, Z):
        return bics[model.n_clusters]

    monkeypatch.setattr(gmm, "bic", fake_bic)
    Z = np.random.default_rng(0).normal(size=(50, 2))
    model = gmm.select_model(Z, m_max=5, fit_fn=_stub_fit_from_bics(bics, 50, 2))
    assert model.n_clusters == 3
    assert model.fit_stats["bic_curve"] == bics


def test_select_model_monotone_decreasing_falls_back(monkeypatch, caplog):
    bics = {2: 100.0, 3: 90.0, 4: 80.0, 5: 70.0}
    monkeypatch.setattr(gmm, "bic", lambda model, Z: bics[model.n_clusters])
    Z = np.random.default_rng(0).normal(size=(50, 2))
    with caplog.at_level("WARNING"):
        model = gmm.select_model(Z, m_max=5, fit_fn=_stub_fit_from_bics(bics, 50, 2))
    assert model.n_clusters == 5
    assert any("monotonically" in rec.message for rec in caplog.records)


def test_select_model_recovers_four_blobs():
    rng = np.random.default_rng(11)
    centers = np.array([[0, 0], [14, 0], [0, 14], [14, 14]], dtype=float)
    Z = np.concatenate([rng.normal(c, 1.0, size=(70, 2)) for c in centers])
    model = gmm.select_model(Z, m_max=7, cfg=gmm.EMConfig(rng_seed=0))
    assert model.n_clusters == 4


def test_select_model_insufficient_data():
    with pytest.raises(InsufficientData):
        gmm.select_model(np.zeros((3, 2)))


def test_select_model_shuffle_invariance():
    rng = np.random.default_rng(21)
    centers = np.array([[0, 0], [16, 0], [8, 14]], dtype=float)
    Z = np.concatenate([rng.normal(c, 1.0, size=(60, 2)) for c in centers])
    a = gmm.select_model(Z, m_max=5, cfg=gmm.EMConfig(rng_seed=3))
    b = gmm.select_model(Z[rng.permutation(len(Z))], m_max=5,
                         cfg=gmm.EMConfig(rng_seed=3))
    assert a.n_clusters == b.n_clusters
    assert a.fit_stats["log_likelihood"] == pytest.approx(
        b.fit_stats["log_likelihood"], abs=1e-6)


# --- persistence -------------------------------------------------------------------

def test_category_model_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    Z = np.concatenate([rng.normal([0, 0], 1, (60, 2)),
                        rng.normal([9, 9], 1, (60, 2))])
    model = gmm.fit_em(Z, 2, gmm.EMConfig(rng_seed=0))
    model.risk_bound = 0.875
    path = gmm.category_model_path(tmp_path, model.version)
    assert path.name == "categories_v1.gmm"
    gmm.save_category_model(model, path)
    loaded = gmm.load_category_model(path)
    assert loaded.n_clusters == 2
    assert loaded.risk_bound == 0.875
    np.testing.assert_allclose(loaded.log_densities(Z), model.log_densities(Z))


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        gmm.CategoryModel([iso_cluster(weight=0.5), iso_cluster(weight=0.4)])
