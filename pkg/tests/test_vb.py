import math

import numpy as np
import pytest
from scipy import stats

from scalemix.data import FeatureDataset
from scalemix.model import ComponentPosterior, PriorHyperparameters, build_default_prior
from scalemix.numerics import digamma
from scalemix.vb import (
    Responsibilities,
    VbConfig,
    e_step,
    elbo,
    expectations,
    fit,
    m_step,
    prune,
    statistics,
)

from conftest import two_blob_dataset


def simple_prior(d=1, alpha0=0.4, beta0=1.3, eta0=None, nu=3.0, k_init=2):
    return PriorHyperparameters(
        alpha0=alpha0,
        beta0=beta0,
        m0=np.full(d, 0.2),
        W0=np.eye(d) * 1.5,
        eta0=eta0 if eta0 is not None else d + 1.5,
        nu_fixed=nu,
        k_init=k_init,
    )


def toy_state(seed=7):
    """Two latent/parameter update rounds on a 5-point 1-d problem."""
    rng = np.random.default_rng(seed)
    x = np.array([[0.3], [1.7], [-0.4], [2.2], [0.9]])
    prior = simple_prior()
    resp = Responsibilities(
        r=rng.dirichlet(np.ones(2), size=5),
        a=np.full((5, 2), 2.0),
        b=np.full((5, 2), 2.0),
    )
    post = m_step(x, resp, prior)
    resp = e_step(x, post)
    post = m_step(x, resp, prior)
    return x, resp, post, prior


class TestExpectations:
    def test_delta_sq_at_posterior_mean(self):
        comp = ComponentPosterior(1.0, 2.5, [0.4, -0.1], np.eye(2), 6.0, 5.0)
        _, d2, _ = expectations(comp, [0.4, -0.1])
        assert d2 == pytest.approx(2.0 / 2.5, rel=1e-12)

    def test_single_component_log_weight_is_zero(self):
        comp = ComponentPosterior(3.7, 1.0, [0.0], [[1.0]], 4.0, 5.0)
        _, _, lpi = expectations(comp, [1.0])
        assert lpi == 0.0

    def test_log_sigma_tilde_formula(self):
        comp = ComponentPosterior(1.0, 1.0, [0.0, 0.0], np.eye(2), 5.0, 5.0)
        lsig, _, _ = expectations(comp, [0.0, 0.0])
        expected = -digamma(2.5) - digamma(2.0) - 2.0 * math.log(2.0)
        assert lsig == pytest.approx(expected, rel=1e-12)

    def test_eta_precondition(self):
        # eta <= dim - 1 would break the digamma arguments; the parameter
        # record already refuses to hold such a value
        with pytest.raises(ValueError):
            ComponentPosterior(1.0, 1.0, [0.0, 0.0], np.eye(2), 0.9, 5.0)


class TestEStep:
    def test_single_component_gives_unit_responsibility(self):
        comp = ComponentPosterior(1.0, 1.0, [0.0], [[1.0]], 3.0, 5.0)
        resp = e_step(np.array([[0.1], [5.0], [-2.0]]), [comp])
        assert np.allclose(resp.r, 1.0)
        assert np.allclose(resp.a, (5.0 + 1.0) / 2.0)

    def test_symmetric_components_on_axis(self):
        left = ComponentPosterior(1.0, 2.0, [-1.0], [[1.0]], 3.0, 5.0)
        right = ComponentPosterior(1.0, 2.0, [1.0], [[1.0]], 3.0, 5.0)
        resp = e_step(np.array([[0.0]]), [left, right])
        assert resp.r[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_matches_high_precision_reference(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 50
        comps = [
            ComponentPosterior(0.8, 1.5, [-0.5], [[0.9]], 3.2, 2.5),
            ComponentPosterior(1.9, 0.7, [1.2], [[1.8]], 4.1, 2.5),
        ]
        x = np.array([[0.0], [1.0], [-2.0]])
        resp = e_step(x, comps)
        alpha_hat = mp.mpf(0.8) + mp.mpf(1.9)
        rows = []
        for xi in x[:, 0]:
            vals = []
            for c in comps:
                eta = mp.mpf(c.eta)
                beta = mp.mpf(c.beta)
                w = mp.mpf(float(c.W[0, 0]))
                nu = mp.mpf(c.nu)
                lsig = -mp.digamma(eta / 2) - mp.log(2) + mp.log(w)
                d2 = 1 / beta + eta * (mp.mpf(float(xi)) - mp.mpf(float(c.m[0]))) ** 2 / w
                lpi = mp.digamma(mp.mpf(c.alpha)) - mp.digamma(alpha_hat)
                half = (nu + 1) / 2
                rho = (
                    mp.loggamma(half)
                    - mp.loggamma(nu / 2)
                    - mp.log(mp.pi * nu) / 2
                    + lpi
                    - lsig / 2
                    - half * mp.log(1 + d2 / nu)
                )
                vals.append(rho)
            total = mp.exp(vals[0]) + mp.exp(vals[1])
            rows.append([float(mp.exp(v) / total) for v in vals])
        assert np.allclose(resp.r, rows, rtol=1e-12, atol=1e-14)

    def test_rows_sum_to_one_and_counts_conserved(self, rng):
        comps = [
            ComponentPosterior(1.0, 1.0, rng.standard_normal(2), np.eye(2), 5.0, 4.0),
            ComponentPosterior(2.0, 1.5, rng.standard_normal(2), 2 * np.eye(2), 6.0, 4.0),
            ComponentPosterior(0.5, 0.5, rng.standard_normal(2), 0.5 * np.eye(2), 4.0, 4.0),
        ]
        x = rng.standard_normal((200, 2)) * 3
        resp = e_step(x, comps)
        assert np.allclose(resp.r.sum(axis=1), 1.0, atol=1e-12)
        assert resp.effective_counts.sum() == pytest.approx(200.0, abs=1e-8)


class TestStatistics:
    def test_counts_and_weighted_moments(self):
        x = np.array([[1.0], [3.0], [5.0]])
        r = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
        a = np.full((3, 2), 2.0)
        b = np.array([[2.0, 2.0], [4.0, 1.0], [2.0, 2.0]])
        stats_ = statistics(x, Responsibilities(r, a, b))
        assert np.allclose(stats_.N, [1.5, 1.5])
        # zeta = r * a / b per column
        zeta0 = np.array([1.0, 0.25, 0.0])
        zeta1 = np.array([0.0, 1.0, 1.0])
        assert np.allclose(stats_.omega, [zeta0.sum(), zeta1.sum()])
        assert stats_.xbar[0, 0] == pytest.approx((zeta0 @ x[:, 0]) / zeta0.sum())
        dev = x[:, 0] - stats_.xbar[1, 0]
        assert stats_.S[1, 0, 0] == pytest.approx((zeta1 * dev**2).sum() / zeta1.sum())


class TestMStep:
    def test_count_updates(self):
        # alpha and eta shift by the effective counts
        rng = np.random.default_rng(0)
        x = rng.standard_normal((100, 2))
        prior = simple_prior(d=2, alpha0=0.001, eta0=3.0)
        resp = Responsibilities(
            r=np.ones((100, 1)), a=np.full((100, 1), 3.5), b=np.full((100, 1), 3.5)
        )
        post = m_step(x, resp, prior)
        assert post[0].alpha == pytest.approx(100.001, rel=1e-12)
        assert post[0].eta == pytest.approx(103.0, rel=1e-12)

    def test_matches_direct_reference_computation(self):
        # 1-d, 4 points, hand-set responsibilities and scale posteriors
        x = np.array([[0.5], [1.5], [-1.0], [2.0]])
        r = np.array([[0.9, 0.1], [0.3, 0.7], [0.6, 0.4], [0.2, 0.8]])
        a = np.array([[2.0, 2.0]] * 4)
        b = np.array([[1.5, 2.5], [2.0, 1.0], [3.0, 2.0], [1.0, 4.0]])
        prior = simple_prior(alpha0=0.5, beta0=2.0, eta0=3.0, nu=3.0)
        post = m_step(x, Responsibilities(r, a, b), prior)
        for k in range(2):
            zeta = r[:, k] * (a[:, k] / b[:, k])
            count = r[:, k].sum()
            omega = zeta.sum()
            xbar = (zeta * x[:, 0]).sum() / omega
            s = (zeta * (x[:, 0] - xbar) ** 2).sum() / omega
            beta = 2.0 + omega
            m = (omega * xbar + 2.0 * 0.2) / beta
            w = 1.5 + omega * s + (2.0 * omega / beta) * (xbar - 0.2) ** 2
            assert post[k].alpha == pytest.approx(0.5 + count, rel=1e-12)
            assert post[k].beta == pytest.approx(beta, rel=1e-12)
            assert post[k].m[0] == pytest.approx(m, rel=1e-12)
            assert post[k].W[0, 0] == pytest.approx(w, rel=1e-12)
            assert post[k].eta == pytest.approx(3.0 + count, rel=1e-12)

    def test_zero_mass_component_keeps_prior(self):
        x = np.array([[0.5], [1.5]])
        prior = simple_prior()
        r = np.array([[1.0, 0.0], [1.0, 0.0]])
        a = np.full((2, 2), 2.0)
        b = np.full((2, 2), 2.0)
        post = m_step(x, Responsibilities(r, a, b), prior)
        assert post[1].alpha == prior.alpha0
        assert post[1].beta == prior.beta0
        assert np.array_equal(post[1].m, prior.m0)
        assert np.array_equal(post[1].W, prior.W0)

    def test_prior_dominance_single_point(self):
        # with one data point the posterior mean is a convex combination
        prior = simple_prior(d=1, beta0=1.0, nu=5.0, k_init=1)
        x = np.array([[4.0]])
        resp = Responsibilities(np.ones((1, 1)), np.full((1, 1), 3.0), np.full((1, 1), 3.0))
        post = m_step(x, resp, prior)
        assert prior.m0[0] <= post[0].m[0] <= 4.0


class TestElbo:
    def test_zero_with_no_data_and_prior_posteriors(self):
        prior = simple_prior(d=2, k_init=3)
        posteriors = [
            ComponentPosterior(
                prior.alpha0, prior.beta0, prior.m0, prior.W0, prior.eta0, prior.nu_fixed
            )
            for _ in range(3)
        ]
        resp = Responsibilities(
            r=np.zeros((0, 3)), a=np.zeros((0, 3)), b=np.zeros((0, 3))
        )
        value = elbo(np.zeros((0, 2)), resp, posteriors, prior)
        assert value == pytest.approx(0.0, abs=1e-10)

    def test_matches_monte_carlo_oracle(self):
        # independent estimate of E_q[ln p(X, Z, U, theta) - ln q(Z, U, theta)]
        x, resp, post, prior = toy_state(seed=7)
        value = elbo(x, resp, post, prior)

        rng = np.random.default_rng(2024)
        m_draws = 200000
        k = 2
        alpha = np.array([c.alpha for c in post])
        beta = np.array([c.beta for c in post])
        eta = np.array([c.eta for c in post])
        w = np.array([float(c.W[0, 0]) for c in post])
        m = np.array([float(c.m[0]) for c in post])
        nu = prior.nu_fixed
        pi_s = rng.dirichlet(alpha, size=m_draws)
        sig_s = w[None, :] / rng.chisquare(eta[None, :].repeat(m_draws, 0))
        mu_s = m[None, :] + rng.standard_normal((m_draws, k)) * np.sqrt(sig_s / beta[None, :])
        lp = stats.dirichlet.logpdf(np.clip(pi_s.T, 1e-300, None), np.full(k, prior.alpha0))
        lq = stats.dirichlet.logpdf(np.clip(pi_s.T, 1e-300, None), alpha)
        for j in range(k):
            lp += stats.norm.logpdf(
                mu_s[:, j], prior.m0[0], np.sqrt(sig_s[:, j] / prior.beta0)
            )
            lp += stats.invgamma.logpdf(
                sig_s[:, j], prior.eta0 / 2, scale=float(prior.W0[0, 0]) / 2
            )
            lq += stats.norm.logpdf(mu_s[:, j], m[j], np.sqrt(sig_s[:, j] / beta[j]))
            lq += stats.invgamma.logpdf(sig_s[:, j], eta[j] / 2, scale=w[j] / 2)
        rows = np.arange(m_draws)
        for n in range(x.shape[0]):
            z_n = (rng.random(m_draws)[:, None] > np.cumsum(resp.r[n])[None, :-1]).sum(axis=1)
            u_n = 1.0 / rng.gamma(resp.a[n, z_n], 1.0 / resp.b[n, z_n])
            lp += stats.norm.logpdf(
                x[n, 0], mu_s[rows, z_n], np.sqrt(u_n * sig_s[rows, z_n])
            )
            lp += np.log(pi_s[rows, z_n])
            lp += stats.invgamma.logpdf(u_n, nu / 2, scale=nu / 2)
            lq += np.log(resp.r[n, z_n])
            lq += stats.invgamma.logpdf(u_n, resp.a[n, z_n], scale=resp.b[n, z_n])
        diff = lp - lq
        se = float(diff.std() / math.sqrt(m_draws))
        assert value == pytest.approx(float(diff.mean()), abs=max(5 * se, 0.02))

    def test_non_finite_term_is_named(self):
        x, resp, post, prior = toy_state()
        bad = Responsibilities(resp.r, resp.a, np.full_like(resp.b, np.inf))
        with np.errstate(all="ignore"), pytest.raises(ArithmeticError):
            elbo(x, bad, post, prior)


class TestPrune:
    def test_dead_component_removed(self):
        comps = [
            ComponentPosterior(300.0, 1.0, [0.0], [[1.0]], 5.0, 5.0),
            ComponentPosterior(0.001, 1.0, [9.0], [[1.0]], 3.0, 5.0),
        ]
        r = np.array([[1.0 - 1e-12, 1e-12]] * 300)
        resp = Responsibilities(r, np.full((300, 2), 3.0), np.full((300, 2), 3.0))
        kept, new_resp = prune(comps, resp, threshold=1e-3)
        assert len(kept) == 1
        assert kept[0].alpha == 300.0
        assert np.allclose(new_resp.r, 1.0)

    def test_no_op_when_all_alive(self):
        comps = [
            ComponentPosterior(10.0, 1.0, [0.0], [[1.0]], 5.0, 5.0),
            ComponentPosterior(10.0, 1.0, [1.0], [[1.0]], 5.0, 5.0),
        ]
        r = np.full((20, 2), 0.5)
        resp = Responsibilities(r, np.full((20, 2), 3.0), np.full((20, 2), 3.0))
        kept, new_resp = prune(comps, resp, threshold=1e-3)
        assert len(kept) == 2
        assert new_resp is resp

    def test_refuses_to_prune_everything(self):
        comps = [ComponentPosterior(0.001, 1.0, [0.0], [[1.0]], 3.0, 5.0)] * 2
        r = np.full((1, 2), 0.5)
        resp = Responsibilities(r, np.full((1, 2), 3.0), np.full((1, 2), 3.0))
        with pytest.raises(ValueError):
            prune(comps, resp, threshold=10.0)


class TestFit:
    def test_elbo_traces_non_decreasing(self):
        data = two_blob_dataset(seed=11, n_per_class=250)
        prior = build_default_prior(data, nu_fixed=5.0, k_init=3)
        tc = fit(data, prior, VbConfig(seed=11))
        for cm in tc.classes:
            diffs = np.diff(cm.elbo_trace)
            assert diffs.size == 0 or diffs.min() >= -1e-8

    def test_identical_classes_give_half_posteriors(self, rng):
        feats = rng.standard_normal((120, 2))
        data = FeatureDataset(
            features=np.vstack([feats, feats]),
            labels=np.concatenate([np.ones(120, int), np.full(120, 2)]),
            trials=np.ones(240, int),
            participants=np.ones(240, int),
        )
        prior = build_default_prior(data, nu_fixed=5.0, k_init=1)
        tc = fit(data, prior, VbConfig(seed=0))
        from scalemix.predict import class_posterior

        for _ in range(10):
            probe = rng.standard_normal(2) * 2
            post = np.exp(class_posterior(probe, tc).log_probs)
            assert np.allclose(post, 0.5, atol=0.01)

    def test_surviving_components_bounded_on_unimodal_data(self):
        data = two_blob_dataset(seed=21, n_per_class=500)
        prior = build_default_prior(data, nu_fixed=5.0, k_init=10, alpha0=0.001)
        tc = fit(data, prior, VbConfig(seed=21))
        for cm in tc.classes:
            assert cm.n_components <= 3
            assert cm.n_pruned >= 7

    def test_effective_count_conservation_and_row_sums(self):
        data = two_blob_dataset(seed=5, n_per_class=150)
        prior = build_default_prior(data, nu_fixed=3.0, k_init=4)
        rows = data.features[data.labels == 1]
        resp0 = Responsibilities(
            r=np.random.default_rng(0).dirichlet(np.ones(4), size=rows.shape[0]),
            a=np.full((rows.shape[0], 4), 2.5),
            b=np.full((rows.shape[0], 4), 2.5),
        )
        post = m_step(rows, resp0, prior)
        for _ in range(5):
            resp = e_step(rows, post)
            assert np.allclose(resp.r.sum(axis=1), 1.0, atol=1e-12)
            assert resp.effective_counts.sum() == pytest.approx(rows.shape[0], abs=1e-8)
            post = m_step(rows, resp, prior)

    def test_permutation_equivariance_at_convergence(self, rng):
        data = two_blob_dataset(seed=31, n_per_class=200, centers=((0, 0), (6, 6)))
        perm = rng.permutation(data.n_rows)
        shuffled = FeatureDataset(
            data.features[perm], data.labels[perm], data.trials[perm], data.participants[perm]
        )
        prior = build_default_prior(data, nu_fixed=5.0, k_init=2)
        cfg = VbConfig(seed=9, elbo_rel_tol=1e-12, max_iters=3000)
        tc_a = fit(data, prior, cfg)
        tc_b = fit(shuffled, prior, cfg)
        for cm_a, cm_b in zip(tc_a.classes, tc_b.classes):
            ms_a = sorted(tuple(c.m) for c in cm_a.components)
            ms_b = sorted(tuple(c.m) for c in cm_b.components)
            assert len(ms_a) == len(ms_b)
            for va, vb_ in zip(ms_a, ms_b):
                assert np.allclose(va, vb_, atol=1e-6)

    def test_deterministic_for_fixed_seed_and_threads(self):
        data = two_blob_dataset(seed=41, n_per_class=100)
        prior = build_default_prior(data, nu_fixed=5.0, k_init=5)
        a = fit(data, prior, VbConfig(seed=3), threads=1)
        b = fit(data, prior, VbConfig(seed=3), threads=4)
        for cm_a, cm_b in zip(a.classes, b.classes):
            assert cm_a.elbo_trace == cm_b.elbo_trace
            for c_a, c_b in zip(cm_a.components, cm_b.components):
                assert np.array_equal(c_a.m, c_b.m)
                assert np.array_equal(c_a.W, c_b.W)

    def test_kmeans_like_init_also_converges(self):
        data = two_blob_dataset(seed=51, n_per_class=150)
        prior = build_default_prior(data, nu_fixed=5.0, k_init=4)
        tc = fit(data, prior, VbConfig(seed=1, init_strategy="kmeans-like"))
        for cm in tc.classes:
            assert cm.converged
            diffs = np.diff(cm.elbo_trace)
            assert diffs.size == 0 or diffs.min() >= -1e-8

    def test_training_log_lines(self):
        data = two_blob_dataset(seed=61, n_per_class=50)
        prior = build_default_prior(data, nu_fixed=5.0, k_init=1)
        lines = []
        fit(data, prior, VbConfig(seed=0), log_sink=lines.append)
        assert lines
        assert all("class=" in ln and "elbo=" in ln and "components=" in ln for ln in lines)

    def test_non_convergence_flag(self):
        data = two_blob_dataset(seed=71, n_per_class=200)
        prior = build_default_prior(data, nu_fixed=5.0, k_init=5)
        tc = fit(data, prior, VbConfig(seed=0, max_iters=2))
        assert any(not cm.converged for cm in tc.classes)

    def test_empirical_class_prior_option(self):
        data = two_blob_dataset(seed=81, n_per_class=100)
        unbalanced = FeatureDataset(
            data.features[:150],
            data.labels[:150],
            data.trials[:150],
            data.participants[:150],
        )  # 100 rows of class 1, 50 of class 2
        prior = build_default_prior(unbalanced, nu_fixed=5.0, k_init=1)
        tc_uni = fit(unbalanced, prior, VbConfig(seed=0), class_prior="uniform")
        tc_emp = fit(unbalanced, prior, VbConfig(seed=0), class_prior="empirical")
        assert np.allclose(np.exp(tc_uni.class_log_prior), [0.5, 0.5])
        assert np.allclose(np.exp(tc_emp.class_log_prior), [100 / 150, 50 / 150])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            VbConfig(max_iters=0)
        with pytest.raises(ValueError):
            VbConfig(elbo_rel_tol=0.0)
        with pytest.raises(ValueError):
            VbConfig(prune_threshold=-1.0)
        with pytest.raises(ValueError):
            VbConfig(init_strategy="magic")
