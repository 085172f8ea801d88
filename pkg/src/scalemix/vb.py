"""Variational Bayesian learning of per-class scale mixture models.

Each class is fit independently. One iteration alternates two updates:

1. Latent update. Given the current parameter posteriors, compute per-point
   responsibilities ``r`` (a categorical posterior over components) and the
   inverse-gamma posterior ``IG(a, b)`` over each point's latent scale.
2. Parameter update. Given the latent posteriors, accumulate the
   responsibility-weighted statistics and refresh the Dirichlet and
   Gaussian-inverse-Wishart posteriors in closed form.

The evidence lower bound is evaluated after every iteration; it is
non-decreasing (up to floating-point noise) and its relative change drives
convergence. Components whose effective count falls below a threshold are
pruned, which a small Dirichlet concentration makes routine: redundant
components starve and vanish, leaving the model to pick its own complexity.

Per-class fits are independent and may run on separate threads; within a
fit, all reductions use fixed summation order so results are reproducible
for a given seed regardless of worker count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize_scalar

from .model import (
    ClassModel,
    ComponentPosterior,
    LatentStatistics,
    TrainedClassifier,
)
from .numerics import (
    cholesky,
    digamma,
    log_det,
    log_gamma,
    mahalanobis_sq,
    mahalanobis_sq_batch,
    multivariate_log_gamma,
)

__all__ = [
    "VbConfig",
    "Responsibilities",
    "NumericalFailure",
    "expectations",
    "e_step",
    "m_step",
    "statistics",
    "elbo",
    "prune",
    "fit",
    "fit_ml_nu",
]

_LOG_2PI = math.log(2.0 * math.pi)

INIT_STRATEGIES = ("random-responsibility", "kmeans-like")


class NumericalFailure(ArithmeticError):
    """A non-finite quantity appeared during training."""


@dataclass(frozen=True)
class VbConfig:
    """Knobs of the variational fit; every field has a working default."""

    max_iters: int = 500
    elbo_rel_tol: float = 1e-6
    prune_threshold: float = 1e-3
    seed: int = 0
    init_strategy: str = "random-responsibility"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.elbo_rel_tol > 0:
            raise ValueError("elbo_rel_tol must be positive")
        if not self.prune_threshold > 0:
            raise ValueError("prune_threshold must be positive")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(
                f"init_strategy must be one of {INIT_STRATEGIES}, got {self.init_strategy!r}"
            )


@dataclass(frozen=True)
class Responsibilities:
    """Latent posteriors for the points of one class.

    ``r`` holds row-normalized component responsibilities; ``a`` and ``b``
    the shape and rate of the inverse-gamma posterior over each point's
    latent scale, conditional on the component assignment.
    """

    r: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if not (r.shape == a.shape == b.shape) or r.ndim != 2:
            raise ValueError("r, a, b must share one (n_points, n_components) shape")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if r.size:
            rows = r.sum(axis=1)
            if np.any(np.abs(rows - 1.0) > 1e-12):
                raise ValueError("responsibility rows must sum to 1")
            if np.any(r < 0) or np.any(r > 1):
                raise ValueError("responsibilities must lie in [0, 1]")
            if np.any(a <= 0) or np.any(b <= 0):
                raise ValueError("inverse-gamma parameters must be positive")

    @property
    def n_components(self):
        return self.r.shape[1]

    @property
    def effective_counts(self):
        return self.r.sum(axis=0)


def _components_of(model):
    return model.components if isinstance(model, ClassModel) else tuple(model)


def _log_sigma_tilde(comp, factor=None):
    f = factor if factor is not None else cholesky(comp.W, jitter=True)
    d = comp.dim
    total = -d * math.log(2.0) + log_det(f)
    for j in range(1, d + 1):
        total -= digamma(0.5 * (comp.eta + 1.0 - j))
    return total, f


def expectations(comp, x, alpha_hat=None):
    """Posterior expectations entering the latent update at one point.

    Returns ``(log_sigma_tilde, delta_sq_expect, log_pi_tilde)``: the
    expected log-determinant of the component scale, the expected squared
    Mahalanobis distance of ``x`` under the parameter posterior, and the
    expected log mixing weight. ``alpha_hat`` is the Dirichlet total over
    the class's components; for a single component it defaults to the
    component's own ``alpha`` (making the log weight zero).
    """
    if not comp.eta + 1.0 - comp.dim > 0:
        raise ValueError(f"eta = {comp.eta} too small for dim {comp.dim}")
    x = np.asarray(x, dtype=float).reshape(-1)
    lsig, f = _log_sigma_tilde(comp)
    d2 = comp.dim / comp.beta + comp.eta * mahalanobis_sq(x, comp.m, f)
    ahat = comp.alpha if alpha_hat is None else float(alpha_hat)
    lpi = digamma(comp.alpha) - digamma(ahat)
    return lsig, d2, lpi


def e_step(points, model):
    """Latent update: responsibilities and scale posteriors for class points.

    ``model`` may be a :class:`ClassModel` or a sequence of component
    posteriors. Responsibilities are computed in log space with row-max
    subtraction; exact ties keep proportional weights.
    """
    comps = _components_of(model)
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = x.shape
    k = len(comps)
    alpha_hat = sum(c.alpha for c in comps)
    log_rho = np.empty((n, k))
    a = np.empty((n, k))
    b = np.empty((n, k))
    for j, comp in enumerate(comps):
        lsig, f = _log_sigma_tilde(comp)
        d2 = comp.dim / comp.beta + comp.eta * mahalanobis_sq_batch(x, comp.m, f)
        lpi = digamma(comp.alpha) - digamma(alpha_hat)
        nu = comp.nu
        half = 0.5 * (nu + d)
        log_rho[:, j] = (
            log_gamma(half)
            - log_gamma(0.5 * nu)
            - 0.5 * d * math.log(math.pi * nu)
            + lpi
            - 0.5 * lsig
            - half * np.log1p(d2 / nu)
        )
        a[:, j] = half
        b[:, j] = 0.5 * d2 + 0.5 * nu
    row_max = log_rho.max(axis=1)
    dead = ~np.isfinite(row_max)
    if np.any(dead):
        raise NumericalFailure(
            f"every component vanished for row {int(np.flatnonzero(dead)[0])}"
        )
    shifted = np.exp(log_rho - row_max[:, None])
    r = shifted / shifted.sum(axis=1, keepdims=True)
    return Responsibilities(r=r, a=a, b=b)


def statistics(points, resp):
    """Responsibility-weighted counts, scale-weighted means and scatters."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = x.shape
    k = resp.n_components
    zeta = resp.r * (resp.a / resp.b)  # <z> <1/u>
    counts = resp.r.sum(axis=0)
    omega = zeta.sum(axis=0)
    xbar = np.zeros((k, d))
    scatter = np.zeros((k, d, d))
    for j in range(k):
        if omega[j] <= 0.0:
            continue
        xbar[j] = zeta[:, j] @ x / omega[j]
        dev = x - xbar[j]
        s = (zeta[:, j] * dev.T) @ dev / omega[j]
        scatter[j] = 0.5 * (s + s.T)
    return LatentStatistics(N=counts, omega=omega, xbar=xbar, S=scatter)


def m_step(points, resp, prior):
    """Parameter update: closed-form posterior refresh from the statistics.

    A component with zero scale-weighted mass keeps the prior values so the
    update never divides by zero. The shared degrees of freedom are read
    back from the inverse-gamma shape (``nu = 2 a - dim``).
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    d = x.shape[1]
    stats = statistics(points, resp)
    out = []
    for j in range(resp.n_components):
        nu = 2.0 * float(resp.a[0, j]) - d if resp.r.size else prior.nu_fixed
        if stats.omega[j] <= 0.0:
            out.append(
                ComponentPosterior(
                    alpha=prior.alpha0,
                    beta=prior.beta0,
                    m=prior.m0,
                    W=prior.W0,
                    eta=prior.eta0,
                    nu=nu,
                )
            )
            continue
        count = stats.N[j]
        omega = stats.omega[j]
        xbar = stats.xbar[j]
        beta = prior.beta0 + omega
        m = (omega * xbar + prior.beta0 * prior.m0) / beta
        offset = xbar - prior.m0
        w = (
            prior.W0
            + omega * stats.S[j]
            + (prior.beta0 * omega / beta) * np.outer(offset, offset)
        )
        out.append(
            ComponentPosterior(
                alpha=prior.alpha0 + count,
                beta=beta,
                m=m,
                W=0.5 * (w + w.T),
                eta=prior.eta0 + count,
                nu=nu,
            )
        )
    return out


def _check_finite(term, name):
    if not np.isfinite(term):
        raise NumericalFailure(f"ELBO term {name!r} is not finite ({term!r})")
    return term


def elbo(points, resp, posteriors, prior):
    """Evidence lower bound of one class under the current posteriors.

    Assembled from five pieces: the expected data log-likelihood, the
    expected latent prior, the expected parameter prior, and the negative
    entropies of the latent and parameter posteriors. With no data and
    posteriors equal to the prior every piece cancels and the bound is 0.
    """
    comps = tuple(posteriors)
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if resp.r.shape[0] == 0:
        n = 0
        d = prior.dim
    else:
        n, d = x.shape
    k = len(comps)
    alpha = np.array([c.alpha for c in comps])
    beta = np.array([c.beta for c in comps])
    eta = np.array([c.eta for c in comps])
    nu = np.array([c.nu for c in comps])
    alpha_hat = float(alpha.sum())

    lpi = np.array([digamma(av) - digamma(alpha_hat) for av in alpha])
    lsig = np.empty(k)
    quad_prior = np.empty(k)  # eta_k (m_k - m0)' W_k^{-1} (m_k - m0)
    tr_prior = np.empty(k)  # tr(W0 W_k^{-1})
    logdet_w = np.empty(k)
    d2 = np.empty((n, k))
    for j, comp in enumerate(comps):
        lsig[j], f = _log_sigma_tilde(comp)
        logdet_w[j] = log_det(f)
        quad_prior[j] = comp.eta * mahalanobis_sq(comp.m, prior.m0, f)
        tr_prior[j] = float(np.trace(cho_solve((f.lower, True), prior.W0)))
        if n:
            d2[:, j] = comp.dim / comp.beta + comp.eta * mahalanobis_sq_batch(
                x, comp.m, f
            )

    if n:
        r = resp.r
        a = resp.a
        b = resp.b
        e_inv_u = a / b
        # a is constant down each column, so digamma is evaluated per column
        psi_a = np.array([digamma(float(a[0, j])) for j in range(k)])
        e_log_u = np.log(b) - psi_a[None, :]
        counts = r.sum(axis=0)

        log_lik = float(
            np.sum(
                r
                * (
                    -0.5 * d * _LOG_2PI
                    - 0.5 * d * e_log_u
                    - 0.5 * lsig[None, :]
                    - 0.5 * e_inv_u * d2
                )
            )
        )
        half_nu = 0.5 * nu
        lg_half_nu = np.array([log_gamma(v) for v in half_nu])
        latent_prior = float(counts @ lpi) + float(
            np.sum(
                r
                * (
                    (half_nu * np.log(half_nu) - lg_half_nu)[None, :]
                    - (half_nu + 1.0)[None, :] * e_log_u
                    - half_nu[None, :] * e_inv_u
                )
            )
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            rlogr = np.where(r > 0.0, r * np.log(np.where(r > 0.0, r, 1.0)), 0.0)
        lg_a = np.array([log_gamma(float(a[0, j])) for j in range(k)])
        latent_entropy = -float(np.sum(rlogr)) - float(
            np.sum(
                r
                * (
                    a * np.log(b)
                    - lg_a[None, :]
                    - (a + 1.0) * e_log_u
                    - a
                )
            )
        )
    else:
        log_lik = 0.0
        latent_prior = 0.0
        latent_entropy = 0.0

    ld_w0 = log_det(cholesky(prior.W0))
    lgd_eta0 = multivariate_log_gamma(0.5 * prior.eta0, d)
    param_prior = (
        log_gamma(k * prior.alpha0)
        - k * log_gamma(prior.alpha0)
        + (prior.alpha0 - 1.0) * float(lpi.sum())
    )
    param_prior += float(
        np.sum(
            -0.5 * d * _LOG_2PI
            + 0.5 * d * math.log(prior.beta0)
            - 0.5 * lsig
            - 0.5 * prior.beta0 * (d / beta + quad_prior)
            + 0.5 * prior.eta0 * ld_w0
            - 0.5 * prior.eta0 * d * math.log(2.0)
            - lgd_eta0
            - 0.5 * (prior.eta0 + d + 1.0) * lsig
            - 0.5 * eta * tr_prior
        )
    )

    lg_alpha = np.array([log_gamma(v) for v in alpha])
    lgd_eta = np.array([multivariate_log_gamma(0.5 * v, d) for v in eta])
    param_entropy = -(
        log_gamma(alpha_hat) - float(lg_alpha.sum()) + float((alpha - 1.0) @ lpi)
    )
    param_entropy -= float(
        np.sum(
            -0.5 * d * _LOG_2PI
            + 0.5 * d * np.log(beta)
            - 0.5 * lsig
            - 0.5 * d
            + 0.5 * eta * logdet_w
            - 0.5 * eta * d * math.log(2.0)
            - lgd_eta
            - 0.5 * (eta + d + 1.0) * lsig
            - 0.5 * eta * d
        )
    )

    _check_finite(log_lik, "log_likelihood")
    _check_finite(latent_prior, "latent_prior")
    _check_finite(param_prior, "param_prior")
    _check_finite(latent_entropy, "latent_entropy")
    _check_finite(param_entropy, "param_entropy")
    return log_lik + latent_prior + param_prior + latent_entropy + param_entropy


def _drop_components(resp, keep):
    r = resp.r[:, keep]
    rows = r.sum(axis=1, keepdims=True)
    r = r / rows
    return Responsibilities(r=r, a=resp.a[:, keep], b=resp.b[:, keep])


def prune(posteriors, resp, threshold):
    """Remove components whose effective count fell below ``threshold``.

    Responsibilities are renormalized per row. Refuses to prune the last
    component: if no component clears the threshold an error is raised.
    """
    comps = tuple(posteriors)
    counts = resp.effective_counts
    keep = counts >= threshold
    if not keep.any():
        raise ValueError(
            "refusing to prune every component; at least one effective count "
            "must reach the threshold"
        )
    if keep.all():
        return comps, resp
    kept = tuple(c for c, flag in zip(comps, keep) if flag)
    return kept, _drop_components(resp, keep)


def _init_responsibilities(x, k, nu, rng, strategy):
    n, d = x.shape
    if k == 1:
        r = np.ones((n, 1))
    elif strategy == "random-responsibility":
        r = rng.dirichlet(np.ones(k), size=n)
    else:  # kmeans-like: hard assignment to the nearest of k random centers
        centers = x[rng.choice(n, size=k, replace=False)]  # k <= n by construction
        dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = dist.argmin(axis=1)
        r = np.zeros((n, k))
        r[np.arange(n), labels] = 1.0
    # unit-mean latent scales at initialization, with the shape already at
    # its fixed-point value so the shared nu can be read back as 2a - dim
    a = np.full((n, r.shape[1]), 0.5 * (nu + d))
    return Responsibilities(r=r, a=a, b=a.copy())


def _fit_class(x, prior, config, nu, class_id, rng, sink=None):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    if n == 0:
        raise ValueError(f"class {class_id} has no training rows")
    k0 = min(prior.k_init, max(n, 1))
    resp = _init_responsibilities(x, k0, nu, rng, config.init_strategy)
    posteriors = m_step(x, resp, prior)
    trace = []
    converged = False
    for iteration in range(1, config.max_iters + 1):
        resp = e_step(x, posteriors)
        posteriors = m_step(x, resp, prior)
        counts = resp.effective_counts
        keep = counts >= config.prune_threshold
        if not keep.any():
            keep[int(np.argmax(counts))] = True
        if not keep.all():
            resp = _drop_components(resp, keep)
            posteriors = m_step(x, resp, prior)
        bound = elbo(x, resp, posteriors, prior)
        trace.append(bound)
        if sink is not None:
            sink(
                f"class={class_id} iter={iteration} elbo={bound:.10g} "
                f"components={len(posteriors)}"
            )
        if len(trace) >= 2:
            prev = trace[-2]
            if abs(bound - prev) <= config.elbo_rel_tol * max(abs(bound), 1e-12):
                converged = True
                break
    return ClassModel(
        class_id=class_id,
        components=tuple(posteriors),
        alpha_hat=sum(c.alpha for c in posteriors),
        elbo_trace=tuple(trace),
        n_pruned=k0 - len(posteriors),
        converged=converged,
    )


def _class_log_prior(counts, mode):
    counts = np.asarray(counts, dtype=float)
    c = counts.shape[0]
    if mode == "uniform":
        return np.full(c, -math.log(c))
    if mode == "empirical":
        return np.log(counts / counts.sum())
    raise ValueError(f"unknown class_prior mode {mode!r}")


def fit(data, prior, config=None, class_prior="uniform", log_sink=None, threads=1):
    """Train one class model per distinct label and assemble a classifier.

    Deterministic for a fixed ``config.seed``: each class draws its
    initialization from an independent seeded stream, so results do not
    depend on ``threads``. A class that fails to converge within
    ``max_iters`` is returned with ``converged=False`` rather than raising.

    ``log_sink``, when given, receives one line per iteration per class
    (class id, iteration, bound, live component count).
    """
    config = config or VbConfig()
    class_ids = sorted(int(v) for v in np.unique(data.labels))
    if not class_ids:
        raise ValueError("training data has no rows")
    jobs = []
    for idx, cid in enumerate(class_ids):
        rows = data.features[data.labels == cid]
        rng = np.random.default_rng([config.seed, idx])
        jobs.append((cid, rows, rng))

    def run(job):
        cid, rows, rng = job
        lines = []
        collector = lines.append if log_sink is not None else None
        cm = _fit_class(rows, prior, config, prior.nu_fixed, cid, rng, sink=collector)
        return cm, lines

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    classes = []
    for cm, lines in results:
        classes.append(cm)
        if log_sink is not None:
            for line in lines:
                log_sink(line)
    counts = [int(np.sum(data.labels == cid)) for cid in class_ids]
    return TrainedClassifier(
        classes=tuple(classes),
        class_log_prior=_class_log_prior(counts, class_prior),
        dim=data.dim,
        prior=prior,
    )


def fit_ml_nu(
    data,
    prior,
    config=None,
    class_prior="uniform",
    nu_bounds=(0.05, 1000.0),
    coarse_points=25,
    threads=1,
):
    """Experimental mode: per-class degrees of freedom by likelihood search.

    For each class, runs the variational fit across a logarithmic grid of
    ``nu`` values and refines the best one with a bounded scalar search,
    scoring each candidate by the converged evidence lower bound (the
    variational stand-in for the log marginal likelihood). Selecting ``nu``
    this way is known to hurt generalization relative to a shared value;
    the mode exists to reproduce that comparison, not for production use.
    """
    config = config or VbConfig()
    class_ids = sorted(int(v) for v in np.unique(data.labels))
    lo, hi = nu_bounds
    grid = np.geomspace(lo, hi, coarse_points)

    def best_fit_for(idx, cid):
        rows = data.features[data.labels == cid]

        def fit_at(nu):
            rng = np.random.default_rng([config.seed, idx])
            return _fit_class(rows, prior, config, float(nu), cid, rng)

        scores = [fit_at(nu).elbo_trace[-1] for nu in grid]
        j = int(np.argmax(scores))
        left = grid[max(j - 1, 0)]
        right = grid[min(j + 1, len(grid) - 1)]
        if right > left:
            res = minimize_scalar(
                lambda t: -fit_at(math.exp(t)).elbo_trace[-1],
                bounds=(math.log(left), math.log(right)),
                method="bounded",
                options={"xatol": 1e-3},
            )
            nu_best = math.exp(res.x)
            if -res.fun < scores[j]:
                nu_best = grid[j]
        else:
            nu_best = grid[j]
        return fit_at(nu_best)

    jobs = list(enumerate(class_ids))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            classes = list(pool.map(lambda jc: best_fit_for(*jc), jobs))
    else:
        classes = [best_fit_for(idx, cid) for idx, cid in jobs]
    counts = [int(np.sum(data.labels == cid)) for cid in class_ids]
    return TrainedClassifier(
        classes=tuple(classes),
        class_log_prior=_class_log_prior(counts, class_prior),
        dim=data.dim,
        prior=prior,
    )
