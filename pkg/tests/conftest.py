import numpy as np
import pytest

from scalemix.data import FeatureDataset
from scalemix.model import ClassModel, ComponentPosterior


def make_student_class(mu, sigma, nu, class_id=1, weight_counts=None):
    """ClassModel whose plug-in predictive is exactly Student-t(mu, sigma, nu).

    Uses a large eta so W / (eta - dim - 1) reproduces sigma to full
    precision, with the Dirichlet weights set from ``weight_counts``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = mu.shape[0]
    counts = weight_counts if weight_counts is not None else [1.0]
    comps = []
    for count in counts:
        eta = d + 1.0 + 4096.0
        comps.append(
            ComponentPosterior(
                alpha=count, beta=1.0, m=mu, W=sigma * 4096.0, eta=eta, nu=nu
            )
        )
    return ClassModel(
        class_id=class_id,
        components=tuple(comps),
        alpha_hat=float(sum(counts)),
        elbo_trace=(0.0,),
        n_pruned=0,
    )


def make_mixture_class(mus, sigmas, nus, counts, class_id=1):
    """ClassModel with several components, each an exact Student-t."""
    comps = []
    for mu, sigma, nu, count in zip(mus, sigmas, nus, counts):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        d = mu.shape[0]
        comps.append(
            ComponentPosterior(
                alpha=float(count), beta=1.0, m=mu, W=sigma * 4096.0,
                eta=d + 1.0 + 4096.0, nu=float(nu),
            )
        )
    return ClassModel(
        class_id=class_id,
        components=tuple(comps),
        alpha_hat=float(sum(counts)),
        elbo_trace=(0.0,),
        n_pruned=0,
    )


def two_blob_dataset(seed, n_per_class=200, centers=((0.0, 0.0), (4.0, 4.0)), scale=0.7):
    rng = np.random.default_rng(seed)
    feats = []
    labels = []
    for cid, ctr in enumerate(centers, start=1):
        feats.append(rng.standard_normal((n_per_class, len(ctr))) * scale + np.asarray(ctr))
        labels.extend([cid] * n_per_class)
    feats = np.vstack(feats)
    n = feats.shape[0]
    return FeatureDataset(
        features=feats,
        labels=np.asarray(labels),
        trials=np.ones(n, dtype=int),
        participants=np.ones(n, dtype=int),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
