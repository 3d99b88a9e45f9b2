"""Random test inputs shared across test modules."""

import numpy as np


def random_discrete(rng, size: int, dim: int = 1, space=None):
    """Random DiscreteMeasure with ``size`` atoms and Dirichlet(1) weights."""
    from wassrates.measures import DiscreteMeasure

    w = rng.dirichlet(np.ones(size))
    w = w / w.sum()
    if space is not None:
        pts = rng.choice(space.k, size=size, replace=False)
        return DiscreteMeasure.from_atoms(pts, w, space=space, normalize=True)
    return DiscreteMeasure.from_atoms(rng.normal(size=(size, dim)), w, normalize=True)


def random_pd_with_det(rng, d: int, eps: float, count: int) -> np.ndarray:
    """``count`` symmetric PD d×d matrices with det ≥ eps, eigenvalues spread
    log-uniformly over [eps, 20] and a share pushed onto the det = eps boundary."""
    out = []
    while len(out) < count:
        lam = np.exp(rng.uniform(np.log(eps), np.log(20.0), d))
        if rng.random() < 0.3:
            lam = lam * (eps / np.prod(lam)) ** (1 / d) * (1 + 1e-12)
        if np.prod(lam) < eps:
            continue
        Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        out.append((Q * lam) @ Q.T)
    return np.array(out)
