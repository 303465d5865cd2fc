"""Seed plumbing and Haar-distributed orthogonal matrices.

Every stochastic routine in the package derives its generator through
`spawn_generator(seed, *key)`, so draw m of any batch depends only on
(seed, m) and never on execution order.
"""

from __future__ import annotations

import numpy as np


def spawn_generator(seed: int, *key: int) -> np.random.Generator:
    """Generator keyed by (seed, key); identical keys give identical streams."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def haar_orthogonal(rng: np.random.Generator, n: int, size: int | None = None) -> np.ndarray:
    """Draw from the uniform (Haar) distribution on the orthogonal group O(n).

    QR of a standard Gaussian matrix; fixing the signs of the R diagonal
    makes the factorization unique, which is what makes the law exactly
    rotation invariant rather than merely orthogonal-valued.

    Returns an (n, n) matrix, or (size, n, n) when size is given.
    """
    shape = (n, n) if size is None else (int(size), n, n)
    z = rng.standard_normal(shape)
    q, r = np.linalg.qr(z)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    d = np.where(d == 0.0, 1.0, d)
    return q * d[..., None, :]
