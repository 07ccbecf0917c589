"""Regenerates the HDBSCAN reference fixtures with scikit-learn.

Each fixture holds Gaussian blob points plus the partition produced by
sklearn.cluster.HDBSCAN(min_cluster_size=5) with default settings
(min_samples = min_cluster_size, excess-of-mass selection).

    python3 generate.py
"""
import json

import numpy as np
import sklearn
from sklearn.cluster import HDBSCAN

MIN_CLUSTER_SIZE = 5


def blobs(rng, n_blobs, dim):
    centers = rng.uniform(-10.0, 10.0, size=(n_blobs, dim))
    sizes = rng.integers(40, 500 // n_blobs + 1, size=n_blobs)
    sigma = rng.uniform(0.3, 0.8)
    parts = [c + sigma * rng.standard_normal((s, dim)) for c, s in zip(centers, sizes)]
    return np.vstack(parts)


def main():
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        n_blobs = 2 + seed % 4
        dim = [2, 3, 5, 10][seed % 4]
        x = blobs(rng, n_blobs, dim)
        x = np.round(x[rng.permutation(len(x))], 6)
        labels = HDBSCAN(min_cluster_size=MIN_CLUSTER_SIZE).fit_predict(x)
        out = {
            "seed": 1000 + seed,
            "n_blobs": n_blobs,
            "min_cluster_size": MIN_CLUSTER_SIZE,
            "reference": f"sklearn {sklearn.__version__}",
            "points": x.tolist(),
            "labels": [int(l) for l in labels],
        }
        with open(f"blobs_{seed:02d}.json", "w") as f:
            json.dump(out, f)
        print(seed, len(x), dim, n_blobs, sorted(set(labels.tolist())), int((labels == -1).sum()))

    rng = np.random.default_rng(7)
    two = np.vstack([0.1 * rng.standard_normal((100, 2)), [10.0, 0.0] + 0.1 * rng.standard_normal((100, 2))])
    cube = rng.uniform(0.0, 1.0, size=(50, 3))
    for name, x in (("two_blobs", two), ("uniform_cube", cube)):
        x = np.round(x, 6)
        labels = HDBSCAN(min_cluster_size=MIN_CLUSTER_SIZE).fit_predict(x)
        with open(f"{name}.json", "w") as f:
            json.dump({"seed": 7, "min_cluster_size": MIN_CLUSTER_SIZE,
                       "reference": f"sklearn {sklearn.__version__}",
                       "points": x.tolist(), "labels": [int(l) for l in labels]}, f)
        print(name, sorted(set(labels.tolist())), int((labels == -1).sum()))


if __name__ == "__main__":
    main()
