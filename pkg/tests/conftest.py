import numpy as np
import pytest

from fewprobe.core import EmbeddingSet, LabelledSample


def make_blobs(d: int, n_per_class: int, seed: int = 0,
               separation: float = 2.0, scale: float = 0.4
               ) -> tuple[EmbeddingSet, list[LabelledSample]]:
    """Two Gaussian blobs projected onto the unit sphere."""
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    vectors = {}
    samples = []
    for k in (0, 1):
        center = (k - 0.5) * separation * direction
        for j in range(n_per_class):
            sid = f"blob-c{k}-{j:04d}"
            vectors[sid] = center + scale * rng.standard_normal(d)
            samples.append(LabelledSample(sid, k))
    return EmbeddingSet.from_vectors(vectors), samples


@pytest.fixture
def blob_instance():
    return make_blobs(d=8, n_per_class=16, seed=1)
