import numpy as np
import pytest

from reanno.datastore import Datastore, EmbeddingRecord, LabelSpace


def make_store(vectors, labels, label_names=None, dim=None):
    vectors = np.asarray(vectors, dtype=np.float32)
    dim = dim or vectors.shape[1]
    if label_names is None:
        label_names = tuple(f"L{i}" for i in range(max(labels) + 1))
    records = [
        EmbeddingRecord(f"id{i:03d}", vectors[i], int(labels[i]))
        for i in range(len(labels))
    ]
    return Datastore(dim=dim, records=records, labels=LabelSpace(tuple(label_names)))


@pytest.fixture
def two_cluster_store():
    """Two tight clusters on the x axis, labels 0 (left) and 1 (right)."""
    rng = np.random.default_rng(42)
    left = rng.normal(size=(20, 4)) * 0.1 + np.array([-3, 0, 0, 0])
    right = rng.normal(size=(20, 4)) * 0.1 + np.array([3, 0, 0, 0])
    vectors = np.vstack([left, right])
    labels = [0] * 20 + [1] * 20
    return make_store(vectors, labels)
