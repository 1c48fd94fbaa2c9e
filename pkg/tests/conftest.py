import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lemon.dataset import Dataset, SampleRecord


def make_dataset(
    image: np.ndarray,
    text: np.ndarray,
    splits=None,
    class_ids=None,
    categories=None,
    noun_sets=None,
    captions=None,
    flags=None,
) -> Dataset:
    """Assemble an in-memory dataset from plain arrays."""
    n = image.shape[0]
    records = []
    for i in range(n):
        records.append(
            SampleRecord(
                index=i,
                caption_text=captions[i] if captions is not None else f"caption {i}",
                class_id=None if class_ids is None else int(class_ids[i]),
                category=None if categories is None else str(categories[i]),
                noun_set=None if noun_sets is None else frozenset(noun_sets[i]),
                split=splits[i] if splits is not None else "train",
                mislabel_flag=None if flags is None else bool(flags[i]),
            )
        )
    ds = Dataset(
        image_embeddings=np.asarray(image, dtype=np.float32),
        text_embeddings=np.asarray(text, dtype=np.float32),
        records=records,
        manifest={"name": "test", "encoder_id": "none", "seed": 0},
    )
    ds.validate()
    return ds


def random_paired_dataset(rng, n=40, dim=6, splits=None, with_classes=False, n_classes=5):
    image = rng.standard_normal((n, dim)).astype(np.float32)
    text = rng.standard_normal((n, dim)).astype(np.float32)
    class_ids = rng.integers(n_classes, size=n) if with_classes else None
    return make_dataset(image, text, splits=splits, class_ids=class_ids)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
