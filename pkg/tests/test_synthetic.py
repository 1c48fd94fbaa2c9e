import numpy as np
import pytest

from lemon.dataset import write_dataset
from lemon.errors import UsageError
from lemon.geometry import knn_query
from lemon.metrics import auroc
from lemon.noise import NoiseSpec, inject_random_swap
from lemon.scoring import score_split
from lemon.synthetic import GeneratorSpec, generate
from lemon.tuning import lemon_fix_params


def test_generation_deterministic(tmp_path):
    spec = GeneratorSpec(n_clusters=3, samples_per_cluster=10, dim=8, seed=42)
    a, b = generate(spec), generate(spec)
    assert a.image_embeddings.tobytes() == b.image_embeddings.tobytes()
    assert a.text_embeddings.tobytes() == b.text_embeddings.tobytes()
    assert a.records == b.records
    write_dataset(a, tmp_path / "a")
    write_dataset(b, tmp_path / "b")
    assert (tmp_path / "a" / "records.jsonl").read_bytes() == (tmp_path / "b" / "records.jsonl").read_bytes()


def test_zero_image_noise_gives_identical_rows():
    spec = GeneratorSpec(n_clusters=2, samples_per_cluster=5, dim=8, image_noise_sd=0.0, seed=1)
    ds = generate(spec)
    for c in (0, 1):
        rows = [r.index for r in ds.records if r.class_id == c]
        first = ds.image_embeddings[rows[0]]
        for i in rows[1:]:
            assert np.array_equal(ds.image_embeddings[i], first)


def test_splits_are_80_10_10():
    spec = GeneratorSpec(n_clusters=4, samples_per_cluster=50, dim=8, seed=0)
    ds = generate(spec)
    counts = {"train": 0, "val": 0, "test": 0}
    for r in ds.records:
        counts[r.split] += 1
    assert counts == {"train": 160, "val": 20, "test": 20}


def test_neighbors_stay_in_cluster_when_separated():
    spec = GeneratorSpec(
        n_clusters=2, samples_per_cluster=20, dim=16, seed=5,
        cluster_separation=1.3, image_noise_sd=0.01, text_noise_sd=0.01,
    )
    ds = generate(spec)
    img = ds.image_embeddings.astype(np.float64)
    member = np.array([r.class_id for r in ds.records])
    for q in range(0, 40, 7):
        out = knn_query(img, img[q], k=5, metric="cosine", exclude=q)
        assert (member[out.indices] == member[q]).all()


def test_generator_validation():
    with pytest.raises(UsageError):
        GeneratorSpec(n_clusters=1).validate()
    with pytest.raises(UsageError):
        GeneratorSpec(dim=1).validate()
    with pytest.raises(UsageError):
        GeneratorSpec(image_noise_sd=-0.1).validate()


def test_zero_noise_regime_detection_is_perfect():
    # with no within-cluster noise and no alignment noise, every swap that
    # lands in a different cluster is strictly separated from every clean
    # sample; swaps that happen to draw a same-cluster donor reproduce the
    # correct caption bit-for-bit and are excluded as non-errors
    spec = GeneratorSpec(
        n_clusters=10, samples_per_cluster=40, dim=16, seed=3,
        cluster_separation=1.2, image_noise_sd=0.0, text_noise_sd=0.0,
        mm_alignment_noise_sd=0.0,
    )
    ds = generate(spec)
    noised = inject_random_swap(
        ds, NoiseSpec(noise_type="random", rate=0.4, seed=21, split="train")
    )
    cluster = {r.index: r.class_id for r in ds.records}
    table = score_split(noised, "train", "train", "lemon", lemon_fix_params(), threads=2)
    scores = {r.index: r.score for r in table.rows}
    cross, clean = [], []
    for r in noised.records:
        if r.split != "train":
            continue
        if r.mislabel_flag:
            if cluster[r.swap_source] != cluster[r.index]:
                cross.append(scores[r.index])
        else:
            clean.append(scores[r.index])
    assert len(cross) >= 100
    assert auroc(cross + clean, [1] * len(cross) + [0] * len(clean)) == 1.0
    assert min(cross) > max(clean)
