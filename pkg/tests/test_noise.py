import numpy as np
import pytest

from lemon.dataset import write_dataset, load_dataset
from lemon.errors import UsageError, ValidationError
from lemon.noise import (
    NoiseSpec,
    cyclic_permutation,
    fallback_noun_tokens,
    inject,
    inject_asymmetric_flip,
    inject_category_swap,
    inject_noun_swap,
    inject_random_swap,
    inject_symmetric_flip,
)

from conftest import make_dataset, random_paired_dataset


def spec(noise_type, rate, seed=3, **kw):
    return NoiseSpec(noise_type=noise_type, rate=rate, seed=seed, **kw)


def flagged(ds):
    return [r for r in ds.records if r.mislabel_flag]


def test_random_swap_flag_count(rng):
    ds = random_paired_dataset(rng, n=10, dim=4)
    out = inject_random_swap(ds, spec("random", 0.4))
    assert len(flagged(out)) == 4


def test_random_swap_rate_zero(rng):
    ds = random_paired_dataset(rng, n=10, dim=4)
    out = inject_random_swap(ds, spec("random", 0.0))
    assert len(flagged(out)) == 0
    assert out.text_embeddings.tobytes() == ds.text_embeddings.tobytes()
    assert all(r.mislabel_flag is False for r in out.records)


def test_random_swap_copies_donor_row_bit_exact(rng):
    ds = random_paired_dataset(rng, n=20, dim=4)
    out = inject_random_swap(ds, spec("random", 0.5))
    for rec in flagged(out):
        assert rec.swap_source is not None and rec.swap_source != rec.index
        assert (
            out.text_embeddings[rec.index].tobytes()
            == ds.text_embeddings[rec.swap_source].tobytes()
        )
        assert rec.caption_text == ds.records[rec.swap_source].caption_text


def test_noise_is_deterministic(rng, tmp_path):
    ds = random_paired_dataset(rng, n=30, dim=4)
    a = inject_random_swap(ds, spec("random", 0.3, seed=77))
    b = inject_random_swap(ds, spec("random", 0.3, seed=77))
    write_dataset(a, tmp_path / "a")
    write_dataset(b, tmp_path / "b")
    for name in ("image_emb.f32", "text_emb.f32", "records.jsonl", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_image_side_never_touched(rng):
    ds = random_paired_dataset(rng, n=24, dim=4)
    for noised in (
        inject_random_swap(ds, spec("random", 0.5)),
        inject_noun_swap(ds, spec("noun", 0.25)),
    ):
        assert noised.image_embeddings.tobytes() == ds.image_embeddings.tobytes()


def test_unflagged_rows_unchanged_except_flag(rng):
    ds = random_paired_dataset(rng, n=20, dim=4)
    out = inject_random_swap(ds, spec("random", 0.4))
    for before, after in zip(ds.records, out.records):
        if not after.mislabel_flag:
            assert after.caption_text == before.caption_text
            assert after.swap_source is None
            assert (
                out.text_embeddings[after.index].tobytes()
                == ds.text_embeddings[before.index].tobytes()
            )


def test_category_swap_stays_in_category(rng):
    cats = ["a"] * 5 + ["b"] * 5
    ds = random_paired_dataset(rng, n=10, dim=4)
    ds = make_dataset(ds.image_embeddings, ds.text_embeddings, categories=cats)
    out = inject_category_swap(ds, spec("cat", 0.4))
    assert len(flagged(out)) == 4
    for rec in flagged(out):
        assert ds.records[rec.swap_source].category == ds.records[rec.index].category


def test_category_swap_singleton_errors(rng):
    cats = ["solo"] + ["b"] * 5
    ds = random_paired_dataset(rng, n=6, dim=4)
    ds = make_dataset(ds.image_embeddings, ds.text_embeddings, categories=cats)
    with pytest.raises(ValidationError, match="solo"):
        inject_category_swap(ds, spec("cat", 1.0))


def test_category_swap_two_member_category_rate_one(rng):
    cats = ["a", "a"]
    ds = random_paired_dataset(rng, n=2, dim=4)
    ds = make_dataset(ds.image_embeddings, ds.text_embeddings, categories=cats)
    out = inject_category_swap(ds, spec("cat", 1.0))
    # self-avoidance forces the two members to take each other's captions
    assert out.records[0].swap_source == 1
    assert out.records[1].swap_source == 0


def test_noun_swap_requires_shared_noun():
    img = np.eye(3, dtype=np.float32) + 0.1
    txt = np.eye(3, dtype=np.float32) + 0.2
    ds = make_dataset(
        img, txt,
        captions=["a red car", "the car parked", "a blue sky"],
        noun_sets=[{"car"}, {"car"}, {"sky"}],
    )
    out = inject_noun_swap(ds, spec("noun", 0.34, seed=1))
    for rec in flagged(out):
        assert rec.index in (0, 1)
        assert rec.swap_source == (1 - rec.index)


def test_noun_swap_empty_noun_set_never_selected(rng):
    img = rng.standard_normal((4, 3)).astype(np.float32)
    txt = rng.standard_normal((4, 3)).astype(np.float32)
    ds = make_dataset(img, txt, noun_sets=[{"dog"}, {"dog"}, set(), {"dog"}])
    for seed in range(6):
        out = inject_noun_swap(ds, spec("noun", 0.75, seed=seed))
        for rec in flagged(out):
            assert rec.index != 2
            assert rec.swap_source != 2


def test_noun_swap_bulk_intersection_property(rng):
    n = 100
    vocab = [f"noun{i}" for i in range(12)]
    noun_sets = [
        {vocab[int(i)] for i in rng.choice(12, size=int(rng.integers(1, 4)), replace=False)}
        for _ in range(n)
    ]
    img = rng.standard_normal((n, 4)).astype(np.float32)
    txt = rng.standard_normal((n, 4)).astype(np.float32)
    ds = make_dataset(img, txt, noun_sets=noun_sets)
    out = inject_noun_swap(ds, spec("noun", 0.4, seed=11))
    assert len(flagged(out)) == 40
    for rec in flagged(out):
        assert noun_sets[rec.index] & noun_sets[rec.swap_source]


def test_noun_swap_no_donors_errors(rng):
    img = rng.standard_normal((3, 3)).astype(np.float32)
    txt = rng.standard_normal((3, 3)).astype(np.float32)
    ds = make_dataset(img, txt, noun_sets=[{"a"}, {"b"}, {"c"}])
    with pytest.raises(ValidationError, match="no record has an eligible donor"):
        inject_noun_swap(ds, spec("noun", 0.4))


def test_noun_swap_shortfall_reported(rng):
    # only two records can pair up; requesting three flags falls short
    img = rng.standard_normal((6, 3)).astype(np.float32)
    txt = rng.standard_normal((6, 3)).astype(np.float32)
    ds = make_dataset(img, txt, noun_sets=[{"x"}, {"x"}, {"q"}, {"r"}, {"s"}, {"t"}])
    out = inject_noun_swap(ds, spec("noun", 0.5, seed=2))
    assert len(flagged(out)) == 2
    assert out.manifest["noise"]["requested"] == 3
    assert out.manifest["noise"]["flagged"] == 2


def test_fallback_tokenizer():
    toks = fallback_noun_tokens("A red car on the road")
    assert "car" in toks and "road" in toks
    assert "the" not in toks and "a" not in toks


def test_symmetric_flip_two_classes(rng):
    ds = random_paired_dataset(rng, n=10, dim=4, with_classes=True, n_classes=2)
    out = inject_symmetric_flip(ds, spec("symmetric", 0.4), num_classes=2)
    for rec in flagged(out):
        old = ds.records[rec.index].class_id
        assert rec.class_id == 1 - old


def test_symmetric_flip_changes_class_and_canonical_text(rng):
    ds = random_paired_dataset(rng, n=40, dim=4, with_classes=True, n_classes=5)
    out = inject_symmetric_flip(ds, spec("symmetric", 0.5), num_classes=5)
    exemplars = {}
    for rec in ds.records:
        exemplars.setdefault(rec.class_id, rec.index)
    for rec in flagged(out):
        assert rec.class_id != ds.records[rec.index].class_id
        src = exemplars[rec.class_id]
        assert rec.swap_source == src
        assert (
            out.text_embeddings[rec.index].tobytes() == ds.text_embeddings[src].tobytes()
        )


def test_symmetric_flip_uniform_over_wrong_classes(rng):
    # 10k flips over 10 classes: each wrong class should get about 1/9
    n = 10000
    image = rng.standard_normal((n, 3)).astype(np.float32)
    text = rng.standard_normal((n, 3)).astype(np.float32)
    ds = make_dataset(image, text, class_ids=np.zeros(n, dtype=int))
    # exemplar records for the other classes
    extra_img = rng.standard_normal((9, 3)).astype(np.float32)
    extra_txt = rng.standard_normal((9, 3)).astype(np.float32)
    full = make_dataset(
        np.vstack([image, extra_img]),
        np.vstack([text, extra_txt]),
        class_ids=list(np.zeros(n, dtype=int)) + list(range(1, 10)),
        splits=["train"] * n + ["val"] * 9,
    )
    out = inject_symmetric_flip(full, spec("symmetric", 1.0, seed=5), num_classes=10)
    counts = np.zeros(10)
    for rec in out.records:
        if rec.mislabel_flag:
            counts[rec.class_id] += 1
    assert counts[0] == 0
    expected = n / 9
    sd = np.sqrt(n * (1 / 9) * (8 / 9))
    for c in range(1, 10):
        assert abs(counts[c] - expected) <= 3 * sd


def test_symmetric_flip_needs_two_classes(rng):
    ds = random_paired_dataset(rng, n=10, dim=3, with_classes=True, n_classes=1)
    with pytest.raises(UsageError, match="num_classes"):
        inject_symmetric_flip(ds, spec("symmetric", 0.2), num_classes=1)


def test_asymmetric_flip_cyclic(rng):
    ds = random_paired_dataset(rng, n=30, dim=4, with_classes=True, n_classes=10)
    perm = cyclic_permutation(10)
    out = inject_asymmetric_flip(ds, spec("asymmetric", 0.4, class_permutation=perm))
    for rec in flagged(out):
        assert rec.class_id == (ds.records[rec.index].class_id + 1) % 10


def test_asymmetric_identity_rejected(rng):
    ds = random_paired_dataset(rng, n=10, dim=4, with_classes=True, n_classes=3)
    identity = {c: c for c in range(3)}
    with pytest.raises(ValidationError, match="fixed"):
        inject_asymmetric_flip(ds, spec("asymmetric", 0.3, class_permutation=identity))


def test_inject_dispatch_and_roundtrip(rng, tmp_path):
    ds = random_paired_dataset(rng, n=20, dim=4, with_classes=True, n_classes=4)
    out = inject(ds, spec("symmetric", 0.25))
    write_dataset(out, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back.manifest["noise"]["type"] == "symmetric"
    assert len(flagged(back)) == 5
