import json

import numpy as np
import pytest

from lemon.dataset import (
    SampleRecord,
    ScoreBreakdown,
    ScoreRow,
    ScoreTable,
    load_dataset,
    read_scores,
    write_dataset,
    write_scores,
)
from lemon.errors import ValidationError

from conftest import make_dataset


def small_dataset():
    img = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]], dtype=np.float32)
    txt = np.array([[1.0, 0.1], [0.2, 1.0], [0.4, 0.6]], dtype=np.float32)
    return make_dataset(img, txt, splits=["train", "train", "val"])


def test_write_then_load_roundtrip(tmp_path):
    ds = small_dataset()
    write_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back.n == 3
    assert back.image_embeddings.tobytes() == ds.image_embeddings.tobytes()
    assert back.text_embeddings.tobytes() == ds.text_embeddings.tobytes()
    assert back.records == ds.records


def test_roundtrip_preserves_noise_fields(tmp_path):
    ds = small_dataset()
    recs = list(ds.records)
    recs[0] = SampleRecord(
        index=0,
        caption_text="swapped",
        split="train",
        mislabel_flag=True,
        swap_source=1,
        noun_set=frozenset({"car", "road"}),
    )
    recs[1] = SampleRecord(index=1, caption_text="clean", split="train", mislabel_flag=False)
    ds2 = ds.with_replaced(records=recs)
    write_dataset(ds2, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back.records[0].mislabel_flag is True
    assert back.records[0].swap_source == 1
    assert back.records[0].noun_set == frozenset({"car", "road"})
    assert back.records[1].mislabel_flag is False


def test_load_missing_file(tmp_path):
    ds = small_dataset()
    write_dataset(ds, tmp_path / "d")
    (tmp_path / "d" / "text_emb.f32").unlink()
    with pytest.raises(ValidationError, match="text_emb.f32"):
        load_dataset(tmp_path / "d")


def test_load_wrong_byte_length(tmp_path):
    ds = small_dataset()
    write_dataset(ds, tmp_path / "d")
    raw = (tmp_path / "d" / "image_emb.f32").read_bytes()
    (tmp_path / "d" / "image_emb.f32").write_bytes(raw[:-4])
    with pytest.raises(ValidationError, match="image_emb.f32"):
        load_dataset(tmp_path / "d")


def test_load_zero_row_names_row(tmp_path):
    ds = small_dataset()
    write_dataset(ds, tmp_path / "d")
    txt = np.frombuffer((tmp_path / "d" / "text_emb.f32").read_bytes(), dtype="<f4").copy()
    txt[2:4] = 0.0  # second row of a 2-dim matrix
    (tmp_path / "d" / "text_emb.f32").write_bytes(txt.tobytes())
    with pytest.raises(ValidationError, match="row 1"):
        load_dataset(tmp_path / "d")


def test_load_non_finite_rejected(tmp_path):
    ds = small_dataset()
    write_dataset(ds, tmp_path / "d")
    img = np.frombuffer((tmp_path / "d" / "image_emb.f32").read_bytes(), dtype="<f4").copy()
    img[0] = np.nan
    (tmp_path / "d" / "image_emb.f32").write_bytes(img.tobytes())
    with pytest.raises(ValidationError, match="non-finite"):
        load_dataset(tmp_path / "d")


def test_record_index_must_match_position(tmp_path):
    ds = small_dataset()
    write_dataset(ds, tmp_path / "d")
    lines = (tmp_path / "d" / "records.jsonl").read_text().splitlines()
    obj = json.loads(lines[1])
    obj["index"] = 7
    lines[1] = json.dumps(obj)
    (tmp_path / "d" / "records.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError, match="index 7"):
        load_dataset(tmp_path / "d")


def test_partial_flags_in_split_rejected(tmp_path):
    ds = small_dataset()
    recs = list(ds.records)
    recs[0] = SampleRecord(index=0, caption_text="x", split="train", mislabel_flag=True)
    # record 1 is train but has no flag
    with pytest.raises(ValidationError, match="mislabel_flag"):
        ds.with_replaced(records=recs).validate()


def test_swap_source_self_rejected():
    with pytest.raises(ValidationError, match="swap_source"):
        SampleRecord(index=3, swap_source=3).validate()


def test_write_to_unwritable_location(tmp_path):
    ds = small_dataset()
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    with pytest.raises(OSError):
        write_dataset(ds, blocker / "d")


def test_scores_roundtrip(tmp_path):
    table = ScoreTable(
        rows=[
            ScoreRow(index=0, method="lemon", score=0.123456789012345678,
                     breakdown=ScoreBreakdown(d_mm=0.1, s_n=0.2, s_m=0.3, s=0.123456789012345678)),
            ScoreRow(index=5, method="lemon", score=1e-300,
                     breakdown=ScoreBreakdown(d_mm=1e-300, s_n=0.0, s_m=0.0, s=1e-300)),
        ]
    )
    write_scores(table, tmp_path / "s.csv")
    back = read_scores(tmp_path / "s.csv")
    assert [r.index for r in back.rows] == [0, 5]
    assert back.rows[0].score == table.rows[0].score
    assert back.rows[1].score == 1e-300  # no underflow to zero
    assert back.rows[0].breakdown == table.rows[0].breakdown


def test_scores_baseline_rows_have_no_breakdown(tmp_path):
    table = ScoreTable(rows=[ScoreRow(index=0, method="clip-sim", score=0.5)])
    write_scores(table, tmp_path / "s.csv")
    text = (tmp_path / "s.csv").read_text().splitlines()
    assert text[0] == "index,method,score,d_mm,s_n,s_m"
    assert text[1].endswith(",,,")
    assert read_scores(tmp_path / "s.csv").rows[0].breakdown is None


def test_scores_duplicate_index_rejected(tmp_path):
    (tmp_path / "s.csv").write_text(
        "index,method,score,d_mm,s_n,s_m\n1,lemon,0.5,,,\n1,lemon,0.7,,,\n"
    )
    with pytest.raises(ValidationError, match="duplicate index"):
        read_scores(tmp_path / "s.csv")


def test_scores_malformed_rejected(tmp_path):
    (tmp_path / "s.csv").write_text("index,method,score,d_mm,s_n,s_m\nnope,lemon,x,,,\n")
    with pytest.raises(ValidationError):
        read_scores(tmp_path / "s.csv")
