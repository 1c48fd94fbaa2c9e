"""Synthetic label corruption with ground-truth flags.

Five generators: ``random`` (swap the caption with any other record's),
``cat`` (swap within the record's category), ``noun`` (swap with a record
sharing at least one noun), ``symmetric``/``asymmetric`` (class flips with
the class-name caption and its canonical embedding).

All generators copy text from donors without mutating them, flag exactly
floor(rate * n) records (noun may fall short and reports it), never touch
the image side, and are bit-deterministic for a fixed (dataset, spec).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, SampleRecord
from .errors import UsageError, ValidationError

log = logging.getLogger(__name__)

NOISE_TYPES = ("random", "cat", "noun", "symmetric", "asymmetric")

_STOPWORDS = frozenset(
    """a about above after again against all am an and any are aren't as at be because been
    before being below between both but by can't cannot could couldn't did didn't do does
    doesn't doing don't down during each few for from further had hadn't has hasn't have
    haven't having he he'd he'll he's her here here's hers herself him himself his how how's
    i i'd i'll i'm i've if in into is isn't it it's its itself let's me more most mustn't my
    myself no nor not of off on once only or other ought our ours ourselves out over own same
    shan't she she'd she'll she's should shouldn't so some such than that that's the their
    theirs them themselves then there there's these they they'd they'll they're they've this
    those through to too under until up very was wasn't we we'd we'll we're we've were weren't
    what what's when when's where where's which while who who's whom why why's with won't
    would wouldn't you you'd you'll you're you've your yours yourself yourselves""".split()
)


def fallback_noun_tokens(caption: str) -> frozenset[str]:
    """Cheap stand-in for part-of-speech tagging: lowercase content words."""
    tokens = re.split(r"[^a-z0-9']+", caption.lower())
    return frozenset(t for t in tokens if t and t not in _STOPWORDS)


@dataclass(frozen=True)
class NoiseSpec:
    noise_type: str
    rate: float
    seed: int
    split: str = "train"
    class_permutation: dict[int, int] | None = None

    def validate(self, n_split: int) -> None:
        if self.noise_type not in NOISE_TYPES:
            raise UsageError(f"unknown noise type {self.noise_type!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise UsageError(f"rate must be in [0, 1], got {self.rate}")
        if self.rate > 0 and self.rate * n_split < 1:
            raise UsageError(
                f"rate {self.rate} selects no records out of {n_split}; use rate 0 or more data"
            )


def _select_targets(rng: np.random.Generator, positions: np.ndarray, count: int) -> np.ndarray:
    """Uniform sample without replacement, returned in dataset order."""
    chosen = rng.choice(positions.size, size=count, replace=False)
    return np.sort(positions[chosen])


def _apply_swaps(
    dataset: Dataset,
    spec: NoiseSpec,
    donor_of: dict[int, int],
    split_positions: np.ndarray,
    copy_class: bool = True,
) -> Dataset:
    """Copy donors' text modality onto targets and write flags for the split."""
    text = dataset.text_embeddings.copy()
    records = list(dataset.records)
    flagged = set(donor_of)
    for pos in split_positions:
        rec = records[pos]
        if pos in flagged:
            donor = dataset.records[donor_of[pos]]
            records[pos] = replace(
                rec,
                caption_text=donor.caption_text,
                noun_set=donor.noun_set,
                class_id=donor.class_id if copy_class else rec.class_id,
                mislabel_flag=True,
                swap_source=donor.index,
            )
            text[pos] = dataset.text_embeddings[donor.index]
        else:
            records[pos] = replace(rec, mislabel_flag=False)
    manifest = dict(dataset.manifest)
    manifest["noise"] = {
        "type": spec.noise_type,
        "rate": spec.rate,
        "seed": spec.seed,
        "split": spec.split,
        "flagged": len(flagged),
    }
    out = dataset.with_replaced(text_embeddings=text, records=records, manifest=manifest)
    out.validate()
    return out


def inject_random_swap(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    positions = dataset.split_positions(spec.split)
    spec.validate(positions.size)
    if positions.size < 2:
        raise ValidationError("random swap needs at least 2 records in the split")
    count = int(np.floor(spec.rate * positions.size))
    rng = np.random.default_rng(spec.seed)
    targets = _select_targets(rng, positions, count)
    donor_of: dict[int, int] = {}
    for pos in targets:
        others = positions[positions != pos]
        donor_of[int(pos)] = int(others[rng.integers(others.size)])
    return _apply_swaps(dataset, spec, donor_of, positions)


def inject_category_swap(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    positions = dataset.split_positions(spec.split)
    spec.validate(positions.size)
    for pos in positions:
        if dataset.records[pos].category is None:
            raise ValidationError(f"record {pos}: category missing, required for cat noise")
    count = int(np.floor(spec.rate * positions.size))
    rng = np.random.default_rng(spec.seed)
    targets = _select_targets(rng, positions, count)
    by_category: dict[str, np.ndarray] = {}
    categories = np.array([dataset.records[p].category for p in positions], dtype=object)
    for cat in set(categories):
        by_category[cat] = positions[categories == cat]
    donor_of: dict[int, int] = {}
    for pos in targets:
        peers = by_category[dataset.records[pos].category]
        peers = peers[peers != pos]
        if peers.size == 0:
            raise ValidationError(
                f"record {pos}: category {dataset.records[pos].category!r} has no other member"
            )
        donor_of[int(pos)] = int(peers[rng.integers(peers.size)])
    return _apply_swaps(dataset, spec, donor_of, positions)


def _noun_sets(dataset: Dataset, positions: np.ndarray) -> list[frozenset[str]]:
    out = []
    for pos in positions:
        rec = dataset.records[pos]
        nouns = rec.noun_set if rec.noun_set is not None else fallback_noun_tokens(rec.caption_text)
        out.append(nouns)
    return out


def inject_noun_swap(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    """Swap captions between records sharing at least one noun.

    Records without an eligible donor are skipped and the next candidate
    takes their place; when the whole split cannot supply enough eligible
    targets the shortfall is logged and recorded in the manifest.
    """
    positions = dataset.split_positions(spec.split)
    spec.validate(positions.size)
    count = int(np.floor(spec.rate * positions.size))
    rng = np.random.default_rng(spec.seed)
    nouns = _noun_sets(dataset, positions)

    token_to_rows: dict[str, list[int]] = {}
    for row, ns in enumerate(nouns):
        for tok in ns:
            token_to_rows.setdefault(tok, []).append(row)

    def eligible_donors(row: int) -> np.ndarray:
        if not nouns[row]:
            return np.empty(0, dtype=np.int64)
        cand: set[int] = set()
        for tok in nouns[row]:
            cand.update(token_to_rows[tok])
        cand.discard(row)
        return np.array(sorted(cand), dtype=np.int64)

    if count > 0 and all(eligible_donors(r).size == 0 for r in range(positions.size)):
        raise ValidationError("noun swap impossible: no record has an eligible donor")

    order = rng.permutation(positions.size)
    donor_of: dict[int, int] = {}
    for row in order:
        if len(donor_of) == count:
            break
        donors = eligible_donors(int(row))
        if donors.size == 0:
            continue
        donor_row = int(donors[rng.integers(donors.size)])
        donor_of[int(positions[row])] = int(positions[donor_row])
    if len(donor_of) < count:
        log.warning(
            "noun swap shortfall: requested %d flags, only %d records had donors",
            count,
            len(donor_of),
        )
    out = _apply_swaps(dataset, spec, donor_of, positions)
    out.manifest["noise"]["requested"] = count
    return out


def _class_exemplars(dataset: Dataset) -> dict[int, int]:
    """First record of each class; its caption/embedding are the class canon."""
    exemplars: dict[int, int] = {}
    for rec in dataset.records:
        if rec.class_id is not None and rec.class_id not in exemplars:
            exemplars[rec.class_id] = rec.index
    return exemplars


def _apply_class_flips(
    dataset: Dataset, spec: NoiseSpec, new_class_of: dict[int, int], positions: np.ndarray
) -> Dataset:
    exemplars = _class_exemplars(dataset)
    text = dataset.text_embeddings.copy()
    records = list(dataset.records)
    for pos in positions:
        rec = records[pos]
        if pos in new_class_of:
            new_class = new_class_of[pos]
            if new_class not in exemplars:
                raise ValidationError(f"class {new_class} has no exemplar record in the dataset")
            donor = dataset.records[exemplars[new_class]]
            records[pos] = replace(
                rec,
                class_id=new_class,
                caption_text=donor.caption_text,
                noun_set=donor.noun_set,
                mislabel_flag=True,
                swap_source=donor.index,
            )
            text[pos] = dataset.text_embeddings[donor.index]
        else:
            records[pos] = replace(rec, mislabel_flag=False)
    manifest = dict(dataset.manifest)
    manifest["noise"] = {
        "type": spec.noise_type,
        "rate": spec.rate,
        "seed": spec.seed,
        "split": spec.split,
        "flagged": len(new_class_of),
    }
    out = dataset.with_replaced(text_embeddings=text, records=records, manifest=manifest)
    out.validate()
    return out


def inject_symmetric_flip(dataset: Dataset, spec: NoiseSpec, num_classes: int) -> Dataset:
    if num_classes < 2:
        raise UsageError(f"symmetric flip needs num_classes >= 2, got {num_classes}")
    positions = dataset.split_positions(spec.split)
    spec.validate(positions.size)
    for pos in positions:
        if dataset.records[pos].class_id is None:
            raise ValidationError(f"record {pos}: class_id missing, required for class flips")
    count = int(np.floor(spec.rate * positions.size))
    rng = np.random.default_rng(spec.seed)
    targets = _select_targets(rng, positions, count)
    new_class_of: dict[int, int] = {}
    for pos in targets:
        old = dataset.records[pos].class_id
        draw = int(rng.integers(num_classes - 1))
        new_class_of[int(pos)] = draw if draw < old else draw + 1
    return _apply_class_flips(dataset, spec, new_class_of, positions)


def cyclic_permutation(num_classes: int) -> dict[int, int]:
    """Default asymmetric structure: class c maps to (c + 1) mod C."""
    return {c: (c + 1) % num_classes for c in range(num_classes)}


def inject_asymmetric_flip(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    if spec.class_permutation is None:
        raise UsageError("asymmetric flip requires class_permutation")
    perm = {int(k): int(v) for k, v in spec.class_permutation.items()}
    positions = dataset.split_positions(spec.split)
    spec.validate(positions.size)
    occurring = set()
    for pos in positions:
        cid = dataset.records[pos].class_id
        if cid is None:
            raise ValidationError(f"record {pos}: class_id missing, required for class flips")
        occurring.add(cid)
    for cid in sorted(occurring):
        if cid not in perm:
            raise ValidationError(f"class_permutation has no entry for occurring class {cid}")
        if perm[cid] == cid:
            raise ValidationError(f"class_permutation fixes class {cid} (must be fixed-point-free)")
    count = int(np.floor(spec.rate * positions.size))
    rng = np.random.default_rng(spec.seed)
    targets = _select_targets(rng, positions, count)
    new_class_of = {int(pos): perm[dataset.records[pos].class_id] for pos in targets}
    return _apply_class_flips(dataset, spec, new_class_of, positions)


def inject(dataset: Dataset, spec: NoiseSpec, num_classes: int | None = None) -> Dataset:
    """Dispatch on spec.noise_type."""
    if spec.noise_type == "random":
        return inject_random_swap(dataset, spec)
    if spec.noise_type == "cat":
        return inject_category_swap(dataset, spec)
    if spec.noise_type == "noun":
        return inject_noun_swap(dataset, spec)
    if spec.noise_type == "symmetric":
        if num_classes is None:
            classes = [r.class_id for r in dataset.records if r.class_id is not None]
            if not classes:
                raise ValidationError("symmetric flip requires class_id on the dataset")
            num_classes = max(classes) + 1
        return inject_symmetric_flip(dataset, spec, num_classes)
    if spec.noise_type == "asymmetric":
        return inject_asymmetric_flip(dataset, spec)
    raise UsageError(f"unknown noise type {spec.noise_type!r}")


__all__ = [
    "NoiseSpec",
    "NOISE_TYPES",
    "inject",
    "inject_random_swap",
    "inject_category_swap",
    "inject_noun_swap",
    "inject_symmetric_flip",
    "inject_asymmetric_flip",
    "cyclic_permutation",
    "fallback_noun_tokens",
]
