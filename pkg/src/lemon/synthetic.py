"""Paired-embedding dataset generator with controllable cluster structure.

Each cluster has a unit-norm image mean; the paired text mean is the image
mean plus an isotropic perturbation, renormalized.  The perturbation scale
(``mm_alignment_noise_sd``) is the one dial that trades the raw image/text
distance signal against the neighborhood signal: large values make a
sample's own pair distance uninformative while neighbors stay tight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, SampleRecord
from .errors import UsageError, ValidationError

_MAX_MEAN_DRAWS = 1000


@dataclass(frozen=True)
class GeneratorSpec:
    n_clusters: int = 20
    samples_per_cluster: int = 200
    dim: int = 64
    cluster_separation: float = 1.2
    image_noise_sd: float = 0.05
    text_noise_sd: float = 0.05
    mm_alignment_noise_sd: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_clusters < 2:
            raise UsageError(f"n_clusters must be >= 2, got {self.n_clusters}")
        if self.samples_per_cluster < 1:
            raise UsageError("samples_per_cluster must be >= 1")
        if self.dim < 2:
            raise UsageError(f"dim must be >= 2, got {self.dim}")
        for name in ("image_noise_sd", "text_noise_sd", "mm_alignment_noise_sd"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be >= 0")
        if not 0.0 <= self.cluster_separation <= 2.0:
            raise UsageError("cluster_separation must be in [0, 2] for unit-norm means")

    @staticmethod
    def from_json_obj(obj: dict) -> "GeneratorSpec":
        known = {f for f in GeneratorSpec.__dataclass_fields__}
        bad = set(obj) - known
        if bad:
            raise UsageError(f"unknown generator fields: {sorted(bad)}")
        spec = GeneratorSpec(**obj)
        spec.validate()
        return spec


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValidationError("degenerate zero vector while drawing cluster means")
    return v / norm


def _split_for(position: int) -> str:
    r = position % 10
    if r < 8:
        return "train"
    return "val" if r == 8 else "test"


def generate(spec: GeneratorSpec) -> Dataset:
    """Deterministic per seed; records carry class_id = category = cluster id."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    image_means = np.empty((spec.n_clusters, spec.dim))
    for c in range(spec.n_clusters):
        for attempt in range(_MAX_MEAN_DRAWS):
            cand = _unit(rng.standard_normal(spec.dim))
            dists = np.linalg.norm(image_means[:c] - cand, axis=1) if c else np.array([np.inf])
            if (dists >= spec.cluster_separation).all():
                image_means[c] = cand
                break
        else:
            raise ValidationError(
                f"could not place cluster mean {c} at separation {spec.cluster_separation}"
            )
    text_means = np.empty_like(image_means)
    for c in range(spec.n_clusters):
        offset = spec.mm_alignment_noise_sd * rng.standard_normal(spec.dim)
        text_means[c] = _unit(image_means[c] + offset)

    n = spec.n_clusters * spec.samples_per_cluster
    image = np.empty((n, spec.dim))
    text = np.empty((n, spec.dim))
    records: list[SampleRecord] = []
    row = 0
    for c in range(spec.n_clusters):
        img_noise = spec.image_noise_sd * rng.standard_normal((spec.samples_per_cluster, spec.dim))
        txt_noise = spec.text_noise_sd * rng.standard_normal((spec.samples_per_cluster, spec.dim))
        for j in range(spec.samples_per_cluster):
            image[row] = image_means[c] + img_noise[j]
            text[row] = text_means[c] + txt_noise[j]
            records.append(
                SampleRecord(
                    index=row,
                    caption_text=f"synthetic description of concept {c}",
                    class_id=c,
                    category=str(c),
                    noun_set=frozenset({f"object{c}", f"shape{c % 4}"}),
                    split=_split_for(row),
                )
            )
            row += 1

    manifest = {
        "name": f"synthetic-{spec.n_clusters}x{spec.samples_per_cluster}",
        "encoder_id": "synthetic-cluster-generator",
        "seed": spec.seed,
        "generator": json.loads(json.dumps(spec.__dict__)),
    }
    ds = Dataset(
        image_embeddings=image.astype(np.float32),
        text_embeddings=text.astype(np.float32),
        records=records,
        manifest=manifest,
    )
    ds.validate()
    return ds


__all__ = ["GeneratorSpec", "generate"]
