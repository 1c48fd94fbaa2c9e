import numpy as np
import pytest

from lemon.errors import ValidationError
from lemon.metrics import best_f1
from lemon.noise import NoiseSpec, inject_random_swap
from lemon.scoring import LemonParams, score_split
from lemon.synthetic import GeneratorSpec, generate
from lemon.tuning import GridSpec, grid_search, lemon_fix_params, simplex_optimize, tune_lemon


def test_fix_preset_constants():
    p = lemon_fix_params()
    assert (p.k, p.beta, p.gamma) == (30, 5.0, 5.0)
    assert (p.tau1_n, p.tau1_m) == (0.1, 0.1)
    assert (p.tau2_n, p.tau2_m) == (5.0, 5.0)
    assert (p.dX_metric, p.dY_metric) == ("cosine", "cosine")
    assert lemon_fix_params() == p
    p.validate()


def test_simplex_quadratic_six_dim():
    target = np.full(6, 2.0)
    x, f = simplex_optimize(lambda v: -float(np.sum((v - target) ** 2)), np.ones(6))
    assert np.abs(x - target).max() < 1e-3
    assert f == pytest.approx(0.0, abs=1e-5)


def test_simplex_constant_objective():
    x, f = simplex_optimize(lambda v: 7.25, np.ones(6))
    assert np.array_equal(x, np.ones(6))
    assert f == 7.25


def test_simplex_rejects_non_finite_region():
    def objective(v):
        if v[0] > 1.2:
            return float("nan")
        return -float(np.sum(v * v))

    x, f = simplex_optimize(objective, np.ones(6))
    assert np.isfinite(f)
    assert x[0] <= 1.2


@pytest.fixture(scope="module")
def tiny_noised_dataset():
    spec = GeneratorSpec(
        n_clusters=5, samples_per_cluster=40, dim=16, seed=2,
        cluster_separation=1.2, image_noise_sd=0.05, text_noise_sd=0.05,
        mm_alignment_noise_sd=0.5,
    )
    ds = generate(spec)
    for split, seed in (("train", 31), ("val", 32), ("test", 33)):
        ds = inject_random_swap(ds, NoiseSpec(noise_type="random", rate=0.4, seed=seed, split=split))
    return ds


SMALL_GRID = GridSpec(ks=(5, 10), metrics=("cosine",), betas=(0.0, 5.0), gammas=(0.0, 5.0), taus=(0.0, 5.0))


def test_grid_search_single_point(tiny_noised_dataset):
    grid = GridSpec(ks=(5,), metrics=("cosine",), betas=(2.0,), gammas=(3.0,), taus=(0.0,))
    res = grid_search(tiny_noised_dataset, "val", grid, include_fix_preset=False)
    assert len(res.trials) == 1
    assert res.best_params.k == 5
    assert res.best_params.beta == 2.0


def test_grid_search_beats_or_ties_fix_preset(tiny_noised_dataset):
    res = grid_search(tiny_noised_dataset, "val", SMALL_GRID)
    fix_trials = [f1 for p, f1 in res.trials if p == lemon_fix_params()]
    assert fix_trials, "fixed preset must be a candidate"
    assert res.best_val_f1 >= fix_trials[0]


def test_grid_search_tie_break_lexicographic(tiny_noised_dataset):
    # beta=gamma=0 makes every (tau) point identical: the winner must be the
    # lexicographically smallest tuple
    grid = GridSpec(ks=(5,), metrics=("cosine",), betas=(0.0,), gammas=(0.0,), taus=(0.0, 5.0))
    res = grid_search(tiny_noised_dataset, "val", grid, include_fix_preset=False)
    f1s = {f1 for _, f1 in res.trials}
    assert len(f1s) == 1
    assert (res.best_params.tau1_n, res.best_params.tau2_n) == (0.0, 0.0)


def test_grid_search_requires_flags(rng):
    from conftest import random_paired_dataset

    splits = ["train"] * 30 + ["val"] * 10
    ds = random_paired_dataset(rng, n=40, dim=4, splits=splits)
    with pytest.raises(ValidationError, match="flags"):
        grid_search(ds, "val", SMALL_GRID)


def test_tune_lemon_winner_reproduces(tiny_noised_dataset):
    ds = tiny_noised_dataset
    res = tune_lemon(ds, "val", SMALL_GRID)
    flags = {r.index: r.mislabel_flag for r in ds.records if r.split == "val"}
    table = score_split(ds, "train", "val", "lemon", res.best_params)
    f1, _ = best_f1([r.score for r in table.rows], [flags[r.index] for r in table.rows])
    assert f1 == res.best_val_f1

    fix_f1 = [f1 for p, f1 in res.trials if p == lemon_fix_params()]
    assert res.best_val_f1 >= fix_f1[0]


def test_tune_monotone_in_candidates(tiny_noised_dataset):
    small = GridSpec(ks=(5,), metrics=("cosine",), betas=(0.0, 5.0), gammas=(0.0,), taus=(0.0,))
    bigger = GridSpec(ks=(5, 10), metrics=("cosine",), betas=(0.0, 5.0), gammas=(0.0, 5.0), taus=(0.0,))
    a = grid_search(tiny_noised_dataset, "val", small)
    b = grid_search(tiny_noised_dataset, "val", bigger)
    assert b.best_val_f1 >= a.best_val_f1


def test_tune_small_val_split_still_works(tiny_noised_dataset):
    res = tune_lemon(tiny_noised_dataset, "test", SMALL_GRID)  # only 20 labeled samples
    assert res.trials
    assert np.isfinite(res.best_val_f1)
