"""Hyperparameter selection: fixed preset, grid search, and simplex refinement.

The search maximizes max-F1 on a labeled validation split scored against
the train split.  For each (k, metric) the neighbor arrays are computed
once and shared by every (beta, gamma, tau) evaluation; the arithmetic is
the scorer's own, so a tuned optimum reproduces exactly when re-scored.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import ValidationError
from .metrics import best_f1
from .scoring import (
    LemonParams,
    NeighborCache,
    build_neighbor_cache,
    build_queries,
    build_reference,
    lemon_from_cache,
    neighbor_components,
)

# search space used when no explicit grid is supplied
DEFAULT_KS = (1, 2, 5, 10, 15, 20, 30, 50)
DEFAULT_METRICS = ("cosine", "euclidean")
DEFAULT_BETAS = tuple(float(b) for b in range(0, 101, 5))
DEFAULT_GAMMAS = tuple(float(g) for g in range(0, 101, 5))
DEFAULT_TAUS = (0.0, 1.0, 5.0, 10.0)


def lemon_fix_params() -> LemonParams:
    """The no-validation preset: k=30, beta=gamma=5, tau1=0.1, tau2=5, cosine."""
    return LemonParams(
        k=30,
        beta=5.0,
        gamma=5.0,
        tau1_n=0.1,
        tau2_n=5.0,
        tau1_m=0.1,
        tau2_m=5.0,
        dX_metric="cosine",
        dY_metric="cosine",
    )


@dataclass(frozen=True)
class GridSpec:
    """Cartesian search grid; tied taus couple tau1_n=tau1_m and tau2_n=tau2_m.

    The untied grid multiplies the tau axis from 16 to 256 combinations per
    (k, metric); it is the ``--full-grid`` escape hatch.
    """

    ks: tuple = DEFAULT_KS
    metrics: tuple = DEFAULT_METRICS
    betas: tuple = DEFAULT_BETAS
    gammas: tuple = DEFAULT_GAMMAS
    taus: tuple = DEFAULT_TAUS
    tied_taus: bool = True

    def tau_combos(self) -> list[tuple[float, float, float, float]]:
        if self.tied_taus:
            return [(t1, t2, t1, t2) for t1 in self.taus for t2 in self.taus]
        return list(itertools.product(self.taus, self.taus, self.taus, self.taus))


@dataclass
class TuneResult:
    best_params: LemonParams
    best_val_f1: float
    trials: list = field(default_factory=list)  # (LemonParams, val_f1)
    provenance: str = "grid"

    def validate(self) -> None:
        if not self.trials:
            raise ValidationError("tune result has no trials")
        top = max(f1 for _, f1 in self.trials)
        if self.best_val_f1 != top:
            raise ValidationError("best_val_f1 does not match the best trial")


def simplex_optimize(objective, x0, ftol: float = 1e-6, max_iter: int = 500):
    """Downhill simplex MAXIMIZING ``objective`` over an unbounded vector.

    Coefficients: reflect 1, expand 2, contract 0.5, shrink 0.5.  The
    initial simplex is x0 plus one vertex offset by +0.5 per coordinate;
    iteration stops when the simplex f-spread falls below ``ftol`` or after
    ``max_iter`` rounds.  Non-finite objective values are treated as -inf
    (vertex rejected).  Returns the best point ever evaluated.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    dim = x0.size

    best_x = x0.copy()
    best_f = -np.inf

    def f_neg(x: np.ndarray) -> float:
        nonlocal best_x, best_f
        value = objective(x)
        if value is None or not np.isfinite(value):
            return np.inf
        value = float(value)
        if value > best_f:
            best_f = value
            best_x = x.copy()
        return -value

    verts = [x0.copy()]
    for i in range(dim):
        v = x0.copy()
        v[i] += 0.5
        verts.append(v)
    verts = np.array(verts)
    fvals = np.array([f_neg(v) for v in verts])

    for _ in range(max_iter):
        order = np.argsort(fvals, kind="stable")
        verts, fvals = verts[order], fvals[order]
        if np.isfinite(fvals).all() and float(fvals[-1] - fvals[0]) < ftol:
            break

        centroid = verts[:-1].mean(axis=0)
        reflected = centroid + (centroid - verts[-1])
        f_r = f_neg(reflected)
        if fvals[0] <= f_r < fvals[-2]:
            verts[-1], fvals[-1] = reflected, f_r
            continue
        if f_r < fvals[0]:
            expanded = centroid + 2.0 * (centroid - verts[-1])
            f_e = f_neg(expanded)
            if f_e < f_r:
                verts[-1], fvals[-1] = expanded, f_e
            else:
                verts[-1], fvals[-1] = reflected, f_r
            continue
        # contract toward the better of the worst vertex and its reflection
        if f_r < fvals[-1]:
            verts[-1], fvals[-1] = reflected, f_r
        contracted = centroid + 0.5 * (verts[-1] - centroid)
        f_c = f_neg(contracted)
        if f_c < fvals[-1]:
            verts[-1], fvals[-1] = contracted, f_c
            continue
        for i in range(1, len(verts)):
            verts[i] = verts[0] + 0.5 * (verts[i] - verts[0])
            fvals[i] = f_neg(verts[i])

    return best_x, best_f


def _f1_of_scores(s: np.ndarray, flags: np.ndarray) -> float:
    if not np.isfinite(s).all():
        return float("nan")
    f1, _ = best_f1(s, flags)
    return f1


def _val_split_setup(dataset: Dataset, val_split: str, reference_split: str):
    reference = build_reference(dataset, reference_split)
    queries = build_queries(dataset, val_split, reference, reference_split)
    flags = [dataset.records[i].mislabel_flag for i in queries.positions]
    if any(f is None for f in flags):
        raise ValidationError(f"split {val_split!r} has no mislabel flags; tuning requires them")
    return reference, queries, np.array(flags, dtype=bool)


def _grid_trials(
    cache: NeighborCache, flags: np.ndarray, grid: GridSpec, k: int, metric: str
) -> list:
    """All grid points for one (k, metric); s_n/s_m are shared per tau combo."""
    trials = []
    for t1n, t2n, t1m, t2m in grid.tau_combos():
        s_n, s_m = neighbor_components(cache, t1n, t2n, t1m, t2m)
        for beta in grid.betas:
            for gamma in grid.gammas:
                s = cache.mm_q + beta * s_n + gamma * s_m
                trials.append(
                    (
                        LemonParams(
                            k=k,
                            beta=beta,
                            gamma=gamma,
                            tau1_n=t1n,
                            tau2_n=t2n,
                            tau1_m=t1m,
                            tau2_m=t2m,
                            dX_metric=metric,
                            dY_metric=metric,
                        ),
                        _f1_of_scores(s, flags),
                    )
                )
    return trials


def _fix_preset_trial(reference, queries, flags, threads: int):
    fix = lemon_fix_params()
    cache = build_neighbor_cache(reference, queries, fix, threads=threads)
    _, _, _, s = lemon_from_cache(
        cache, fix.beta, fix.gamma, fix.tau1_n, fix.tau2_n, fix.tau1_m, fix.tau2_m
    )
    return fix, _f1_of_scores(s, flags)


def _pick_winner(trials: list) -> tuple[LemonParams, float]:
    ordered = sorted(trials, key=lambda t: t[0].as_tuple())
    best_params, best = ordered[0]
    for params, f1 in ordered[1:]:
        if f1 > best:
            best_params, best = params, f1
    return best_params, best


def grid_search(
    dataset: Dataset,
    val_split: str = "val",
    grid: GridSpec | None = None,
    reference_split: str = "train",
    threads: int = 1,
    include_fix_preset: bool = True,
) -> TuneResult:
    """Evaluate every grid point (plus the fixed preset) on validation F1.

    Neighbor searches are cached per (k, metric); ties go to the
    lexicographically smallest parameter tuple.
    """
    grid = grid or GridSpec()
    reference, queries, flags = _val_split_setup(dataset, val_split, reference_split)

    trials: list = []
    for k in grid.ks:
        for metric in grid.metrics:
            base = LemonParams(k=k, dX_metric=metric, dY_metric=metric)
            cache = build_neighbor_cache(reference, queries, base, threads=threads)
            trials.extend(_grid_trials(cache, flags, grid, k, metric))
    if include_fix_preset:
        trials.append(_fix_preset_trial(reference, queries, flags, threads))

    best_params, best = _pick_winner(trials)
    result = TuneResult(best_params=best_params, best_val_f1=best, trials=trials, provenance="grid")
    result.validate()
    return result


def tune_lemon(
    dataset: Dataset,
    val_split: str = "val",
    grid: GridSpec | None = None,
    reference_split: str = "train",
    threads: int = 1,
) -> TuneResult:
    """Grid search plus per-(k, metric) simplex refinement from all-ones.

    The fixed preset is always a candidate, so the winner's validation F1
    can never fall below it.
    """
    grid = grid or GridSpec()
    reference, queries, flags = _val_split_setup(dataset, val_split, reference_split)

    trials: list = []
    for k in grid.ks:
        for metric in grid.metrics:
            base = LemonParams(k=k, dX_metric=metric, dY_metric=metric)
            cache = build_neighbor_cache(reference, queries, base, threads=threads)
            trials.extend(_grid_trials(cache, flags, grid, k, metric))

            def objective(x: np.ndarray, _cache=cache) -> float:
                _, _, _, s = lemon_from_cache(_cache, *x)
                return _f1_of_scores(s, flags)

            x_best, f_best = simplex_optimize(objective, np.ones(6))
            if np.isfinite(f_best):
                trials.append(
                    (
                        LemonParams(
                            k=k,
                            beta=float(x_best[0]),
                            gamma=float(x_best[1]),
                            tau1_n=float(x_best[2]),
                            tau2_n=float(x_best[3]),
                            tau1_m=float(x_best[4]),
                            tau2_m=float(x_best[5]),
                            dX_metric=metric,
                            dY_metric=metric,
                        ),
                        float(f_best),
                    )
                )

    trials.append(_fix_preset_trial(reference, queries, flags, threads))

    best_params, best = _pick_winner(trials)
    result = TuneResult(
        best_params=best_params, best_val_f1=best, trials=trials, provenance="simplex"
    )
    result.validate()
    return result


__all__ = [
    "GridSpec",
    "TuneResult",
    "lemon_fix_params",
    "grid_search",
    "simplex_optimize",
    "tune_lemon",
]
