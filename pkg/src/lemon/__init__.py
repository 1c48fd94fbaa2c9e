"""Label error detection for paired image/text embedding datasets.

The mislabel score of a pair combines its own cross-modal cosine distance
with two nearest-neighbor terms, one per modality; training-free baselines,
synthetic noise generators, detection metrics, hyperparameter search, and
Monte Carlo checks of the score's closed-form detection AUROC round out
the toolkit.  See the ``lemon`` CLI for the end-to-end pipeline.
"""

from .dataset import (
    Dataset,
    SampleRecord,
    ScoreBreakdown,
    ScoreRow,
    ScoreTable,
    load_dataset,
    read_scores,
    write_dataset,
    write_scores,
)
from .geometry import (
    NeighborList,
    cache_mm_distances,
    cosine_distance,
    discrete_distance,
    euclidean_distance,
    kmeans_text_clusters,
    knn_query,
)
from .metrics import MetricsReport, auprc, auroc, best_f1, compute_report
from .noise import NoiseSpec, inject
from .scoring import (
    LemonParams,
    build_reference,
    score_clip_similarity,
    score_deep_knn,
    score_discrepancy,
    score_lemon,
    score_split,
)
from .synthetic import GeneratorSpec, generate
from .theory import (
    TheoryParams,
    closed_form_auroc,
    gaussian_cdf,
    lemma_regime_check,
    simulate_auroc,
    verify_lipschitz_bound,
)
from .tuning import GridSpec, TuneResult, grid_search, lemon_fix_params, simplex_optimize, tune_lemon

__version__ = "0.1.0"
