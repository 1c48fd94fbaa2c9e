"""Closed-form detection AUROC of the plain neighbor score, and Monte Carlo checks.

The generative model: a clean sample has an integer count m of text
neighbors that are both relevant and correctly labeled; each of those
contributes a paraphrase-distance draw N(mu2, sigma2^2) to the averaged
score while the remaining k - m neighbors contribute N(mu1, sigma1^2).  A
mislabeled sample's k neighbors all contribute N(mu1, sigma1^2).  The
count m is distributed by ``zeta_pmf``; the relevant-fraction variable is
zeta = m / (k (1 - p)) with p the constant mislabeled-neighbor share.

The closed form for P(score_mislabeled > score_clean) is 1 - Phi(-mu/sigma)
with mu = E[zeta] (1-p) (mu1 - mu2) and
sigma^2 = (E[zeta](1-p) sigma2^2 + (2 - E[zeta](1-p)) sigma1^2) / k
          + Var(zeta) (1-p)^2 (mu2 - mu1)^2.

Sampling uses the counter-based Philox generator so seed -> stream is
stable and trial blocks could be partitioned deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError, ValidationError


def gaussian_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    if not math.isfinite(z):
        raise ValidationError(f"gaussian_cdf requires finite input, got {z}")
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


@dataclass(frozen=True)
class TheoryParams:
    """Parameters of the generative model.

    ``zeta_pmf`` maps the integer count m in {0..k} to its probability;
    m = k * zeta * (1 - p), so expectations of zeta are derived from it.
    """

    mu1: float
    sigma1: float
    mu2: float
    sigma2: float
    k: int
    p: float
    zeta_pmf: dict[int, float]

    def validate(self) -> None:
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise UsageError("sigma1 and sigma2 must be positive")
        if self.k < 1:
            raise UsageError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.p <= 1.0:
            raise UsageError(f"p must be in [0, 1], got {self.p}")
        if not self.zeta_pmf:
            raise UsageError("zeta_pmf is empty")
        total = 0.0
        for m, prob in self.zeta_pmf.items():
            if not (isinstance(m, (int, np.integer)) and 0 <= int(m) <= self.k):
                raise UsageError(f"zeta_pmf support must be integers in [0, {self.k}], got {m!r}")
            if prob < 0:
                raise UsageError(f"zeta_pmf has negative probability at m={m}")
            total += prob
        if abs(total - 1.0) > 1e-12:
            raise UsageError(f"zeta_pmf sums to {total}, expected 1")
        if self.p == 1.0 and any(prob > 0 and int(m) > 0 for m, prob in self.zeta_pmf.items()):
            raise UsageError("p == 1 forces the relevant-and-clean count to 0")

    def count_moments(self) -> tuple[float, float]:
        """(E[m], Var[m]) of the relevant-and-clean neighbor count."""
        e = sum(int(m) * p for m, p in self.zeta_pmf.items())
        e2 = sum(int(m) ** 2 * p for m, p in self.zeta_pmf.items())
        return e, e2 - e * e

    def zeta_moments(self) -> tuple[float, float]:
        """(E[zeta], Var[zeta]); undefined scale at p == 1 (returns zeros)."""
        if self.p == 1.0:
            return 0.0, 0.0
        em, vm = self.count_moments()
        scale = self.k * (1.0 - self.p)
        return em / scale, vm / (scale * scale)

    @staticmethod
    def from_json_obj(obj: dict) -> "TheoryParams":
        try:
            pmf = {int(m): float(p) for m, p in dict(obj["zeta_pmf"]).items()}
            params = TheoryParams(
                mu1=float(obj["mu1"]),
                sigma1=float(obj["sigma1"]),
                mu2=float(obj["mu2"]),
                sigma2=float(obj["sigma2"]),
                k=int(obj["k"]),
                p=float(obj["p"]),
                zeta_pmf=pmf,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad theory params: {exc}") from exc
        params.validate()
        return params


def closed_form_auroc(params: TheoryParams) -> float:
    """Exact P(score_mislabeled > score_clean) under the generative model."""
    params.validate()
    if params.p == 1.0:
        return 0.5
    em, vm = params.count_moments()
    # E[zeta](1-p) == E[m]/k and Var(zeta)(1-p)^2 == Var(m)/k^2
    ez_1p = em / params.k
    vz_1p2 = vm / (params.k * params.k)
    mu = ez_1p * (params.mu1 - params.mu2)
    var = (
        ez_1p * params.sigma2**2 + (2.0 - ez_1p) * params.sigma1**2
    ) / params.k + vz_1p2 * (params.mu2 - params.mu1) ** 2
    if var <= 0 or not math.isfinite(var):
        raise ValidationError(f"non-positive or non-finite variance {var}")
    return 1.0 - gaussian_cdf(-mu / math.sqrt(var))


def lemma_regime_check(params: TheoryParams) -> bool:
    """True iff p < 1, E[zeta] > 0, and mu1 > mu2 (the better-than-random regime)."""
    params.validate()
    if params.p >= 1.0:
        return False
    ez, _ = params.zeta_moments()
    return ez > 0.0 and params.mu1 > params.mu2


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def simulate_auroc(params: TheoryParams, n_trials: int, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of the closed form; returns (auroc, std_error).

    Each trial draws one clean score (m ~ zeta_pmf relevant draws from
    N(mu2, sigma2^2), the rest from N(mu1, sigma1^2), averaged over k) and
    one mislabeled score (k draws from N(mu1, sigma1^2), averaged).
    """
    params.validate()
    if n_trials < 1000:
        raise UsageError(f"n_trials must be >= 1000, got {n_trials}")
    rng = _rng(seed)

    support = np.array(sorted(params.zeta_pmf), dtype=np.int64)
    probs = np.array([params.zeta_pmf[int(m)] for m in support], dtype=np.float64)
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    u = rng.random(n_trials)
    m = support[np.searchsorted(cum, u, side="left")]

    z_clean = rng.standard_normal((n_trials, params.k))
    z_noisy = rng.standard_normal((n_trials, params.k))
    relevant = np.arange(params.k)[None, :] < m[:, None]
    clean_draws = np.where(
        relevant, params.mu2 + params.sigma2 * z_clean, params.mu1 + params.sigma1 * z_clean
    )
    s_clean = clean_draws.mean(axis=1)
    s_noisy = (params.mu1 + params.sigma1 * z_noisy).mean(axis=1)

    wins = (s_noisy > s_clean).astype(np.float64) + 0.5 * (s_noisy == s_clean)
    a = float(wins.mean())
    se = math.sqrt(max(a * (1.0 - a), 0.0) / n_trials)
    return a, se


def verify_lipschitz_bound(
    sigma: float, epsilon: float, embed_lipschitz_l: float, n_trials: int, seed: int = 0
) -> tuple[float, float]:
    """Empirical check that pair-distance degradation under label noise is bounded.

    A 1-d label is embedded on the unit circle by the angle map
    theta(y) = clamp(L*y, -pi, pi), which is L-Lipschitz in Euclidean
    distance.  Per trial a noisy label y' = y + eta with eta ~ N(0, sigma^2)
    must satisfy ||hx - h(y')|| >= ||hx - h(y)|| - L*epsilon.  Returns
    (empirical holding rate, guaranteed lower bound 1 - 2*Phi(-eps/sigma)).
    """
    if sigma <= 0 or epsilon <= 0:
        raise UsageError("sigma and epsilon must be positive")
    if embed_lipschitz_l < 0:
        raise UsageError("the Lipschitz constant must be >= 0")
    if n_trials < 1:
        raise UsageError("n_trials must be >= 1")
    rng = _rng(seed)
    L = embed_lipschitz_l

    def embed(y: np.ndarray) -> np.ndarray:
        theta = np.clip(L * y, -math.pi, math.pi)
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    # the anchor sits antipodal to the base label's embedding, so the pair
    # distance starts near its maximum and the bound is loose
    anchor = np.array([-1.0, 0.0])
    y0 = 1.0
    h0 = embed(np.array([y0]))[0]
    d0 = float(np.linalg.norm(anchor - h0))

    eta = sigma * rng.standard_normal(n_trials)
    h_noisy = embed(y0 + eta)
    d_noisy = np.linalg.norm(anchor - h_noisy, axis=1)
    holds = d_noisy >= d0 - L * epsilon
    rate = float(holds.mean())
    delta = 1.0 - 2.0 * gaussian_cdf(-epsilon / sigma)
    return rate, delta


__all__ = [
    "TheoryParams",
    "gaussian_cdf",
    "closed_form_auroc",
    "simulate_auroc",
    "lemma_regime_check",
    "verify_lipschitz_bound",
]
