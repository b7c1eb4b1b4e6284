"""Sequential allocation and selection policies for independent normal beliefs.

Conventions shared by every operation here:

- Alternatives are 0-indexed.  The "incumbent" is the alternative with
  the largest posterior mean, lowest index on ties.
- Numeric cores accept arrays of shape ``(..., k)`` and broadcast over
  leading axes, so one implementation serves both single belief states
  and batches of simulated states.
- Allocation tie-breaking is always: highest value, then fewest samples,
  then lowest index.

The central quantity is the normalized mean gap to the incumbent,

    d_i = (mu_best - mu_i) / sqrt(var_best + var_i),

whose square, minimized over challengers, is a one-feature approximation
of the posterior probability that the incumbent is truly best.  The
one-step look-ahead policy scores each candidate by recomputing that
feature after shrinking the candidate's posterior variance as one more
observation would (the observation itself is replaced by its predictive
mean, which leaves every posterior mean unchanged).
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.special import ndtr

from .beliefs import GaussianBelief, GroundTruth

if TYPE_CHECKING:
    from .vfa import VfaWeights

__all__ = [
    "BeliefVector",
    "RatioVector",
    "select_max_posterior_mean",
    "select_optimal_pcs",
    "select_optimal_eoc",
    "eoc_value",
    "distance_feature",
    "induced_correlation",
    "features",
    "apply_activation",
    "aoap_values",
    "aoap_allocate",
    "aoap_multistep",
    "two_factor_value",
    "two_factor_allocate",
    "optimal_ratios",
    "ratio_residuals",
    "ocba_ratios",
    "ocba_most_starving_allocate",
    "kg_allocate",
    "kg_factors",
    "ea_allocate",
    "shrunk_variance",
    "distance_squared",
    "correlation_squared_min",
    "aoap_candidate_values",
    "two_factor_candidate_values",
    "kg_candidate_values",
    "ocba_deficits",
    "argmax_with_tiebreak",
]


@dataclass(frozen=True)
class BeliefVector:
    """Per-alternative Gaussian beliefs plus their induced ordering."""

    beliefs: tuple[GaussianBelief, ...]

    def __post_init__(self) -> None:
        beliefs = tuple(self.beliefs)
        object.__setattr__(self, "beliefs", beliefs)
        if len(beliefs) < 2:
            raise ValueError("need at least two alternatives")

    @property
    def k(self) -> int:
        return len(self.beliefs)

    @property
    def means(self) -> np.ndarray:
        return np.array([b.post_mean for b in self.beliefs])

    @property
    def post_vars(self) -> np.ndarray:
        return np.array([b.post_var for b in self.beliefs])

    @property
    def sampling_vars(self) -> np.ndarray:
        return np.array([b.sampling_var for b in self.beliefs])

    @property
    def counts(self) -> np.ndarray:
        return np.array([b.count for b in self.beliefs])

    @property
    def sample_means(self) -> np.ndarray:
        return np.array([b.sample_mean for b in self.beliefs])

    @property
    def order(self) -> np.ndarray:
        """Indices sorted by descending posterior mean, lower index first on ties."""
        means = self.means
        return np.lexsort((np.arange(self.k), -means))

    @property
    def best(self) -> int:
        return int(self.order[0])


@dataclass(frozen=True)
class RatioVector:
    """Nonnegative sampling ratios summing to one."""

    ratios: np.ndarray

    def __post_init__(self) -> None:
        ratios = np.asarray(self.ratios, dtype=float)
        object.__setattr__(self, "ratios", ratios)
        if np.any(ratios < 0):
            raise ValueError("ratios must be nonnegative")
        if abs(float(ratios.sum()) - 1.0) > 1e-10:
            raise ValueError(f"ratios must sum to 1, got {ratios.sum()!r}")


# ---------------------------------------------------------------------------
# Array cores.  All take (..., k)-shaped arrays and broadcast over rows.
# ---------------------------------------------------------------------------


def shrunk_variance(post_vars: np.ndarray, sampling_vars: np.ndarray, n: float = 1.0) -> np.ndarray:
    """Posterior variance after folding in ``n`` more observations."""
    with np.errstate(divide="ignore"):
        return 1.0 / (1.0 / post_vars + n / sampling_vars)


def _incumbent_geometry(means: np.ndarray, post_vars: np.ndarray):
    """Incumbent index, membership mask, gaps to incumbent, incumbent variance."""
    b = np.argmax(means, axis=-1)
    k = means.shape[-1]
    is_b = b[..., None] == np.arange(k)
    mean_b = np.take_along_axis(means, b[..., None], -1)
    v_b = np.take_along_axis(post_vars, b[..., None], -1)
    gaps = mean_b - means
    return b, is_b, gaps, v_b


def distance_squared(means: np.ndarray, post_vars: np.ndarray) -> np.ndarray:
    """Minimum squared normalized gap between the incumbent and any challenger."""
    _, is_b, gaps, v_b = _incumbent_geometry(means, post_vars)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = gaps**2 / (v_b + post_vars)
    terms = np.where(is_b, np.inf, terms)
    return terms.min(axis=-1)


def correlation_squared_min(post_vars: np.ndarray, is_b: np.ndarray, v_b: np.ndarray) -> np.ndarray:
    """Smallest squared challenger correlation induced by the incumbent's variance.

    The minimum over challenger pairs is attained at the two largest
    challenger variances.  Returns 0 when there are fewer than two
    challengers (k = 2), by convention.
    """
    k = post_vars.shape[-1]
    v_b = v_b[..., 0]
    if k == 2:
        return np.zeros(np.broadcast_shapes(post_vars.shape[:-1], v_b.shape))
    masked = np.where(is_b, -np.inf, post_vars)
    a1 = masked.argmax(axis=-1)
    v1 = masked.max(axis=-1)
    masked2 = np.array(masked, copy=True)
    np.put_along_axis(masked2, a1[..., None], -np.inf, axis=-1)
    v2 = masked2.max(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho2 = v_b**2 / ((v_b + v1) * (v_b + v2))
    return np.where(v_b == 0.0, 0.0, rho2)


def aoap_candidate_values(
    means: np.ndarray, post_vars: np.ndarray, sampling_vars: np.ndarray
) -> np.ndarray:
    """One-step look-ahead value of sampling each candidate.

    Sampling the incumbent shrinks the incumbent's variance in every gap
    term; sampling a challenger shrinks only that challenger's own term.
    Every candidate value is at least the current minimum squared gap.
    """
    _, is_b, gaps, v_b = _incumbent_geometry(means, post_vars)
    new_vars = shrunk_variance(post_vars, sampling_vars)
    with np.errstate(divide="ignore", invalid="ignore"):
        base = np.where(is_b, np.inf, gaps**2 / (v_b + post_vars))
        m1 = base.min(axis=-1)
        a1 = base.argmin(axis=-1)
        base2 = np.array(base, copy=True)
        np.put_along_axis(base2, a1[..., None], np.inf, axis=-1)
        m2 = base2.min(axis=-1)

        # Candidate = incumbent: all gap terms see the shrunk incumbent variance.
        newv_b = np.take_along_axis(new_vars, np.argmax(means, axis=-1)[..., None], -1)
        incumbent_val = np.where(is_b, np.inf, gaps**2 / (newv_b + post_vars)).min(axis=-1)

        # Candidate = challenger j: only j's own term changes.
        own = gaps**2 / (v_b + new_vars)
        k = means.shape[-1]
        others_min = np.where(a1[..., None] == np.arange(k), m2[..., None], m1[..., None])
        challenger_vals = np.minimum(own, others_min)

    return np.where(is_b, incumbent_val[..., None], challenger_vals)


def two_factor_candidate_values(
    means: np.ndarray,
    post_vars: np.ndarray,
    sampling_vars: np.ndarray,
    w1: float,
    w2: float,
    activation: str = "linear",
) -> np.ndarray:
    """One-step look-ahead value of each candidate under the two-factor score.

    The score combines the squared-gap feature with the smallest squared
    induced correlation; each candidate is evaluated on the state reached
    by shrinking its posterior variance (means are unchanged, so the
    incumbent is unchanged).
    """
    b, is_b, _, _ = _incumbent_geometry(means, post_vars)
    new_vars = shrunk_variance(post_vars, sampling_vars)
    k = means.shape[-1]
    cols = []
    for cand in range(k):
        vars_c = np.array(post_vars, copy=True, dtype=float)
        vars_c[..., cand] = new_vars[..., cand]
        g1 = distance_squared(means, vars_c)
        v_b = np.take_along_axis(vars_c, b[..., None], -1)
        g2 = correlation_squared_min(vars_c, is_b, v_b)
        cols.append(apply_activation(w1 * g1 + w2 * g2, activation))
    return np.stack(cols, axis=-1)


def kg_candidate_values(
    means: np.ndarray, post_vars: np.ndarray, sampling_vars: np.ndarray
) -> np.ndarray:
    """Expected one-step improvement of the maximal posterior mean.

    For each alternative, the posterior mean after one more observation is
    normal around its current value with standard deviation
    s_i = sqrt(var_i - var_i'); the expected improvement has the usual
    closed form s * (z * Phi(z) + phi(z)) at z = -|gap to best other| / s.
    """
    new_vars = shrunk_variance(post_vars, sampling_vars)
    s = np.sqrt(np.maximum(post_vars - new_vars, 0.0))
    k = means.shape[-1]
    a1 = means.argmax(axis=-1)
    m1 = means.max(axis=-1)
    masked = np.array(means, copy=True, dtype=float)
    np.put_along_axis(masked, a1[..., None], -np.inf, axis=-1)
    m2 = masked.max(axis=-1)
    best_other = np.where(a1[..., None] == np.arange(k), m2[..., None], m1[..., None])
    with np.errstate(divide="ignore", invalid="ignore"):
        z = -np.abs(means - best_other) / s
        nu = s * (z * ndtr(z) + np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi))
    return np.where(s > 0.0, nu, 0.0)


def ocba_ratio_core(means: np.ndarray, sampling_vars: np.ndarray) -> tuple[np.ndarray, bool]:
    """Budget-allocation ratios from plug-in means and sampling variances.

    Challenger ratios scale as (sigma_i / gap_i)^2; the incumbent's ratio
    is sigma_b * sqrt(sum of squared challenger ratios over variances).
    Zero gaps are floored at machine-epsilon scale; the second return
    value reports whether the floor was hit.
    """
    b, is_b, gaps, _ = _incumbent_geometry(means, sampling_vars)
    mean_b = np.take_along_axis(means, b[..., None], -1)
    floor = np.finfo(float).eps * np.maximum(np.abs(mean_b), 1.0)
    guarded = bool(np.any((gaps <= floor) & ~is_b))
    safe_gaps = np.maximum(gaps, floor)
    raw = sampling_vars / safe_gaps**2
    raw = np.where(is_b, 0.0, raw)
    sigma_b = np.sqrt(np.take_along_axis(sampling_vars, b[..., None], -1))[..., 0]
    r_b = sigma_b * np.sqrt((raw**2 / sampling_vars).sum(axis=-1))
    raw = np.where(is_b, r_b[..., None], raw)
    return raw / raw.sum(axis=-1, keepdims=True), guarded


def ocba_deficits(
    means: np.ndarray, sampling_vars: np.ndarray, counts: np.ndarray
) -> np.ndarray:
    """Most-starving scores: target share of the budget minus samples received."""
    ratios, _ = ocba_ratio_core(means, sampling_vars)
    t = counts.sum(axis=-1, keepdims=True)
    return t * ratios - counts


def argmax_with_tiebreak(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Argmax along the last axis; ties go to fewest samples, then lowest index."""
    k = values.shape[-1]
    vmax = values.max(axis=-1, keepdims=True)
    tie = values == vmax
    score = np.asarray(counts, dtype=float) * k + np.arange(k)
    score = np.where(tie, score, np.inf)
    return score.argmin(axis=-1)


# ---------------------------------------------------------------------------
# Belief-level operations.
# ---------------------------------------------------------------------------


def select_max_posterior_mean(b: BeliefVector) -> int:
    """Select the alternative with the largest posterior mean."""
    return int(np.argmax(b.means))


def _posterior_best_probability(means, stds, i, tol):
    """P(alternative i has the largest mean) under independent normal posteriors."""
    k = len(means)
    others = [j for j in range(k) if j != i]

    def cdf_product(x):
        out = np.ones_like(np.asarray(x, dtype=float))
        for j in others:
            if stds[j] > 0:
                out = out * ndtr((x - means[j]) / stds[j])
            else:
                out = out * (x >= means[j])
        return out

    if stds[i] == 0.0:
        return float(cdf_product(np.array(means[i])))

    def integrand(x):
        z = (x - means[i]) / stds[i]
        return math.exp(-0.5 * z * z) / (stds[i] * math.sqrt(2 * math.pi)) * float(
            cdf_product(np.array(x))
        )

    lo, hi = means[i] - 8 * stds[i], means[i] + 8 * stds[i]
    value, abserr = integrate.quad(integrand, lo, hi, epsabs=tol, limit=200)
    if abserr > 100 * tol:
        raise RuntimeError(f"selection quadrature did not converge (abserr={abserr})")
    return value


def select_optimal_pcs(b: BeliefVector, max_k: int = 16, tol: float = 1e-8) -> int:
    """Select the alternative maximizing the posterior probability of being best.

    Unlike the max-mean rule this weighs the full posteriors, which
    matters when posterior variances are unequal.
    """
    if b.k > max_k:
        raise ValueError(f"k={b.k} exceeds the quadrature cap of {max_k}")
    means = b.means
    stds = np.sqrt(b.post_vars)
    probs = [_posterior_best_probability(means, stds, i, tol) for i in range(b.k)]
    return int(np.argmax(probs))


def _expected_max_posterior_mean(means, stds, tol):
    """E[max_i mu_i] under independent normal posteriors, by quadrature."""
    k = len(means)
    total = 0.0
    for i in range(k):
        others = [j for j in range(k) if j != i]

        def cdf_product(x):
            out = 1.0
            for j in others:
                if stds[j] > 0:
                    out *= float(ndtr((x - means[j]) / stds[j]))
                else:
                    out *= float(x >= means[j])
            return out

        if stds[i] == 0.0:
            total += means[i] * cdf_product(means[i])
            continue

        def integrand(x):
            z = (x - means[i]) / stds[i]
            dens = math.exp(-0.5 * z * z) / (stds[i] * math.sqrt(2 * math.pi))
            return x * dens * cdf_product(x)

        lo, hi = means[i] - 8 * stds[i], means[i] + 8 * stds[i]
        value, abserr = integrate.quad(integrand, lo, hi, epsabs=tol, limit=200)
        if abserr > 100 * tol * max(1.0, abs(value)):
            raise RuntimeError(f"expected-max quadrature did not converge (abserr={abserr})")
        total += value
    return total


def eoc_value(b: BeliefVector, tol: float = 1e-8) -> float:
    """Expected opportunity cost of selecting the max-mean alternative (<= 0)."""
    means = b.means
    stds = np.sqrt(b.post_vars)
    return float(means.max() - _expected_max_posterior_mean(means, stds, tol))


def select_optimal_eoc(b: BeliefVector) -> int:
    """Optimal selection under the opportunity-cost reward: the max posterior mean."""
    return select_max_posterior_mean(b)


def distance_feature(b: BeliefVector) -> tuple[np.ndarray, float]:
    """Normalized gaps from the incumbent to each challenger, and their minimum.

    Returns ``(d_others, d)`` where ``d_others`` follows the descending
    mean order (positions 1..k-1 of ``b.order``).
    """
    means, post_vars = b.means, b.post_vars
    order = b.order
    best = order[0]
    gaps = means[best] - means[order[1:]]
    denoms = post_vars[best] + post_vars[order[1:]]
    if np.any((denoms == 0.0) & (gaps == 0.0)):
        raise ValueError("degenerate pair: zero variances with equal means")
    with np.errstate(divide="ignore"):
        d_others = gaps / np.sqrt(denoms)
    return d_others, float(d_others.min())


def induced_correlation(b: BeliefVector, i: int, j: int) -> float:
    """Correlation between two challengers' gaps to the incumbent.

    Both gaps share the incumbent's uncertain mean, which induces a
    positive correlation proportional to the incumbent's variance.
    """
    best = b.best
    if i == j or i == best or j == best:
        raise ValueError("indices must be two distinct non-incumbent alternatives")
    if not (0 <= i < b.k and 0 <= j < b.k):
        raise IndexError("alternative index out of range")
    v = b.post_vars
    if v[best] == 0.0:
        return 0.0
    return float(v[best] / (math.sqrt(v[best] + v[i]) * math.sqrt(v[best] + v[j])))


def features(b: BeliefVector) -> tuple[float, float]:
    """Feature pair for value approximation: (min squared gap, min squared correlation)."""
    means, post_vars = b.means, b.post_vars
    _, is_b, _, v_b = _incumbent_geometry(means, post_vars)
    g1 = float(distance_squared(means, post_vars))
    g2 = float(correlation_squared_min(post_vars, is_b, v_b))
    return g1, g2


def apply_activation(z, activation: str):
    """Activation for weighted feature scores: identity or saturating 1 - exp(-z)."""
    if activation == "linear":
        return z
    if activation == "expm":
        return 1.0 - np.exp(-z)
    raise ValueError(f"unknown activation {activation!r}")


def aoap_values(b: BeliefVector) -> np.ndarray:
    """One-step look-ahead values of sampling each alternative."""
    vals = aoap_candidate_values(b.means, b.post_vars, b.sampling_vars)
    if np.any(np.isnan(vals)):
        raise ValueError("degenerate state: equal means with zero variances")
    return vals


def aoap_allocate(b: BeliefVector) -> int:
    """Allocate the next sample to the alternative with the best look-ahead value."""
    return int(argmax_with_tiebreak(aoap_values(b), b.counts))


def aoap_multistep(b: BeliefVector, depth: int, cap: int = 10**6) -> int:
    """Allocate by maximizing the look-ahead value ``depth`` steps out.

    Under certainty equivalence the posterior means never move, so a
    sampling sequence affects the final state only through how many times
    each alternative is sampled; the search over continuations therefore
    enumerates multisets.  Depth 1 reproduces ``aoap_allocate`` exactly.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if b.k**depth > cap:
        raise RuntimeError(f"look-ahead tree k^depth = {b.k**depth} exceeds cap {cap}")
    means, post_vars, sampling_vars = b.means, b.post_vars, b.sampling_vars
    if depth == 1:
        return aoap_allocate(b)

    best_vals = np.empty(b.k)
    for first in range(b.k):
        best = -math.inf
        for rest in itertools.combinations_with_replacement(range(b.k), depth - 1):
            extra = np.bincount(np.array((first,) + rest), minlength=b.k)
            vars_new = shrunk_variance(post_vars, sampling_vars, extra)
            vars_new = np.where(extra > 0, vars_new, post_vars)
            best = max(best, float(distance_squared(means, vars_new)))
        best_vals[first] = best
    if np.any(np.isnan(best_vals)):
        raise ValueError("degenerate state: equal means with zero variances")
    return int(argmax_with_tiebreak(best_vals, b.counts))


def two_factor_value(b: BeliefVector, weights: "VfaWeights") -> float:
    """Two-factor score of the current state."""
    g1, g2 = features(b)
    w = weights.w
    return float(apply_activation(w[0] * g1 + w[1] * g2, weights.activation))


def two_factor_allocate(b: BeliefVector, weights: "VfaWeights") -> int:
    """Allocate by the one-step look-ahead of the two-factor score.

    With zero weight on the correlation feature this reduces to
    ``aoap_allocate`` for any monotone activation.
    """
    w = weights.w
    if len(w) != 2:
        raise ValueError("two-factor policy needs exactly two weights")
    vals = two_factor_candidate_values(
        b.means, b.post_vars, b.sampling_vars, float(w[0]), float(w[1]), weights.activation
    )
    if np.any(np.isnan(vals)):
        raise ValueError("degenerate state: equal means with zero variances")
    return int(argmax_with_tiebreak(vals, b.counts))


def kg_factors(b: BeliefVector) -> np.ndarray:
    """Expected one-step improvement of the maximum posterior mean, per alternative."""
    if np.all(b.post_vars == 0.0):
        raise ValueError("no alternative can learn: all posterior variances are zero")
    return kg_candidate_values(b.means, b.post_vars, b.sampling_vars)


def kg_allocate(b: BeliefVector) -> int:
    """Allocate to the alternative with the largest expected improvement."""
    return int(argmax_with_tiebreak(kg_factors(b), b.counts))


def ocba_ratios(means: Sequence[float], stds: Sequence[float]) -> RatioVector:
    """Classical budget-allocation ratios from mean and std estimates."""
    means = np.asarray(means, dtype=float)
    svars = np.asarray(stds, dtype=float) ** 2
    ratios, guarded = ocba_ratio_core(means, svars)
    if guarded:
        warnings.warn("zero mean gap floored at machine-epsilon scale", RuntimeWarning)
    return RatioVector(ratios)


def ocba_most_starving_allocate(b: BeliefVector) -> int:
    """Allocate to the alternative furthest below its target budget share.

    Plug-in statistics are frequentist: sample means (so every belief needs
    at least one observation) and the beliefs' sampling variances.
    """
    deficits = ocba_deficits(b.sample_means, b.sampling_vars, b.counts.astype(float))
    return int(argmax_with_tiebreak(deficits, b.counts))


def ea_allocate(t: int, k: int) -> int:
    """Round-robin allocation: step t samples alternative t mod k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return t % k


# ---------------------------------------------------------------------------
# Asymptotically optimal sampling ratios.
# ---------------------------------------------------------------------------


def _pairwise_rate(gap: float, svar_best: float, svar_other: float, r_best: float, r_other: float) -> float:
    return gap**2 / (svar_other / r_other + svar_best / r_best)


def optimal_ratios(
    truth: GroundTruth,
    tol: float = 1e-10,
    max_iters: int = 10**5,
    initial_share: float | None = None,
) -> tuple[RatioVector, int]:
    """Sampling ratios equalizing the false-selection decay rate across challengers.

    Solves the coupled system: all challenger rate terms equal, the
    incumbent's ratio equal to sigma_best * sqrt(sum r_i^2 / sigma_i^2),
    ratios summing to one.  Given the incumbent ratio the challenger
    subsystem is solved exactly by one-dimensional root finding on the
    common rate level; the incumbent ratio is then iterated with damping
    0.5 under a bracketing safeguard (the defect is monotone, so the
    bracket always shrinks).

    ``initial_share`` seeds the incumbent's ratio (default 1/k); the
    solution is unique, so any interior start converges to the same point.
    Returns the ratio vector and the number of outer iterations.
    """
    means = np.asarray(truth.means, dtype=float)
    svars = np.asarray(truth.variances, dtype=float)
    if np.any(svars <= 0):
        raise ValueError("optimal ratios require strictly positive variances")
    k = len(means)
    order = np.lexsort((np.arange(k), -means))
    best = int(order[0])
    others = order[1:]
    gaps = means[best] - means[others]
    if np.any(gaps <= 0):
        raise ValueError("optimal ratios require a strictly largest mean")
    svar_b = svars[best]
    svar_o = svars[others]

    def challengers(x: float) -> np.ndarray:
        """Challenger ratios with equal rate terms summing to 1 - x."""
        # Parametrize by the common rate z: r_i = svar_i / (gap_i^2/z - svar_b/x).
        z_max = float(x * np.min(gaps**2) / svar_b)

        def total(z: float) -> float:
            r = svar_o / (gaps**2 / z - svar_b / x)
            return float(r.sum()) - (1.0 - x)

        lo = z_max * 1e-18
        hi = z_max * (1.0 - 1e-13)
        z = brentq(total, lo, hi, xtol=1e-300, rtol=8.9e-16, maxiter=300)
        return svar_o / (gaps**2 / z - svar_b / x)

    x = 1.0 / k if initial_share is None else float(initial_share)
    if not 0.0 < x < 1.0:
        raise ValueError("initial_share must lie in (0, 1)")
    lo_x, hi_x = 1e-12, 1.0 - 1e-12
    iters = 0
    for iters in range(1, max_iters + 1):
        r_o = challengers(x)
        target = math.sqrt(svar_b) * math.sqrt(float((r_o**2 / svar_o).sum()))
        if abs(x - target) < tol:
            break
        # x - target(x) is increasing in x: every evaluation refines the bracket.
        if x < target:
            lo_x = max(lo_x, x)
        else:
            hi_x = min(hi_x, x)
        proposal = x + 0.5 * (target - x)
        x = proposal if lo_x < proposal < hi_x else 0.5 * (lo_x + hi_x)
    else:
        raise RuntimeError(
            f"ratio iteration did not converge: residual {abs(x - target):.3e} "
            f"after {max_iters} iterations"
        )

    ratios = np.empty(k)
    ratios[best] = x
    ratios[others] = r_o
    ratios /= ratios.sum()
    return RatioVector(ratios), iters


def ratio_residuals(truth: GroundTruth, ratios: RatioVector) -> tuple[float, float]:
    """Defects of a candidate ratio vector against the optimality conditions.

    Returns (largest spread among challenger rate terms, defect of the
    incumbent-ratio equation).
    """
    means = np.asarray(truth.means, dtype=float)
    svars = np.asarray(truth.variances, dtype=float)
    k = len(means)
    order = np.lexsort((np.arange(k), -means))
    best = int(order[0])
    others = order[1:]
    r = ratios.ratios
    rates = np.array(
        [
            _pairwise_rate(means[best] - means[i], svars[best], svars[i], r[best], r[i])
            for i in others
        ]
    )
    spread = float(rates.max() - rates.min()) if len(rates) > 1 else 0.0
    target = math.sqrt(svars[best]) * math.sqrt(float((r[others] ** 2 / svars[others]).sum()))
    return spread, abs(float(r[best]) - target)
