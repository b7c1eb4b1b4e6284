"""Conjugate Bayesian belief models for sequential sampling.

Two belief families are supported, both closed under their sampling
models:

- ``GaussianBelief``: normal sampling with known variance and a normal
  prior on the unknown mean.  The posterior after ``t`` observations with
  sample mean ``m`` is N(mu_t, var_t) with

      var_t = (1/var_0 + t/sampling_var)^-1
      mu_t  = var_t * (mu_0/var_0 + t*m/sampling_var)

  An uninformative prior is represented as prior precision 0, i.e.
  ``post_var = inf`` before any data.

- ``BetaBelief``: Bernoulli sampling with a Beta prior on the success
  probability.  The posterior adds successes to ``alpha`` and failures to
  ``beta``.  The uninformative prior is alpha = beta = 0 (improper; the
  predictive is undefined until at least one observation arrives).

Beliefs are immutable; updates return new values.  Each caller owns its
own random generator, so read-only sharing across threads is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "GaussianBelief",
    "BetaBelief",
    "GroundTruth",
    "beta_update",
    "beta_predictive",
    "normal_update",
    "normal_batch_posterior",
    "normal_predictive",
    "sample_ground_truth",
    "sample_observation",
]


@dataclass(frozen=True)
class GaussianBelief:
    """Posterior state of one alternative under the known-variance normal model.

    Attributes
    ----------
    post_mean : float
        Posterior mean of the unknown sampling mean.
    post_var : float
        Posterior variance of the unknown sampling mean (>= 0; ``inf``
        encodes an uninformative prior with no data).
    count : int
        Number of observations folded into the posterior.
    sampling_var : float
        Known (or plug-in) variance of a single observation; > 0.
    sum_obs : float
        Running sum of observations (``count * sample_mean``).
    """

    post_mean: float
    post_var: float
    count: int
    sampling_var: float
    sum_obs: float = 0.0

    def __post_init__(self) -> None:
        if not self.sampling_var > 0:
            raise ValueError(f"sampling_var must be positive, got {self.sampling_var}")
        if self.post_var < 0 or math.isnan(self.post_var):
            raise ValueError(f"post_var must be >= 0, got {self.post_var}")
        if self.count < 0:
            raise ValueError(f"count must be >= 0, got {self.count}")

    @classmethod
    def from_prior(cls, mean: float, var: float, sampling_var: float) -> "GaussianBelief":
        """Fresh belief holding only prior information."""
        return cls(post_mean=mean, post_var=var, count=0, sampling_var=sampling_var)

    @classmethod
    def uninformative(cls, sampling_var: float) -> "GaussianBelief":
        """Zero-precision prior: the first observation fully determines the mean."""
        return cls(post_mean=0.0, post_var=math.inf, count=0, sampling_var=sampling_var)

    @property
    def sample_mean(self) -> float:
        if self.count == 0:
            raise ValueError("sample mean undefined with no observations")
        return self.sum_obs / self.count


@dataclass(frozen=True)
class BetaBelief:
    """Posterior state of one alternative under the Bernoulli model.

    ``alpha``/``beta`` are the posterior hyper-parameters (prior plus
    observed successes/failures); ``alpha = beta = 0`` with no data is the
    uninformative prior.
    """

    alpha: float
    beta: float
    count: int
    successes: int

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if not 0 <= self.successes <= self.count:
            raise ValueError("successes must lie in [0, count]")


@dataclass(frozen=True)
class GroundTruth:
    """A realized configuration of true means and sampling variances.

    Zero variances are admitted as a degenerate limit (deterministic
    observations); operations that divide by a variance check positivity
    themselves.
    """

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=float)
        variances = np.asarray(self.variances, dtype=float)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        if means.ndim != 1 or means.shape != variances.shape:
            raise ValueError("means and variances must be 1-d arrays of equal length")
        if len(means) < 2:
            raise ValueError("at least two alternatives required")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(variances)):
            raise ValueError("ground truth entries must be finite")
        if not np.all(variances >= 0):
            raise ValueError("sampling variances must be nonnegative")

    @property
    def n_alternatives(self) -> int:
        return len(self.means)

    @property
    def best(self) -> int:
        """Index of the true best alternative (lowest index on ties)."""
        return int(np.argmax(self.means))


def beta_update(belief: BetaBelief, obs: int) -> BetaBelief:
    """Fold one Bernoulli observation into a Beta belief."""
    if obs not in (0, 1):
        raise ValueError(f"observation must be 0 or 1, got {obs!r}")
    return BetaBelief(
        alpha=belief.alpha + obs,
        beta=belief.beta + (1 - obs),
        count=belief.count + 1,
        successes=belief.successes + obs,
    )


def beta_predictive(belief: BetaBelief) -> float:
    """Predictive success probability alpha / (alpha + beta)."""
    total = belief.alpha + belief.beta
    if total == 0:
        raise ValueError("predictive undefined: uninformative prior with no data")
    return belief.alpha / total


def normal_update(belief: GaussianBelief, obs: float) -> GaussianBelief:
    """Fold one observation into a Gaussian belief.

    Precision-weighted update: the new posterior precision is the old one
    plus the sampling precision, and the new mean is the precision-weighted
    average of the old mean and the observation.
    """
    if not math.isfinite(obs):
        raise ValueError(f"observation must be finite, got {obs}")
    if belief.post_var == 0.0:
        # Infinitely precise prior: data cannot move it.
        return replace(belief, count=belief.count + 1, sum_obs=belief.sum_obs + obs)
    new_var = 1.0 / (1.0 / belief.post_var + 1.0 / belief.sampling_var)
    new_mean = new_var * (belief.post_mean / belief.post_var + obs / belief.sampling_var)
    return GaussianBelief(
        post_mean=new_mean,
        post_var=new_var,
        count=belief.count + 1,
        sampling_var=belief.sampling_var,
        sum_obs=belief.sum_obs + obs,
    )


def normal_batch_posterior(
    prior_mean: float,
    prior_var: float,
    sampling_var: float,
    n: int,
    sample_mean: float,
) -> GaussianBelief:
    """Posterior after ``n`` observations with the given sample mean.

    Exchangeability makes this equal to ``n`` sequential ``normal_update``
    calls on any observation sequence with that mean.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return GaussianBelief.from_prior(prior_mean, prior_var, sampling_var)
    prior_prec = 0.0 if math.isinf(prior_var) else 1.0 / prior_var
    post_var = 1.0 / (prior_prec + n / sampling_var)
    post_mean = post_var * (prior_mean * prior_prec + n * sample_mean / sampling_var)
    return GaussianBelief(
        post_mean=post_mean,
        post_var=post_var,
        count=n,
        sampling_var=sampling_var,
        sum_obs=n * sample_mean,
    )


def normal_predictive(belief: GaussianBelief) -> tuple[float, float]:
    """Mean and variance of the next observation given the belief.

    The predictive spreads the sampling noise around the uncertain mean:
    N(post_mean, sampling_var + post_var).  Undefined for an uninformative
    prior that has seen no data.
    """
    if math.isinf(belief.post_var):
        raise ValueError("predictive undefined: uninformative prior with no data")
    return belief.post_mean, belief.sampling_var + belief.post_var


def sample_ground_truth(
    prior_means: np.ndarray,
    prior_stds: np.ndarray,
    sampling_stds: np.ndarray,
    rng: np.random.Generator,
) -> GroundTruth:
    """Draw true means independently from the per-alternative normal priors."""
    prior_means = np.asarray(prior_means, dtype=float)
    prior_stds = np.asarray(prior_stds, dtype=float)
    sampling_stds = np.asarray(sampling_stds, dtype=float)
    if np.any(prior_stds < 0):
        raise ValueError("prior standard deviations must be nonnegative")
    means = prior_means + prior_stds * rng.standard_normal(len(prior_means))
    return GroundTruth(means=means, variances=sampling_stds**2)


def sample_observation(truth: GroundTruth, i: int, rng: np.random.Generator) -> float:
    """Draw one observation from alternative ``i`` (0-based)."""
    if not 0 <= i < truth.n_alternatives:
        raise IndexError(f"alternative index {i} out of range")
    return float(truth.means[i] + math.sqrt(truth.variances[i]) * rng.standard_normal())
