"""Monte Carlo learning of feature weights for the selection value score.

The weighted feature score ``K(w . g)`` is fitted to correct-selection
indicators observed on simulated sampling histories, by projected
stochastic approximation on the least-squares objective

    J(w) = E[(K(w . g) - 1{selection correct})^2],

one fresh simulated history per iteration.  For the linear activation the
objective is convex (its Hessian is twice the second-moment matrix of the
features), so a box-constrained least-squares solve provides an
independent oracle for the stochastic iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .policies import apply_activation

__all__ = [
    "VfaWeights",
    "SaConfig",
    "vfa_eval",
    "gmcl_gradient",
    "sa_minimize",
    "sa_fit_frozen",
    "gmcl_fit",
    "linear_lsq_oracle",
    "save_weights",
    "load_weights",
]

DEFAULT_BOX_BOUND = 100.0


@dataclass(frozen=True)
class VfaWeights:
    """Feature weights with their activation and a projection box [0, box_bound]."""

    w: np.ndarray
    activation: str = "linear"
    box_bound: float = DEFAULT_BOX_BOUND

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "w", w)
        if self.activation not in ("linear", "expm"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.box_bound > 0:
            raise ValueError("box_bound must be positive")
        if np.any(w < 0) or np.any(w > self.box_bound):
            raise ValueError("weights must lie in [0, box_bound]")


@dataclass(frozen=True)
class SaConfig:
    """Stochastic-approximation schedule: steps step_scale * l^(-step_exponent).

    The exponent must lie in (0.5, 1] so the step sums diverge while their
    squares converge.
    """

    step_scale: float = 10.0
    step_exponent: float = 2.0 / 3.0
    iterations: int = 10_000
    initial_w: tuple[float, ...] = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.step_scale > 0:
            raise ValueError("step_scale must be positive")
        if not 0.5 < self.step_exponent <= 1.0:
            raise ValueError("step_exponent must lie in (0.5, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def step(self, l: int) -> float:
        return self.step_scale * l ** (-self.step_exponent)


def vfa_eval(weights: VfaWeights, g: Sequence[float]) -> float:
    """Score a feature vector: K(w . g)."""
    g = np.asarray(g, dtype=float)
    if g.shape != weights.w.shape:
        raise ValueError(f"feature length {g.shape} does not match weights {weights.w.shape}")
    return float(apply_activation(float(weights.w @ g), weights.activation))


def gmcl_gradient(g: Sequence[float], indicator: float, weights: VfaWeights) -> np.ndarray:
    """Single-sample gradient estimate: residual times the score gradient."""
    g = np.asarray(g, dtype=float)
    z = float(weights.w @ g)
    residual = apply_activation(z, weights.activation) - indicator
    if weights.activation == "linear":
        grad = g
    else:
        grad = np.exp(-z) * g
    return residual * grad


def sa_minimize(
    sample_fn: Callable[[int], tuple[np.ndarray, float]],
    config: SaConfig,
    activation: str = "linear",
    box_bound: float = DEFAULT_BOX_BOUND,
    average_tail: float = 0.0,
) -> VfaWeights:
    """Projected stochastic gradient descent on the least-squares objective.

    ``sample_fn(l)`` supplies the l-th (features, indicator) pair; iterates
    are clipped to [0, box_bound] after every step.  By default the final
    iterate is returned; ``average_tail=q`` returns instead the average of
    the last ``q`` fraction of iterates (Polyak-style averaging, which
    suppresses the oscillation of the final iterate on ill-conditioned
    objectives without changing the limit).
    """
    if not 0.0 <= average_tail < 1.0:
        raise ValueError("average_tail must lie in [0, 1)")
    w = np.array(config.initial_w, dtype=float)
    if np.any(w < 0) or np.any(w > box_bound):
        raise ValueError("initial weights must lie in the projection box")
    tail_start = config.iterations - int(config.iterations * average_tail)
    acc = np.zeros_like(w)
    tail_count = 0
    for l in range(1, config.iterations + 1):
        g, y = sample_fn(l)
        d = gmcl_gradient(g, y, VfaWeights(w, activation, box_bound))
        w = np.clip(w - config.step(l) * d, 0.0, box_bound)
        if not np.all(np.isfinite(w)):
            raise RuntimeError(
                f"stochastic approximation diverged at iteration {l}: w={w!r}, "
                f"features={np.asarray(g)!r}, indicator={y!r}"
            )
        if l > tail_start:
            acc += w
            tail_count += 1
    if tail_count:
        w = acc / tail_count
    return VfaWeights(w, activation, box_bound)


def sa_fit_frozen(
    features: np.ndarray,
    indicators: np.ndarray,
    config: SaConfig,
    activation: str = "linear",
    box_bound: float = DEFAULT_BOX_BOUND,
    average_tail: float = 0.0,
) -> VfaWeights:
    """Run the stochastic iteration cycling deterministically over a frozen set."""
    features = np.asarray(features, dtype=float)
    indicators = np.asarray(indicators, dtype=float)
    n = len(indicators)

    def sample(l: int) -> tuple[np.ndarray, float]:
        row = (l - 1) % n
        return features[row], float(indicators[row])

    return sa_minimize(sample, config, activation, box_bound, average_tail)


def gmcl_fit(
    scenario,
    horizon: int | None = None,
    generator_policy: str = "ea",
    config: SaConfig | None = None,
    activation: str = "linear",
    box_bound: float = DEFAULT_BOX_BOUND,
    batch: int = 2048,
) -> VfaWeights:
    """Fit feature weights against fresh simulated histories.

    Each iteration draws one new independent history: a ground truth
    sampled from the scenario prior, a run of ``generator_policy`` (which
    must not depend on the weights) to the horizon, then the features and
    the correct-selection indicator of the final state.  Histories are
    generated in deterministic batches keyed by the config seed.
    """
    from .experiment import replication_features

    config = config or SaConfig()
    if horizon is not None and horizon != scenario.horizon:
        scenario = replace(scenario, horizon=horizon)

    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def sample(l: int) -> tuple[np.ndarray, float]:
        idx = l - 1
        block = idx // batch
        if block not in cache:
            cache.clear()
            lo = block * batch
            cache[block] = replication_features(
                scenario,
                generator_policy,
                range(lo, lo + batch),
                master_seed=config.seed,
                namespace=1,
            )
        feats, inds = cache[block]
        return feats[idx - block * batch], float(inds[idx - block * batch])

    return sa_minimize(sample, config, activation, box_bound)


def linear_lsq_oracle(
    features: np.ndarray,
    indicators: np.ndarray,
    box_bound: float = DEFAULT_BOX_BOUND,
) -> np.ndarray:
    """Box-constrained least squares of indicators on features (linear activation).

    Solves min ||G w - y||^2 subject to 0 <= w <= box_bound exactly via an
    active-set method; raises on a singular design.  Also checks that the
    sample Hessian 2 * mean(G' G) is positive semidefinite.
    """
    G = np.asarray(features, dtype=float)
    y = np.asarray(indicators, dtype=float)
    hess = 2.0 * (G.T @ G) / len(y)
    evals = np.linalg.eigvalsh(hess)
    if evals.min() < -1e-10:
        raise AssertionError(f"sample Hessian not PSD: min eigenvalue {evals.min()}")
    if evals.min() <= 1e-12 * max(evals.max(), 1e-300):
        raise ValueError("singular feature design: least-squares weights not identified")
    result = lsq_linear(G, y, bounds=(0.0, box_bound), method="bvls", tol=1e-14)
    if not result.success:
        raise RuntimeError(f"bounded least squares failed: {result.message}")
    return result.x


def save_weights(weights: VfaWeights, path: str, config: SaConfig | None = None) -> None:
    """Serialize fitted weights (plus the fitting configuration, if any)."""
    payload = {
        "weights": [float(x) for x in weights.w],
        "activation": weights.activation,
        "box_bound": weights.box_bound,
    }
    if config is not None:
        payload["config"] = {
            "step_scale": config.step_scale,
            "step_exponent": config.step_exponent,
            "iterations": config.iterations,
            "initial_w": list(config.initial_w),
            "seed": config.seed,
        }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_weights(path: str) -> VfaWeights:
    with open(path) as fh:
        payload = json.load(fh)
    return VfaWeights(
        w=np.array(payload["weights"], dtype=float),
        activation=payload.get("activation", "linear"),
        box_bound=payload.get("box_bound", DEFAULT_BOX_BOUND),
    )
