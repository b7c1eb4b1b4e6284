"""Exact optimal sampling-and-selection policies for finite-support models.

When both the sampling distributions and the prior have finite support,
the optimal adaptive policy can be computed by backward induction.  The
sufficient statistic for the whole observation history is the vector of
per-alternative outcome counts, because the likelihood is a product over
observations and therefore order-free.  States are keyed by those counts.

``solve_bellman`` materializes only states reachable from the empty
history (forward pass) and then runs backward induction.  An independent
oracle, ``brute_force_value``, evaluates the same problem by exhaustive
expectimax over raw observation histories, never collapsing them to
counts; the two must agree to tight tolerance on any model small enough
for both.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

__all__ = [
    "DiscreteModel",
    "DiscreteState",
    "SolvedPolicy",
    "posterior_pmf",
    "predictive_pmf",
    "terminal_value",
    "solve_bellman",
    "brute_force_value",
    "state_space_size",
    "state_space_bounds",
    "BernoulliPriorSpec",
    "NormalPriorSpec",
    "discretize_prior",
    "load_model",
    "save_model",
]

_PMF_TOL = 1e-12

StateKey = tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class DiscreteModel:
    """Finite-support sampling model with a finite-support prior.

    Attributes
    ----------
    support : nested tuple
        ``support[i][j]`` is the j-th possible outcome of alternative i.
    prior_points : tuple
        Labels for the prior support points (display only; the model
        content lives in ``sampling_pmf``).
    prior_pmf : tuple of float
        Prior probability of each support point; sums to 1.
    sampling_pmf : nested tuple
        ``sampling_pmf[m][i][j]`` is the probability that alternative i
        yields outcome j when the m-th parameter point is true.
    reward : str
        ``"PCS"`` (indicator of selecting a best-mean alternative) or
        ``"EOC"`` (selected mean minus best mean; nonpositive).
    """

    support: tuple[tuple[float, ...], ...]
    prior_points: tuple
    prior_pmf: tuple[float, ...]
    sampling_pmf: tuple[tuple[tuple[float, ...], ...], ...]
    reward: str = "PCS"

    def __post_init__(self) -> None:
        object.__setattr__(self, "support", _freeze2(self.support))
        object.__setattr__(self, "prior_points", tuple(self.prior_points))
        object.__setattr__(self, "prior_pmf", tuple(float(p) for p in self.prior_pmf))
        object.__setattr__(self, "sampling_pmf", _freeze3(self.sampling_pmf))
        if self.reward not in ("PCS", "EOC"):
            raise ValueError(f"reward must be 'PCS' or 'EOC', got {self.reward!r}")
        if self.k < 2:
            raise ValueError("need at least two alternatives")
        if len(self.prior_points) != self.r or len(self.sampling_pmf) != self.r:
            raise ValueError("prior support, pmf, and sampling pmfs must align")
        if abs(sum(self.prior_pmf) - 1.0) > _PMF_TOL:
            raise ValueError("prior pmf must sum to 1")
        for p in self.prior_pmf:
            if not 0.0 <= p <= 1.0:
                raise ValueError("prior pmf entries must lie in [0, 1]")
        for m, per_alt in enumerate(self.sampling_pmf):
            if len(per_alt) != self.k:
                raise ValueError("sampling pmf must cover every alternative")
            for i, pmf in enumerate(per_alt):
                if len(pmf) != len(self.support[i]):
                    raise ValueError("sampling pmf must match the outcome support")
                if abs(sum(pmf) - 1.0) > _PMF_TOL:
                    raise ValueError(f"sampling pmf for point {m}, alternative {i} must sum to 1")
                if any(not 0.0 <= q <= 1.0 for q in pmf):
                    raise ValueError("sampling probabilities must lie in [0, 1]")

    @property
    def k(self) -> int:
        return len(self.support)

    @property
    def r(self) -> int:
        return len(self.prior_pmf)

    @property
    def support_sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.support)

    def mean(self, m: int, i: int) -> float:
        """Mean outcome of alternative i under the m-th parameter point."""
        return sum(y * q for y, q in zip(self.support[i], self.sampling_pmf[m][i]))

    def terminal_reward(self, m: int, i: int) -> float:
        """Reward of selecting alternative i if the m-th point is true.

        Ties among means are treated as a set of maximizers: under PCS,
        selecting any alternative attaining the maximal mean scores 1.
        """
        means = [self.mean(m, j) for j in range(self.k)]
        best = max(means)
        if self.reward == "PCS":
            return 1.0 if means[i] == best else 0.0
        return means[i] - best

    def empty_state(self) -> "DiscreteState":
        return DiscreteState(tuple(tuple(0 for _ in s) for s in self.support))


def _freeze2(rows) -> tuple:
    return tuple(tuple(float(x) for x in row) for row in rows)


def _freeze3(blocks) -> tuple:
    return tuple(_freeze2(block) for block in blocks)


@dataclass(frozen=True)
class DiscreteState:
    """Outcome counts per alternative: the sufficient statistic of a history."""

    counts: StateKey

    def __post_init__(self) -> None:
        counts = tuple(tuple(int(c) for c in row) for row in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 0 for row in counts for c in row):
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return sum(c for row in self.counts for c in row)

    def bump(self, i: int, j: int) -> "DiscreteState":
        row = list(self.counts[i])
        row[j] += 1
        counts = list(self.counts)
        counts[i] = tuple(row)
        return DiscreteState(tuple(counts))


def _posterior_weights(model: DiscreteModel, state: DiscreteState) -> list[float]:
    """Unnormalized posterior weights: prior times likelihood of the counts."""
    weights = []
    for m in range(model.r):
        w = model.prior_pmf[m]
        for i in range(model.k):
            for j, c in enumerate(state.counts[i]):
                if c:
                    w *= model.sampling_pmf[m][i][j] ** c
        weights.append(w)
    return weights


def posterior_pmf(model: DiscreteModel, state: DiscreteState) -> np.ndarray:
    """Posterior over the prior support points given the observed counts."""
    for i, row in enumerate(state.counts):
        if len(row) != len(model.support[i]):
            raise ValueError("state counts do not match the model support")
    weights = _posterior_weights(model, state)
    total = sum(weights)
    if total <= 0.0:
        raise ValueError("state has zero probability under every prior point")
    return np.array(weights) / total


def predictive_pmf(model: DiscreteModel, state: DiscreteState, i: int) -> np.ndarray:
    """Predictive distribution of the next observation from alternative i."""
    if not 0 <= i < model.k:
        raise IndexError(f"alternative index {i} out of range")
    post = posterior_pmf(model, state)
    return np.array(
        [
            sum(model.sampling_pmf[m][i][j] * post[m] for m in range(model.r))
            for j in range(len(model.support[i]))
        ]
    )


def terminal_value(model: DiscreteModel, state: DiscreteState, i: int) -> float:
    """Expected terminal reward of selecting alternative i at this state."""
    if not 0 <= i < model.k:
        raise IndexError(f"alternative index {i} out of range")
    post = posterior_pmf(model, state)
    return float(sum(model.terminal_reward(m, i) * post[m] for m in range(model.r)))


@dataclass
class SolvedPolicy:
    """Output of backward induction: optimal actions and values per state.

    ``allocation[t]`` maps every reachable state with ``t`` samples to the
    alternative to sample next; ``selection`` maps every reachable terminal
    state to the alternative to select.  Argmax ties break toward the
    lowest alternative index.
    """

    horizon: int
    reward: str
    value: float
    allocation: dict[int, dict[StateKey, int]] = field(repr=False)
    selection: dict[StateKey, int] = field(repr=False)
    values: dict[int, dict[StateKey, float]] = field(repr=False)

    def allocation_at(self, t: int, state: DiscreteState) -> int:
        return self.allocation[t][state.counts]

    def selection_at(self, state: DiscreteState) -> int:
        return self.selection[state.counts]

    def dump_table(self, path: str) -> None:
        """Write a human-readable policy table."""
        with open(path, "w") as fh:
            fh.write(f"# horizon={self.horizon} reward={self.reward} value={self.value!r}\n")
            fh.write("# kind\tt\tstate\taction\tvalue\n")
            for t in range(self.horizon):
                for key in sorted(self.allocation[t]):
                    fh.write(
                        f"allocate\t{t}\t{_fmt_key(key)}\t{self.allocation[t][key]}"
                        f"\t{self.values[t][key]!r}\n"
                    )
            for key in sorted(self.selection):
                fh.write(
                    f"select\t{self.horizon}\t{_fmt_key(key)}\t{self.selection[key]}"
                    f"\t{self.values[self.horizon][key]!r}\n"
                )


def _fmt_key(key: StateKey) -> str:
    return ";".join(",".join(str(c) for c in row) for row in key)


def solve_bellman(model: DiscreteModel, horizon: int, state_cap: int = 10**7) -> SolvedPolicy:
    """Backward induction over reachable count states up to ``horizon``.

    A forward pass enumerates, level by level, every state reachable with
    positive predictive probability; backward induction then fills values,
    allocations, and the terminal selection.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    n_states = state_space_size(horizon, model.k, model.support_sizes)
    if n_states > state_cap:
        raise RuntimeError(
            f"state space too large: {n_states} states at the final step "
            f"exceeds the cap of {state_cap}"
        )

    # Forward pass.  Unnormalized posterior weights propagate incrementally:
    # appending outcome j of alternative i multiplies weight m by q[m][i][j].
    empty = model.empty_state()
    levels: list[dict[StateKey, list[float]]] = [
        {empty.counts: _posterior_weights(model, empty)}
    ]
    for _ in range(horizon):
        nxt: dict[StateKey, list[float]] = {}
        for key, weights in levels[-1].items():
            state = DiscreteState(key)
            total = sum(weights)
            for i in range(model.k):
                for j in range(len(model.support[i])):
                    pred = sum(
                        model.sampling_pmf[m][i][j] * weights[m] for m in range(model.r)
                    )
                    if pred / total <= 0.0:
                        continue
                    child = state.bump(i, j).counts
                    if child not in nxt:
                        child_w = [
                            weights[m] * model.sampling_pmf[m][i][j]
                            for m in range(model.r)
                        ]
                        nxt[child] = child_w
        levels.append(nxt)

    # Terminal layer: optimal selection.
    values: dict[int, dict[StateKey, float]] = {t: {} for t in range(horizon + 1)}
    selection: dict[StateKey, int] = {}
    for key, weights in levels[horizon].items():
        total = sum(weights)
        post = [w / total for w in weights]
        best_v, best_i = -math.inf, 0
        for i in range(model.k):
            v = sum(model.terminal_reward(m, i) * post[m] for m in range(model.r))
            if v > best_v:
                best_v, best_i = v, i
        values[horizon][key] = best_v
        selection[key] = best_i

    # Backward induction over allocations.
    allocation: dict[int, dict[StateKey, int]] = {t: {} for t in range(horizon)}
    for t in range(horizon - 1, -1, -1):
        for key, weights in levels[t].items():
            state = DiscreteState(key)
            total = sum(weights)
            best_v, best_i = -math.inf, 0
            for i in range(model.k):
                v = 0.0
                for j in range(len(model.support[i])):
                    pred = (
                        sum(model.sampling_pmf[m][i][j] * weights[m] for m in range(model.r))
                        / total
                    )
                    if pred > 0.0:
                        v += pred * values[t + 1][state.bump(i, j).counts]
                if v > best_v:
                    best_v, best_i = v, i
            values[t][key] = best_v
            allocation[t][key] = best_i

    return SolvedPolicy(
        horizon=horizon,
        reward=model.reward,
        value=values[0][empty.counts],
        allocation=allocation,
        selection=selection,
        values=values,
    )


def brute_force_value(model: DiscreteModel, horizon: int, path_cap: int = 10**5) -> float:
    """Expectimax over raw observation histories; oracle for ``solve_bellman``.

    Histories are never collapsed to counts and nothing is memoized: each
    node recomputes the posterior from the full raw sequence.  Exhausts
    every adaptive deterministic policy, so the root value equals the
    optimum.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    s_max = max(model.support_sizes)
    if (model.k * s_max) ** horizon > path_cap:
        raise RuntimeError(
            f"history tree too large: (k*s_max)^T = {(model.k * s_max) ** horizon} "
            f"exceeds the cap of {path_cap}"
        )

    def history_posterior(history: tuple[tuple[int, int], ...]) -> list[float]:
        weights = []
        for m in range(model.r):
            w = model.prior_pmf[m]
            for i, j in history:
                w *= model.sampling_pmf[m][i][j]
            weights.append(w)
        total = sum(weights)
        if total <= 0.0:
            raise ValueError("history has zero probability under every prior point")
        return [w / total for w in weights]

    def value(history: tuple[tuple[int, int], ...]) -> float:
        post = history_posterior(history)
        if len(history) == horizon:
            return max(
                sum(model.terminal_reward(m, i) * post[m] for m in range(model.r))
                for i in range(model.k)
            )
        best = -math.inf
        for i in range(model.k):
            v = 0.0
            for j in range(len(model.support[i])):
                pred = sum(model.sampling_pmf[m][i][j] * post[m] for m in range(model.r))
                if pred > 0.0:
                    v += pred * value(history + ((i, j),))
            best = max(best, v)
        return best

    return value(())


def state_space_size(t: int, k: int, supports: Sequence[int]) -> int:
    """Number of distinct count states after ``t`` samples over ``k`` alternatives.

    Sums, over all splits of ``t`` among alternatives, the product of
    per-alternative multiset counts C(s_i + t_i - 1, s_i - 1).  Exact
    integer arithmetic throughout.
    """
    if t < 0 or k < 0:
        raise ValueError("t and k must be >= 0")
    sizes = [int(s) for s in supports]
    if len(sizes) != k:
        raise ValueError("need one support size per alternative")
    if any(s < 2 for s in sizes):
        raise ValueError("support sizes must be >= 2")
    ways = [1] + [0] * t
    for s in sizes:
        nxt = [0] * (t + 1)
        for used, count in enumerate(ways):
            if count:
                for extra in range(t - used + 1):
                    nxt[used + extra] += count * math.comb(s + extra - 1, s - 1)
        ways = nxt
    return ways[t]


def state_space_bounds(t: int, k: int, supports: Sequence[int]) -> tuple[Fraction, Fraction]:
    """Analytic lower/upper bounds on ``state_space_size`` (exact rationals).

    The lower bound evaluates the most balanced valid split of ``t``
    samples, so it uses floor(t/k); the ceiling variant overshoots the true
    count for small ``t`` not divisible by ``k`` (e.g. three binary
    alternatives and one sample admit 6 states, not 2^3).  Both forms agree
    whenever ``k`` divides ``t``.
    """
    if k < 1:
        raise ValueError("bounds need k >= 1")
    sizes = [int(s) for s in supports]
    s_hi = max(sizes)
    s_lo = min(sizes)
    lower = (1 + Fraction(t // k, s_hi - 1)) ** (k * (s_lo - 1))
    upper = Fraction(
        (s_hi + t + k - 1) ** (k * s_hi),
        math.factorial(s_hi - 1) * math.factorial(k - 1),
    )
    return lower, upper


@dataclass(frozen=True)
class BernoulliPriorSpec:
    """Independent Beta priors over per-alternative success probabilities."""

    alphas: tuple[float, ...]
    betas: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.alphas) != len(self.betas):
            raise ValueError("alphas and betas must have equal length")
        if any(a <= 0 for a in self.alphas) or any(b <= 0 for b in self.betas):
            raise ValueError("Beta hyper-parameters must be positive")


@dataclass(frozen=True)
class NormalPriorSpec:
    """Independent normal priors over means, known sampling variances."""

    prior_means: tuple[float, ...]
    prior_stds: tuple[float, ...]
    sampling_stds: tuple[float, ...]

    def __post_init__(self) -> None:
        for name in ("prior_means", "prior_stds", "sampling_stds"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if not len(self.prior_means) == len(self.prior_stds) == len(self.sampling_stds):
            raise ValueError("prior spec vectors must have equal length")
        if any(s <= 0 for s in self.prior_stds):
            raise ValueError("prior stds must be positive for discretization")
        if any(s <= 0 for s in self.sampling_stds):
            raise ValueError("sampling stds must be positive")


def _quantile_grid(ppf, grid_points: int) -> list[float]:
    """Equal-mass grid: the distribution's quantiles at cell midpoints."""
    return [float(ppf((2 * m + 1) / (2 * grid_points))) for m in range(grid_points)]


def discretize_prior(
    spec,
    grid_points: int,
    reward: str = "PCS",
    obs_grid_points: int | None = None,
    max_prior_points: int = 10**5,
) -> DiscreteModel:
    """Approximate a continuous-prior model by a finite-support one.

    Each marginal prior is replaced by an equal-probability-mass quantile
    grid with ``grid_points`` cells; the joint prior support is the product
    grid.  For normal sampling, observations are additionally binned into
    ``obs_grid_points`` cells of the marginal predictive distribution.
    The result is an approximation whose quality improves with grid size.
    """
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    if isinstance(spec, BernoulliPriorSpec):
        k = len(spec.alphas)
        grids = [
            _quantile_grid(lambda u, a=a, b=b: stats.beta.ppf(u, a, b), grid_points)
            for a, b in zip(spec.alphas, spec.betas)
        ]
        if grid_points**k > max_prior_points:
            raise RuntimeError(f"product prior grid exceeds {max_prior_points} points")
        prior_points = list(itertools.product(*grids))
        prior_pmf = [1.0 / len(prior_points)] * len(prior_points)
        support = [(0.0, 1.0)] * k
        sampling_pmf = [
            [(1.0 - p, p) for p in point] for point in prior_points
        ]
        return DiscreteModel(
            support=support,
            prior_points=prior_points,
            prior_pmf=prior_pmf,
            sampling_pmf=sampling_pmf,
            reward=reward,
        )
    if isinstance(spec, NormalPriorSpec):
        k = len(spec.prior_means)
        obs_points = obs_grid_points or grid_points
        if obs_points < 2:
            raise ValueError("obs_grid_points must be >= 2")
        grids = [
            _quantile_grid(lambda u, m=m, s=s: stats.norm.ppf(u, m, s), grid_points)
            for m, s in zip(spec.prior_means, spec.prior_stds)
        ]
        if grid_points**k > max_prior_points:
            raise RuntimeError(f"product prior grid exceeds {max_prior_points} points")
        prior_points = list(itertools.product(*grids))
        prior_pmf = [1.0 / len(prior_points)] * len(prior_points)
        support = []
        boundaries = []
        for i in range(k):
            pred_std = math.hypot(spec.prior_stds[i], spec.sampling_stds[i])
            support.append(
                tuple(
                    _quantile_grid(
                        lambda u, m=spec.prior_means[i], s=pred_std: stats.norm.ppf(u, m, s),
                        obs_points,
                    )
                )
            )
            edges = [-math.inf]
            edges += [
                float(stats.norm.ppf(j / obs_points, spec.prior_means[i], pred_std))
                for j in range(1, obs_points)
            ]
            edges.append(math.inf)
            boundaries.append(edges)
        sampling_pmf = []
        for point in prior_points:
            per_alt = []
            for i in range(k):
                sd = spec.sampling_stds[i]
                cdf = [
                    float(stats.norm.cdf((b - point[i]) / sd)) for b in boundaries[i]
                ]
                per_alt.append(tuple(cdf[j + 1] - cdf[j] for j in range(obs_points)))
            sampling_pmf.append(per_alt)
        return DiscreteModel(
            support=support,
            prior_points=prior_points,
            prior_pmf=prior_pmf,
            sampling_pmf=sampling_pmf,
            reward=reward,
        )
    raise ValueError(f"unsupported prior family: {type(spec).__name__}")


def save_model(model: DiscreteModel, path: str) -> None:
    payload = {
        "k": model.k,
        "support": [list(s) for s in model.support],
        "prior_support": [
            list(p) if isinstance(p, (tuple, list)) else p for p in model.prior_points
        ],
        "prior_pmf": list(model.prior_pmf),
        "sampling_pmf": [[list(pmf) for pmf in per_alt] for per_alt in model.sampling_pmf],
        "reward": model.reward,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_model(path: str) -> DiscreteModel:
    with open(path) as fh:
        payload = json.load(fh)
    model = DiscreteModel(
        support=payload["support"],
        prior_points=[
            tuple(p) if isinstance(p, list) else p for p in payload["prior_support"]
        ],
        prior_pmf=payload["prior_pmf"],
        sampling_pmf=payload["sampling_pmf"],
        reward=payload.get("reward", "PCS"),
    )
    if model.k != payload["k"]:
        raise ValueError("model file k does not match its support")
    return model
