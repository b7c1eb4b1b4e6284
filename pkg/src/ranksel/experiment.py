"""Monte Carlo harness estimating the expected probability of correct selection.

A macro replication draws a ground truth from the scenario prior, spends a
round-robin warmup of ``n0`` observations per alternative, then runs one
allocation policy to the horizon, recording after every step whether the
max-posterior-mean selection matches the true best alternative.  Averaging
the indicator over independently seeded replications estimates, per step,
the unconditional probability of correct selection.

Replications are simulated as rows of a batch: every per-step quantity is
an ``(n, k)`` array and policies decide a whole batch at once.  Each row's
randomness comes from its own generator keyed by ``(master_seed,
namespace, index)``, so results are independent of batch boundaries and
worker counts, and any single replication can be reproduced in isolation.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import policies as pol
from .beliefs import GroundTruth
from .vfa import SaConfig, VfaWeights, gmcl_fit, load_weights

__all__ = [
    "VARIANCE_MODES",
    "Scenario",
    "BatchState",
    "IpcsCurve",
    "builtin_scenario",
    "BUILTIN_SCENARIOS",
    "make_policy",
    "run_macro_replication",
    "estimate_ipcs",
    "replication_features",
    "run_fixed_truths",
    "run_experiment",
    "write_results",
    "load_config",
    "parse_config",
    "scenario_from_config",
]

VARIANCE_MODES = ("known", "plugin_frozen", "plugin_refresh")


@dataclass(frozen=True)
class Scenario:
    """Experiment configuration: prior, truth-generating model, and budget."""

    prior_means: tuple[float, ...]
    prior_stds: tuple[float, ...]
    sampling_stds: tuple[float, ...]
    horizon: int
    n0: int
    macro_reps: int = 10_000
    master_seed: int = 0
    variance_mode: str = "plugin_refresh"

    def __post_init__(self) -> None:
        for name in ("prior_means", "prior_stds", "sampling_stds"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        k = self.k
        if k < 2:
            raise ValueError("need at least two alternatives")
        if not len(self.prior_stds) == len(self.sampling_stds) == k:
            raise ValueError("prior and sampling vectors must share one length")
        if any(s < 0 for s in self.prior_stds):
            raise ValueError("prior stds must be nonnegative")
        if any(s <= 0 for s in self.sampling_stds):
            raise ValueError("sampling stds must be positive")
        if self.variance_mode not in VARIANCE_MODES:
            raise ValueError(f"variance_mode must be one of {VARIANCE_MODES}")
        min_n0 = 1 if self.variance_mode == "known" else 2
        if self.n0 < min_n0:
            raise ValueError(f"n0 must be >= {min_n0} for variance_mode {self.variance_mode}")
        if self.horizon < k * self.n0:
            raise ValueError("horizon must cover the warmup (horizon >= k * n0)")
        if self.macro_reps < 1:
            raise ValueError("macro_reps must be >= 1")
        zero_prior = [i for i, s in enumerate(self.prior_stds) if s == 0]
        means = [self.prior_means[i] for i in zero_prior]
        if len(set(means)) != len(means):
            raise ValueError("alternatives with zero prior std must have distinct prior means")

    @property
    def k(self) -> int:
        return len(self.prior_means)

    @property
    def warmup(self) -> int:
        return self.k * self.n0

    @property
    def step_grid(self) -> np.ndarray:
        """Sample counts at which correctness is recorded: warmup end through horizon."""
        return np.arange(self.warmup, self.horizon + 1)


def builtin_scenario(name: str, **overrides) -> Scenario:
    """A named stock scenario, optionally with fields overridden."""
    try:
        base = BUILTIN_SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; known: {sorted(BUILTIN_SCENARIOS)}")
    return replace(base, **overrides) if overrides else base


BUILTIN_SCENARIOS = {
    # Ten alternatives, wide prior spread relative to sampling noise: gaps
    # between true means are typically resolvable within the budget.
    "example1": Scenario(
        prior_means=(0.0,) * 10,
        prior_stds=(1.0,) * 10,
        sampling_stds=(1.0,) * 10,
        horizon=400,
        n0=10,
        master_seed=20260801,
    ),
    # Ten alternatives, tiny prior spread (the first slightly wider):
    # gaps are far below the sampling noise at this budget.
    "example2-lowconf": Scenario(
        prior_means=(0.0,) * 10,
        prior_stds=(0.02,) + (0.01,) * 9,
        sampling_stds=(1.0,) * 10,
        horizon=200,
        n0=10,
        master_seed=20260802,
    ),
    # Intermediate spread between the two cases above.
    "example2-midconf": Scenario(
        prior_means=(0.0,) * 10,
        prior_stds=(0.08,) + (0.04,) * 9,
        sampling_stds=(1.0,) * 10,
        horizon=200,
        n0=10,
        master_seed=20260803,
    ),
}


@dataclass(frozen=True)
class IpcsCurve:
    """Per-step estimate of the probability of correct selection."""

    steps: np.ndarray
    ipcs: np.ndarray
    stderr: np.ndarray
    macro_reps: int

    def __post_init__(self) -> None:
        steps = np.asarray(self.steps, dtype=int)
        ipcs = np.asarray(self.ipcs, dtype=float)
        stderr = np.asarray(self.stderr, dtype=float)
        for name, arr in (("steps", steps), ("ipcs", ipcs), ("stderr", stderr)):
            object.__setattr__(self, name, arr)
        if not (len(steps) == len(ipcs) == len(stderr)):
            raise ValueError("curve arrays must share one length")
        if np.any(np.diff(steps) <= 0):
            raise ValueError("step grid must be strictly increasing")
        if np.any((ipcs < 0) | (ipcs > 1)):
            raise ValueError("ipcs estimates must lie in [0, 1]")

    @classmethod
    def from_bits(cls, steps: np.ndarray, bits: np.ndarray) -> "IpcsCurve":
        n = bits.shape[0]
        p = bits.mean(axis=0)
        return cls(steps=steps, ipcs=p, stderr=np.sqrt(p * (1.0 - p) / n), macro_reps=n)


# ---------------------------------------------------------------------------
# Batch policies.  Each decides a whole batch of replications per step.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BatchState:
    """Per-step snapshot of a replication batch, one row per replication."""

    post_means: np.ndarray
    post_vars: np.ndarray
    svars: np.ndarray
    counts: np.ndarray
    sample_means: np.ndarray


class EqualAllocation:
    label = "ea"

    def decide(self, state: BatchState, t: int):
        k = state.post_means.shape[-1]
        return np.full(state.post_means.shape[0], t % k, dtype=int)


class AoapAllocation:
    label = "aoap"

    def decide(self, state: BatchState, t: int):
        vals = pol.aoap_candidate_values(state.post_means, state.post_vars, state.svars)
        return pol.argmax_with_tiebreak(vals, state.counts)


class OcbaAllocation:
    """Most-starving budget allocation on frequentist plug-in statistics."""

    label = "ocba"

    def decide(self, state: BatchState, t: int):
        deficits = pol.ocba_deficits(state.sample_means, state.svars, state.counts)
        return pol.argmax_with_tiebreak(deficits, state.counts)


class KgAllocation:
    label = "kg"

    def decide(self, state: BatchState, t: int):
        vals = pol.kg_candidate_values(state.post_means, state.post_vars, state.svars)
        return pol.argmax_with_tiebreak(vals, state.counts)


class TwoFactorAllocation:
    def __init__(self, weights: VfaWeights):
        if len(weights.w) != 2:
            raise ValueError("two-factor policy needs exactly two weights")
        self.weights = weights
        self.label = "two_factor"

    def decide(self, state: BatchState, t: int):
        w = self.weights.w
        vals = pol.two_factor_candidate_values(
            state.post_means, state.post_vars, state.svars,
            float(w[0]), float(w[1]), self.weights.activation,
        )
        return pol.argmax_with_tiebreak(vals, state.counts)


class MultistepAoapAllocation:
    def __init__(self, depth: int):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self.label = f"aoap_ms{depth}"

    def decide(self, state: BatchState, t: int):
        from .beliefs import GaussianBelief

        n, k = state.post_means.shape
        out = np.empty(n, dtype=int)
        for r in range(n):
            beliefs = tuple(
                GaussianBelief(
                    post_mean=float(state.post_means[r, i]),
                    post_var=float(state.post_vars[r, i]),
                    count=int(state.counts[r, i]),
                    sampling_var=float(state.svars[r, i]),
                )
                for i in range(k)
            )
            out[r] = pol.aoap_multistep(pol.BeliefVector(beliefs), self.depth)
        return out


def make_policy(policy_id: str, weights: VfaWeights | None = None):
    """Instantiate a batch policy from its identifier."""
    if policy_id == "ea":
        return EqualAllocation()
    if policy_id == "aoap":
        return AoapAllocation()
    if policy_id == "ocba":
        return OcbaAllocation()
    if policy_id == "kg":
        return KgAllocation()
    if policy_id == "two_factor":
        if weights is None:
            raise ValueError("two_factor policy requires fitted weights")
        return TwoFactorAllocation(weights)
    if policy_id.startswith("aoap_ms"):
        try:
            depth = int(policy_id[len("aoap_ms"):])
        except ValueError:
            raise ValueError(f"bad multistep policy id {policy_id!r}")
        return MultistepAoapAllocation(depth)
    raise ValueError(f"unknown policy id {policy_id!r}")


# ---------------------------------------------------------------------------
# Simulation engine.
# ---------------------------------------------------------------------------


def _row_normals(master_seed: int, namespace: int, index: int, n: int) -> np.ndarray:
    seq = np.random.SeedSequence([int(master_seed), int(namespace), int(index)])
    return np.random.Generator(np.random.PCG64(seq)).standard_normal(n)


def _posterior_arrays(prior_means, prior_vars, counts, sums, svars):
    """Posterior mean and variance per (row, alternative), vectorized.

    Zero prior variance pins the posterior at the prior mean; infinite
    prior variance (zero precision) reduces to the pure sample posterior.
    """
    with np.errstate(divide="ignore"):
        prior_prec = np.where(prior_vars > 0, 1.0 / prior_vars, np.inf)
    post_var = 1.0 / (prior_prec + counts / svars)
    with np.errstate(invalid="ignore"):
        post_mean = post_var * (prior_means * prior_prec + sums / svars)
    post_mean = np.where(prior_vars == 0.0, prior_means, post_mean)
    return post_mean, post_var


def _sample_vars(counts, sums, sumsqs):
    mean = sums / counts
    s2 = (sumsqs - counts * mean**2) / (counts - 1)
    return np.maximum(s2, np.finfo(float).tiny)


def _simulate(scenario: Scenario, policy, indices, master_seed=None, namespace=0,
              collect_final=False):
    """Run a batch of macro replications; returns the per-step correctness bits.

    With ``collect_final`` also returns the final ``BatchState`` (used for
    feature extraction at the horizon).
    """
    idx = list(indices)
    n = len(idx)
    k, n0, horizon = scenario.k, scenario.n0, scenario.horizon
    warmup = scenario.warmup
    seed = scenario.master_seed if master_seed is None else master_seed

    z = np.empty((n, k + horizon))
    for r, i in enumerate(idx):
        z[r] = _row_normals(seed, namespace, i, k + horizon)

    prior_means = np.array(scenario.prior_means)
    prior_vars = np.array(scenario.prior_stds) ** 2
    true_sd = np.array(scenario.sampling_stds)
    truth = prior_means + np.sqrt(prior_vars) * z[:, :k]
    true_best = np.argmax(truth, axis=1)

    counts = np.zeros((n, k))
    sums = np.zeros((n, k))
    sumsqs = np.zeros((n, k))
    rows = np.arange(n)

    def observe(alt, t):
        obs = truth[rows, alt] + true_sd[alt] * z[:, k + t]
        counts[rows, alt] += 1.0
        sums[rows, alt] += obs
        sumsqs[rows, alt] += obs**2

    for t in range(warmup):
        observe(np.full(n, t % k, dtype=int), t)

    if scenario.variance_mode == "known":
        svars_frozen = np.broadcast_to(true_sd**2, (n, k))
    else:
        svars_frozen = _sample_vars(counts, sums, sumsqs)

    def current_svars():
        if scenario.variance_mode == "plugin_refresh":
            return _sample_vars(counts, sums, sumsqs)
        return svars_frozen

    def snapshot() -> BatchState:
        svars = current_svars()
        post_mean, post_var = _posterior_arrays(prior_means, prior_vars, counts, sums, svars)
        return BatchState(post_mean, post_var, svars, counts, sums / counts)

    bits = np.empty((n, horizon - warmup + 1), dtype=np.uint8)
    state = snapshot()
    bits[:, 0] = np.argmax(state.post_means, axis=1) == true_best

    for t in range(warmup, horizon):
        alt = np.asarray(policy.decide(state, t), dtype=int)
        observe(alt, t)
        state = snapshot()
        bits[:, t - warmup + 1] = np.argmax(state.post_means, axis=1) == true_best

    if collect_final:
        return bits, state
    return bits


def run_macro_replication(
    scenario: Scenario,
    policy_id: str,
    weights: VfaWeights | None = None,
    rep_index: int = 0,
) -> np.ndarray:
    """One macro replication; element j is the correctness bit at warmup + j samples."""
    policy = make_policy(policy_id, weights)
    return _simulate(scenario, policy, [rep_index])[0]


def estimate_ipcs(
    scenario: Scenario,
    policy_id: str,
    weights: VfaWeights | None = None,
    workers: int = 1,
    chunk: int = 4096,
) -> IpcsCurve:
    """Estimate the correct-selection curve over the scenario's replications.

    Replication indices are split into fixed chunks whose rows carry their
    own generators, so estimates are identical for any worker count.
    """
    policy = make_policy(policy_id, weights)
    n = scenario.macro_reps
    blocks = [range(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _simulate(scenario, policy, b), blocks))
    else:
        parts = [_simulate(scenario, policy, b) for b in blocks]
    bits = np.concatenate(parts, axis=0)
    return IpcsCurve.from_bits(scenario.step_grid, bits)


def replication_features(
    scenario: Scenario,
    policy_id: str,
    indices: Iterable[int],
    master_seed: int | None = None,
    namespace: int = 0,
    weights: VfaWeights | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Features and correctness indicators of the final states of a batch.

    Returns ``(G, y)`` where row l of ``G`` holds the (squared-gap,
    squared-correlation) features at the horizon of replication l and
    ``y[l]`` is its correct-selection indicator.
    """
    policy = make_policy(policy_id, weights)
    bits, final = _simulate(
        scenario, policy, indices, master_seed=master_seed, namespace=namespace,
        collect_final=True,
    )
    post_mean, post_var = final.post_means, final.post_vars
    b = np.argmax(post_mean, axis=1)
    is_b = b[:, None] == np.arange(scenario.k)
    v_b = np.take_along_axis(post_var, b[:, None], 1)
    g1 = pol.distance_squared(post_mean, post_var)
    g2 = pol.correlation_squared_min(post_var, is_b, v_b)
    return np.column_stack([g1, g2]), bits[:, -1].astype(float)


@dataclass(frozen=True)
class FixedTruthRun:
    """Terminal state of policy runs against known ground truths."""

    counts: np.ndarray
    post_means: np.ndarray
    selections: np.ndarray


def run_fixed_truths(
    truths: Sequence[GroundTruth],
    policy_id: str,
    steps: int,
    seed: int = 0,
    n_init: int = 2,
    weights: VfaWeights | None = None,
) -> FixedTruthRun:
    """Run a policy against fixed ground truths with flat priors and known variances.

    Used to study long-run sampling behavior: allocation frequencies and
    the terminal selection.  ``steps`` counts post-initialization samples.
    """
    policy = make_policy(policy_id, weights)
    n = len(truths)
    k = truths[0].n_alternatives
    means_true = np.stack([t.means for t in truths])
    svars = np.stack([t.variances for t in truths])
    if np.any(svars <= 0):
        raise ValueError("fixed-truth runs require strictly positive variances")
    sds = np.sqrt(svars)

    total = n_init * k + steps
    z = np.empty((n, total))
    for r in range(n):
        z[r] = _row_normals(seed, 2, r, total)

    counts = np.zeros((n, k))
    sums = np.zeros((n, k))
    rows = np.arange(n)
    prior_means = np.zeros(k)
    prior_vars = np.full(k, np.inf)

    def observe(alt, t):
        obs = means_true[rows, alt] + sds[rows, alt] * z[:, t]
        counts[rows, alt] += 1.0
        sums[rows, alt] += obs

    for t in range(n_init * k):
        observe(np.full(n, t % k, dtype=int), t)

    for t in range(n_init * k, total):
        post_mean, post_var = _posterior_arrays(prior_means, prior_vars, counts, sums, svars)
        state = BatchState(post_mean, post_var, svars, counts, sums / counts)
        alt = np.asarray(policy.decide(state, t), dtype=int)
        observe(alt, t)

    post_mean, _ = _posterior_arrays(prior_means, prior_vars, counts, sums, svars)
    return FixedTruthRun(
        counts=counts,
        post_means=post_mean,
        selections=np.argmax(post_mean, axis=1),
    )


# ---------------------------------------------------------------------------
# Experiment configs and result tables.
# ---------------------------------------------------------------------------


def scenario_from_config(raw) -> Scenario:
    """Build a Scenario from a config value: a built-in name or a mapping."""
    if raw is None:
        raise ValueError("config is missing 'scenario'")
    if isinstance(raw, str):
        return builtin_scenario(raw)
    scenario = Scenario(
        prior_means=raw["prior_means"],
        prior_stds=raw["prior_stds"],
        sampling_stds=raw["sampling_stds"],
        horizon=raw["T"],
        n0=raw["n0"],
        macro_reps=raw.get("macro_reps", 10_000),
        master_seed=raw.get("master_seed", 0),
        variance_mode=raw.get("variance_mode", "plugin_refresh"),
    )
    if raw.get("k", scenario.k) != scenario.k:
        raise ValueError("scenario k does not match its vectors")
    return scenario


def parse_config(config: dict) -> tuple[Scenario, list[dict], dict]:
    """Validate a config mapping into (scenario, policy specs, output options)."""
    scenario = scenario_from_config(config.get("scenario"))
    specs = []
    for entry in config.get("policies", []):
        spec = {"id": entry} if isinstance(entry, str) else dict(entry)
        if "id" not in spec:
            raise ValueError(f"policy entry missing 'id': {entry!r}")
        if spec["id"] == "two_factor" and "weights_file" not in spec and "fit" not in spec:
            raise ValueError("two_factor policy needs 'weights_file' or 'fit'")
        specs.append(spec)
    if not specs:
        raise ValueError("config lists no policies")
    return scenario, specs, dict(config.get("output", {}))


def load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _resolve_weights(scenario: Scenario, spec: dict) -> VfaWeights | None:
    if spec["id"] != "two_factor":
        return None
    if "weights_file" in spec:
        return load_weights(spec["weights_file"])
    fit = dict(spec["fit"]) if isinstance(spec.get("fit"), dict) else {}
    fit.setdefault("seed", scenario.master_seed)
    config = SaConfig(
        step_scale=fit.get("step_scale", 10.0),
        step_exponent=fit.get("step_exponent", 2.0 / 3.0),
        iterations=fit.get("iterations", 10_000),
        initial_w=tuple(fit.get("initial_w", (1.0, 1.0))),
        seed=fit["seed"],
    )
    return gmcl_fit(scenario, config=config, activation=fit.get("activation", "linear"))


def run_experiment(config: dict, workers: int = 1) -> dict[str, IpcsCurve]:
    """Run every policy in the config on its scenario; returns curves by label."""
    scenario, specs, _ = parse_config(config)
    results: dict[str, IpcsCurve] = {}
    for spec in specs:
        weights = _resolve_weights(scenario, spec)
        label = spec.get("label", spec["id"])
        if label in results:
            raise ValueError(f"duplicate policy label {label!r}")
        results[label] = estimate_ipcs(scenario, spec["id"], weights, workers=workers)
    return results


def write_results(results: dict[str, IpcsCurve], path: str, downsample: int = 1) -> None:
    """Write curves as CSV rows (policy, t, ipcs, stderr, macro_reps).

    Rows are sorted by (policy, t) and floats use 10-significant-digit
    formatting, so identical results serialize byte-identically.
    """
    if downsample < 1:
        raise ValueError("downsample must be >= 1")
    lines = ["policy,t,ipcs,stderr,macro_reps"]
    for label in sorted(results):
        curve = results[label]
        for j in range(0, len(curve.steps), downsample):
            lines.append(
                f"{label},{curve.steps[j]},{curve.ipcs[j]:.10g},"
                f"{curve.stderr[j]:.10g},{curve.macro_reps}"
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
