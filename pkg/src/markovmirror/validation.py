"""Statistical validation: gap metrics, noise-scaling laws, estimator checks.

Three groups of tools:

* exact error metrics for solver output (`subopt_gap`, `err_vi`,
  `weak_vi_gap`) and log-log rate fitting with bootstrap CIs;
* Monte-Carlo measurement of how the averaged noise deviation decays
  with the batch length (`deviation_scaling`), whose slope should sit
  near -1 and whose constant tracks the mixing time;
* estimator diagnostics: exact conditional bias of the batch mean via
  transition-matrix powers (`batch_bias_profile`), moment measurement
  of the multilevel estimator (`estimator_moments`), and a paired
  unbiasedness check that couples the multilevel draw with its target
  on a shared trajectory (`unbiasedness_check`).

The window constants at the top are the pass bands used by the
command-line checks and the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainCursor, stationary
from .errors import InputError, StatisticsError
from .estimators import _MAX_LEVEL, combine_levels

__all__ = [
    "DEVIATION_SLOPE_WINDOW",
    "TAU_RATIO_WINDOW",
    "BIAS_SLOPE_WINDOW",
    "subopt_gap",
    "err_vi",
    "weak_vi_gap",
    "ScalingReport",
    "deviation_scaling",
    "BiasReport",
    "batch_bias_profile",
    "MomentReport",
    "estimator_moments",
    "PairingReport",
    "unbiasedness_check",
    "RateFit",
    "rate_fit",
    "bootstrap_rate_ci",
]

# pass bands: slope of log E||avg deviation||^2 vs log N; constant ratio
# under doubled laziness; slope of log bias^2 vs log M
DEVIATION_SLOPE_WINDOW = (-1.2, -0.8)
TAU_RATIO_WINDOW = (1.4, 3.0)
BIAS_SLOPE_WINDOW = (-1.3, -0.7)

_GAP_FLOOR = 1e-13


# ---------------------------------------------------------------------------
# gap metrics


def subopt_gap(problem, x):
    """f(x) - f* with a certified optimum; tiny negatives clamp to zero."""
    if getattr(problem, "f_star", None) is None:
        raise InputError("problem carries no certified optimal value")
    gap = float(problem.f(x) - problem.f_star)
    tol = 1e-12 * max(1.0, abs(problem.f_star))
    if gap < -tol:
        raise StatisticsError(f"gap {gap:.3e} is negative beyond tolerance; bad reference?")
    return max(gap, 0.0)


def err_vi(problem, x):
    """Exact dual VI error max_u <F(u), x - u> for affine skew operators.

    Skewness kills the quadratic term, so the maximand is linear in u
    and the maximum sits at a per-block vertex.
    """
    Q = getattr(problem, "Q", None)
    if Q is None:
        raise InputError("err_vi needs an affine VI problem")
    if not problem.is_skew(1e-10):
        raise InputError("exact VI error requires a skew operator; use weak_vi_gap")
    x = np.asarray(x, dtype=float)
    lin = Q.T @ x - problem.c
    u = problem.geometry.linear_argmax(lin)
    return float(lin @ u + problem.c @ x)


def weak_vi_gap(problem, xs, probes=None, n_probes=64, rng=None):
    """max over probe points u of the across-run average of <F(u), x - u>.

    `xs` is a single point or a stack of per-run output points; with a
    finite probe set this lower-bounds err_vi of the averaged criterion.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    geo = problem.geometry
    if probes is None:
        try:
            probes = geo.vertices()
        except Exception:
            probes = None
        if probes is None or len(probes) == 0 or len(probes) > 4096:
            rng = np.random.default_rng(0) if rng is None else rng
            probes = [geo.sample(rng) for _ in range(n_probes)]
    best = -np.inf
    for u in probes:
        u = np.asarray(u, dtype=float)
        fu = problem.Q @ u + problem.c
        gap = float(np.mean((xs - u) @ fu))
        best = max(best, gap)
    return best


# ---------------------------------------------------------------------------
# deviation scaling (averaged-noise law)


@dataclass
class ScalingReport:
    """Per-cell mean/SE of ||avg deviation||_*^2 plus the fitted law."""

    N: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    slope: float
    constant: float  # exp(mean log(E * N)): the fitted level of E * N

    def rows(self):
        return [
            {"N": int(n), "mean": float(m), "se": float(s)}
            for n, m, s in zip(self.N, self.mean, self.se)
        ]


def _check_centered(kernel, deviations):
    pi = stationary(kernel)
    drift = pi @ deviations
    worst = float(np.max(np.abs(drift))) if drift.size else 0.0
    if worst > 1e-10:
        raise StatisticsError(
            f"deviations are not centered under the stationary law (max {worst:.3e})"
        )
    return pi


def deviation_scaling(kernel, deviations, norm_pair, Ns, n_trials, rng):
    """Measure E ||(1/N) sum_i Delta(z_i)||_*^2 over stationary-start runs.

    One vectorized pass drives `n_trials` chains to max(Ns), reading off
    each cell on the way; the slope of log mean vs log N should be close
    to -1 and the constant (mean * N) tracks sigma^2 tau.
    """
    deviations = np.asarray(deviations, dtype=float)
    Ns = np.asarray(sorted(int(n) for n in Ns), dtype=np.int64)
    if Ns.size < 2 or Ns[0] < 1 or len(set(Ns.tolist())) != Ns.size:
        raise InputError("Ns must be >= 2 distinct positive lengths")
    n_trials = int(n_trials)
    if n_trials < 2:
        raise StatisticsError(f"need at least 2 trials, got {n_trials}")
    pi = _check_centered(kernel, deviations)
    centered = deviations - pi @ deviations
    states = kernel.sample_stationary(rng, n_trials)
    sums = np.zeros((n_trials, deviations.shape[1]))
    targets = set(Ns.tolist())
    mean = np.empty(Ns.size)
    se = np.empty(Ns.size)
    k = 0
    for step in range(1, int(Ns[-1]) + 1):
        states = kernel.step(states, rng)
        sums += centered[states]
        if step in targets:
            vals = norm_pair.dual_norm(sums / step, axis=1) ** 2
            mean[k] = vals.mean()
            se[k] = vals.std(ddof=1) / np.sqrt(n_trials)
            k += 1
    logN = np.log(Ns.astype(float))
    if np.any(mean <= 0):
        raise StatisticsError("degenerate (zero) deviation cells; nothing to fit")
    logE = np.log(mean)
    slope, _ = np.polyfit(logN, logE, 1)
    constant = float(np.exp(np.mean(logE + logN)))
    return ScalingReport(N=Ns, mean=mean, se=se, slope=float(slope), constant=constant)


# ---------------------------------------------------------------------------
# exact conditional bias of the batch mean


@dataclass
class BiasReport:
    """pi-weighted squared dual norm of the conditional batch-mean bias."""

    N: np.ndarray
    bias_sq: np.ndarray
    slope: float

    def rows(self):
        return [
            {"N": int(n), "bias_sq": float(b)} for n, b in zip(self.N, self.bias_sq)
        ]


def batch_bias_profile(kernel, deviations, norm_pair, Ns):
    """Exact E_z0 ||(1/N) sum_{i<=N} (P^i(z0,:) - pi) Delta||_*^2 for each N.

    Computed by iterating matrix-vector products, no sampling involved;
    z0 is weighted by the stationary law.  This is the bias of a batch
    mean whose first sample sits one step past the start state.
    """
    deviations = np.asarray(deviations, dtype=float)
    Ns = np.asarray(sorted(int(n) for n in Ns), dtype=np.int64)
    if Ns.size < 1 or Ns[0] < 1:
        raise InputError("Ns must be positive lengths")
    pi = _check_centered(kernel, deviations)
    centered = deviations - pi @ deviations
    cur = centered.copy()
    acc = np.zeros_like(centered)
    targets = set(Ns.tolist())
    out = np.empty(Ns.size)
    k = 0
    for step in range(1, int(Ns[-1]) + 1):
        cur = kernel.P @ cur
        acc += cur
        if step in targets:
            norms = norm_pair.dual_norm(acc / step, axis=1) ** 2
            out[k] = float(pi @ norms)
            k += 1
    logN = np.log(Ns.astype(float))
    slope = float(np.polyfit(logN, np.log(np.maximum(out, 1e-300)), 1)[0]) if Ns.size >= 2 else np.nan
    return BiasReport(N=Ns, bias_sq=out, slope=slope)


# ---------------------------------------------------------------------------
# multilevel estimator diagnostics


def _problem_oracle(problem):
    op = getattr(problem, "op_oracle", None)
    return op if op is not None else problem.grad_oracle


def _spawn_rngs(rng, n):
    seeds = rng.integers(0, 2**63, size=n)
    return [np.random.default_rng(int(s)) for s in seeds]


@dataclass
class MomentReport:
    mean: np.ndarray
    dev_sq_mean: float  # E ||g - mean||_*^2
    dev_sq_se: float
    avg_calls: float
    avg_steps: float
    n_trials: int


def estimator_moments(problem, x, config, n_trials, rng, start="stationary"):
    """Monte-Carlo mean/variance of the multilevel estimate at a fixed point."""
    n_trials = int(n_trials)
    if n_trials < 2:
        raise StatisticsError(f"need at least 2 trials, got {n_trials}")
    from .estimators import mlmc_geometric

    rng_chain, rng_level = _spawn_rngs(rng, 2)
    cursor = ChainCursor(problem.kernel, rng_chain, start=start)
    oracle = _problem_oracle(problem)
    x = np.asarray(x, dtype=float)
    gs = np.empty((n_trials, x.size))
    calls = np.empty(n_trials)
    steps = np.empty(n_trials)
    for i in range(n_trials):
        est = mlmc_geometric(oracle, x, cursor, config, rng_level)
        gs[i] = est.g
        calls[i] = est.oracle_calls
        steps[i] = est.chain_steps
    mean = gs.mean(axis=0)
    devs = problem.geometry.norm_pair.dual_norm(gs - mean, axis=1) ** 2
    return MomentReport(
        mean=mean,
        dev_sq_mean=float(devs.mean()),
        dev_sq_se=float(devs.std(ddof=1) / np.sqrt(n_trials)),
        avg_calls=float(calls.mean()),
        avg_steps=float(steps.mean()),
        n_trials=n_trials,
    )


@dataclass
class PairingReport:
    mean_diff: np.ndarray
    se_diff: np.ndarray
    max_abs_ratio: float  # max_j |mean_j| / se_j
    n_trials: int


def unbiasedness_check(problem, x, config, n_trials, rng, start="stationary"):
    """Couple each multilevel draw with its target mean on one trajectory.

    Every trial advances a shared cursor by 2^max_level * B states,
    forms the multilevel combination for an independently drawn level
    and the full-prefix mean; their difference has exactly zero mean
    conditional on the trajectory, so the per-coordinate t-ratio is a
    calibrated unbiasedness statistic.
    """
    n_trials = int(n_trials)
    if n_trials < 2:
        raise StatisticsError(f"need at least 2 trials, got {n_trials}")
    rng_chain, rng_level = _spawn_rngs(rng, 2)
    cursor = ChainCursor(problem.kernel, rng_chain, start=start)
    oracle = _problem_oracle(problem)
    x = np.asarray(x, dtype=float)
    n_pref = (1 << config.max_level) * config.B
    diffs = np.empty((n_trials, x.size))
    for i in range(n_trials):
        level = min(int(rng_level.geometric(0.5)), _MAX_LEVEL)
        states = cursor.advance(n_pref)
        vals = np.asarray(oracle(x, states), dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]
        g = combine_levels(vals, level, config.B, config.M)
        diffs[i] = g - vals.mean(axis=0)
    mean = diffs.mean(axis=0)
    se = diffs.std(axis=0, ddof=1) / np.sqrt(n_trials)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(se > 0, np.abs(mean) / se, np.where(mean == 0, 0.0, np.inf))
    return PairingReport(
        mean_diff=mean, se_diff=se, max_abs_ratio=float(np.max(ratio)), n_trials=n_trials
    )


# ---------------------------------------------------------------------------
# rate fitting


@dataclass
class RateFit:
    slope: float
    intercept: float
    ci: tuple | None
    n_used: int
    n_excluded: int
    floored: bool


def rate_fit(budgets, gaps, floor=_GAP_FLOOR):
    """Least-squares slope of log gap vs log budget, excluding floored cells."""
    budgets = np.asarray(budgets, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if budgets.shape != gaps.shape or budgets.ndim != 1:
        raise InputError("budgets and gaps must be matching 1-d arrays")
    mask = gaps > floor
    if mask.sum() < 2:
        raise StatisticsError("fewer than 2 cells above the gap floor; cannot fit a rate")
    slope, intercept = np.polyfit(np.log(budgets[mask]), np.log(gaps[mask]), 1)
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        ci=None,
        n_used=int(mask.sum()),
        n_excluded=int((~mask).sum()),
        floored=bool((~mask).any()),
    )


def bootstrap_rate_ci(budgets, gap_matrix, n_boot=200, rng=None, floor=_GAP_FLOOR):
    """Rate fit on per-budget medians with a bootstrap CI over seeds.

    `gap_matrix` has one row per seed and one column per budget.  The
    point estimate fits the column medians; the CI resamples seeds with
    replacement (2.5/97.5 percentiles of the refit slopes).
    """
    gap_matrix = np.atleast_2d(np.asarray(gap_matrix, dtype=float))
    budgets = np.asarray(budgets, dtype=float)
    if gap_matrix.shape[1] != budgets.size:
        raise InputError("gap_matrix columns must match budgets")
    rng = np.random.default_rng(0) if rng is None else rng
    point = rate_fit(budgets, np.median(gap_matrix, axis=0), floor=floor)
    n_seeds = gap_matrix.shape[0]
    slopes = []
    for _ in range(int(n_boot)):
        idx = rng.integers(0, n_seeds, size=n_seeds)
        med = np.median(gap_matrix[idx], axis=0)
        mask = med > floor
        if mask.sum() < 2:
            continue
        s, _ = np.polyfit(np.log(budgets[mask]), np.log(med[mask]), 1)
        slopes.append(s)
    if slopes:
        lo, hi = np.percentile(slopes, [2.5, 97.5])
        point.ci = (float(lo), float(hi))
    return point
