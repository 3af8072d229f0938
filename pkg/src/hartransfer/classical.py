"""Classical instance-based transfer references: kernel mean matching and
boosting with target-only error.

These are desk-scale reference implementations with hard output checks; the
neural pipeline never calls them (reweighting a deep classifier this way is
exactly what the loss-weighting trainer replaces).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)


class InfeasibleError(ValueError):
    """The weight constraints admit no solution; raised before solving."""


class WeakLearnerError(RuntimeError):
    """The weak learner failed to beat chance on the target instances."""


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def gaussian_kernel(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """exp(-||x - y||^2 / (2 sigma^2)) for all pairs."""
    sq = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma * sigma))


def median_heuristic(samples: np.ndarray, max_points: int = 500) -> float:
    """Median pairwise distance; the default kernel bandwidth."""
    x = samples[:max_points]
    sq = (x * x).sum(axis=1)[:, None] + (x * x).sum(axis=1)[None, :] - 2.0 * (x @ x.T)
    d = np.sqrt(np.maximum(sq[np.triu_indices(len(x), k=1)], 0.0))
    d = d[d > 0]
    if d.size == 0:
        return 1.0
    return float(np.median(d))


# ---------------------------------------------------------------------------
# Kernel mean matching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KmmProblem:
    """The empirical QP: minimize 1/2 b'Kb - kappa'b over the weight polytope."""

    kernel: np.ndarray  # [m, m] source kernel matrix
    kappa_vec: np.ndarray  # [m]
    weight_bound: float  # B
    mean_tolerance: float  # eps

    def objective(self, beta: np.ndarray) -> float:
        return float(0.5 * beta @ self.kernel @ beta - self.kappa_vec @ beta)


def build_kmm_problem(
    source: np.ndarray,
    target: np.ndarray,
    sigma: Optional[float] = None,
    weight_bound: float = 1000.0,
    mean_tolerance: Optional[float] = None,
    jitter: float = 1e-9,
) -> KmmProblem:
    source = np.atleast_2d(np.asarray(source, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    m = source.shape[0]
    if m < 1 or target.shape[0] < 1:
        raise ValueError("need at least one source and one target sample")
    if weight_bound <= 0:
        raise ValueError("weight bound must be > 0")
    if sigma is None:
        sigma = median_heuristic(np.vstack([source, target]))
    if mean_tolerance is None:
        mean_tolerance = weight_bound / math.sqrt(m)
    if mean_tolerance <= 0:
        raise ValueError("mean tolerance must be > 0")

    kernel = gaussian_kernel(source, source, sigma)
    kernel[np.diag_indices(m)] += jitter
    kappa_vec = (m / target.shape[0]) * gaussian_kernel(source, target, sigma).sum(axis=1)
    return KmmProblem(kernel, kappa_vec, weight_bound, mean_tolerance)


def _project_feasible(
    x: np.ndarray, bound: float, sum_lo: float, sum_hi: float, iters: int = 200
) -> np.ndarray:
    """Dykstra projection onto {0 <= x <= B} intersected with the sum slab,
    finishing with exact box and sum repairs."""
    n = x.shape[0]
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    z = x
    for _ in range(iters):
        y = np.clip(z + p, 0.0, bound)
        p = z + p - y
        w = y + q
        total = w.sum()
        if total > sum_hi:
            w = w - (total - sum_hi) / n
        elif total < sum_lo:
            w = w + (sum_lo - total) / n
        q = y + q - w
        if np.max(np.abs(w - z)) < 1e-14:
            z = w
            break
        z = w
    # Final repairs: land exactly inside the box, then nudge the sum back into
    # the slab (uniform shifts this small cannot leave the box again in practice,
    # but loop defensively).
    for _ in range(10):
        z = np.clip(z, 0.0, bound)
        total = z.sum()
        if sum_lo <= total <= sum_hi:
            break
        z = z - (total - np.clip(total, sum_lo, sum_hi)) / n
    return z


def solve_kmm(problem: KmmProblem, max_iter: int = 5000, tol: float = 1e-10) -> np.ndarray:
    """Accelerated projected gradient on the QP, with a hard feasibility and
    objective post-check (the solver is never trusted)."""
    m = problem.kernel.shape[0]
    bound = problem.weight_bound
    eps = problem.mean_tolerance
    if bound < 1.0 - eps:
        raise InfeasibleError(
            f"weight bound B={bound} cannot reach mean 1 - eps = {1.0 - eps}; "
            "every beta <= B caps the mean at B"
        )
    sum_lo, sum_hi = m * (1.0 - eps), m * (1.0 + eps)
    lipschitz = float(np.linalg.eigvalsh(problem.kernel)[-1])
    step = 1.0 / max(lipschitz, 1e-12)

    beta = _project_feasible(np.ones(m), bound, sum_lo, sum_hi)
    y = beta.copy()
    momentum = 1.0
    for _ in range(max_iter):
        grad = problem.kernel @ y - problem.kappa_vec
        nxt = _project_feasible(y - step * grad, bound, sum_lo, sum_hi)
        momentum_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum * momentum))
        y = nxt + ((momentum - 1.0) / momentum_next) * (nxt - beta)
        shift = np.max(np.abs(nxt - beta))
        beta = nxt
        momentum = momentum_next
        if shift < tol:
            break

    uniform = _project_feasible(np.ones(m), bound, sum_lo, sum_hi)
    if beta.min() < 0.0 or beta.max() > bound:
        raise RuntimeError("KMM post-check failed: weights escaped the box")
    if abs(beta.mean() - 1.0) > eps:
        raise RuntimeError(
            f"KMM post-check failed: |mean - 1| = {abs(beta.mean() - 1.0):.3e} > eps = {eps:.3e}"
        )
    if problem.objective(beta) > problem.objective(uniform) + 1e-9:
        raise RuntimeError("KMM post-check failed: worse than the uniform weighting")
    return beta


def kmm_weights(
    source: np.ndarray,
    target: np.ndarray,
    sigma: Optional[float] = None,
    weight_bound: float = 1000.0,
    mean_tolerance: Optional[float] = None,
) -> np.ndarray:
    """Source-instance weights matching source and target means in the RKHS."""
    problem = build_kmm_problem(source, target, sigma, weight_bound, mean_tolerance)
    return solve_kmm(problem)


# ---------------------------------------------------------------------------
# Decision stump (default weak learner)
# ---------------------------------------------------------------------------

class DecisionStump:
    """Depth-1 threshold classifier on one feature, fit to sample weights."""

    def __init__(self):
        self.feature: int = 0
        self.threshold: float = 0.0
        self.above_is_one: bool = True

    def fit(self, x: np.ndarray, y: np.ndarray, sample_weight: np.ndarray) -> "DecisionStump":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y)
        w = np.asarray(sample_weight, dtype=np.float64)
        w = w / w.sum()
        best = (np.inf, 0, -np.inf, True)
        w1, w0 = w * (y == 1), w * (y == 0)
        total1 = w1.sum()
        total0 = w0.sum()
        for j in range(x.shape[1]):
            order = np.argsort(x[:, j], kind="stable")
            xs = x[order, j]
            c1 = np.cumsum(w1[order])  # weight of class 1 at or left of position i
            c0 = np.cumsum(w0[order])
            # Candidate cuts between distinct consecutive values, plus the
            # trivial everything-on-one-side cut.
            cut_ok = np.nonzero(xs[1:] != xs[:-1])[0]
            thresholds = np.concatenate(
                [(xs[cut_ok] + xs[cut_ok + 1]) * 0.5, [xs[-1] + 1.0]]
            )
            left1 = np.concatenate([c1[cut_ok], [total1]])
            left0 = np.concatenate([c0[cut_ok], [total0]])
            # predict 1 above the cut: errors = class-1 weight left + class-0 right
            err_above = left1 + (total0 - left0)
            err_below = left0 + (total1 - left1)
            for errs, above in ((err_above, True), (err_below, False)):
                k = int(np.argmin(errs))
                if errs[k] < best[0] - 1e-15:
                    best = (float(errs[k]), j, float(thresholds[k]), above)
        _, self.feature, self.threshold, self.above_is_one = best
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        above = np.asarray(x)[:, self.feature] > self.threshold
        return (above == self.above_is_one).astype(np.int64)


# ---------------------------------------------------------------------------
# TrAdaBoost
# ---------------------------------------------------------------------------

@dataclass
class BoostState:
    """Weight-vector trajectory of one boosting run."""

    weights: np.ndarray  # over n source then m target instances
    n_source: int
    round_betas: list[float] = field(default_factory=list)
    round_errors: list[float] = field(default_factory=list)
    global_beta: float = 1.0
    stopped_round: Optional[int] = None


def global_source_beta(n_source: int, rounds: int) -> float:
    """1 / (1 + sqrt(2 ln(n) / N)); equals 1 for a single source instance."""
    return 1.0 / (1.0 + math.sqrt(2.0 * math.log(n_source) / rounds))


def boost_round_update(
    weights: np.ndarray,
    misclassified: np.ndarray,  # |h(x) - c(x)| in {0, 1}
    n_source: int,
    global_beta: float,
    round_beta: float,
) -> np.ndarray:
    """One round's asymmetric reweighting: shrink misclassified source
    instances by beta, grow misclassified target instances by 1/beta_t."""
    out = weights.copy()
    out[:n_source] *= global_beta ** misclassified[:n_source]
    out[n_source:] *= round_beta ** (-misclassified[n_source:])
    return out


def target_error(weights: np.ndarray, misclassified: np.ndarray, n_source: int) -> float:
    wt = weights[n_source:]
    return float((wt * misclassified[n_source:]).sum() / wt.sum())


class TrAdaBoostEnsemble:
    """Weighted majority over the later half of boosting rounds."""

    def __init__(self, learners: Sequence, round_betas: Sequence[float], state: BoostState):
        self.learners = list(learners)
        self.round_betas = list(round_betas)
        self.state = state

    def _vote_window(self) -> range:
        n = len(self.learners)
        return range((n + 1) // 2 - 1, n)

    def predict(self, x: np.ndarray) -> np.ndarray:
        votes = np.zeros(np.asarray(x).shape[0])
        threshold = 0.0
        for t in self._vote_window():
            strength = math.log(1.0 / self.round_betas[t])
            votes += strength * self.learners[t].predict(x)
            threshold += 0.5 * strength
        return (votes >= threshold).astype(np.int64)


def tradaboost(
    source_x: np.ndarray,
    source_y: np.ndarray,
    target_x: np.ndarray,
    target_y: np.ndarray,
    rounds: int,
    weak_learner: Optional[Callable[[], object]] = None,
    error_floor: float = 1e-10,
) -> TrAdaBoostEnsemble:
    """Boost with target-only error and asymmetric weight updates.

    Source weights only ever shrink (by the global beta per mistake); target
    weights grow by beta_t^-1 per mistake.  A round error >= 0.5 stops the
    run early and is reported on the returned state.
    """
    source_x, target_x = np.asarray(source_x, np.float64), np.asarray(target_x, np.float64)
    source_y, target_y = np.asarray(source_y, np.int64), np.asarray(target_y, np.int64)
    n, m = source_x.shape[0], target_x.shape[0]
    if n < 1 or m < 1:
        raise ValueError("need source and target instances")
    if m >= n:
        raise ValueError(
            f"boosting transfer expects a small target set (got m={m} >= n={n})"
        )
    labels = np.concatenate([source_y, target_y])
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary {0, 1}")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    weak_learner = weak_learner or DecisionStump

    x = np.vstack([source_x, target_x])
    state = BoostState(
        weights=np.full(n + m, 1.0 / (n + m)),
        n_source=n,
        global_beta=global_source_beta(n, rounds),
    )
    learners = []
    for t in range(1, rounds + 1):
        p = state.weights / state.weights.sum()
        learner = weak_learner().fit(x, labels, sample_weight=p)
        misclassified = np.abs(learner.predict(x) - labels)
        eps_t = target_error(state.weights, misclassified, n)
        if eps_t >= 0.5:
            state.stopped_round = t
            log.warning("boosting stopped at round %d: target error %.3f >= 0.5", t, eps_t)
            break
        eps_t = max(eps_t, error_floor)
        beta_t = eps_t / (1.0 - eps_t)
        state.round_errors.append(eps_t)
        state.round_betas.append(beta_t)
        state.weights = boost_round_update(
            state.weights, misclassified, n, state.global_beta, beta_t
        )
        learners.append(learner)
    if not learners:
        raise WeakLearnerError("weak learner never beat chance on target instances")
    return TrAdaBoostEnsemble(learners, state.round_betas, state)
