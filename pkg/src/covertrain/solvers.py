"""Subset-search strategies for the camouflage problem.

All three solvers minimize the secret-set risk of the learner trained on an
m-element pool subset, subject to the subset passing the detector
(psi < 0). The training budget B counts learner trainings only; detector
checks and rejected proposals are free but capped to prevent livelock.

Strict detector feasibility psi < 0 is implemented as psi <= -1e-9
(FEASIBILITY_SLACK) for numerical stability.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import CandidateSet, DataError, Dataset, RngState, sample_subset
from .detector import DetectorConfig, PoolKernel
from .learner import (
    LearnerConfig,
    ModelParams,
    WeightedTrainingView,
    empirical_risk,
    risk_gradient_wrt_weights,
    stationarity_residual,
    train,
)

FEASIBILITY_SLACK = 1e-9

# Cap on detector-only draws, as a multiple of the training budget.
DRAW_CAP_FACTOR = 10

# Cap on neighbor proposals, as a multiple of the requested neighbor count.
NEIGHBOR_RETRY_FACTOR = 20


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverBudget:
    """Search budget. max_trainings is B, the number of learner trainings a
    solver may spend. Beam search splits B across `restarts` as B // R per
    restart, with the remainder spent in the last restart."""

    max_trainings: int
    restarts: int = 1
    beam_width: int = 10
    neighbors_per_state: int = 50
    wall_clock_limit: float | None = None

    def __post_init__(self):
        if self.max_trainings < 1:
            raise DataError("max_trainings must be at least 1")
        if self.restarts < 1 or self.beam_width < 1:
            raise DataError("restarts and beam_width must be at least 1")
        if self.neighbors_per_state < 0:
            raise DataError("neighbors_per_state must be nonnegative")

    def per_restart(self, r: int) -> int:
        base = self.max_trainings // self.restarts
        if r == self.restarts - 1:
            return base + self.max_trainings % self.restarts
        return base

    def to_dict(self) -> dict:
        return {
            "max_trainings": self.max_trainings,
            "restarts": self.restarts,
            "beam_width": self.beam_width,
            "neighbors_per_state": self.neighbors_per_state,
            "wall_clock_limit": self.wall_clock_limit,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SolverBudget":
        return cls(**obj)


@dataclass
class SolverReport:
    """Audited outcome of one solver run. The returned set is always
    re-checked against the detector; trajectory entries are
    (trainings_used_so_far, best_risk_so_far) and non-increasing in risk."""

    best: CandidateSet
    trainings_used: int
    feasibility_rejections: int
    trajectory: list[tuple[int, float]]
    solver_name: str
    seed: int | None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "best_indices": list(self.best.indices),
            "best_risk": self.best.cached_risk,
            "best_psi": self.best.cached_psi,
            "trainings_used": self.trainings_used,
            "feasibility_rejections": self.feasibility_rejections,
            "trajectory": [[c, r] for c, r in self.trajectory],
            "solver_name": self.solver_name,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class RelaxedSolution:
    """Output of the continuous relaxation: fractional membership weights b
    with sum(b) = m, the learner trained on them, and the residuals that
    certify the two constraints."""

    b: np.ndarray
    theta: ModelParams
    stationarity_resid: float
    psi_b: float


@dataclass(frozen=True)
class NlpOptions:
    """Knobs for the relaxation solver. The detector constraint is handled
    by a quadratic penalty escalated by penalty_growth per outer round; the
    sum constraint by projection; stationarity exactly, by retraining."""

    max_outer: int = 6
    max_inner: int = 40
    step_init: float = 1.0
    penalty_init: float = 1.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e6
    step_tol: float = 1e-10
    max_trainings: int | None = None
    wall_clock_limit: float | None = None

    def to_dict(self) -> dict:
        return {
            "max_outer": self.max_outer,
            "max_inner": self.max_inner,
            "step_init": self.step_init,
            "penalty_init": self.penalty_init,
            "penalty_growth": self.penalty_growth,
            "penalty_max": self.penalty_max,
            "step_tol": self.step_tol,
            "max_trainings": self.max_trainings,
            "wall_clock_limit": self.wall_clock_limit,
        }


class _Scorer:
    """Trains the learner on pool subsets and scores secret-set risk,
    charging one training per evaluation."""

    def __init__(self, pool: Dataset, secret: Dataset, cfg: LearnerConfig):
        self.pool = pool
        self.secret = secret
        self.cfg = cfg
        self.trainings = 0

    def risk(self, indices) -> float:
        sub = self.pool.subset(indices, role="training_set")
        view = WeightedTrainingView(sub, np.ones(len(sub)))
        theta = train(view, self.cfg)
        self.trainings += 1
        return empirical_risk(theta, self.secret)

    def risk_weighted(self, b: np.ndarray) -> tuple[float, ModelParams]:
        view = WeightedTrainingView(self.pool, b)
        theta = train(view, self.cfg)
        self.trainings += 1
        return empirical_risk(theta, self.secret), theta


class _Deadline:
    def __init__(self, limit: float | None):
        self.end = None if limit is None else time.monotonic() + limit

    def expired(self) -> bool:
        return self.end is not None and time.monotonic() >= self.end


def _finalize(
    best_indices,
    best_risk: float,
    kernel: PoolKernel,
    scorer: _Scorer,
    rejections: int,
    trajectory,
    name: str,
    seed: int | None,
    diagnostics: dict | None = None,
) -> SolverReport:
    verdict = kernel.verdict_indices(best_indices)
    if verdict.psi >= 0.0:
        raise SolverError(
            f"{name}: returned set fails the detector (psi={verdict.psi:.3e})"
        )
    best = CandidateSet(tuple(best_indices)).with_cache(best_risk, verdict.psi)
    return SolverReport(
        best=best,
        trainings_used=scorer.trainings,
        feasibility_rejections=rejections,
        trajectory=list(trajectory),
        solver_name=name,
        seed=seed,
        diagnostics=diagnostics or {},
    )


def solve_uniform(
    pool: Dataset,
    secret: Dataset,
    m: int,
    cfg: LearnerConfig,
    det: DetectorConfig,
    budget: SolverBudget,
    rng: RngState,
    dedup: bool = True,
    kernel: PoolKernel | None = None,
) -> SolverReport:
    """Evaluate uniformly drawn feasible m-subsets, keep the best.

    Subsets that fail the detector are redrawn without charging the training
    budget; duplicates (with dedup on) are likewise free. Total draws are
    capped at 10 * B; if no feasible subset has been found by then the
    feasible region is declared unreachable.
    """
    if m < 1 or m > len(pool):
        raise DataError(f"subset size {m} out of range for pool of {len(pool)}")
    kernel = kernel or PoolKernel(pool, det)
    scorer = _Scorer(pool, secret, cfg)
    deadline = _Deadline(budget.wall_clock_limit)
    B = budget.max_trainings
    draw_cap = DRAW_CAP_FACTOR * B

    seen: set[tuple[int, ...]] = set()
    rejections = 0
    draws = 0
    best_idx = None
    best_risk = np.inf
    trajectory: list[tuple[int, float]] = []

    while scorer.trainings < B and draws < draw_cap and not deadline.expired():
        draws += 1
        cand = sample_subset(pool, m, rng)
        if not kernel.feasible(cand.indices, FEASIBILITY_SLACK):
            rejections += 1
            continue
        if dedup:
            if cand.indices in seen:
                continue
            seen.add(cand.indices)
        risk = scorer.risk(cand.indices)
        if risk < best_risk:
            best_risk = risk
            best_idx = cand.indices
            trajectory.append((scorer.trainings, best_risk))

    if best_idx is None:
        if deadline.expired():
            raise SolverError(
                "wall clock limit reached before any feasible subset was evaluated"
            )
        raise SolverError(
            f"feasible region unreachable: no feasible subset in {draws} draws"
        )
    return _finalize(
        best_idx, best_risk, kernel, scorer, rejections, trajectory,
        "uniform", rng.seed,
    )


def neighbors(
    state: CandidateSet,
    pool: Dataset,
    det: DetectorConfig,
    count: int,
    rng: RngState,
    kernel: PoolKernel | None = None,
) -> list[CandidateSet]:
    """Sample up to `count` distinct feasible single-swap neighbors.

    A neighbor exchanges one in-set index for one out-of-set index, both
    chosen uniformly. Infeasible or repeated proposals are discarded and
    redrawn, consuming no training budget, with total proposals capped at
    20 * count. May return fewer than `count` sets; returns none when the
    state already covers the pool.
    """
    n = len(pool)
    idx = state.indices
    m = len(idx)
    if m >= n or count <= 0:
        return []
    kernel = kernel or PoolKernel(pool, det)
    complement = np.setdiff1d(np.arange(n), np.asarray(idx, dtype=np.int64))
    gen = rng.generator

    out: list[CandidateSet] = []
    tried: set[tuple[int, ...]] = {idx}
    attempts = 0
    cap = NEIGHBOR_RETRY_FACTOR * count
    while len(out) < count and attempts < cap:
        attempts += 1
        drop = idx[int(gen.integers(m))]
        add = int(complement[int(gen.integers(n - m))])
        proposal = tuple(sorted(set(idx) - {drop} | {add}))
        if proposal in tried:
            continue
        tried.add(proposal)
        if kernel.feasible(proposal, FEASIBILITY_SLACK):
            out.append(CandidateSet(proposal))
    return out


def solve_beam(
    pool: Dataset,
    secret: Dataset,
    m: int,
    cfg: LearnerConfig,
    det: DetectorConfig,
    budget: SolverBudget,
    rng: RngState,
    kernel: PoolKernel | None = None,
) -> SolverReport:
    """Width-w beam search over single-swap neighbors, with random restarts.

    Each restart seeds the beam with w random feasible subsets, then
    repeatedly expands a random neighbor sample per beam state and keeps the
    w lowest-risk states, until the restart's share of the training budget
    is spent. States already evaluated within a restart are never retrained.
    """
    if m < 1 or m > len(pool):
        raise DataError(f"subset size {m} out of range for pool of {len(pool)}")
    kernel = kernel or PoolKernel(pool, det)
    scorer = _Scorer(pool, secret, cfg)
    deadline = _Deadline(budget.wall_clock_limit)
    w = budget.beam_width
    init_cap = DRAW_CAP_FACTOR * max(budget.max_trainings, w)

    rejections = 0
    best_idx = None
    best_risk = np.inf
    trajectory: list[tuple[int, float]] = []

    def record(idx: tuple[int, ...], risk: float) -> None:
        nonlocal best_idx, best_risk
        if risk < best_risk:
            best_risk = risk
            best_idx = idx
            trajectory.append((scorer.trainings, best_risk))

    for r in range(budget.restarts):
        budget_end = scorer.trainings + budget.per_restart(r)
        evaluated: dict[tuple[int, ...], float] = {}
        beam: list[tuple[float, tuple[int, ...]]] = []

        draws = 0
        while (
            len(beam) < w
            and scorer.trainings < budget_end
            and draws < init_cap
            and not deadline.expired()
        ):
            draws += 1
            cand = sample_subset(pool, m, rng)
            if not kernel.feasible(cand.indices, FEASIBILITY_SLACK):
                rejections += 1
                continue
            if cand.indices in evaluated:
                continue
            risk = scorer.risk(cand.indices)
            evaluated[cand.indices] = risk
            beam.append((risk, cand.indices))
            record(cand.indices, risk)
        if not beam:
            if scorer.trainings >= budget_end:
                continue  # restart had no budget left
            raise SolverError(
                f"beam initialization found no feasible subset in {draws} draws"
            )
        if len(beam) < w and draws >= init_cap:
            raise SolverError(
                f"beam initialization found only {len(beam)}/{w} feasible "
                f"subsets in {draws} draws"
            )
        beam.sort()

        while scorer.trainings < budget_end and not deadline.expired():
            fresh: list[tuple[int, ...]] = []
            fresh_seen: set[tuple[int, ...]] = set()
            for _, idx in beam:
                for nb in neighbors(
                    CandidateSet(idx), pool, det, budget.neighbors_per_state,
                    rng, kernel=kernel,
                ):
                    key = nb.indices
                    if key in evaluated or key in fresh_seen:
                        continue
                    fresh_seen.add(key)
                    fresh.append(key)
            if not fresh:
                break  # nothing new reachable from this beam
            union = list(beam)
            for idx in fresh:
                if scorer.trainings >= budget_end or deadline.expired():
                    break
                risk = scorer.risk(idx)
                evaluated[idx] = risk
                union.append((risk, idx))
                record(idx, risk)
            union.sort()
            beam = union[:w]

    if best_idx is None:
        raise SolverError("feasible region unreachable: beam never initialized")
    return _finalize(
        best_idx, best_risk, kernel, scorer, rejections, trajectory,
        "beam", rng.seed,
    )


def project_capped_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto {b : 0 <= b_i <= 1, sum(b) = total}.

    Bisection on the shift tau in clip(v - tau, 0, 1), whose sum is
    continuous and nonincreasing in tau. Always succeeds for
    0 <= total <= len(v).
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    if total < 0 or total > n:
        raise DataError(f"target sum {total} out of range for {n} weights")
    lo = float(v.min()) - 1.0
    hi = float(v.max())
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.clip(v - mid, 0.0, 1.0).sum() > total:
            lo = mid
        else:
            hi = mid
    out = np.clip(v - 0.5 * (lo + hi), 0.0, 1.0)
    return out


def solve_relaxed(
    pool: Dataset,
    secret: Dataset,
    m: int,
    cfg: LearnerConfig,
    det: DetectorConfig,
    seed_set: CandidateSet,
    opts: NlpOptions = NlpOptions(),
    kernel: PoolKernel | None = None,
    scorer: _Scorer | None = None,
) -> RelaxedSolution:
    """Continuous relaxation: minimize secret risk of theta_hat(b) over
    membership weights b in [0,1]^n with sum(b) = m and weighted-MMD
    feasibility.

    Projected gradient with backtracking, inside a quadratic-penalty outer
    loop on the detector constraint; the sum constraint is enforced by
    projection and learner stationarity exactly, by retraining at every
    iterate. Descent contract: the returned b is never worse (in true
    objective) than the feasible seed indicator it starts from.
    """
    n = len(pool)
    if len(seed_set) != m:
        raise DataError(f"seed set has {len(seed_set)} indices, expected {m}")
    kernel = kernel or PoolKernel(pool, det)
    scorer = scorer or _Scorer(pool, secret, cfg)
    deadline = _Deadline(opts.wall_clock_limit)
    cap = opts.max_trainings

    if not kernel.feasible(seed_set.indices, FEASIBILITY_SLACK):
        raise SolverError("seed set fails the detector")

    def exhausted() -> bool:
        return (cap is not None and scorer.trainings >= cap) or deadline.expired()

    b = np.zeros(n)
    b[list(seed_set.indices)] = 1.0

    risk, theta = scorer.risk_weighted(b)
    best_b, best_risk, best_theta = b.copy(), risk, theta

    def penalty(psi_b: float, rho: float) -> float:
        violation = max(psi_b + FEASIBILITY_SLACK, 0.0)
        return rho * violation * violation

    rho = opts.penalty_init
    for _ in range(opts.max_outer):
        psi_b = kernel.weighted_psi(b, m)
        obj = risk + penalty(psi_b, rho)
        eta = opts.step_init
        for _ in range(opts.max_inner):
            if exhausted():
                break
            view = WeightedTrainingView(pool, b)
            grad = risk_gradient_wrt_weights(view, cfg, secret, theta=theta)
            violation = max(psi_b + FEASIBILITY_SLACK, 0.0)
            if violation > 0.0:
                grad = grad + rho * 2.0 * violation * kernel.weighted_grad(b)

            moved = False
            while eta > opts.step_tol and not exhausted():
                b_new = project_capped_simplex(b - eta * grad, float(m))
                if float(np.abs(b_new - b).max()) <= opts.step_tol:
                    break
                risk_new, theta_new = scorer.risk_weighted(b_new)
                psi_new = kernel.weighted_psi(b_new, m)
                obj_new = risk_new + penalty(psi_new, rho)
                if obj_new <= obj - 1e-4 * float(np.sum((b_new - b) ** 2)) / eta:
                    b, risk, theta, psi_b, obj = b_new, risk_new, theta_new, psi_new, obj_new
                    moved = True
                    if psi_b <= -FEASIBILITY_SLACK and risk < best_risk:
                        best_b, best_risk, best_theta = b.copy(), risk, theta
                    eta = min(eta * 2.0, opts.step_init)
                    break
                eta *= 0.5
            if not moved:
                break  # projected-gradient stationary at this penalty level
        if exhausted():
            break
        if kernel.weighted_psi(b, m) <= -FEASIBILITY_SLACK:
            break
        rho = min(rho * opts.penalty_growth, opts.penalty_max)

    resid = stationarity_residual(
        best_theta, WeightedTrainingView(pool, best_b), cfg
    )
    return RelaxedSolution(
        b=best_b,
        theta=best_theta,
        stationarity_resid=resid,
        psi_b=kernel.weighted_psi(best_b, m),
    )


def rounding_candidates(
    b: np.ndarray, seed_indices: tuple[int, ...], n: int, m: int
) -> list[tuple[int, ...]]:
    """Swap sequence from the seed set toward the top-m-by-b set.

    Candidate c keeps the m - c largest-b members of the seed S and adds the
    c largest-b members of the complement, so candidate 0 is S itself and
    the final candidate is the complement's top block; the global top-m-by-b
    set always appears along the way. Ties in b break toward the lower pool
    index. Produces min(m, n - m) + 1 candidates (m + 1 whenever the
    complement is large enough to supply m swaps).
    """
    b = np.asarray(b, dtype=np.float64)
    seed = list(seed_indices)
    comp = sorted(set(range(n)) - set(seed))
    keep_order = sorted(seed, key=lambda i: (-b[i], i))
    add_order = sorted(comp, key=lambda i: (-b[i], i))
    swaps = min(m, len(comp))
    return [
        tuple(sorted(keep_order[: m - c] + add_order[:c]))
        for c in range(swaps + 1)
    ]


def round_relaxed(
    sol: RelaxedSolution,
    seed_set: CandidateSet,
    pool: Dataset,
    secret: Dataset,
    m: int,
    cfg: LearnerConfig,
    det: DetectorConfig,
    kernel: PoolKernel | None = None,
    scorer: _Scorer | None = None,
    max_trainings: int | None = None,
) -> SolverReport:
    """Evaluate the swap-sequence candidates and return the best feasible one.

    The seed set is candidate 0 and is feasible by precondition, so the
    result is never worse than the seed. A training cap cuts the candidate
    sweep short but always admits the seed evaluation.
    """
    kernel = kernel or PoolKernel(pool, det)
    scorer = scorer or _Scorer(pool, secret, cfg)
    candidates = rounding_candidates(sol.b, seed_set.indices, len(pool), m)

    rejections = 0
    best_idx = None
    best_risk = np.inf
    trajectory: list[tuple[int, float]] = []
    for idx in candidates:
        out_of_budget = (
            max_trainings is not None
            and scorer.trainings >= max_trainings
            and best_idx is not None
        )
        if out_of_budget:
            break
        if not kernel.feasible(idx, FEASIBILITY_SLACK):
            rejections += 1
            continue
        risk = scorer.risk(idx)
        if risk < best_risk:
            best_risk = risk
            best_idx = idx
            trajectory.append((scorer.trainings, best_risk))
    if best_idx is None:
        raise SolverError("no feasible rounding candidate (seed should be)")
    return _finalize(
        best_idx, best_risk, kernel, scorer, rejections, trajectory,
        "nlp", None,
        diagnostics={"candidates": [list(c) for c in candidates]},
    )


def solve_nlp(
    pool: Dataset,
    secret: Dataset,
    m: int,
    cfg: LearnerConfig,
    det: DetectorConfig,
    seed_set: CandidateSet,
    opts: NlpOptions = NlpOptions(),
) -> SolverReport:
    """Continuous relaxation followed by swap rounding.

    When opts.max_trainings is set, enough budget is reserved for the
    rounding evaluations so total trainings never exceed it. The report
    carries the relaxed-phase diagnostics.
    """
    if m < 1 or m > len(pool):
        raise DataError(f"subset size {m} out of range for pool of {len(pool)}")
    kernel = PoolKernel(pool, det)
    scorer = _Scorer(pool, secret, cfg)

    rounding_reserve = min(m, len(pool) - m) + 1
    relax_opts = opts
    if opts.max_trainings is not None:
        if opts.max_trainings < rounding_reserve + 1:
            raise SolverError(
                f"max_trainings={opts.max_trainings} cannot cover the relaxed "
                f"phase plus {rounding_reserve} rounding evaluations"
            )
        relax_opts = replace(
            opts, max_trainings=opts.max_trainings - rounding_reserve
        )

    sol = solve_relaxed(
        pool, secret, m, cfg, det, seed_set,
        opts=relax_opts, kernel=kernel, scorer=scorer,
    )
    relaxed_trainings = scorer.trainings
    report = round_relaxed(
        sol, seed_set, pool, secret, m, cfg, det,
        kernel=kernel, scorer=scorer, max_trainings=opts.max_trainings,
    )
    report.diagnostics.update(
        {
            "relaxed_trainings": relaxed_trainings,
            "stationarity_resid": sol.stationarity_resid,
            "psi_b": sol.psi_b,
            "sum_b": float(np.sum(sol.b)),
            "b": [float(v) for v in sol.b],
        }
    )
    return report
