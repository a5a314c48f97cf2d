"""End-to-end experiment protocol: cover-task selection, solver run,
baselines, and reproducible run manifests.

A run is fully determined by its config and seed. Everything written to
result.json is recomputable from the manifest alone; timings live only in
the manifest so result.json is byte-reproducible.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import (
    CandidateSet,
    DataError,
    Dataset,
    RngState,
    load_dataset,
    sample_subset,
    split_train_test,
)
from .detector import DetectorConfig, mmd_threshold, psi
from .learner import (
    LearnerConfig,
    WeightedTrainingView,
    empirical_risk,
    predict_error,
    train,
)
from .solvers import (
    NlpOptions,
    SolverBudget,
    SolverError,
    SolverReport,
    solve_beam,
    solve_nlp,
    solve_uniform,
)

SOLVERS = ("uniform", "beam", "nlp")


class StageError(RuntimeError):
    """A pipeline stage failed; the partial manifest has been written."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    secret_path: str
    cover_paths: tuple[str, ...]
    m: int
    solver: str
    budget: SolverBudget
    learner: LearnerConfig = LearnerConfig()
    alpha: float = 0.05
    test_fraction: float | None = 0.75
    test_path: str | None = None
    selection_budget: int = 100
    random_trials: int = 20
    seed: int = 0
    out_dir: str = "runs/out"
    label_map: dict | None = None
    add_bias: bool = False

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise DataError(f"unknown solver {self.solver!r}")
        if not self.cover_paths:
            raise DataError("need at least one cover candidate")
        if (self.test_fraction is None) == (self.test_path is None):
            raise DataError("set exactly one of test_fraction / test_path")
        if self.m < 1:
            raise DataError("m must be at least 1")
        if self.selection_budget < 1 or self.random_trials < 1:
            raise DataError("budgets and trial counts must be positive")

    def to_dict(self) -> dict:
        return {
            "secret": self.secret_path,
            "covers": list(self.cover_paths),
            "m": self.m,
            "solver": self.solver,
            "budget": self.budget.to_dict(),
            "learner": self.learner.to_dict(),
            "alpha": self.alpha,
            "test_fraction": self.test_fraction,
            "test": self.test_path,
            "selection_budget": self.selection_budget,
            "random_trials": self.random_trials,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "label_map": self.label_map,
            "add_bias": self.add_bias,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        return cls(
            secret_path=obj["secret"],
            cover_paths=tuple(obj["covers"]),
            m=int(obj["m"]),
            solver=obj["solver"],
            budget=SolverBudget.from_dict(obj["budget"]),
            learner=LearnerConfig.from_dict(obj.get("learner", {})),
            alpha=float(obj.get("alpha", 0.05)),
            test_fraction=obj.get("test_fraction"),
            test_path=obj.get("test"),
            selection_budget=int(obj.get("selection_budget", 100)),
            random_trials=int(obj.get("random_trials", 20)),
            seed=int(obj.get("seed", 0)),
            out_dir=obj.get("out_dir", "runs/out"),
            label_map=obj.get("label_map"),
            add_bias=bool(obj.get("add_bias", False)),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class EvaluationRow:
    """Headline numbers of one run: how the camouflaged set compares to the
    unoptimized sender and the detector-ignoring upper bound."""

    solver_error: float
    random_error_mean: float
    random_error_std: float
    oracle_error: float
    secret_risk: float
    cover_index: int
    cover_id: str

    def __post_init__(self):
        for name in ("solver_error", "random_error_mean", "oracle_error"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {value}")

    def to_dict(self) -> dict:
        return {
            "solver_error": self.solver_error,
            "random_error_mean": self.random_error_mean,
            "random_error_std": self.random_error_std,
            "oracle_error": self.oracle_error,
            "secret_risk": self.secret_risk,
            "cover_index": self.cover_index,
            "cover_id": self.cover_id,
        }


def select_cover_task(
    secret: Dataset,
    candidates: list[Dataset],
    m: int,
    per_candidate_budget: int,
    cfg: LearnerConfig,
    alpha: float,
    rng: RngState,
) -> tuple[int, CandidateSet, list[SolverReport]]:
    """Uniform-sampling sweep over candidate pools; the pool whose best
    subset attains the lowest secret-set risk wins (ties: first in config
    order). Each pool gets an independent child stream and its own detector
    calibration."""
    if not candidates:
        raise DataError("need at least one cover candidate")
    reports: list[SolverReport] = []
    chosen = None
    chosen_risk = np.inf
    failures = 0
    for i, pool in enumerate(candidates):
        det = DetectorConfig.from_pool(pool, alpha=alpha)
        budget = SolverBudget(max_trainings=per_candidate_budget)
        try:
            report = solve_uniform(
                pool, secret, m, cfg, det, budget, rng.child(i)
            )
        except SolverError:
            failures += 1
            continue
        reports.append(report)
        if report.best.cached_risk < chosen_risk:
            chosen_risk = report.best.cached_risk
            chosen = (i, report.best)
    if chosen is None:
        raise SolverError(
            f"all {failures} candidate pools were infeasible for the detector"
        )
    return chosen[0], chosen[1], reports


def random_baseline(
    pool: Dataset,
    secret_test: Dataset,
    m: int,
    trials: int,
    cfg: LearnerConfig,
    rng: RngState,
) -> tuple[float, float]:
    """Test error of the learner on uniform m-subsets, no detector filter
    (models a sender who does not optimize at all). Returns (mean, std)
    over trials; std is the population form, zero for a single trial."""
    if trials < 1:
        raise DataError("need at least one trial")
    errors = []
    for _ in range(trials):
        cand = sample_subset(pool, m, rng)
        sub = cand.materialize(pool)
        theta = train(WeightedTrainingView(sub, np.ones(len(sub))), cfg)
        errors.append(predict_error(theta, secret_test))
    return float(np.mean(errors)), float(np.std(errors))


def oracle_baseline(
    secret_train: Dataset, secret_test: Dataset, cfg: LearnerConfig
) -> float:
    """Test error when the learner trains directly on the secret set,
    ignoring the detector entirely."""
    view = WeightedTrainingView(secret_train, np.ones(len(secret_train)))
    return predict_error(train(view, cfg), secret_test)


def _json_dump(obj: dict, path: Path) -> None:
    path.write_text(
        json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def run_experiment(
    cfg: ExperimentConfig, dump_model: bool = False
) -> tuple[EvaluationRow, dict]:
    """Run the full protocol and write result.json / manifest.json /
    chosen_set.json under cfg.out_dir.

    Stages: load data, select the cover task by uniform sampling, run the
    configured solver on the chosen pool, re-verify the detector on the
    delivered set, then compute the evaluation row. Per-stage child seeds
    let any stage be replayed in isolation. On failure the partial manifest
    is still written and a StageError raised.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = RngState(cfg.seed)
    manifest: dict = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "stages": {},
        "timings": {},
    }
    stage = "load"
    t_start = time.monotonic()
    try:
        secret_full = load_dataset(
            cfg.secret_path, label_map=cfg.label_map, role="secret_set",
            add_bias=cfg.add_bias,
        )
        if cfg.test_path is not None:
            secret_train = secret_full
            secret_test = load_dataset(
                cfg.test_path, label_map=cfg.label_map, role="test_set",
                add_bias=cfg.add_bias,
            )
        else:
            secret_train, secret_test = split_train_test(
                secret_full, cfg.test_fraction, rng.child(0)
            )
        covers = [
            load_dataset(
                p, label_map=cfg.label_map, role="camouflage_pool",
                add_bias=cfg.add_bias,
            )
            for p in cfg.cover_paths
        ]
        for i, pool in enumerate(covers):
            if cfg.m > len(pool):
                raise DataError(
                    f"m={cfg.m} exceeds pool size {len(pool)} ({cfg.cover_paths[i]})"
                )
        manifest["stages"]["load"] = {
            "secret_train": len(secret_train),
            "secret_test": len(secret_test),
            "cover_sizes": [len(p) for p in covers],
        }
        manifest["timings"]["load"] = time.monotonic() - t_start

        stage = "select_cover"
        t0 = time.monotonic()
        per_candidate = max(cfg.selection_budget // len(covers), 1)
        cover_index, seed_set, selection_reports = select_cover_task(
            secret_train, covers, cfg.m, per_candidate, cfg.learner,
            cfg.alpha, rng.child(1),
        )
        pool = covers[cover_index]
        det = DetectorConfig.from_pool(pool, alpha=cfg.alpha)
        manifest["stages"]["select_cover"] = {
            "per_candidate_budget": per_candidate,
            "chosen_index": cover_index,
            "chosen_path": cfg.cover_paths[cover_index],
            "selection_risks": [r.best.cached_risk for r in selection_reports],
            "seed_set": list(seed_set.indices),
        }
        manifest["detector"] = {
            **det.to_dict(),
            "threshold": mmd_threshold(len(pool), cfg.m, det),
        }
        manifest["timings"]["select_cover"] = time.monotonic() - t0

        stage = "solve"
        t0 = time.monotonic()
        solver_rng = rng.child(2)
        if cfg.solver == "uniform":
            report = solve_uniform(
                pool, secret_train, cfg.m, cfg.learner, det, cfg.budget,
                solver_rng,
            )
        elif cfg.solver == "beam":
            report = solve_beam(
                pool, secret_train, cfg.m, cfg.learner, det, cfg.budget,
                solver_rng,
            )
        else:
            opts = NlpOptions(
                max_trainings=cfg.budget.max_trainings,
                wall_clock_limit=cfg.budget.wall_clock_limit,
            )
            report = solve_nlp(
                pool, secret_train, cfg.m, cfg.learner, det, seed_set, opts
            )
        manifest["stages"]["solve"] = report.to_dict()
        manifest["timings"]["solve"] = time.monotonic() - t0

        stage = "verify"
        verdict = psi(pool, report.best, det)
        if verdict.suspicious:
            raise SolverError(
                f"delivered set flagged by detector (psi={verdict.psi:.3e})"
            )
        manifest["stages"]["verify"] = verdict.to_dict()

        stage = "evaluate"
        t0 = time.monotonic()
        chosen = report.best.materialize(pool)
        theta = train(WeightedTrainingView(chosen, np.ones(len(chosen))), cfg.learner)
        solver_error = predict_error(theta, secret_test)
        secret_risk = empirical_risk(theta, secret_train)
        rand_mean, rand_std = random_baseline(
            pool, secret_test, cfg.m, cfg.random_trials, cfg.learner,
            rng.child(3),
        )
        oracle_error = oracle_baseline(secret_train, secret_test, cfg.learner)
        row = EvaluationRow(
            solver_error=solver_error,
            random_error_mean=rand_mean,
            random_error_std=rand_std,
            oracle_error=oracle_error,
            secret_risk=secret_risk,
            cover_index=cover_index,
            cover_id=Path(cfg.cover_paths[cover_index]).name,
        )
        manifest["timings"]["evaluate"] = time.monotonic() - t0
    except Exception as exc:
        manifest["failed_stage"] = stage
        manifest["error"] = str(exc)
        _json_dump(manifest, out / "manifest.json")
        raise StageError(stage, exc) from exc

    result = {
        "row": row.to_dict(),
        "solver": cfg.solver,
        "m": cfg.m,
        "seed": cfg.seed,
        "chosen_indices": list(report.best.indices),
        "psi": verdict.psi,
        "mmd": verdict.mmd,
        "threshold": verdict.threshold,
        "trainings_used": report.trainings_used,
    }
    manifest["result"] = result
    manifest["timings"]["total"] = time.monotonic() - t_start
    _json_dump(result, out / "result.json")
    _json_dump(manifest, out / "manifest.json")
    _json_dump({"indices": list(report.best.indices)}, out / "chosen_set.json")
    if dump_model:
        _json_dump(theta.to_dict(), out / "model.json")
    return row, manifest


def rerun_from_manifest(manifest_path, out_dir) -> tuple[EvaluationRow, dict]:
    """Replay a run from its manifest's embedded config and seed, writing
    into a fresh directory. result.json must come out byte-identical."""
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    cfg = ExperimentConfig.from_dict(manifest["config"])
    cfg = replace(cfg, out_dir=str(out_dir))
    return run_experiment(cfg)
