"""Predictor-guided search, standalone finalization, random-search baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cellspace as cs
from . import gbpredictor as gb
from . import metrics
from . import supernet as sn
from . import synthroute as sr
from .errors import BadConfig
from .rng import RngStream


@dataclass(frozen=True)
class SearchBudget:
    n_scored: int = 500
    n_finalists: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_scored < 1 or self.n_finalists < 1:
            raise BadConfig("budget counts must be positive")
        if self.n_finalists > self.n_scored:
            raise BadConfig("n_finalists cannot exceed n_scored")


@dataclass(frozen=True)
class RankedCandidate:
    arch: str
    arch_hash: str
    predicted: float


@dataclass(frozen=True)
class FinalistResult:
    arch: str
    arch_hash: str
    predicted: float
    measured_auc: float
    measured_acc: float


@dataclass(frozen=True)
class BaselineStats:
    best_auc: float
    median_auc: float
    n_trials: int


@dataclass
class SearchReport:
    ranked: list[RankedCandidate]
    finalists: list[FinalistResult]
    chosen: FinalistResult
    predicted_measured_pearson: float | None = None
    baseline: BaselineStats | None = None


def _score(model, features: np.ndarray) -> np.ndarray:
    if callable(model):
        return np.asarray(model(features), dtype=np.float64)
    return gb.predict(model, features)


def search_predictor(
    model,
    space: cs.SpaceConfig,
    budget: SearchBudget,
    rng: RngStream,
) -> list[RankedCandidate]:
    """Rank candidate cells by predicted AUC, best first.

    Enumerable spaces (within the raw-graph guard) are scored exhaustively;
    otherwise ``n_scored`` distinct seeded samples are scored. ``model`` is
    a PredictorModel, or any callable mapping a feature matrix to scores
    (e.g. a ground-truth oracle in tests). Ties order by arch hash.
    """
    if cs.raw_space_size(space) <= cs.ENUMERATION_GUARD:
        archs = list(cs.enumerate_unique(space))
    else:
        gen = rng.child("scored").generator()
        seen: set[str] = set()
        archs = []
        while len(archs) < budget.n_scored:
            arch = cs.sample_random(space, gen)
            digest = cs.arch_hash(arch, space)
            if digest not in seen:
                seen.add(digest)
                archs.append(arch)
    features = np.stack([cs.encode_features(a, space) for a in archs])
    predicted = _score(model, features)
    entries = [
        RankedCandidate(
            arch=cs.serialize(a), arch_hash=cs.arch_hash(a, space), predicted=float(p)
        )
        for a, p in zip(archs, predicted)
    ]
    entries.sort(key=lambda e: (-e.predicted, e.arch_hash))
    return entries


def finalize(
    ranked: list[RankedCandidate],
    n_finalists: int,
    dataset: sr.PlacementDataset,
    space: cs.SpaceConfig,
    macro: sn.MacroConfig,
    hyper: sn.TrainHyper,
    rng: RngStream,
    executor=None,
) -> tuple[SearchReport, sn.CellNetwork]:
    """Standalone-train the top candidates and pick the best measured one."""
    if not ranked:
        raise BadConfig("ranked candidate list is empty")
    top = ranked[: min(n_finalists, len(ranked))]

    def train_one(idx: int):
        cand = top[idx]
        seed = rng.child("finalist", idx).integer()
        result, net = sn.train_standalone(
            cs.parse(cand.arch), dataset, space, macro, hyper, seed
        )
        return result, net

    indices = range(len(top))
    outcomes = (
        [train_one(i) for i in indices]
        if executor is None
        else list(executor.map(train_one, indices))
    )
    finalists = [
        FinalistResult(
            arch=cand.arch,
            arch_hash=cand.arch_hash,
            predicted=cand.predicted,
            measured_auc=res.auc,
            measured_acc=res.acc,
        )
        for cand, (res, _) in zip(top, outcomes)
    ]
    best_idx = max(range(len(finalists)), key=lambda i: finalists[i].measured_auc)
    pearson = None
    if len(finalists) >= 3:
        preds = [f.predicted for f in finalists]
        meas = [f.measured_auc for f in finalists]
        try:
            pearson = metrics.pearson(preds, meas)
        except Exception:
            pearson = None  # constant lists happen on tiny finalist sets
    report = SearchReport(
        ranked=list(ranked),
        finalists=finalists,
        chosen=finalists[best_idx],
        predicted_measured_pearson=pearson,
    )
    return report, outcomes[best_idx][1]


def random_search_baseline(
    space: cs.SpaceConfig,
    dataset: sr.PlacementDataset,
    macro: sn.MacroConfig,
    hyper: sn.TrainHyper,
    n_trials: int,
    rng: RngStream,
    executor=None,
) -> tuple[sn.QueryResult, list[sn.QueryResult]]:
    """Standalone-train n distinct random cells; best result plus full trace.

    Cells come from one seeded stream, so traces for growing ``n_trials``
    are prefixes of each other.
    """
    if n_trials < 1:
        raise BadConfig("n_trials must be >= 1")
    gen = rng.child("archs").generator()
    seen: set[str] = set()
    archs = []
    while len(archs) < n_trials:
        arch = cs.sample_random(space, gen)
        digest = cs.arch_hash(arch, space)
        if digest not in seen:
            seen.add(digest)
            archs.append(arch)

    def train_one(idx: int):
        seed = rng.child("trial", idx).integer()
        result, _ = sn.train_standalone(archs[idx], dataset, space, macro, hyper, seed)
        return result

    indices = range(n_trials)
    trace = (
        [train_one(i) for i in indices]
        if executor is None
        else list(executor.map(train_one, indices))
    )
    best = max(trace, key=lambda r: r.auc)
    return best, trace
