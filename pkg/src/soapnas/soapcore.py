"""Candidate-set generation, k-shot smoothing, noise model, augmentation.

Training randomness makes a single one-shot network's AUC measurements
unreliable. The smoothing step queries k independently trained supernets
over overlapping candidate sets and keeps, for every cell seen by two or
more of them, the best measured value. The augmentation step then enlarges
the merged dataset by resampling records and adding Gaussian noise whose
variance matches the training noise measured from standalone retrains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cellspace as cs
from . import supernet as sn
from . import synthroute as sr
from .errors import BadConfig, InsufficientData
from .rng import RngStream

SMOOTHED_SOURCE = "smoothed"
AUGMENTED_SOURCE = "augmented"


@dataclass(frozen=True)
class PerfRecord:
    """One (architecture, measured AUC) observation."""

    arch_hash: str
    arch: str  # canonical serialization
    auc: float
    source: str


@dataclass
class CandidateSet:
    supernet_id: int
    records: list[PerfRecord]
    # full query results (with accuracy), parallel to records; kept for the
    # arch,auc,acc,supernet_id CSV and the queried-metric histograms
    query_results: list[sn.QueryResult] | None = None

    def __post_init__(self):
        hashes = [r.arch_hash for r in self.records]
        if len(hashes) != len(set(hashes)):
            raise BadConfig("candidate set contains duplicate architectures")


@dataclass(frozen=True)
class NoiseModel:
    mean: float
    variance: float
    n_groups: int
    n_samples: int

    def __post_init__(self):
        if self.variance < 0:
            raise BadConfig("variance must be nonnegative")


@dataclass
class SmoothedDataset:
    records: list[PerfRecord]
    provenance: dict[str, tuple[int, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class SamplePlan:
    """Per-set size, overlap fraction, and cells pinned into the shared pool."""

    n_per_set: int
    overlap: float
    pinned: tuple[cs.CellArchitecture, ...] = ()

    def __post_init__(self):
        if self.n_per_set < 1:
            raise BadConfig("n_per_set must be positive")
        if not 0.0 <= self.overlap <= 1.0:
            raise BadConfig("overlap must lie in [0, 1]")

    @property
    def pool_size(self) -> int:
        return math.ceil(self.overlap * self.n_per_set)


def _sample_unique(space, rng_stream: RngStream, count: int, taken: set[str]):
    """First ``count`` distinct unseen cells from a seeded sampler stream."""
    gen = rng_stream.generator()
    out = []
    while len(out) < count:
        arch = cs.sample_random(space, gen)
        digest = cs.arch_hash(arch, space)
        if digest in taken:
            continue
        taken.add(digest)
        out.append(arch)
    return out


def shared_pool(space: cs.SpaceConfig, plan: SamplePlan, rng: RngStream):
    """The cells every candidate set shares: pinned ones plus random fill."""
    taken: set[str] = set()
    pool = []
    for arch in plan.pinned:
        canon = cs.canonicalize(arch, space)
        digest = cs.arch_hash(canon, space)
        if digest in taken:
            continue
        taken.add(digest)
        pool.append(canon)
    if len(pool) > plan.pool_size:
        raise BadConfig(
            f"{len(pool)} pinned cells exceed the shared pool size {plan.pool_size}"
        )
    pool.extend(_sample_unique(space, rng.child("pool"), plan.pool_size - len(pool), taken))
    return pool


def build_candidate_sets(
    supernets: list[sn.CellNetwork],
    dataset: sr.PlacementDataset,
    plan: SamplePlan,
    rng: RngStream,
    executor=None,
) -> list[CandidateSet]:
    """Query each supernet over its candidate cells.

    A shared pool of ceil(overlap * n) cells appears in every set; the
    remainder is sampled independently per set. Queries are read-only per
    supernet, so sets can be built in parallel.
    """
    if not supernets:
        raise BadConfig("need at least one trained supernet")
    space = supernets[0].space
    pool = shared_pool(space, plan, rng)
    per_set_archs = []
    for idx in range(len(supernets)):
        taken = {cs.arch_hash(a, space) for a in pool}
        extras = _sample_unique(
            space, rng.child("set", idx), plan.n_per_set - len(pool), taken
        )
        per_set_archs.append(pool + extras)

    def build_one(idx: int) -> CandidateSet:
        net = supernets[idx]
        records = []
        results = []
        for arch in per_set_archs[idx]:
            q = sn.query(net, arch, dataset, supernet_id=str(idx))
            results.append(q)
            records.append(
                PerfRecord(arch_hash=q.arch_hash, arch=q.arch, auc=q.auc, source=str(idx))
            )
        return CandidateSet(supernet_id=idx, records=records, query_results=results)

    indices = range(len(supernets))
    if executor is None:
        return [build_one(i) for i in indices]
    return list(executor.map(build_one, indices))


def merge_smoothed(sets: list[CandidateSet], include_singletons: bool = False) -> SmoothedDataset:
    """Keep the top value of cells appearing in two or more sets.

    Cells seen by exactly one supernet are dropped unless
    ``include_singletons``; output is sorted by arch hash.
    """
    if not sets:
        raise BadConfig("need at least one candidate set")
    by_hash: dict[str, list[tuple[int, PerfRecord]]] = {}
    for cset in sets:
        for rec in cset.records:
            by_hash.setdefault(rec.arch_hash, []).append((cset.supernet_id, rec))
    records = []
    provenance = {}
    for digest in sorted(by_hash):
        entries = by_hash[digest]
        if len(entries) < 2 and not include_singletons:
            continue
        best = max(entries, key=lambda e: e[1].auc)[1]
        records.append(
            PerfRecord(arch_hash=digest, arch=best.arch, auc=best.auc, source=SMOOTHED_SOURCE)
        )
        provenance[digest] = tuple(sorted(sid for sid, _ in entries))
    return SmoothedDataset(records=records, provenance=provenance)


def estimate_noise_model(groups: list[list[float]]) -> NoiseModel:
    """Grand mean plus pooled within-group unbiased variance.

    Each group holds repeated retrain measurements of one architecture, so
    the pooled variance isolates training noise from architecture
    differences.
    """
    values = [v for g in groups for v in g]
    if not values:
        raise InsufficientData("no measurements")
    sq_sum = 0.0
    dof = 0
    for g in groups:
        if len(g) < 2:
            continue
        # deviations from the first element: exact zero for identical values
        d = [v - g[0] for v in g]
        s1 = sum(d)
        s2 = sum(x * x for x in d)
        sq_sum += max(0.0, s2 - s1 * s1 / len(g))
        dof += len(g) - 1
    if dof == 0:
        raise InsufficientData("need at least 2 retrains for at least 1 architecture")
    return NoiseModel(
        mean=sum(values) / len(values),
        variance=sq_sum / dof,
        n_groups=len(groups),
        n_samples=len(values),
    )


def augment(
    dataset: SmoothedDataset,
    factor_x: int,
    noise: NoiseModel,
    rng: RngStream,
) -> list[PerfRecord]:
    """All originals plus (factor_x - 1) * n noisy resamples, clipped to [0, 1]."""
    if factor_x < 1:
        raise BadConfig("factor_x must be >= 1")
    if not dataset.records:
        raise BadConfig("cannot augment an empty dataset")
    originals = list(dataset.records)
    n = len(originals)
    gen = rng.child("augment").generator()
    sigma = math.sqrt(noise.variance)
    out = list(originals)
    picks = gen.integers(0, n, size=(factor_x - 1) * n)
    offsets = gen.normal(0.0, sigma, size=(factor_x - 1) * n) if sigma > 0 else np.zeros((factor_x - 1) * n)
    for pick, offset in zip(picks, offsets):
        base = originals[int(pick)]
        value = min(1.0, max(0.0, base.auc + float(offset)))
        out.append(
            PerfRecord(arch_hash=base.arch_hash, arch=base.arch, auc=value, source=AUGMENTED_SOURCE)
        )
    return out
