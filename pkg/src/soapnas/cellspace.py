"""Cell-graph search space: DAG cells with per-node operation choices.

A cell is an upper-triangular DAG over at most ``max_nodes`` nodes (node 0
is the input, the last node the output) with at most ``max_edges`` edges
and one operation choice per interior node. Cells are identified with
their pruned, canonical form: nodes off every input-to-output path are
deleted and interior nodes are relabeled to the lexicographically minimal
topological order, so isomorphic cells hash and encode identically.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np

from .errors import BadConfig, InvalidArchitecture, NoValidNeighbor, SpaceTooLarge
from .rng import RngStream

CONV3X3 = "CONV3x3"
CONV1X1 = "CONV1x1"
MAXPOOL3X3 = "MAXPOOL3x3"
DEFAULT_OPS = (CONV3X3, CONV1X1, MAXPOOL3X3)

ENUMERATION_GUARD = 10**6


@dataclass(frozen=True)
class SpaceConfig:
    max_nodes: int = 5
    max_edges: int = 7
    ops: tuple[str, ...] = DEFAULT_OPS

    def __post_init__(self):
        if self.max_nodes < 2:
            raise BadConfig("max_nodes must be at least 2")
        if self.max_edges < 1:
            raise BadConfig("max_edges must be at least 1")
        if len(self.ops) < 1 or len(set(self.ops)) != len(self.ops):
            raise BadConfig("ops must be a non-empty set of distinct labels")

    @property
    def num_interior_slots(self) -> int:
        return self.max_nodes - 2

    @property
    def feature_length(self) -> int:
        n = self.max_nodes
        return n * (n - 1) // 2 + self.num_interior_slots * len(self.ops)


@dataclass(frozen=True)
class CellArchitecture:
    """A cell graph. ``edges`` are (i, j) pairs with i < j, sorted."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    ops: tuple[str, ...]

    def __post_init__(self):
        n = self.num_nodes
        if n < 2:
            raise InvalidArchitecture("a cell needs at least input and output nodes")
        if len(self.ops) != n - 2:
            raise InvalidArchitecture(
                f"expected {n - 2} interior operations, got {len(self.ops)}"
            )
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < j < n):
                raise InvalidArchitecture(f"edge ({i}, {j}) is not upper-triangular")
            if (i, j) in seen:
                raise InvalidArchitecture(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        if self.edges != tuple(sorted(self.edges)):
            raise InvalidArchitecture("edges must be sorted")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        mat = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
        for i, j in self.edges:
            mat[i, j] = True
        return mat

    def predecessors(self, node: int) -> list[int]:
        return [i for i, j in self.edges if j == node]

    def successors(self, node: int) -> list[int]:
        return [j for i, j in self.edges if i == node]


class Validity(Enum):
    VALID = "Valid"
    TOO_MANY_EDGES = "TooManyEdges"
    NO_INPUT_OUTPUT_PATH = "NoInputOutputPath"
    DANGLING_NODE = "DanglingNode"


def _nodes_on_paths(arch: CellArchitecture) -> set[int]:
    """Nodes lying on at least one input-to-output path."""
    n = arch.num_nodes
    reach_fwd = {0}
    for i, j in arch.edges:  # edges sorted => topological sweep
        if i in reach_fwd:
            reach_fwd.add(j)
    reach_bwd = {n - 1}
    for i, j in reversed(arch.edges):
        if j in reach_bwd:
            reach_bwd.add(i)
    return reach_fwd & reach_bwd


def validate(arch: CellArchitecture, space: SpaceConfig) -> Validity:
    """Verdict for a shape-correct cell against the space limits."""
    if arch.num_nodes > space.max_nodes:
        raise InvalidArchitecture(
            f"{arch.num_nodes} nodes exceeds the space's {space.max_nodes}"
        )
    for op in arch.ops:
        if op not in space.ops:
            raise InvalidArchitecture(f"operation {op!r} not in the space's op set")
    if arch.num_edges > space.max_edges:
        return Validity.TOO_MANY_EDGES
    on_path = _nodes_on_paths(arch)
    if 0 not in on_path or arch.num_nodes - 1 not in on_path:
        return Validity.NO_INPUT_OUTPUT_PATH
    if len(on_path) != arch.num_nodes:
        return Validity.DANGLING_NODE
    return Validity.VALID


def require_valid(arch: CellArchitecture, space: SpaceConfig) -> None:
    verdict = validate(arch, space)
    if verdict is not Validity.VALID:
        raise InvalidArchitecture(verdict.value)


def prune(arch: CellArchitecture) -> CellArchitecture:
    """Delete nodes off every input-to-output path and relabel."""
    on_path = _nodes_on_paths(arch)
    if 0 not in on_path or arch.num_nodes - 1 not in on_path:
        raise InvalidArchitecture("no input-to-output path")
    keep = sorted(on_path)
    relabel = {old: new for new, old in enumerate(keep)}
    edges = tuple(
        sorted((relabel[i], relabel[j]) for i, j in arch.edges if i in on_path and j in on_path)
    )
    ops = tuple(arch.ops[k - 1] for k in keep[1:-1])
    return CellArchitecture(num_nodes=len(keep), edges=edges, ops=ops)


def _canonical_key(arch: CellArchitecture):
    n = arch.num_nodes
    bits = []
    edge_set = set(arch.edges)
    for i in range(n):
        for j in range(i + 1, n):
            bits.append(1 if (i, j) in edge_set else 0)
    return (n, tuple(bits), arch.ops)


def canonicalize(arch: CellArchitecture, space: SpaceConfig) -> CellArchitecture:
    """Lexicographically minimal relabeling over interior permutations.

    Only permutations that keep the adjacency upper-triangular (i.e.
    alternative topological orders) are considered; the search is exact.
    """
    require_valid(arch, space)
    n = arch.num_nodes
    interior = list(range(1, n - 1))
    best = None
    best_arch = None
    for perm in itertools.permutations(interior):
        mapping = {0: 0, n - 1: n - 1}
        mapping.update({old: new for old, new in zip(interior, perm)})
        relabeled = [(mapping[i], mapping[j]) for i, j in arch.edges]
        if any(i >= j for i, j in relabeled):
            continue
        ops = [None] * (n - 2)
        for old in interior:
            ops[mapping[old] - 1] = arch.ops[old - 1]
        candidate = CellArchitecture(
            num_nodes=n, edges=tuple(sorted(relabeled)), ops=tuple(ops)
        )
        key = _canonical_key(candidate)
        if best is None or key < best:
            best = key
            best_arch = candidate
    return best_arch


def serialize(arch: CellArchitecture) -> str:
    """Canonical text form ``N;<upper-tri bits row-major>;<ops comma-separated>``."""
    _, bits, ops = _canonical_key(arch)
    return f"{arch.num_nodes};{''.join(str(b) for b in bits)};{','.join(ops)}"


def parse(text: str) -> CellArchitecture:
    parts = text.strip().split(";")
    if len(parts) != 3:
        raise InvalidArchitecture(f"expected 3 ';'-separated fields, got {len(parts)}")
    try:
        n = int(parts[0])
    except ValueError as exc:
        raise InvalidArchitecture(f"bad node count {parts[0]!r}") from exc
    if n < 2:
        raise InvalidArchitecture("node count must be >= 2")
    bits = parts[1]
    if len(bits) != n * (n - 1) // 2 or set(bits) - {"0", "1"}:
        raise InvalidArchitecture("adjacency bits malformed")
    edges = []
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            if bits[k] == "1":
                edges.append((i, j))
            k += 1
    ops = tuple(parts[2].split(",")) if parts[2] else ()
    return CellArchitecture(num_nodes=n, edges=tuple(sorted(edges)), ops=ops)


def arch_hash(arch: CellArchitecture, space: SpaceConfig) -> str:
    """128-bit hex digest of the canonical serialization."""
    canon = canonicalize(arch, space)
    digest = hashlib.blake2b(serialize(canon).encode("ascii"), digest_size=16)
    return digest.hexdigest()


def sample_random(space: SpaceConfig, rng: RngStream | np.random.Generator) -> CellArchitecture:
    """Uniform rejection sampling over raw graphs, pruned and canonicalized.

    Every valid cell is its own raw preimage, so the support is the whole
    space.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    n = space.max_nodes
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    max_edges = min(space.max_edges, len(pairs))
    while True:
        # draw the edge count first so sparse edge budgets stay cheap to hit
        count = int(gen.integers(1, max_edges + 1))
        chosen = gen.choice(len(pairs), size=count, replace=False)
        edges = tuple(sorted(pairs[k] for k in chosen))
        ops = tuple(space.ops[k] for k in gen.integers(0, len(space.ops), size=n - 2))
        raw = CellArchitecture(num_nodes=n, edges=edges, ops=ops)
        try:
            pruned = prune(raw)
        except InvalidArchitecture:
            continue
        if validate(pruned, space) is Validity.VALID:
            return canonicalize(pruned, space)


def raw_space_size(space: SpaceConfig) -> int:
    total = 0
    for n in range(2, space.max_nodes + 1):
        total += 2 ** (n * (n - 1) // 2) * len(space.ops) ** (n - 2)
    return total


def enumerate_unique(space: SpaceConfig) -> Iterator[CellArchitecture]:
    """Every isomorphism class exactly once, in first-seen deterministic order."""
    raw = raw_space_size(space)
    if raw > ENUMERATION_GUARD:
        raise SpaceTooLarge(f"{raw} raw graphs exceeds guard {ENUMERATION_GUARD}")
    seen: set[str] = set()
    for n in range(2, space.max_nodes + 1):
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        for mask in itertools.product((0, 1), repeat=len(pairs)):
            if sum(mask) > space.max_edges:
                continue
            edges = tuple(p for p, m in zip(pairs, mask) if m)
            for ops in itertools.product(space.ops, repeat=n - 2):
                arch = CellArchitecture(num_nodes=n, edges=edges, ops=ops)
                if validate(arch, space) is not Validity.VALID:
                    break  # verdict is ops-independent; skip all op choices
                canon = canonicalize(arch, space)
                digest = arch_hash(canon, space)
                if digest not in seen:
                    seen.add(digest)
                    yield canon


def mutate(
    arch: CellArchitecture,
    space: SpaceConfig,
    rng: RngStream | np.random.Generator,
    move_kinds: tuple[str, ...] = ("edge", "op"),
) -> CellArchitecture:
    """Apply one uniformly chosen valid primitive edit (edge toggle / op relabel).

    The result is pruned and canonical, and always hash-distinct from the
    input; edits that merely re-encode the same cell are rejected.
    """
    require_valid(arch, space)
    original = arch_hash(arch, space)
    n = arch.num_nodes
    candidates = []
    if "edge" in move_kinds:
        edge_set = set(arch.edges)
        for i in range(n):
            for j in range(i + 1, n):
                if (i, j) in edge_set:
                    edges = tuple(sorted(edge_set - {(i, j)}))
                else:
                    edges = tuple(sorted(edge_set | {(i, j)}))
                candidates.append(CellArchitecture(num_nodes=n, edges=edges, ops=arch.ops))
    if "op" in move_kinds:
        for k, current in enumerate(arch.ops):
            for op in space.ops:
                if op == current:
                    continue
                ops = arch.ops[:k] + (op,) + arch.ops[k + 1 :]
                candidates.append(CellArchitecture(num_nodes=n, edges=arch.edges, ops=ops))
    neighbors = []
    seen = set()
    for cand in candidates:
        try:
            pruned = prune(cand)
        except InvalidArchitecture:
            continue
        if validate(pruned, space) is not Validity.VALID:
            continue
        digest = arch_hash(pruned, space)
        if digest == original or digest in seen:
            continue
        seen.add(digest)
        neighbors.append(canonicalize(pruned, space))
    if not neighbors:
        raise NoValidNeighbor("no single edit yields a valid distinct cell")
    neighbors.sort(key=serialize)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return neighbors[int(gen.integers(0, len(neighbors)))]


def slot_of_node(node: int, num_nodes: int, max_nodes: int) -> int:
    """Map a canonical node index onto the padded slot grid.

    Input and interiors keep their index; the output is pinned to the last
    slot so that cells of every size share output-edge parameters.
    """
    if node == num_nodes - 1:
        return max_nodes - 1
    return node


def encode_features(arch: CellArchitecture, space: SpaceConfig) -> np.ndarray:
    """Fixed-length vector: padded upper-tri adjacency + per-slot op one-hots."""
    require_valid(arch, space)
    canon = canonicalize(arch, space)
    m = space.max_nodes
    vec = np.zeros(space.feature_length, dtype=np.float64)
    pair_index = {}
    k = 0
    for i in range(m):
        for j in range(i + 1, m):
            pair_index[(i, j)] = k
            k += 1
    for i, j in canon.edges:
        si = slot_of_node(i, canon.num_nodes, m)
        sj = slot_of_node(j, canon.num_nodes, m)
        vec[pair_index[(si, sj)]] = 1.0
    n_ops = len(space.ops)
    for node in range(1, canon.num_nodes - 1):
        slot = slot_of_node(node, canon.num_nodes, m)
        op_idx = space.ops.index(canon.ops[node - 1])
        vec[k + (slot - 1) * n_ops + op_idx] = 1.0
    return vec
