import itertools

import numpy as np
import pytest

from soapnas import cellspace as cs
from soapnas.errors import InvalidArchitecture, NoValidNeighbor, SpaceTooLarge
from soapnas.rng import root

SPACE = cs.SpaceConfig()
SPACE3 = cs.SpaceConfig(max_nodes=3)


def minimal_cell():
    return cs.CellArchitecture(num_nodes=2, edges=((0, 1),), ops=())


def chain3(op=cs.CONV3X3):
    return cs.CellArchitecture(num_nodes=3, edges=((0, 1), (1, 2)), ops=(op,))


def brute_force_classes(space):
    """Oracle: enumerate all raw graphs, keep strict-valid ones, dedup by
    exhaustive interior-permutation comparison of serialized forms."""
    reps = {}
    for n in range(2, space.max_nodes + 1):
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        for mask in itertools.product((0, 1), repeat=len(pairs)):
            edges = tuple(p for p, m in zip(pairs, mask) if m)
            for ops in itertools.product(space.ops, repeat=n - 2):
                try:
                    arch = cs.CellArchitecture(num_nodes=n, edges=edges, ops=ops)
                except InvalidArchitecture:
                    continue
                if cs.validate(arch, space) is not cs.Validity.VALID:
                    continue
                forms = set()
                interior = list(range(1, n - 1))
                for perm in itertools.permutations(interior):
                    mapping = {0: 0, n - 1: n - 1}
                    mapping.update(dict(zip(interior, perm)))
                    relabeled = tuple(
                        sorted((mapping[i], mapping[j]) for i, j in edges)
                    )
                    if any(i >= j for i, j in relabeled):
                        continue
                    new_ops = [None] * (n - 2)
                    for old in interior:
                        new_ops[mapping[old] - 1] = ops[old - 1]
                    forms.add(
                        cs.serialize(
                            cs.CellArchitecture(
                                num_nodes=n, edges=relabeled, ops=tuple(new_ops)
                            )
                        )
                    )
                reps[min(forms)] = True
    return set(reps)


def test_validate_minimal_cell():
    assert cs.validate(minimal_cell(), SPACE) is cs.Validity.VALID


def test_validate_too_many_edges():
    pairs = [(i, j) for i in range(5) for j in range(i + 1, 5)]
    arch = cs.CellArchitecture(
        num_nodes=5, edges=tuple(pairs[:8]), ops=(cs.CONV3X3,) * 3
    )
    assert cs.validate(arch, SPACE) is cs.Validity.TOO_MANY_EDGES


def test_validate_no_path():
    arch = cs.CellArchitecture(num_nodes=3, edges=((0, 1),), ops=(cs.CONV3X3,))
    assert cs.validate(arch, SPACE) is cs.Validity.NO_INPUT_OUTPUT_PATH


def test_validate_dangling_node():
    arch = cs.CellArchitecture(
        num_nodes=3, edges=((0, 1), (0, 2)), ops=(cs.CONV3X3,)
    )
    assert cs.validate(arch, SPACE) is cs.Validity.DANGLING_NODE


def test_canonicalize_idempotent_and_permutation_invariant():
    rng = root(5).child("canon").generator()
    for _ in range(100):
        arch = cs.sample_random(SPACE, rng)
        canon = cs.canonicalize(arch, SPACE)
        assert cs.canonicalize(canon, SPACE) == canon
        assert cs.validate(canon, SPACE) is cs.Validity.VALID
        # every upper-tri-preserving interior relabeling maps to the same form
        n = arch.num_nodes
        interior = list(range(1, n - 1))
        for perm in itertools.permutations(interior):
            mapping = {0: 0, n - 1: n - 1}
            mapping.update(dict(zip(interior, perm)))
            edges = tuple(sorted((mapping[i], mapping[j]) for i, j in arch.edges))
            if any(i >= j for i, j in edges):
                continue
            ops = [None] * (n - 2)
            for old in interior:
                ops[mapping[old] - 1] = arch.ops[old - 1]
            twin = cs.CellArchitecture(num_nodes=n, edges=edges, ops=tuple(ops))
            assert cs.canonicalize(twin, SPACE) == canon
            assert cs.arch_hash(twin, SPACE) == cs.arch_hash(arch, SPACE)


def test_canonicalize_no_interior_is_identity():
    assert cs.canonicalize(minimal_cell(), SPACE) == minimal_cell()


def test_hash_distinguishes_op_relabels():
    seen = set()
    for op in SPACE.ops:
        seen.add(cs.arch_hash(chain3(op), SPACE))
    assert len(seen) == 3


def test_hash_deterministic():
    a = chain3()
    assert cs.arch_hash(a, SPACE) == cs.arch_hash(a, SPACE)


def test_hash_unique_per_class_small_space():
    digests = [cs.arch_hash(a, SPACE3) for a in cs.enumerate_unique(SPACE3)]
    assert len(digests) == len(set(digests))


def test_sample_random_seeded_determinism_and_validity():
    a = cs.sample_random(SPACE, root(42).child("s"))
    b = cs.sample_random(SPACE, root(42).child("s"))
    assert a == b
    rng = root(1).child("many").generator()
    for _ in range(500):
        arch = cs.sample_random(SPACE, rng)
        assert cs.validate(arch, SPACE) is cs.Validity.VALID


def test_sample_random_support_covers_small_space():
    expect = {cs.serialize(a) for a in cs.enumerate_unique(SPACE3)}
    rng = root(9).child("support").generator()
    seen = set()
    for _ in range(4000):
        seen.add(cs.serialize(cs.sample_random(SPACE3, rng)))
        if seen == expect:
            break
    assert seen == expect


def test_enumerate_minimal_space():
    tiny = cs.SpaceConfig(max_nodes=2)
    assert list(cs.enumerate_unique(tiny)) == [minimal_cell()]


def test_enumerate_matches_brute_force_oracle():
    got = {cs.serialize(a) for a in cs.enumerate_unique(SPACE3)}
    assert got == brute_force_classes(SPACE3)
    space4 = cs.SpaceConfig(max_nodes=4)
    got4 = {cs.serialize(a) for a in cs.enumerate_unique(space4)}
    assert got4 == brute_force_classes(space4)


def test_enumerate_guard():
    huge = cs.SpaceConfig(max_nodes=9, max_edges=36)
    with pytest.raises(SpaceTooLarge):
        list(cs.enumerate_unique(huge))


def test_mutate_minimal_cell_has_no_neighbor():
    with pytest.raises(NoValidNeighbor):
        cs.mutate(minimal_cell(), SPACE3, root(0).child("m"), move_kinds=("op",))
    with pytest.raises(NoValidNeighbor):
        cs.mutate(minimal_cell(), SPACE3, root(0).child("m"))


def test_mutate_differs_in_hash():
    rng = root(3).child("mut").generator()
    for _ in range(50):
        arch = cs.sample_random(SPACE, rng)
        try:
            out = cs.mutate(arch, SPACE, rng)
        except NoValidNeighbor:
            continue
        assert cs.arch_hash(out, SPACE) != cs.arch_hash(arch, SPACE)
        assert cs.validate(out, SPACE) is cs.Validity.VALID


def test_mutation_reaches_every_cell_max_nodes_3():
    # BFS over the edit graph from a chain cell; the 2-node cell is a sink
    # (no valid distinct neighbor) but is itself reachable.
    all_cells = {cs.serialize(a) for a in cs.enumerate_unique(SPACE3)}
    start = chain3()
    frontier = [start]
    seen = {cs.serialize(start)}
    while frontier:
        arch = frontier.pop()
        n = arch.num_nodes
        edits = []
        edge_set = set(arch.edges)
        for i in range(n):
            for j in range(i + 1, n):
                if (i, j) in edge_set:
                    edges = tuple(sorted(edge_set - {(i, j)}))
                else:
                    edges = tuple(sorted(edge_set | {(i, j)}))
                edits.append(cs.CellArchitecture(n, edges, arch.ops))
        for k, cur in enumerate(arch.ops):
            for op in SPACE3.ops:
                if op != cur:
                    edits.append(
                        cs.CellArchitecture(n, arch.edges, arch.ops[:k] + (op,) + arch.ops[k + 1 :])
                    )
        for cand in edits:
            try:
                pruned = cs.prune(cand)
            except InvalidArchitecture:
                continue
            if cs.validate(pruned, SPACE3) is not cs.Validity.VALID:
                continue
            canon = cs.canonicalize(pruned, SPACE3)
            s = cs.serialize(canon)
            if s not in seen:
                seen.add(s)
                frontier.append(canon)
    assert seen == all_cells


def test_encode_features_minimal_cell():
    vec = cs.encode_features(minimal_cell(), SPACE)
    assert vec.shape[0] == SPACE.feature_length
    assert vec.sum() == 1.0
    # the single adjacency bit is input -> output slot
    pair_index = 0
    found = None
    for i in range(SPACE.max_nodes):
        for j in range(i + 1, SPACE.max_nodes):
            if vec[pair_index] == 1.0:
                found = (i, j)
            pair_index += 1
    assert found == (0, SPACE.max_nodes - 1)


def test_encode_features_isomorphic_cells_equal():
    a = cs.CellArchitecture(
        num_nodes=4, edges=((0, 1), (0, 2), (1, 3), (2, 3)), ops=(cs.CONV1X1, cs.MAXPOOL3X3)
    )
    b = cs.CellArchitecture(
        num_nodes=4, edges=((0, 1), (0, 2), (1, 3), (2, 3)), ops=(cs.MAXPOOL3X3, cs.CONV1X1)
    )
    assert np.array_equal(cs.encode_features(a, SPACE), cs.encode_features(b, SPACE))


def test_encode_features_constant_length_and_injective_on_small_spaces():
    for space in (cs.SpaceConfig(max_nodes=3), cs.SpaceConfig(max_nodes=4)):
        vecs = {}
        for arch in cs.enumerate_unique(space):
            v = cs.encode_features(arch, space)
            assert v.shape[0] == space.feature_length
            key = v.tobytes()
            assert key not in vecs, "encoding must be injective on canonical forms"
            vecs[key] = arch


def test_serialize_parse_round_trip():
    rng = root(77).child("ser").generator()
    for _ in range(50):
        arch = cs.sample_random(SPACE, rng)
        assert cs.parse(cs.serialize(arch)) == arch


def test_parse_rejects_malformed():
    for bad in ("", "3;10", "x;1;", "3;101;CONV3x3;extra", "2;2;"):
        with pytest.raises(InvalidArchitecture):
            cs.parse(bad)
