import random

import pytest

from veilkey import core_primitives as cp
from veilkey import merkle


def oracle_root(leaves, depth, profile="algebraic"):
    """Naive bottom-up recomputation over the padded leaf list."""
    level = list(leaves) + [cp.empty_leaf_digest(profile)] * ((1 << depth) - len(leaves))
    while len(level) > 1:
        level = [cp.hash_pair(level[i], level[i + 1], profile) for i in range(0, len(level), 2)]
    return level[0]


def rand_digest(rng):
    return cp.field_to_digest(rng.randrange(1, 2**248))


def test_empty_tree_definitions():
    h0 = cp.empty_leaf_digest()
    t1 = merkle.empty_tree(1)
    assert t1.get_root() == cp.hash_pair(h0, h0)
    assert t1.next_free == 0
    t3 = merkle.empty_tree(3)
    assert t3.get_node(1, 0) == t3.get_node(1, 1)
    assert merkle.empty_tree(4).get_root() == oracle_root([], 4)


def test_depth_bounds():
    with pytest.raises(ValueError):
        merkle.empty_tree(0)
    with pytest.raises(ValueError):
        merkle.empty_tree(33)
    assert merkle.empty_tree(32).capacity == 2**32


def test_add_leaf_basics():
    rng = random.Random(10)
    t = merkle.empty_tree(3)
    r0 = t.get_root()
    h = rand_digest(rng)
    t.add_leaf(h)
    assert t.next_free == 1
    assert t.get_node(3, 0) == h
    assert t.get_root() != r0
    with pytest.raises(merkle.DuplicateLeafError):
        t.add_leaf(h)
    with pytest.raises(ValueError):
        t.add_leaf(b"short")


def test_capacity_error():
    rng = random.Random(11)
    t = merkle.empty_tree(2)
    for _ in range(4):
        t.add_leaf(rand_digest(rng))
    with pytest.raises(merkle.CapacityError):
        t.add_leaf(rand_digest(rng))


def test_roots_match_oracle_under_insertion():
    rng = random.Random(12)
    for depth in (2, 3, 4):
        t = merkle.empty_tree(depth)
        leaves = []
        roots = {t.get_root()}
        for _ in range(1 << depth):
            h = rand_digest(rng)
            t.add_leaf(h)
            leaves.append(h)
            root = t.get_root()
            assert root == oracle_root(leaves, depth)
            roots.add(root)
        assert len(roots) == (1 << depth) + 1  # every insertion moved the root


def test_get_index_of():
    rng = random.Random(13)
    t = merkle.empty_tree(4)
    hs = [rand_digest(rng) for _ in range(10)]
    for h in hs:
        t.add_leaf(h)
    for i, h in enumerate(hs):
        assert t.get_index_of(h) == i
    with pytest.raises(merkle.AbsentLeafError):
        t.get_index_of(rand_digest(rng))


def test_validation_list_shape():
    rng = random.Random(14)
    t = merkle.empty_tree(1)
    h = rand_digest(rng)
    t.add_leaf(h)
    vl = t.validation_list(0)
    assert len(vl) == 1
    assert vl.siblings[0] == cp.empty_leaf_digest()
    with pytest.raises(IndexError):
        t.validation_list(2)
    with pytest.raises(IndexError):
        t.validation_list(-1)
    t5 = merkle.empty_tree(5)
    assert len(t5.validation_list(0)) == 5  # length is depth regardless of occupancy


def test_membership_exhaustive_small_depths():
    rng = random.Random(15)
    for depth in (2, 3, 4, 5, 6):
        t = merkle.empty_tree(depth)
        hs = [rand_digest(rng) for _ in range(1 << depth)]
        for h in hs:
            t.add_leaf(h)
        root = t.get_root()
        for i, h in enumerate(hs):
            vl = t.validation_list(i)
            assert merkle.is_leaf_of_tree(h, i, vl, root)
            wrong = (i + 1) % (1 << depth)
            if wrong != i:
                assert not merkle.is_leaf_of_tree(h, wrong, vl, root)
            assert not merkle.is_leaf_of_tree(rand_digest(rng), i, vl, root)


def test_membership_with_partially_filled_tree():
    rng = random.Random(16)
    t = merkle.empty_tree(4)
    hs = [rand_digest(rng) for _ in range(5)]
    for h in hs:
        t.add_leaf(h)
    root = t.get_root()
    for i, h in enumerate(hs):
        assert merkle.is_leaf_of_tree(h, i, t.validation_list(i), root)
    # an unoccupied slot proves the empty leaf, not arbitrary digests
    assert merkle.is_leaf_of_tree(cp.empty_leaf_digest(), 7, t.validation_list(7), root)
    assert not merkle.is_leaf_of_tree(rand_digest(rng), 7, t.validation_list(7), root)


def test_mutated_sibling_fails():
    rng = random.Random(17)
    t = merkle.empty_tree(4)
    hs = [rand_digest(rng) for _ in range(9)]
    for h in hs:
        t.add_leaf(h)
    root = t.get_root()
    i = 6
    vl = t.validation_list(i)
    for level in range(4):
        for pos in (0, 31):
            sibs = list(vl.siblings)
            mutated = bytearray(sibs[level])
            mutated[pos] ^= 0x01
            sibs[level] = bytes(mutated)
            assert not merkle.is_leaf_of_tree(hs[i], i, merkle.ValidationList(tuple(sibs)), root)


def test_is_leaf_of_tree_malformed_inputs(caplog):
    t = merkle.empty_tree(2)
    h = cp.hash_bytes(b"x")
    t.add_leaf(h)
    root = t.get_root()
    vl = t.validation_list(0)
    with caplog.at_level("WARNING"):
        assert not merkle.is_leaf_of_tree(h, 0, merkle.ValidationList(()), root)
        assert not merkle.is_leaf_of_tree(h, 9, vl, root)
        assert not merkle.is_leaf_of_tree(b"short", 0, vl, root)
        assert not merkle.is_leaf_of_tree(h, 0, (b"a", b"b"), root)
    assert len(caplog.records) == 4


def test_append_only_and_path_locality():
    rng = random.Random(18)
    t = merkle.empty_tree(6)
    hs = [rand_digest(rng) for _ in range(20)]
    for n, h in enumerate(hs):
        before = t.node_writes
        prior_leaves = t.leaves()
        t.add_leaf(h)
        assert t.node_writes - before == t.depth + 1  # exactly the path
        assert t.leaves()[:n] == prior_leaves


def test_snapshot_roundtrip():
    rng = random.Random(19)
    t = merkle.empty_tree(5)
    for _ in range(11):
        t.add_leaf(rand_digest(rng))
    blob = t.to_bytes()
    loaded = merkle.MerkleTree.from_bytes(blob)
    assert loaded.depth == 5
    assert loaded.next_free == 11
    assert loaded.get_root() == t.get_root()
    assert loaded.leaves() == t.leaves()


def test_snapshot_rejects_corruption():
    rng = random.Random(20)
    t = merkle.empty_tree(3)
    t.add_leaf(rand_digest(rng))
    blob = t.to_bytes()
    with pytest.raises(ValueError):
        merkle.MerkleTree.from_bytes(blob[:-5])
    with pytest.raises(ValueError):
        merkle.MerkleTree.from_bytes(b"\x07" + blob[1:])
    with pytest.raises(ValueError):
        merkle.MerkleTree.from_bytes(b"")


def test_sha256_profile_tree():
    rng = random.Random(21)
    t = merkle.empty_tree(3, "sha256")
    hs = [rng.randbytes(32) for _ in range(3)]
    for h in hs:
        t.add_leaf(h)
    assert t.get_root() == oracle_root(hs, 3, "sha256")
    assert merkle.is_leaf_of_tree(hs[1], 1, t.validation_list(1), t.get_root(), "sha256")
    assert not merkle.is_leaf_of_tree(hs[1], 1, t.validation_list(1), t.get_root(), "algebraic")
