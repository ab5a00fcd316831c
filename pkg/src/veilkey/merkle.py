"""Fixed-depth append-only Merkle tree over commitment digests.

Level k holds 2^k nodes (k = 0 is the root, k = depth the leaves). Only
written nodes are materialized; unoccupied subtrees use precomputed
per-level digests of the empty leaf H(encode(0x00)), so trees of depth up
to 32 stay cheap until filled.

Sibling-order convention, frozen because the circuit replays it: bit b of
the leaf index at a given level selects the fold order, and b = 0 means
the running digest is the left hash input.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from . import core_primitives as cp

logger = logging.getLogger(__name__)

MIN_DEPTH = 1
MAX_DEPTH = 32

_SNAPSHOT_VERSION = 1


class CapacityError(Exception):
    """All 2^depth leaf slots are occupied."""


class DuplicateLeafError(Exception):
    """The digest is already an appended leaf; duplicates are rejected
    because the matching note would produce an unredeemable nullifier."""


class AbsentLeafError(Exception):
    pass


@dataclass(frozen=True)
class ValidationList:
    """Sibling digests along a leaf-to-root path, leaf level first."""

    siblings: tuple

    def __len__(self):
        return len(self.siblings)


class MerkleTree:
    def __init__(self, depth: int, hash_profile: str = "algebraic"):
        if not MIN_DEPTH <= depth <= MAX_DEPTH:
            raise ValueError(f"depth must be in [{MIN_DEPTH}, {MAX_DEPTH}]")
        self.depth = depth
        self.hash_profile = hash_profile
        self.next_free = 0
        self.node_writes = 0  # instrumentation: path-locality tests read this
        self._nodes: list[dict[int, bytes]] = [dict() for _ in range(depth + 1)]
        self._index: dict[bytes, int] = {}
        empty = [b""] * (depth + 1)
        empty[depth] = cp.empty_leaf_digest(hash_profile)
        for k in range(depth - 1, -1, -1):
            empty[k] = cp.hash_pair(empty[k + 1], empty[k + 1], hash_profile)
        self._empty = empty

    @property
    def capacity(self) -> int:
        return 1 << self.depth

    def get_node(self, level: int, index: int) -> bytes:
        if not 0 <= level <= self.depth or not 0 <= index < (1 << level):
            raise IndexError("node coordinates out of range")
        return self._nodes[level].get(index, self._empty[level])

    def _set_node(self, level: int, index: int, value: bytes) -> None:
        self._nodes[level][index] = value
        self.node_writes += 1

    def add_leaf(self, h: bytes) -> "MerkleTree":
        if len(h) != cp.DIGEST_SIZE:
            raise ValueError("leaf must be a digest")
        if self.next_free >= self.capacity:
            raise CapacityError(f"tree of depth {self.depth} is full")
        if h in self._index:
            raise DuplicateLeafError("digest already appended")
        i = self.next_free
        self._set_node(self.depth, i, h)
        j = i
        for k in range(self.depth, 0, -1):
            parent = j >> 1
            left = self.get_node(k, parent << 1)
            right = self.get_node(k, (parent << 1) | 1)
            self._set_node(k - 1, parent, cp.hash_pair(left, right, self.hash_profile))
            j = parent
        self._index[h] = i
        self.next_free = i + 1
        return self

    def get_root(self) -> bytes:
        return self.get_node(0, 0)

    def get_index_of(self, h: bytes) -> int:
        try:
            return self._index[h]
        except KeyError:
            raise AbsentLeafError("digest is not an appended leaf") from None

    def validation_list(self, i: int) -> ValidationList:
        if not 0 <= i < self.capacity:
            raise IndexError("leaf index out of range")
        siblings = []
        j = i
        for k in range(self.depth, 0, -1):
            siblings.append(self.get_node(k, j ^ 1))
            j >>= 1
        return ValidationList(tuple(siblings))

    def leaves(self) -> list[bytes]:
        """Appended leaves in insertion order."""
        return [self._nodes[self.depth][i] for i in range(self.next_free)]

    # -- snapshot format: version, depth, next_free, leaf digests only;
    #    interior nodes are recomputed on load so corruption shows up as a
    #    root mismatch rather than silent inconsistency

    def to_bytes(self) -> bytes:
        header = (
            _SNAPSHOT_VERSION.to_bytes(1, "big")
            + self.depth.to_bytes(1, "big")
            + self.next_free.to_bytes(8, "big")
        )
        return header + b"".join(self.leaves())

    @classmethod
    def from_bytes(cls, data: bytes, hash_profile: str = "algebraic") -> "MerkleTree":
        if len(data) < 10:
            raise ValueError("snapshot too short")
        if data[0] != _SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {data[0]}")
        depth = data[1]
        count = int.from_bytes(data[2:10], "big")
        body = data[10:]
        if len(body) != count * cp.DIGEST_SIZE:
            raise ValueError("snapshot length does not match leaf count")
        tree = cls(depth, hash_profile)
        for off in range(0, len(body), cp.DIGEST_SIZE):
            tree.add_leaf(body[off : off + cp.DIGEST_SIZE])
        return tree


def empty_tree(depth: int, hash_profile: str = "algebraic") -> MerkleTree:
    return MerkleTree(depth, hash_profile)


def is_leaf_of_tree(h: bytes, i: int, val, root: bytes, hash_profile: str = "algebraic") -> bool:
    """Fold h upward using the validation list and compare against root.

    Malformed inputs are logged and rejected as false rather than raised:
    the verifier treats them the same as a failed proof.
    """
    siblings = val.siblings if isinstance(val, ValidationList) else tuple(val)
    depth = len(siblings)
    if not MIN_DEPTH <= depth <= MAX_DEPTH:
        logger.warning("validation list has invalid length %d", depth)
        return False
    if not 0 <= i < (1 << depth):
        logger.warning("leaf index %d out of range for depth %d", i, depth)
        return False
    if len(h) != cp.DIGEST_SIZE or any(len(s) != cp.DIGEST_SIZE for s in siblings):
        logger.warning("malformed digest in membership query")
        return False
    cur = h
    try:
        for k, sibling in enumerate(siblings):
            if (i >> k) & 1:
                cur = cp.hash_pair(sibling, cur, hash_profile)
            else:
                cur = cp.hash_pair(cur, sibling, hash_profile)
    except ValueError as exc:
        # e.g. a digest that is not a canonical field element under the
        # algebraic profile; adversarial input, so reject rather than raise
        logger.warning("membership fold rejected input: %s", exc)
        return False
    return cur == root
