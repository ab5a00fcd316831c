"""Arithmetic circuit for the redemption relation (version 1).

Public inputs: the nullifier N and the tree root. Private witness: sk,
rho and pk as 31-byte field chunks, the leaf index bits, and the sibling
digests. The circuit recomputes C = H(encode(sk) || encode(rho)) and
N = H(encode(pk) || encode(rho)) with the same sponge schedule as
core_primitives.hash_bytes, folds C up the tree with the merkle module's
bit convention, and binds the results to the public inputs.

The relation fixes 32-byte sk, pk and rho (the dh KEM profile), which
keeps every encoded atom at exactly three chunks and the permutation
count independent of the witness.
"""

from __future__ import annotations

from . import core_primitives as cp
from .backends import params
from .r1cs import LC, ONE, ZERO, Builder

R = params.R

RELATION_VERSION = 1
N_PUBLIC = 2  # nullifier, root
ATOM_BYTES = 32

# encode(32-byte atom) is 93 bytes; the hashed stream is two encoded atoms
_STREAM_TAG = (2 << 64) | (2 * 93)
_PAIR_TAG = (1 << 64) | 64

_HALF_FULL = params.SPONGE_FULL_ROUNDS // 2
_PARTIAL = params.SPONGE_PARTIAL_ROUNDS


def _sbox(b: Builder, x: LC, label: str) -> LC:
    x2 = b.mul(x, x, label)
    x4 = b.mul(x2, x2, label)
    return b.mul(x4, x, label)


def permute_gadget(b: Builder, state: tuple[LC, LC, LC], label: str) -> tuple[LC, LC, LC]:
    """One sponge permutation; mirrors backends poseidon_permute exactly."""
    s = list(state)
    rc = params.SPONGE_ROUND_CONSTANTS
    mds = params.SPONGE_MDS
    idx = 0
    for rnd in range(params.SPONGE_ROUNDS):
        s = [s[i].shift(rc[idx + i]) for i in range(3)]
        idx += 3
        if rnd < _HALF_FULL or rnd >= _HALF_FULL + _PARTIAL:
            s = [_sbox(b, s[i], f"{label}/round{rnd}") for i in range(3)]
        else:
            s[0] = _sbox(b, s[0], f"{label}/round{rnd}")
        s = [
            mds[i][0] * s[0] + mds[i][1] * s[1] + mds[i][2] * s[2]
            for i in range(3)
        ]
    return (s[0], s[1], s[2])


def absorb_gadget(b: Builder, chunks: list[LC], tag: int, label: str) -> LC:
    """Absorb an even-length chunk stream, two chunks per permutation."""
    assert len(chunks) % 2 == 0 and chunks
    state = (ZERO, ZERO, LC.const(tag))
    for i in range(0, len(chunks), 2):
        state = permute_gadget(
            b, (state[0] + chunks[i], state[1] + chunks[i + 1], state[2]), f"{label}/perm{i // 2}"
        )
    return state[0]


def _atom_chunk_values(data: bytes) -> list[int]:
    if len(data) != ATOM_BYTES:
        raise ValueError(f"relation v1 requires {ATOM_BYTES}-byte atoms, got {len(data)}")
    return cp.bytes_to_chunks(cp.encode(data))  # [32, high chunk, low chunk]


def synthesize(
    depth: int,
    statement_values: tuple[int, int],
    sk: bytes = b"\x00" * 32,
    rho: bytes = b"\x00" * 32,
    pk: bytes = b"\x00" * 32,
    leaf_index: int = 0,
    siblings: list[int] | None = None,
) -> Builder:
    """Build the depth-parameterized circuit with a concrete assignment.

    Setup callers pass the defaults; provers pass the real witness. The
    constraint shape is identical either way.
    """
    if siblings is None:
        siblings = [0] * depth
    if len(siblings) != depth:
        raise ValueError("validation list length must equal depth")
    if not 0 <= leaf_index < (1 << depth):
        raise ValueError("leaf index out of range")

    b = Builder(N_PUBLIC)
    nullifier_pub = b.set_public(1, statement_values[0])
    root_pub = b.set_public(2, statement_values[1])

    sk_chunks = [b.alloc(v) for v in _atom_chunk_values(sk)[1:]]
    rho_chunks = [b.alloc(v) for v in _atom_chunk_values(rho)[1:]]
    pk_chunks = [b.alloc(v) for v in _atom_chunk_values(pk)[1:]]
    length_chunk = LC.const(ATOM_BYTES)

    commitment = absorb_gadget(
        b,
        [length_chunk, sk_chunks[0], sk_chunks[1], length_chunk, rho_chunks[0], rho_chunks[1]],
        _STREAM_TAG,
        "commitment-hash",
    )
    nullifier = absorb_gadget(
        b,
        [length_chunk, pk_chunks[0], pk_chunks[1], length_chunk, rho_chunks[0], rho_chunks[1]],
        _STREAM_TAG,
        "nullifier-hash",
    )

    cur = commitment
    for level in range(depth):
        bit = b.alloc((leaf_index >> level) & 1)
        b.enforce_bool(bit, f"membership/index-bit-{level}")
        sibling = b.alloc(siblings[level])
        # left = cur + bit * (sibling - cur); right = sibling + cur - left
        left = b.mul(bit, sibling - cur, f"membership/select-{level}") + cur
        right = sibling + cur - left
        state = permute_gadget(
            b, (left, right, LC.const(_PAIR_TAG)), f"membership/level-{level}"
        )
        cur = state[0]

    b.enforce_equal(cur, root_pub, "root-binding")
    b.enforce_equal(nullifier, nullifier_pub, "nullifier-binding")
    return b


def constraint_count(depth: int) -> int:
    """Closed form kept in sync with synthesize by a test."""
    per_perm = 3 * params.SPONGE_FULL_ROUNDS * 3 + 3 * params.SPONGE_PARTIAL_ROUNDS
    return (6 * per_perm) + depth * (per_perm + 2) + 2
