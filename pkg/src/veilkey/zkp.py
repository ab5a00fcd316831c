"""Membership proofs: statement and witness types, setup, prove, verify.

Two backends share one interface. "groth16" is the real proving system
over BN254 and requires the algebraic hash profile, since the relation
re-executes the sponge inside the circuit. "mock" is a shared-secret MAC
for development and for profiles the circuit cannot express: it gives no
zero knowledge and no soundness against anyone holding the CRS, and says
so in its docstring so nobody ships it by accident.

A prover always checks the witness natively before synthesizing
anything, so a bad witness fails fast with the violated clause named:
"statement", "witness-shape", "membership", or "nullifier-binding".
Verification never raises on attacker-supplied bytes; it returns False.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import random
from dataclasses import dataclass, replace
from pathlib import Path

from . import core_primitives as cp
from . import circuit, groth16, merkle
from .backends import params
from .r1cs import eval_constraints

BACKENDS = ("groth16", "mock")
PROOF_SIZE = groth16.PROOF_SIZE
PROOF_VERSION_MOCK = 0x7F

_STATEMENT_VERSION = 1


class UnsupportedProfileError(Exception):
    pass


class WitnessError(Exception):
    """Raised by prove when (statement, witness) is outside the relation."""

    def __init__(self, clause: str, detail: str = ""):
        self.clause = clause
        super().__init__(f"witness check failed at clause {clause!r}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class Statement:
    nullifier: bytes
    root: bytes


@dataclass(frozen=True)
class Witness:
    note: cp.Note
    leaf_index: int
    validation_list: merkle.ValidationList


@dataclass(frozen=True)
class Proof:
    data: bytes


@dataclass
class CRS:
    backend: str
    depth: int
    hash_profile: str
    fingerprint: bytes
    proving_key: groth16.ProvingKey | bytes | None
    verification_key: groth16.VerificationKey | bytes

    def verifier_view(self) -> "CRS":
        """Copy safe to hand to a verifier; the mock secret must stay."""
        if self.backend == "mock":
            return replace(self)
        return replace(self, proving_key=None)

    @property
    def can_prove(self) -> bool:
        return self.proving_key is not None


def _fingerprint(backend: str, depth: int, hash_profile: str, setup_id: bytes) -> bytes:
    payload = b"veilkey/crs/v1"
    payload += backend.encode() + b"\x00" + hash_profile.encode() + b"\x00"
    payload += depth.to_bytes(2, "big") + circuit.RELATION_VERSION.to_bytes(2, "big")
    payload += setup_id
    return hashlib.sha256(payload).digest()


def setup(
    depth: int,
    hash_profile: str = "algebraic",
    backend: str = "groth16",
    seed: bytes | None = None,
) -> CRS:
    """Generate a CRS. A non-None seed makes setup deterministic, which
    leaks the toxic waste; only tests should pass one."""
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if hash_profile not in cp.HASH_PROFILES:
        raise ValueError(f"unknown hash profile {hash_profile!r}")
    if not merkle.MIN_DEPTH <= depth <= merkle.MAX_DEPTH:
        raise ValueError(f"depth must be in [{merkle.MIN_DEPTH}, {merkle.MAX_DEPTH}]")
    if backend == "groth16" and hash_profile != "algebraic":
        raise UnsupportedProfileError(
            f"unsupported profile/depth combination: backend groth16 cannot express "
            f"hash profile {hash_profile!r}; use the algebraic profile or the mock backend"
        )

    setup_id = hashlib.sha256(b"veilkey/setup-id/" + seed).digest()[:16] if seed else None
    if setup_id is None:
        import os

        setup_id = os.urandom(16)
    fingerprint = _fingerprint(backend, depth, hash_profile, setup_id)

    if backend == "mock":
        secret = hashlib.sha256(b"veilkey/mock-secret/" + setup_id).digest()
        return CRS(backend, depth, hash_profile, fingerprint, secret, secret)

    cs = circuit.synthesize(depth, [0, 0], b"\x00" * 32, b"\x00" * 32, b"\x00" * 32, 0,
                            [0] * depth).cs
    pk, vk = groth16.setup_keys(cs, fingerprint, seed=seed)
    return CRS(backend, depth, hash_profile, fingerprint, pk, vk)


# ---------------------------------------------------------------------------
# Prove
# ---------------------------------------------------------------------------


def _check_witness(crs: CRS, statement: Statement, witness: Witness) -> None:
    """Native relation check; raises WitnessError naming the failed clause."""
    if len(statement.nullifier) != cp.DIGEST_SIZE or len(statement.root) != cp.DIGEST_SIZE:
        raise WitnessError("statement", "statement parts must be digests")
    if crs.hash_profile == "algebraic":
        try:
            cp.digest_to_field(statement.nullifier)
            cp.digest_to_field(statement.root)
        except ValueError as exc:
            raise WitnessError("statement", str(exc)) from None

    note = witness.note
    for name, atom in (("rho", note.rho), ("pk", note.pk), ("sk", note.sk)):
        if len(atom) != circuit.ATOM_BYTES:
            raise WitnessError("witness-shape", f"note.{name} must be {circuit.ATOM_BYTES} bytes")
    if not 0 <= witness.leaf_index < (1 << crs.depth):
        raise WitnessError("witness-shape", "leaf index out of range for tree depth")
    if len(witness.validation_list) != crs.depth:
        raise WitnessError(
            "witness-shape",
            f"validation list has {len(witness.validation_list)} siblings, need {crs.depth}",
        )

    commitment = cp.derive_commitment(note, crs.hash_profile)
    if not merkle.is_leaf_of_tree(
        commitment.value, witness.leaf_index, witness.validation_list,
        statement.root, crs.hash_profile,
    ):
        raise WitnessError("membership", "commitment is not at the claimed position under this root")
    nullifier = cp.derive_nullifier(note, crs.hash_profile)
    if nullifier.value != statement.nullifier:
        raise WitnessError("nullifier-binding", "statement nullifier does not match the note")


def prove(crs: CRS, statement: Statement, witness: Witness, rng=None) -> Proof:
    if not crs.can_prove:
        raise ValueError("this CRS has no proving key")
    if rng is None:
        rng = random.SystemRandom()
    _check_witness(crs, statement, witness)

    if crs.backend == "mock":
        tag = hmac.new(crs.proving_key, _mock_payload(statement), hashlib.sha256).digest()
        data = bytes([PROOF_VERSION_MOCK]) + tag + b"\x00" * (PROOF_SIZE - 33)
        return Proof(data)

    n_field = cp.digest_to_field(statement.nullifier)
    root_field = cp.digest_to_field(statement.root)
    siblings = [cp.digest_to_field(s) for s in witness.validation_list.siblings]
    builder = circuit.synthesize(
        crs.depth, [n_field, root_field],
        witness.note.sk, witness.note.rho, witness.note.pk,
        witness.leaf_index, siblings,
    )
    # the native check above already accepted; any failure here is a bug
    eval_constraints(builder.cs, builder.values)
    points = groth16.prove_with_key(crs.proving_key, builder.cs, builder.values, rng)
    return Proof(groth16.proof_points_to_bytes(points))


def rerandomize_proof(crs: CRS, proof: Proof, rng=None) -> Proof:
    """Equally valid, unlinkable re-encoding of an existing groth16 proof."""
    if crs.backend != "groth16":
        raise ValueError("only groth16 proofs can be rerandomized")
    if rng is None:
        rng = random.SystemRandom()
    points = groth16.proof_points_from_bytes(proof.data)
    return Proof(groth16.proof_points_to_bytes(groth16.rerandomize(crs.verification_key, points, rng)))


# ---------------------------------------------------------------------------
# Verify
# ---------------------------------------------------------------------------


def _mock_payload(statement: Statement) -> bytes:
    return b"veilkey/mock-proof/" + statement.nullifier + statement.root


def verify(crs: CRS, statement: Statement, proof: Proof) -> bool:
    """Never raises on malformed input; malformed means invalid."""
    if not isinstance(proof.data, bytes) or len(proof.data) != PROOF_SIZE:
        return False
    if len(statement.nullifier) != cp.DIGEST_SIZE or len(statement.root) != cp.DIGEST_SIZE:
        return False

    if crs.backend == "mock":
        if proof.data[0] != PROOF_VERSION_MOCK:
            return False
        expected = hmac.new(crs.verification_key, _mock_payload(statement), hashlib.sha256).digest()
        padded = bytes([PROOF_VERSION_MOCK]) + expected + b"\x00" * (PROOF_SIZE - 33)
        return cp.constant_time_equal(proof.data, padded)

    try:
        n_field = cp.digest_to_field(statement.nullifier)
        root_field = cp.digest_to_field(statement.root)
        points = groth16.proof_points_from_bytes(proof.data)
    except (ValueError, groth16.ProofFormatError):
        return False
    return groth16.verify_with_key(crs.verification_key, [n_field, root_field], points)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def statement_to_bytes(statement: Statement) -> bytes:
    return bytes([_STATEMENT_VERSION]) + statement.nullifier + statement.root


def statement_from_bytes(data: bytes) -> Statement:
    if len(data) != 1 + 2 * cp.DIGEST_SIZE:
        raise ValueError(f"statement must be {1 + 2 * cp.DIGEST_SIZE} bytes")
    if data[0] != _STATEMENT_VERSION:
        raise ValueError(f"unknown statement version {data[0]}")
    return Statement(nullifier=data[1:33], root=data[33:65])


def save_crs(crs: CRS, base: str | Path) -> None:
    """Writes <base>.json (parameters), <base>.vk, and <base>.pk if present."""
    base = Path(base)
    meta = {
        "backend": crs.backend,
        "depth": crs.depth,
        "hash_profile": crs.hash_profile,
        "fingerprint": crs.fingerprint.hex(),
    }
    base.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    if crs.backend == "mock":
        base.with_suffix(".vk").write_bytes(crs.verification_key)
        base.with_suffix(".pk").write_bytes(crs.proving_key)
        return
    base.with_suffix(".vk").write_bytes(groth16.verification_key_to_bytes(crs.verification_key))
    if crs.proving_key is not None:
        base.with_suffix(".pk").write_bytes(groth16.proving_key_to_bytes(crs.proving_key))


def load_crs(base: str | Path, require_proving: bool = False, skip_proving: bool = False) -> CRS:
    base = Path(base)
    meta = json.loads(base.with_suffix(".json").read_text())
    backend = meta["backend"]
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r} in CRS metadata")
    fingerprint = bytes.fromhex(meta["fingerprint"])
    vk_bytes = base.with_suffix(".vk").read_bytes()
    pk_path = base.with_suffix(".pk")

    if backend == "mock":
        return CRS(backend, meta["depth"], meta["hash_profile"], fingerprint, vk_bytes, vk_bytes)

    vk = groth16.verification_key_from_bytes(vk_bytes)
    if vk.fingerprint != fingerprint:
        raise ValueError("verification key does not match CRS metadata fingerprint")
    pk = None
    if pk_path.exists() and not skip_proving:
        pk = groth16.proving_key_from_bytes(pk_path.read_bytes())
        if pk.fingerprint != fingerprint:
            raise ValueError("proving key does not match CRS metadata fingerprint")
    if require_proving and pk is None:
        raise ValueError(f"no proving key at {pk_path}")
    return CRS(backend, meta["depth"], meta["hash_profile"], fingerprint, pk, vk)


def verification_key_bytes(crs: CRS) -> bytes:
    """Wire form of the verifying half, as published by the registrar."""
    if crs.backend == "mock":
        return crs.verification_key
    return groth16.verification_key_to_bytes(crs.verification_key)


def crs_from_verification_key(
    backend: str, depth: int, hash_profile: str, data: bytes
) -> CRS:
    """Verifier-side CRS from published bytes; no proving capability."""
    if backend == "mock":
        return CRS(backend, depth, hash_profile, hashlib.sha256(data).digest(), data, data)
    vk = groth16.verification_key_from_bytes(data)
    return CRS(backend, depth, hash_profile, vk.fingerprint, None, vk)
