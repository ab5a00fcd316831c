"""Proof system tests: the relation, both backends, and the codecs."""

import random

import pytest

from veilkey import circuit, core_primitives as cp, groth16, merkle, zkp
from veilkey.backends import params
from veilkey.r1cs import LC, Builder


def build_population(depth: int, count: int, seed: bytes, profile: str = "algebraic"):
    entropy = cp.MockEntropy(seed)
    tree = merkle.empty_tree(depth, profile)
    notes = []
    for _ in range(count):
        note = cp.user_init(256, "dh", entropy)
        notes.append(note)
        tree.add_leaf(cp.derive_commitment(note, profile).value)
    return tree, notes


def statement_witness(tree, note, profile: str = "algebraic"):
    commitment = cp.derive_commitment(note, profile).value
    index = tree.get_index_of(commitment)
    statement = zkp.Statement(
        nullifier=cp.derive_nullifier(note, profile).value,
        root=tree.get_root(),
    )
    witness = zkp.Witness(note, index, tree.validation_list(index))
    return statement, witness


@pytest.fixture(scope="module")
def crs3():
    return zkp.setup(3, seed=b"test-crs-depth-3")


@pytest.fixture(scope="module")
def pop3():
    return build_population(3, 5, b"zkp-pop")


# ---------------------------------------------------------------------------
# Relation plumbing
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("depth", [1, 2, 3, 4, 5])
def test_constraint_count_matches_synthesis(depth):
    builder = circuit.synthesize(
        depth, [0, 0], b"\x00" * 32, b"\x00" * 32, b"\x00" * 32, 0, [0] * depth
    )
    assert builder.cs.n_constraints == circuit.constraint_count(depth)


def test_absorb_gadget_matches_native_sponge():
    rng = random.Random(0xC1BC)
    for _ in range(60):
        n_chunks = rng.choice([2, 4, 6])
        chunks = [rng.randrange(params.R) for _ in range(n_chunks)]
        tag = rng.randrange(1 << 70)
        builder = Builder(0)
        lcs = [builder.alloc(c) for c in chunks]
        out = circuit.absorb_gadget(builder, lcs, tag, "bridge")
        assert builder.eval_lc(out) == cp.sponge_absorb(chunks, tag)


def test_permute_gadget_matches_native_permutation():
    from veilkey.backends import core

    rng = random.Random(0xF00D)
    for _ in range(20):
        state = tuple(rng.randrange(params.R) for _ in range(3))
        builder = Builder(0)
        lcs = tuple(builder.alloc(v) for v in state)
        out = circuit.permute_gadget(builder, lcs, "bridge")
        assert tuple(builder.eval_lc(x) for x in out) == core.poseidon_permute(*state)


def test_circuit_commitment_matches_native_derivation():
    rng = random.Random(7)
    for _ in range(10):
        note = cp.Note(
            rho=rng.randbytes(32), pk=rng.randbytes(32), sk=rng.randbytes(32)
        )
        builder = Builder(0)
        chunks = []
        for atom in (note.sk, note.rho):
            vals = cp.bytes_to_chunks(cp.encode(atom))
            chunks.append(LC.const(vals[0]))
            chunks.extend(builder.alloc(v) for v in vals[1:])
        out = circuit.absorb_gadget(builder, chunks, circuit._STREAM_TAG, "bridge")
        expected = cp.digest_to_field(cp.derive_commitment(note, "algebraic").value)
        assert builder.eval_lc(out) == expected


# ---------------------------------------------------------------------------
# Completeness
# ---------------------------------------------------------------------------


def test_prove_verify_roundtrip(crs3, pop3):
    tree, notes = pop3
    rng = random.Random(11)
    for note in notes[:3]:
        statement, witness = statement_witness(tree, note)
        proof = zkp.prove(crs3, statement, witness, rng)
        assert len(proof.data) == zkp.PROOF_SIZE
        assert zkp.verify(crs3, statement, proof)


def test_prove_deterministic_under_seeded_rng(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    p1 = zkp.prove(crs3, statement, witness, random.Random(42))
    p2 = zkp.prove(crs3, statement, witness, random.Random(42))
    p3 = zkp.prove(crs3, statement, witness, random.Random(43))
    assert p1 == p2
    assert p1 != p3  # blinding scalars come from the rng
    assert zkp.verify(crs3, statement, p3)


def test_proof_size_constant_across_depths():
    sizes = set()
    for depth in (2, 4):
        crs = zkp.setup(depth, seed=b"size-check-%d" % depth)
        tree, notes = build_population(depth, 3, b"size-%d" % depth)
        statement, witness = statement_witness(tree, notes[1])
        proof = zkp.prove(crs, statement, witness, random.Random(1))
        assert zkp.verify(crs, statement, proof)
        sizes.add(len(proof.data))
    assert sizes == {zkp.PROOF_SIZE}


# ---------------------------------------------------------------------------
# Witness clause errors
# ---------------------------------------------------------------------------


def test_wrong_note_fails_membership(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    impostor = zkp.Witness(notes[1], witness.leaf_index, witness.validation_list)
    with pytest.raises(zkp.WitnessError) as exc:
        zkp.prove(crs3, statement, impostor)
    assert exc.value.clause == "membership"


def test_wrong_index_fails_membership(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    shifted = zkp.Witness(witness.note, witness.leaf_index + 1, witness.validation_list)
    with pytest.raises(zkp.WitnessError) as exc:
        zkp.prove(crs3, statement, shifted)
    assert exc.value.clause == "membership"


def test_foreign_nullifier_fails_binding(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    other = cp.derive_nullifier(notes[1], "algebraic").value
    forged = zkp.Statement(nullifier=other, root=statement.root)
    with pytest.raises(zkp.WitnessError) as exc:
        zkp.prove(crs3, forged, witness)
    assert exc.value.clause == "nullifier-binding"


def test_short_validation_list_fails_shape(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    truncated = zkp.Witness(
        witness.note,
        witness.leaf_index,
        merkle.ValidationList(witness.validation_list.siblings[:-1]),
    )
    with pytest.raises(zkp.WitnessError) as exc:
        zkp.prove(crs3, statement, truncated)
    assert exc.value.clause == "witness-shape"


def test_short_atom_fails_shape(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    note = witness.note
    clipped = zkp.Witness(
        cp.Note(rho=note.rho, pk=note.pk, sk=note.sk[:31]),
        witness.leaf_index,
        witness.validation_list,
    )
    with pytest.raises(zkp.WitnessError) as exc:
        zkp.prove(crs3, statement, clipped)
    assert exc.value.clause == "witness-shape"


def test_out_of_range_index_fails_shape(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    oob = zkp.Witness(witness.note, 1 << crs3.depth, witness.validation_list)
    with pytest.raises(zkp.WitnessError) as exc:
        zkp.prove(crs3, statement, oob)
    assert exc.value.clause == "witness-shape"


def test_noncanonical_statement_fails(crs3, pop3):
    tree, notes = pop3
    _, witness = statement_witness(tree, notes[0])
    bogus = zkp.Statement(nullifier=b"\xff" * 32, root=tree.get_root())
    with pytest.raises(zkp.WitnessError) as exc:
        zkp.prove(crs3, bogus, witness)
    assert exc.value.clause == "statement"


# ---------------------------------------------------------------------------
# Soundness-side rejections
# ---------------------------------------------------------------------------


def test_statement_mutation_rejected(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    proof = zkp.prove(crs3, statement, witness, random.Random(2))
    wrong_null = zkp.Statement(cp.derive_nullifier(notes[2], "algebraic").value, statement.root)
    assert not zkp.verify(crs3, wrong_null, proof)
    flipped = bytearray(statement.root)
    flipped[-1] ^= 1
    assert not zkp.verify(crs3, zkp.Statement(statement.nullifier, bytes(flipped)), proof)


def test_proof_bitflips_rejected(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    proof = zkp.prove(crs3, statement, witness, random.Random(3))
    for pos in range(0, zkp.PROOF_SIZE, 7):
        mutated = bytearray(proof.data)
        mutated[pos] ^= 0x01
        assert not zkp.verify(crs3, statement, zkp.Proof(bytes(mutated)))


def test_garbage_proofs_never_crash(crs3, pop3):
    tree, notes = pop3
    statement, _ = statement_witness(tree, notes[0])
    rng = random.Random(99)
    for _ in range(50):
        blob = rng.randbytes(zkp.PROOF_SIZE)
        assert zkp.verify(crs3, statement, zkp.Proof(blob)) is False
    assert not zkp.verify(crs3, statement, zkp.Proof(b""))
    assert not zkp.verify(crs3, statement, zkp.Proof(b"\x00" * zkp.PROOF_SIZE))
    assert not zkp.verify(crs3, statement, zkp.Proof(b"\x01" * 131))


def test_cross_setup_verification_fails(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    proof = zkp.prove(crs3, statement, witness, random.Random(4))
    other = zkp.setup(3, seed=b"a-different-ceremony")
    assert zkp.verify(other, statement, proof) is False
    assert zkp.verify(crs3, statement, proof) is True


def test_proof_for_stale_root_fails_under_new_root(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    proof = zkp.prove(crs3, statement, witness, random.Random(5))
    grown, _ = build_population(3, 5, b"zkp-pop")
    grown.add_leaf(cp.derive_commitment(cp.user_init(256, "dh", cp.MockEntropy(b"x")), "algebraic").value)
    new_statement = zkp.Statement(statement.nullifier, grown.get_root())
    assert not zkp.verify(crs3, new_statement, proof)


# ---------------------------------------------------------------------------
# Rerandomization
# ---------------------------------------------------------------------------


def test_rerandomized_proof_verifies_and_differs(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    proof = zkp.prove(crs3, statement, witness, random.Random(6))
    fresh = zkp.rerandomize_proof(crs3, proof, random.Random(7))
    assert fresh.data != proof.data
    assert zkp.verify(crs3, statement, fresh)
    other_statement, _ = statement_witness(tree, notes[1])
    assert not zkp.verify(crs3, other_statement, fresh)


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("profile", ["algebraic", "sha256"])
def test_mock_backend_roundtrip(profile):
    crs = zkp.setup(4, profile, backend="mock", seed=b"mock-%s" % profile.encode())
    tree, notes = build_population(4, 4, b"mock-pop", profile)
    statement, witness = statement_witness(tree, notes[2], profile)
    proof = zkp.prove(crs, statement, witness)
    assert len(proof.data) == zkp.PROOF_SIZE
    assert proof.data[0] == zkp.PROOF_VERSION_MOCK
    assert zkp.verify(crs, statement, proof)
    other_statement, _ = statement_witness(tree, notes[0], profile)
    assert not zkp.verify(crs, other_statement, proof)


def test_mock_backend_still_checks_witness():
    crs = zkp.setup(4, backend="mock", seed=b"mock-check")
    tree, notes = build_population(4, 4, b"mock-pop2")
    statement, witness = statement_witness(tree, notes[0])
    impostor = zkp.Witness(notes[1], witness.leaf_index, witness.validation_list)
    with pytest.raises(zkp.WitnessError) as exc:
        zkp.prove(crs, statement, impostor)
    assert exc.value.clause == "membership"


def test_mock_proofs_bound_to_their_crs():
    crs_a = zkp.setup(4, backend="mock", seed=b"mock-a")
    crs_b = zkp.setup(4, backend="mock", seed=b"mock-b")
    tree, notes = build_population(4, 3, b"mock-pop3")
    statement, witness = statement_witness(tree, notes[0])
    proof = zkp.prove(crs_a, statement, witness)
    assert zkp.verify(crs_a, statement, proof)
    assert not zkp.verify(crs_b, statement, proof)


def test_backends_reject_each_others_proofs(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    real = zkp.prove(crs3, statement, witness, random.Random(8))
    mock_crs = zkp.setup(3, backend="mock", seed=b"mock-mix")
    fake = zkp.prove(mock_crs, statement, witness)
    assert not zkp.verify(crs3, statement, fake)
    assert not zkp.verify(mock_crs, statement, real)


# ---------------------------------------------------------------------------
# Support matrix and serialization
# ---------------------------------------------------------------------------


def test_groth16_rejects_sha256_profile():
    with pytest.raises(zkp.UnsupportedProfileError):
        zkp.setup(3, "sha256", backend="groth16")


def test_setup_parameter_validation():
    with pytest.raises(ValueError):
        zkp.setup(0)
    with pytest.raises(ValueError):
        zkp.setup(33)
    with pytest.raises(ValueError):
        zkp.setup(3, backend="bulletproofs")
    with pytest.raises(ValueError):
        zkp.setup(3, "md5")


def test_statement_serialization_roundtrip(pop3):
    tree, notes = pop3
    statement, _ = statement_witness(tree, notes[0])
    data = zkp.statement_to_bytes(statement)
    assert len(data) == 65
    assert zkp.statement_from_bytes(data) == statement
    with pytest.raises(ValueError):
        zkp.statement_from_bytes(data[:-1])
    with pytest.raises(ValueError):
        zkp.statement_from_bytes(b"\x09" + data[1:])


def test_crs_save_load_roundtrip(tmp_path, crs3, pop3):
    tree, notes = pop3
    base = tmp_path / "ceremony"
    zkp.save_crs(crs3, base)
    loaded = zkp.load_crs(base, require_proving=True)
    assert loaded.fingerprint == crs3.fingerprint
    statement, witness = statement_witness(tree, notes[0])
    proof = zkp.prove(loaded, statement, witness, random.Random(9))
    assert zkp.verify(loaded, statement, proof)
    assert zkp.verify(crs3, statement, proof)


def test_verifier_view_cannot_prove(tmp_path, crs3, pop3):
    tree, notes = pop3
    view = crs3.verifier_view()
    assert not view.can_prove
    statement, witness = statement_witness(tree, notes[0])
    with pytest.raises(ValueError):
        zkp.prove(view, statement, witness)
    base = tmp_path / "verifier"
    zkp.save_crs(view, base)
    assert not (base.with_suffix(".pk")).exists()
    loaded = zkp.load_crs(base)
    proof = zkp.prove(crs3, statement, witness, random.Random(10))
    assert zkp.verify(loaded, statement, proof)
    with pytest.raises(ValueError):
        zkp.load_crs(base, require_proving=True)


def test_published_verification_key_bytes(crs3, pop3):
    tree, notes = pop3
    blob = zkp.verification_key_bytes(crs3)
    remote = zkp.crs_from_verification_key("groth16", 3, "algebraic", blob)
    assert not remote.can_prove
    statement, witness = statement_witness(tree, notes[0])
    proof = zkp.prove(crs3, statement, witness, random.Random(12))
    assert zkp.verify(remote, statement, proof)


def test_mock_crs_save_load(tmp_path):
    crs = zkp.setup(5, "sha256", backend="mock", seed=b"mock-io")
    base = tmp_path / "mock"
    zkp.save_crs(crs, base)
    loaded = zkp.load_crs(base, require_proving=True)
    tree, notes = build_population(5, 2, b"mock-io-pop", "sha256")
    statement, witness = statement_witness(tree, notes[0], "sha256")
    proof = zkp.prove(loaded, statement, witness)
    assert zkp.verify(crs, statement, proof)


def test_groth16_proof_codec_validation(crs3, pop3):
    tree, notes = pop3
    statement, witness = statement_witness(tree, notes[0])
    proof = zkp.prove(crs3, statement, witness, random.Random(13))
    points = groth16.proof_points_from_bytes(proof.data)
    assert groth16.proof_points_to_bytes(points) == proof.data
    with pytest.raises(groth16.ProofFormatError):
        groth16.proof_points_from_bytes(proof.data + b"\x00")
    # x not on the curve
    bad = bytearray(proof.data)
    bad[1:34] = bytes([0x02]) + (params.P - 1).to_bytes(32, "big")
    try:
        groth16.proof_points_from_bytes(bytes(bad))
    except groth16.ProofFormatError:
        pass
    # x above the modulus is always malformed
    bad[1:34] = bytes([0x02]) + b"\xff" * 32
    with pytest.raises(groth16.ProofFormatError):
        groth16.proof_points_from_bytes(bytes(bad))
