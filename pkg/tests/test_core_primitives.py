import hashlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from veilkey import core_primitives as cp
from veilkey.backends import params


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------


def test_encode_layout():
    out = cp.encode(b"ab")
    assert len(out) == 62
    assert out[:31] == (2).to_bytes(31, "big")
    assert out[31:] == b"\x00" * 29 + b"ab"
    assert cp.encode(b"") == b"\x00" * 31


def test_encode_alignment_and_injectivity():
    rng = random.Random(0)
    seen = {}
    for _ in range(300):
        data = rng.randbytes(rng.randrange(0, 100))
        enc = cp.encode(data)
        assert len(enc) % cp.CHUNK_BYTES == 0
        if enc in seen:
            assert seen[enc] == data
        seen[enc] = data
    # zero padding must not collide across lengths
    assert cp.encode(b"\x00ab") != cp.encode(b"ab")


@given(st.binary(max_size=200))
def test_encode_roundtrip_property(data):
    enc = cp.encode(data)
    length = int.from_bytes(enc[:31], "big")
    assert length == len(data)
    body = enc[31:]
    assert body[len(body) - length :] == data
    assert all(b == 0 for b in body[: len(body) - length])


def test_chunks_fit_in_field():
    chunks = cp.bytes_to_chunks(b"\xff" * 93)
    assert len(chunks) == 3
    assert all(c < params.R for c in chunks)
    assert cp.bytes_to_chunks(b"") == []


def test_digest_field_conversions():
    x = 123456789
    assert cp.digest_to_field(cp.field_to_digest(x)) == x
    with pytest.raises(ValueError):
        cp.digest_to_field(cp.field_to_digest(params.R))
    with pytest.raises(ValueError):
        cp.digest_to_field(b"\x00" * 31)


# ---------------------------------------------------------------------------
# hashing
# ---------------------------------------------------------------------------


def test_sha256_profile_standard_vector():
    assert (
        cp.hash_bytes(b"", "sha256").hex()
        == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert cp.hash_bytes(b"abc", "sha256") == hashlib.sha256(b"abc").digest()


def test_hash_deterministic_across_calls():
    for profile in cp.HASH_PROFILES:
        assert cp.hash_bytes(b"payload", profile) == cp.hash_bytes(b"payload", profile)


def test_algebraic_hash_is_field_element():
    d = cp.hash_bytes(b"payload", "algebraic")
    assert len(d) == 32
    assert cp.digest_to_field(d) < params.R


def test_algebraic_hash_length_framing():
    # identical chunk streams with different byte lengths must not collide
    assert cp.hash_bytes(b"ab", "algebraic") != cp.hash_bytes(b"\x00ab", "algebraic")
    assert cp.hash_bytes(b"", "algebraic") != cp.hash_bytes(b"\x00" * 31, "algebraic")


def test_hash_collision_sweep():
    rng = random.Random(1)
    for profile in cp.HASH_PROFILES:
        inputs = {rng.randbytes(rng.randrange(1, 64)) for _ in range(10_000)}
        digests = {cp.hash_bytes(m, profile) for m in inputs}
        assert len(digests) == len(inputs)


def test_hash_pair_profiles():
    l = cp.hash_bytes(b"l")
    r = cp.hash_bytes(b"r")
    assert cp.hash_pair(l, r) != cp.hash_pair(r, l)
    ls = hashlib.sha256(b"l").digest()
    rs = hashlib.sha256(b"r").digest()
    assert cp.hash_pair(ls, rs, "sha256") == hashlib.sha256(ls + rs).digest()
    with pytest.raises(ValueError):
        cp.hash_pair(b"short", r)


def test_empty_leaf_digest_matches_definition():
    for profile in cp.HASH_PROFILES:
        assert cp.empty_leaf_digest(profile) == cp.hash_bytes(cp.encode(b"\x00"), profile)


def test_unknown_profile_rejected():
    with pytest.raises(ValueError):
        cp.hash_bytes(b"x", "md5")
    with pytest.raises(ValueError):
        cp.hash_pair(b"\x00" * 32, b"\x00" * 32, "md5")


# ---------------------------------------------------------------------------
# entropy
# ---------------------------------------------------------------------------


def test_mock_entropy_deterministic_and_consuming():
    a = cp.MockEntropy(b"seed")
    b = cp.MockEntropy(b"seed")
    first = a.random_bytes(48)
    assert first == b.random_bytes(48)
    assert a.random_bytes(48) != first
    assert cp.MockEntropy(b"other").random_bytes(48) != first


def test_mock_entropy_failure_injection():
    src = cp.MockEntropy(b"seed", fail_after=1)
    src.random_bytes(8)
    with pytest.raises(cp.EntropyError):
        src.random_bytes(8)


def test_external_entropy_adds_latency():
    import time

    src = cp.ExternalEntropy(cp.MockEntropy(b"seed"), latency_s=0.02)
    t0 = time.perf_counter()
    out = src.random_bytes(16)
    assert time.perf_counter() - t0 >= 0.02
    assert out == cp.MockEntropy(b"seed").random_bytes(16)


# ---------------------------------------------------------------------------
# KEM
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("profile", cp.KEM_PROFILES)
def test_kem_roundtrip(profile):
    pk, sk = cp.kem_keygen(256, profile)
    m = bytes(range(32))
    enc = cp.kem_encap(m, pk, profile)
    assert cp.kem_decap(enc, sk, profile) == m


@pytest.mark.parametrize("profile", cp.KEM_PROFILES)
def test_kem_encap_randomized(profile):
    pk, sk = cp.kem_keygen(256, profile)
    m = b"\x42" * 32
    c1 = cp.kem_encap(m, pk, profile)
    c2 = cp.kem_encap(m, pk, profile)
    assert c1.ciphertext != c2.ciphertext
    assert cp.kem_decap(c1, sk, profile) == cp.kem_decap(c2, sk, profile) == m


@pytest.mark.parametrize("profile", cp.KEM_PROFILES)
def test_kem_wrong_key_fails_loudly(profile):
    pk, _ = cp.kem_keygen(256, profile)
    _, sk2 = cp.kem_keygen(256, profile)
    enc = cp.kem_encap(b"secret material", pk, profile)
    with pytest.raises(cp.KemError):
        cp.kem_decap(enc, sk2, profile)


def test_kem_rsa_chunking():
    pk, sk = cp.kem_keygen(256, "rsa")
    m = random.Random(2).randbytes(1000)  # spans multiple OAEP blocks
    enc = cp.kem_encap(m, pk, "rsa")
    assert cp.kem_decap(enc, sk, "rsa") == m
    # swapping two blocks must break the sequence tags
    block = cp._RSA_BITS // 8
    ct = bytearray(enc.ciphertext)
    ct[4 : 4 + block], ct[4 + block : 4 + 2 * block] = (
        ct[4 + block : 4 + 2 * block],
        ct[4 : 4 + block],
    )
    with pytest.raises(cp.KemError):
        cp.kem_decap(cp.EncapsulatedKey(bytes(ct)), sk, "rsa")


def test_kem_size_limits():
    pk, _ = cp.kem_keygen(256, "dh")
    with pytest.raises(cp.KemError):
        cp.kem_encap(b"", pk, "dh")


# ---------------------------------------------------------------------------
# notes, commitments, nullifiers
# ---------------------------------------------------------------------------


def test_user_init_shapes():
    note = cp.user_init(256)
    assert len(note.rho) == 32
    assert len(note.pk) == 32 and len(note.sk) == 32
    m = b"\x01" * 32
    assert cp.kem_decap(cp.kem_encap(m, note.pk), note.sk) == m
    assert len(cp.user_init(128).rho) == 16
    assert len(cp.user_init(192).rho) == 24


def test_user_init_rejects_bad_lambda():
    with pytest.raises(ValueError):
        cp.user_init(64)


def test_user_init_uniqueness_sweep():
    seen = {cp.user_init(128).rho for _ in range(1000)}
    assert len(seen) == 1000


def test_user_init_entropy_failure_is_fatal():
    with pytest.raises(cp.EntropyError):
        cp.user_init(256, entropy=cp.MockEntropy(b"s", fail_after=0))


def test_derivations_deterministic_and_distinct():
    note = cp.user_init(256, entropy=cp.MockEntropy(b"fixed"))
    for profile in cp.HASH_PROFILES:
        c1 = cp.derive_commitment(note, profile)
        c2 = cp.derive_commitment(note, profile)
        n1 = cp.derive_nullifier(note, profile)
        assert c1 == c2
        assert c1.value != n1.value


def test_derivations_match_external_recomputation():
    rng = random.Random(3)
    for _ in range(20):
        note = cp.Note(rho=rng.randbytes(32), pk=rng.randbytes(32), sk=rng.randbytes(32))
        for profile in cp.HASH_PROFILES:
            assert cp.derive_commitment(note, profile).value == cp.hash_bytes(
                cp.encode(note.sk) + cp.encode(note.rho), profile
            )
            assert cp.derive_nullifier(note, profile).value == cp.hash_bytes(
                cp.encode(note.pk) + cp.encode(note.rho), profile
            )


def test_rho_variation_changes_commitment():
    rng = random.Random(4)
    for _ in range(100):
        pk, sk = rng.randbytes(32), rng.randbytes(32)
        a = cp.Note(rho=rng.randbytes(32), pk=pk, sk=sk)
        b = cp.Note(rho=rng.randbytes(32), pk=pk, sk=sk)
        assert cp.derive_commitment(a) != cp.derive_commitment(b)


def test_commitment_nullifier_unlinkability_by_equality():
    # no exposed field of C may equal any exposed field of N across 100 notes
    rng = random.Random(5)
    notes = [
        cp.Note(rho=rng.randbytes(32), pk=rng.randbytes(32), sk=rng.randbytes(32))
        for _ in range(100)
    ]
    commitments = {cp.derive_commitment(n).value for n in notes}
    nullifiers = {cp.derive_nullifier(n).value for n in notes}
    assert not commitments & nullifiers


def test_note_serialization_roundtrip():
    note = cp.user_init(256, entropy=cp.MockEntropy(b"ser"))
    blob = cp.note_to_bytes(note)
    assert blob[0] == 1
    assert cp.note_from_bytes(blob) == note


def test_note_serialization_rejects_garbage():
    note = cp.user_init(256, entropy=cp.MockEntropy(b"ser2"))
    blob = cp.note_to_bytes(note)
    with pytest.raises(ValueError):
        cp.note_from_bytes(b"")
    with pytest.raises(ValueError):
        cp.note_from_bytes(b"\x09" + blob[1:])
    with pytest.raises(ValueError):
        cp.note_from_bytes(blob[:-3])
    with pytest.raises(ValueError):
        cp.note_from_bytes(blob[:1])


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


def test_certificate_issue_and_verify():
    ca_sk, ca_vk = cp.signature_keygen()
    user_sk, user_vk = cp.signature_keygen()
    cert = cp.issue_certificate(ca_sk, "user-1", user_vk)
    msg = cp.hash_bytes(b"commitment")
    sig = cp.sign(msg, user_sk)
    assert cp.verify_sign(cert, msg, sig, ca_vk)
    assert not cp.verify_sign(cert, cp.hash_bytes(b"other"), sig, ca_vk)


def test_certificate_wrong_signer_rejected():
    ca_sk, ca_vk = cp.signature_keygen()
    _, user_vk = cp.signature_keygen()
    rogue_sk, _ = cp.signature_keygen()
    cert = cp.issue_certificate(ca_sk, "user-1", user_vk)
    msg = b"m" * 32
    assert not cp.verify_sign(cert, msg, cp.sign(msg, rogue_sk), ca_vk)


def test_certificate_corrupted_issuer_signature():
    ca_sk, ca_vk = cp.signature_keygen()
    user_sk, user_vk = cp.signature_keygen()
    cert = cp.issue_certificate(ca_sk, "user-1", user_vk)
    bad_sig = bytes([cert.issuer_signature[0] ^ 1]) + cert.issuer_signature[1:]
    bad = cp.Certificate(cert.subject_id, cert.subject_verify_key, bad_sig)
    msg = b"m" * 32
    assert not cp.verify_sign(bad, msg, cp.sign(msg, user_sk), ca_vk)


def test_certificate_single_byte_mutations_flip_verdict():
    ca_sk, ca_vk = cp.signature_keygen()
    user_sk, user_vk = cp.signature_keygen()
    cert = cp.issue_certificate(ca_sk, "user-7", user_vk)
    msg = cp.MockEntropy(b"m").random_bytes(32)
    sig = cp.sign(msg, user_sk)
    for pos in (0, 15, 31):
        mut_msg = bytes([msg[pos] ^ 0x80 if p == pos else msg[p] for p in range(len(msg))])
        assert not cp.verify_sign(cert, mut_msg, sig, ca_vk)
        mut_sig = bytes([sig[pos] ^ 0x80 if p == pos else sig[p] for p in range(len(sig))])
        assert not cp.verify_sign(cert, msg, mut_sig, ca_vk)


def test_certificate_malformed_raises_not_false():
    ca_sk, ca_vk = cp.signature_keygen()
    _, user_vk = cp.signature_keygen()
    cert = cp.issue_certificate(ca_sk, "user-1", user_vk)
    bad = cp.Certificate("user-1", b"\x00" * 7, cert.issuer_signature)
    with pytest.raises(cp.CertificateError):
        cp.verify_sign(bad, b"m", b"s" * 64, ca_vk)


def test_certificate_serialization():
    ca_sk, _ = cp.signature_keygen()
    _, user_vk = cp.signature_keygen()
    cert = cp.issue_certificate(ca_sk, "alice@example", user_vk)
    blob = cp.certificate_to_bytes(cert)
    assert cp.certificate_from_bytes(blob) == cert
    with pytest.raises(cp.CertificateError):
        cp.certificate_from_bytes(blob[:-1])
    with pytest.raises(cp.CertificateError):
        cp.certificate_from_bytes(b"")
    with pytest.raises(cp.CertificateError):
        cp.certificate_from_bytes(b"\x02" + blob[1:])


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def test_config_defaults_and_validation():
    cfg = cp.ProtocolConfig()
    assert cfg.hash_profile == "algebraic" and cfg.kem_profile == "dh" and cfg.lam == 256
    with pytest.raises(ValueError):
        cp.ProtocolConfig(hash_profile="blake3")
    with pytest.raises(ValueError):
        cp.ProtocolConfig(lam=100)


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "veilkey.json"
    cfg = cp.ProtocolConfig(hash_profile="sha256", kem_profile="rsa", lam=192)
    cp.dump_config(cfg, path)
    assert cp.load_config(path) == cfg
    path.write_text('{"lambda": 128, "extra": 1}')
    with pytest.raises(ValueError):
        cp.load_config(path)


@settings(max_examples=30)
@given(st.binary(max_size=120), st.binary(max_size=120))
def test_hash_equality_structure(a, b):
    for profile in cp.HASH_PROFILES:
        da = cp.hash_bytes(a, profile)
        db = cp.hash_bytes(b, profile)
        assert (da == db) == (a == b)
