"""Shared primitives: canonical encodings, the protocol hash, notes,
commitment/nullifier derivation, the KEM, certificates, and entropy sources.

Two hash profiles exist and apply globally to a deployment: `sha256` for
bit parity with conventional tooling, and `algebraic` (default), a
width-3 permutation sponge over the proving field so the same function is
cheap inside an arithmetic circuit.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import time
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed25519, padding, rsa, x25519
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .backends import core, params

DIGEST_SIZE = 32
CHUNK_BYTES = 31  # floor(254 / 8): a 31-byte chunk always fits in Fr

HASH_PROFILES = ("algebraic", "sha256")
KEM_PROFILES = ("dh", "rsa")
LAMBDAS = (128, 192, 256)

# sponge domain tags; the high limb separates byte-stream hashing from
# digest-pair compression, the low limb carries the framed length
_TAG_BYTES = 2 << 64
_TAG_PAIR = (1 << 64) | (2 * DIGEST_SIZE)

_RSA_BITS = 2048
_RSA_CHUNK = 186  # 256 - 2*32 - 2 OAEP capacity, minus the 4-byte sequence tag


class EntropyError(Exception):
    """Entropy source failed; callers must not construct partial secrets."""


class KemError(Exception):
    pass


class CertificateError(Exception):
    """Certificate bytes could not be parsed; distinct from a false verdict."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolConfig:
    hash_profile: str = "algebraic"
    kem_profile: str = "dh"
    lam: int = 256

    def __post_init__(self):
        if self.hash_profile not in HASH_PROFILES:
            raise ValueError(f"unknown hash_profile {self.hash_profile!r}")
        if self.kem_profile not in KEM_PROFILES:
            raise ValueError(f"unknown kem_profile {self.kem_profile!r}")
        if self.lam not in LAMBDAS:
            raise ValueError(f"unsupported lambda {self.lam}")


def load_config(path) -> ProtocolConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {"hash_profile", "kem_profile", "lambda"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    if "hash_profile" in raw:
        kwargs["hash_profile"] = raw["hash_profile"]
    if "kem_profile" in raw:
        kwargs["kem_profile"] = raw["kem_profile"]
    if "lambda" in raw:
        kwargs["lam"] = raw["lambda"]
    return ProtocolConfig(**kwargs)


def dump_config(config: ProtocolConfig, path) -> None:
    data = {
        "hash_profile": config.hash_profile,
        "kem_profile": config.kem_profile,
        "lambda": config.lam,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Canonical encoding
# ---------------------------------------------------------------------------


def encode(data: bytes) -> bytes:
    """Length-prefixed big-endian encoding.

    The length occupies one 31-byte chunk and the payload is left-padded
    with zeros to a whole number of 31-byte chunks, so concatenations of
    encoded atoms never straddle chunk boundaries and the decomposition
    into field elements is identical in native code and in the circuit.
    """
    if len(data) >= 1 << 248:
        raise ValueError("data too long to encode")
    padded_len = -len(data) % CHUNK_BYTES + len(data)
    return len(data).to_bytes(CHUNK_BYTES, "big") + data.rjust(padded_len, b"\x00")


def bytes_to_chunks(data: bytes) -> list[int]:
    """Left-pad to a 31-byte multiple and split into big-endian field chunks."""
    padded = data.rjust(-len(data) % CHUNK_BYTES + len(data), b"\x00")
    return [
        int.from_bytes(padded[i : i + CHUNK_BYTES], "big")
        for i in range(0, len(padded), CHUNK_BYTES)
    ]


def field_to_digest(x: int) -> bytes:
    return x.to_bytes(DIGEST_SIZE, "big")


def digest_to_field(digest: bytes) -> int:
    if len(digest) != DIGEST_SIZE:
        raise ValueError(f"digest must be {DIGEST_SIZE} bytes")
    x = int.from_bytes(digest, "big")
    if x >= params.R:
        raise ValueError("digest is not a canonical field element")
    return x


# ---------------------------------------------------------------------------
# Hashing
# ---------------------------------------------------------------------------


def sponge_absorb(chunks: list[int], tag: int) -> int:
    """Absorb field chunks two per permutation into a (0, 0, tag) state.

    This is the exact schedule the circuit gadget replays, so any change
    here is a consensus change.
    """
    s0, s1, s2 = 0, 0, tag % params.R
    if not chunks:
        s0, s1, s2 = core.poseidon_permute(s0, s1, s2)
        return s0
    for i in range(0, len(chunks) - 1, 2):
        s0, s1, s2 = core.poseidon_permute(
            (s0 + chunks[i]) % params.R, (s1 + chunks[i + 1]) % params.R, s2
        )
    if len(chunks) % 2:
        s0, s1, s2 = core.poseidon_permute((s0 + chunks[-1]) % params.R, s1, s2)
    return s0


def hash_bytes(data: bytes, profile: str = "algebraic") -> bytes:
    if profile == "sha256":
        return hashlib.sha256(data).digest()
    if profile == "algebraic":
        tag = _TAG_BYTES | len(data)
        return field_to_digest(sponge_absorb(bytes_to_chunks(data), tag))
    raise ValueError(f"unknown hash profile {profile!r}")


def hash_pair(left: bytes, right: bytes, profile: str = "algebraic") -> bytes:
    """Two-digest compression used for interior tree nodes."""
    if len(left) != DIGEST_SIZE or len(right) != DIGEST_SIZE:
        raise ValueError("tree nodes must be digests")
    if profile == "sha256":
        return hashlib.sha256(left + right).digest()
    if profile == "algebraic":
        s0, _, _ = core.poseidon_permute(
            digest_to_field(left), digest_to_field(right), _TAG_PAIR
        )
        return field_to_digest(s0)
    raise ValueError(f"unknown hash profile {profile!r}")


def empty_leaf_digest(profile: str = "algebraic") -> bytes:
    """Digest marking an unoccupied tree slot."""
    return hash_bytes(encode(b"\x00"), profile)


# ---------------------------------------------------------------------------
# Entropy sources
# ---------------------------------------------------------------------------


class OsEntropy:
    """Operating system CSPRNG."""

    def random_bytes(self, n: int) -> bytes:
        return os.urandom(n)


class MockEntropy:
    """Deterministic, consuming source for tests and seeded benchmarks.

    SHA-256 in counter mode with a ratchet per call; an optional failure
    point exercises the fatal-error paths.
    """

    def __init__(self, seed: bytes, fail_after: int | None = None):
        self._state = hashlib.sha256(b"veilkey/entropy/" + seed).digest()
        self._calls = 0
        self._fail_after = fail_after

    def random_bytes(self, n: int) -> bytes:
        if self._fail_after is not None and self._calls >= self._fail_after:
            raise EntropyError("mock entropy source exhausted")
        self._calls += 1
        out = b""
        counter = 0
        while len(out) < n:
            out += hashlib.sha256(self._state + counter.to_bytes(8, "big")).digest()
            counter += 1
        self._state = hashlib.sha256(self._state + b"ratchet").digest()
        return out[:n]


class ExternalEntropy:
    """Wraps another source behind an injected round-trip latency."""

    def __init__(self, inner=None, latency_s: float = 0.002):
        self._inner = inner if inner is not None else OsEntropy()
        self._latency_s = latency_s

    def random_bytes(self, n: int) -> bytes:
        time.sleep(self._latency_s)
        return self._inner.random_bytes(n)


# ---------------------------------------------------------------------------
# KEM
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncapsulatedKey:
    ciphertext: bytes


_HKDF_INFO = b"veilkey/kem/dh/v1"


def kem_keygen(lam: int = 256, profile: str = "dh", entropy=None) -> tuple[bytes, bytes]:
    """Returns (pk, sk) as bytes. The dh profile uses X25519 with raw keys;
    the rsa profile uses RSA-OAEP with DER keys."""
    if lam not in LAMBDAS:
        raise ValueError(f"unsupported lambda {lam}")
    if profile == "dh":
        if entropy is not None:
            sk = x25519.X25519PrivateKey.from_private_bytes(entropy.random_bytes(32))
        else:
            sk = x25519.X25519PrivateKey.generate()
        pk = sk.public_key()
        return (
            pk.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw),
            sk.private_bytes(
                serialization.Encoding.Raw,
                serialization.PrivateFormat.Raw,
                serialization.NoEncryption(),
            ),
        )
    if profile == "rsa":
        key = rsa.generate_private_key(public_exponent=65537, key_size=_RSA_BITS)
        return (
            key.public_key().public_bytes(
                serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
            ),
            key.private_bytes(
                serialization.Encoding.DER,
                serialization.PrivateFormat.PKCS8,
                serialization.NoEncryption(),
            ),
        )
    raise ValueError(f"unknown kem profile {profile!r}")


def _dh_seal_key(shared: bytes, eph_pk: bytes, pk: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(), length=32, salt=eph_pk + pk, info=_HKDF_INFO
    ).derive(shared)


def kem_encap(ikm: bytes, pk: bytes, profile: str = "dh") -> EncapsulatedKey:
    if not 1 <= len(ikm) <= 1 << 20:
        raise KemError("input key material size out of range")
    if profile == "dh":
        eph = x25519.X25519PrivateKey.generate()
        eph_pk = eph.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        try:
            shared = eph.exchange(x25519.X25519PublicKey.from_public_bytes(pk))
        except ValueError as exc:
            raise KemError(f"bad public key: {exc}") from exc
        key = _dh_seal_key(shared, eph_pk, pk)
        sealed = AESGCM(key).encrypt(b"\x00" * 12, ikm, b"veilkey/kem")
        return EncapsulatedKey(eph_pk + sealed)
    if profile == "rsa":
        try:
            pub = serialization.load_der_public_key(pk)
        except ValueError as exc:
            raise KemError(f"bad public key: {exc}") from exc
        oaep = padding.OAEP(
            mgf=padding.MGF1(algorithm=hashes.SHA256()),
            algorithm=hashes.SHA256(),
            label=None,
        )
        blocks = []
        # sequence tag per chunk so blocks cannot be dropped or reordered
        for seq, off in enumerate(range(0, len(ikm), _RSA_CHUNK)):
            plain = seq.to_bytes(4, "big") + ikm[off : off + _RSA_CHUNK]
            blocks.append(pub.encrypt(plain, oaep))
        return EncapsulatedKey(len(blocks).to_bytes(4, "big") + b"".join(blocks))
    raise ValueError(f"unknown kem profile {profile!r}")


def kem_decap(enc: EncapsulatedKey, sk: bytes, profile: str = "dh") -> bytes:
    ct = enc.ciphertext
    if profile == "dh":
        if len(ct) < 32 + 16:
            raise KemError("ciphertext too short")
        try:
            priv = x25519.X25519PrivateKey.from_private_bytes(sk)
            shared = priv.exchange(x25519.X25519PublicKey.from_public_bytes(ct[:32]))
            pk = priv.public_key().public_bytes(
                serialization.Encoding.Raw, serialization.PublicFormat.Raw
            )
            key = _dh_seal_key(shared, ct[:32], pk)
            return AESGCM(key).decrypt(b"\x00" * 12, ct[32:], b"veilkey/kem")
        except (ValueError, InvalidTag) as exc:
            raise KemError("decapsulation failed") from exc
    if profile == "rsa":
        if len(ct) < 4:
            raise KemError("ciphertext too short")
        n_blocks = int.from_bytes(ct[:4], "big")
        body = ct[4:]
        if len(body) != n_blocks * (_RSA_BITS // 8):
            raise KemError("ciphertext length mismatch")
        try:
            priv = serialization.load_der_private_key(sk, password=None)
        except ValueError as exc:
            raise KemError(f"bad secret key: {exc}") from exc
        oaep = padding.OAEP(
            mgf=padding.MGF1(algorithm=hashes.SHA256()),
            algorithm=hashes.SHA256(),
            label=None,
        )
        out = b""
        for seq in range(n_blocks):
            block = body[seq * (_RSA_BITS // 8) : (seq + 1) * (_RSA_BITS // 8)]
            try:
                plain = priv.decrypt(block, oaep)
            except ValueError as exc:
                raise KemError("decapsulation failed") from exc
            if int.from_bytes(plain[:4], "big") != seq:
                raise KemError("chunk sequence mismatch")
            out += plain[4:]
        return out
    raise ValueError(f"unknown kem profile {profile!r}")


# ---------------------------------------------------------------------------
# Notes, commitments, nullifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Note:
    rho: bytes
    pk: bytes
    sk: bytes


@dataclass(frozen=True)
class Commitment:
    value: bytes


@dataclass(frozen=True)
class Nullifier:
    value: bytes


def user_init(lam: int = 256, kem_profile: str = "dh", entropy=None) -> Note:
    """Fresh note: uniform rho of lambda bits plus a KEM key pair."""
    if lam not in LAMBDAS:
        raise ValueError(f"unsupported lambda {lam}")
    source = entropy if entropy is not None else OsEntropy()
    rho = source.random_bytes(lam // 8)
    if len(rho) != lam // 8:
        raise EntropyError("entropy source returned short read")
    pk, sk = kem_keygen(lam, kem_profile, entropy=entropy)
    return Note(rho=rho, pk=pk, sk=sk)


def derive_commitment(note: Note, hash_profile: str = "algebraic") -> Commitment:
    return Commitment(hash_bytes(encode(note.sk) + encode(note.rho), hash_profile))


def derive_nullifier(note: Note, hash_profile: str = "algebraic") -> Nullifier:
    return Nullifier(hash_bytes(encode(note.pk) + encode(note.rho), hash_profile))


_NOTE_VERSION = 1
_NOTE_TAGS = {1: "rho", 2: "pk", 3: "sk"}


def note_to_bytes(note: Note) -> bytes:
    out = [_NOTE_VERSION.to_bytes(1, "big")]
    for tag, field in sorted(_NOTE_TAGS.items()):
        value = getattr(note, field)
        out.append(tag.to_bytes(1, "big") + len(value).to_bytes(4, "big") + value)
    return b"".join(out)


def note_from_bytes(data: bytes) -> Note:
    if not data or data[0] != _NOTE_VERSION:
        raise ValueError("unsupported note version")
    fields = {}
    pos = 1
    while pos < len(data):
        if pos + 5 > len(data):
            raise ValueError("truncated note field header")
        tag = data[pos]
        length = int.from_bytes(data[pos + 1 : pos + 5], "big")
        pos += 5
        if pos + length > len(data):
            raise ValueError("truncated note field value")
        if tag not in _NOTE_TAGS:
            raise ValueError(f"unknown note field tag {tag}")
        fields[_NOTE_TAGS[tag]] = data[pos : pos + length]
        pos += length
    missing = set(_NOTE_TAGS.values()) - set(fields)
    if missing:
        raise ValueError(f"note missing fields: {sorted(missing)}")
    return Note(**fields)


# ---------------------------------------------------------------------------
# Certificates: a one-level test CA over Ed25519
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    subject_id: str
    subject_verify_key: bytes
    issuer_signature: bytes


_CERT_VERSION = 1


def signature_keygen(entropy=None) -> tuple[bytes, bytes]:
    """Returns (signing key, verification key) as raw Ed25519 bytes."""
    if entropy is not None:
        sk = ed25519.Ed25519PrivateKey.from_private_bytes(entropy.random_bytes(32))
    else:
        sk = ed25519.Ed25519PrivateKey.generate()
    return (
        sk.private_bytes(
            serialization.Encoding.Raw,
            serialization.PrivateFormat.Raw,
            serialization.NoEncryption(),
        ),
        sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        ),
    )


def _cert_signing_payload(subject_id: str, subject_verify_key: bytes) -> bytes:
    sid = subject_id.encode("utf-8")
    return len(sid).to_bytes(4, "big") + sid + subject_verify_key


def issue_certificate(ca_sign_key: bytes, subject_id: str, subject_verify_key: bytes) -> Certificate:
    ca = ed25519.Ed25519PrivateKey.from_private_bytes(ca_sign_key)
    sig = ca.sign(_cert_signing_payload(subject_id, subject_verify_key))
    return Certificate(subject_id, subject_verify_key, sig)


def sign(message: bytes, ck: bytes) -> bytes:
    return ed25519.Ed25519PrivateKey.from_private_bytes(ck).sign(message)


def verify_sign(cert: Certificate, message: bytes, signature: bytes, ca_verify_key: bytes) -> bool:
    """True iff the cert chains to the CA and the signature verifies under
    the cert's subject key. Malformed inputs raise CertificateError."""
    if len(cert.subject_verify_key) != 32:
        raise CertificateError("subject verification key must be 32 bytes")
    try:
        ca = ed25519.Ed25519PublicKey.from_public_bytes(ca_verify_key)
        subject = ed25519.Ed25519PublicKey.from_public_bytes(cert.subject_verify_key)
    except ValueError as exc:
        raise CertificateError(f"bad key encoding: {exc}") from exc
    try:
        ca.verify(cert.issuer_signature, _cert_signing_payload(cert.subject_id, cert.subject_verify_key))
        subject.verify(signature, message)
    except InvalidSignature:
        return False
    return True


def certificate_to_bytes(cert: Certificate) -> bytes:
    sid = cert.subject_id.encode("utf-8")
    return (
        _CERT_VERSION.to_bytes(1, "big")
        + len(sid).to_bytes(4, "big")
        + sid
        + len(cert.subject_verify_key).to_bytes(4, "big")
        + cert.subject_verify_key
        + len(cert.issuer_signature).to_bytes(4, "big")
        + cert.issuer_signature
    )


def certificate_from_bytes(data: bytes) -> Certificate:
    try:
        if data[0] != _CERT_VERSION:
            raise CertificateError("unsupported certificate version")
        pos = 1
        parts = []
        for _ in range(3):
            length = int.from_bytes(data[pos : pos + 4], "big")
            if pos + 4 + length > len(data):
                raise CertificateError("truncated certificate")
            parts.append(data[pos + 4 : pos + 4 + length])
            pos += 4 + length
        if pos != len(data):
            raise CertificateError("trailing bytes after certificate")
        return Certificate(parts[0].decode("utf-8"), parts[1], parts[2])
    except (IndexError, UnicodeDecodeError) as exc:
        raise CertificateError(f"malformed certificate: {exc}") from exc


def constant_time_equal(a: bytes, b: bytes) -> bool:
    return hmac.compare_digest(a, b)
