"""Registrar tests: setup, the registration step, persistence, HTTP."""

import threading

import pytest
from fastapi.testclient import TestClient

from veilkey import auth_server as asrv
from veilkey import core_primitives as cp
from veilkey import merkle


@pytest.fixture()
def ca_keys():
    return cp.signature_keygen(cp.MockEntropy(b"ca"))


def make_server(tmp_path, ca_vk, depth=3, **kw):
    return asrv.AuthServer.server_setup(
        tmp_path / "state", depth, ca_verify_key=ca_vk,
        backend="mock", seed=b"as-tests", **kw,
    )


def enroll(subject: str, ca_sk, entropy=None):
    """A user with a certificate: (note, commitment, cert, signing key)."""
    entropy = entropy or cp.MockEntropy(subject.encode())
    note = cp.user_init(256, "dh", entropy)
    commitment = cp.derive_commitment(note, "algebraic").value
    ck, vk = cp.signature_keygen(entropy)
    cert = cp.issue_certificate(ca_sk, subject, vk)
    return note, commitment, cert, ck


# ---------------------------------------------------------------------------
# Setup lifecycle
# ---------------------------------------------------------------------------


def test_setup_creates_fresh_state(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk, depth=4)
    assert server.registered_count == 0
    assert server.fetch_old_roots() == []
    assert server.current_root() == merkle.empty_tree(4, "algebraic").get_root()
    for name in ("config.json", "crs.json", "crs.vk", "tree.bin", "old_roots.bin", "audit.jsonl"):
        assert (tmp_path / "state" / name).exists()


def test_setup_refuses_to_clobber(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    make_server(tmp_path, ca_vk)
    with pytest.raises(asrv.StateExistsError):
        make_server(tmp_path, ca_vk)
    fresh = asrv.AuthServer.server_setup(
        tmp_path / "state", 3, ca_verify_key=ca_vk, backend="mock",
        seed=b"as-tests", reset=True,
    )
    assert fresh.registered_count == 0


def test_setup_requires_ca_key(tmp_path):
    with pytest.raises(ValueError):
        asrv.AuthServer.server_setup(tmp_path / "state", 3, backend="mock")


# ---------------------------------------------------------------------------
# register
# ---------------------------------------------------------------------------


def test_register_happy_path_and_root_history(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk)
    oracle = merkle.empty_tree(3, "algebraic")
    roots_before = []
    for i in range(4):
        note, commitment, cert, ck = enroll(f"user-{i}", ca_sk)
        roots_before.append(server.current_root())
        result = server.register(cert, commitment, cp.sign(commitment, ck))
        assert result.accepted and result.reason is None
        oracle.add_leaf(commitment)
        assert result.new_root == oracle.get_root()
        assert server.registered_count == i + 1
    # old_roots[k] is the root immediately before the (k+1)-th registration
    assert server.fetch_old_roots() == roots_before
    audit = server.fetch_audit_log()
    assert len(audit) == server.registered_count
    assert [a.subject_id for a in audit] == [f"user-{i}" for i in range(4)]
    assert all(a.seq == i for i, a in enumerate(audit))


def test_register_rejects_wrong_signature_and_keeps_state(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk)
    note, commitment, cert, ck = enroll("honest", ca_sk)
    server.register(cert, commitment, cp.sign(commitment, ck))

    state_dir = tmp_path / "state"
    before = {p.name: p.read_bytes() for p in state_dir.iterdir() if p.is_file()}

    note2, commitment2, cert2, ck2 = enroll("attacker", ca_sk)
    sig_over_other = cp.sign(commitment, ck2)  # signs a different commitment
    result = server.register(cert2, commitment2, sig_over_other)
    assert not result.accepted
    assert result.reason == asrv.REASON_SIGNATURE_INVALID
    # rejection purity: persisted state is byte-identical
    after = {p.name: p.read_bytes() for p in state_dir.iterdir() if p.is_file()}
    assert before == after
    assert server.registered_count == 1


def test_register_rejects_foreign_ca(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk)
    rogue_sk, rogue_vk = cp.signature_keygen(cp.MockEntropy(b"rogue"))
    entropy = cp.MockEntropy(b"victim")
    note = cp.user_init(256, "dh", entropy)
    commitment = cp.derive_commitment(note, "algebraic").value
    ck, vk = cp.signature_keygen(entropy)
    cert = cp.issue_certificate(rogue_sk, "victim", vk)  # wrong issuer
    result = server.register(cert, commitment, cp.sign(commitment, ck))
    assert not result.accepted and result.reason == asrv.REASON_SIGNATURE_INVALID


def test_register_rejects_malformed_inputs(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk)
    note, commitment, cert, ck = enroll("u", ca_sk)
    garbage_cert = server.register(b"\x07nonsense", commitment, cp.sign(commitment, ck))
    assert garbage_cert.reason == asrv.REASON_CERT_INVALID
    short = server.register(cert, b"\x01\x02", cp.sign(b"\x01\x02", ck))
    assert short.reason == asrv.REASON_COMMITMENT_MALFORMED


def test_register_capacity_error_is_distinct(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk, depth=2)
    for i in range(4):
        note, commitment, cert, ck = enroll(f"cap-{i}", ca_sk)
        assert server.register(cert, commitment, cp.sign(commitment, ck)).accepted
    note, commitment, cert, ck = enroll("cap-overflow", ca_sk)
    with pytest.raises(merkle.CapacityError):
        server.register(cert, commitment, cp.sign(commitment, ck))
    assert server.registered_count == 4


def test_register_duplicate_commitment_error(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk)
    note, commitment, cert, ck = enroll("dup", ca_sk)
    assert server.register(cert, commitment, cp.sign(commitment, ck)).accepted
    with pytest.raises(merkle.DuplicateLeafError):
        server.register(cert, commitment, cp.sign(commitment, ck))


def test_one_certificate_may_register_many_commitments(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk)
    entropy = cp.MockEntropy(b"multi")
    ck, vk = cp.signature_keygen(entropy)
    cert = cp.issue_certificate(ca_sk, "multi", vk)
    for _ in range(3):
        note = cp.user_init(256, "dh", entropy)
        commitment = cp.derive_commitment(note, "algebraic").value
        assert server.register(cert, commitment, cp.sign(commitment, ck)).accepted
    assert server.registered_count == 3
    assert all(a.subject_id == "multi" for a in server.fetch_audit_log())


def test_old_root_retention_cap(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk, depth=4, old_root_retention=3)
    roots = []
    for i in range(6):
        note, commitment, cert, ck = enroll(f"ret-{i}", ca_sk)
        roots.append(server.current_root())
        server.register(cert, commitment, cp.sign(commitment, ck))
    assert server.fetch_old_roots() == roots[-3:]


def test_restart_preserves_everything(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk)
    for i in range(3):
        note, commitment, cert, ck = enroll(f"persist-{i}", ca_sk)
        server.register(cert, commitment, cp.sign(commitment, ck))
    reloaded = asrv.AuthServer.load(tmp_path / "state")
    assert reloaded.current_root() == server.current_root()
    assert reloaded.fetch_old_roots() == server.fetch_old_roots()
    assert reloaded.fetch_audit_log() == server.fetch_audit_log()
    assert reloaded.crs.fingerprint == server.crs.fingerprint
    note, commitment, cert, ck = enroll("persist-late", ca_sk)
    assert reloaded.register(cert, commitment, cp.sign(commitment, ck)).accepted
    assert reloaded.registered_count == 4


# ---------------------------------------------------------------------------
# HTTP surface
# ---------------------------------------------------------------------------


@pytest.fixture()
def http_stack(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk, depth=4)
    return server, TestClient(asrv.build_app(server)), ca_sk


def test_http_register_and_reads(http_stack):
    server, client, ca_sk = http_stack
    note, commitment, cert, ck = enroll("http-user", ca_sk)
    body = {
        "certificate": cp.certificate_to_bytes(cert).hex(),
        "commitment": commitment.hex(),
        "signature": cp.sign(commitment, ck).hex(),
    }
    reply = client.post("/v1/register", json=body)
    assert reply.status_code == 200
    payload = reply.json()
    assert payload["accepted"] is True
    assert payload["new_root"] == server.current_root().hex()

    tree = client.get("/v1/tree").json()
    assert tree["depth"] == 4 and tree["next_free"] == 1
    snapshot = merkle.MerkleTree.from_bytes(bytes.fromhex(tree["snapshot"]), "algebraic")
    assert snapshot.get_root().hex() == tree["root"]
    assert snapshot.get_index_of(commitment) == 0

    roots = client.get("/v1/old-roots").json()["old_roots"]
    assert [bytes.fromhex(r) for r in roots] == server.fetch_old_roots()

    vk = client.get("/v1/vk").json()
    assert vk["backend"] == "mock" and vk["depth"] == 4
    assert bytes.fromhex(vk["vk"]) == server.fetch_crs_verification_key()

    crs = client.get("/v1/crs").json()
    assert crs["fingerprint"] == server.crs.fingerprint.hex()
    assert len(crs["pk"]) > 0

    # duplicate over HTTP maps to a conflict with the duplicate reason
    conflict = client.post("/v1/register", json=body)
    assert conflict.status_code == 409
    assert conflict.json()["detail"] == asrv.REASON_DUPLICATE


def test_http_rejects_bad_hex(http_stack):
    _, client, _ = http_stack
    reply = client.post(
        "/v1/register",
        json={"certificate": "zz", "commitment": "00", "signature": "00"},
    )
    assert reply.status_code == 400


def test_http_auth_failure_reports_reason(http_stack):
    server, client, ca_sk = http_stack
    note, commitment, cert, ck = enroll("bad-sig", ca_sk)
    body = {
        "certificate": cp.certificate_to_bytes(cert).hex(),
        "commitment": commitment.hex(),
        "signature": (b"\x00" * 64).hex(),
    }
    reply = client.post("/v1/register", json=body)
    assert reply.status_code == 200
    assert reply.json() == {
        "accepted": False, "new_root": None, "reason": asrv.REASON_SIGNATURE_INVALID,
    }


def test_http_nullifier_proxy_empty_before_any_delivery(http_stack):
    _, client, _ = http_stack
    assert client.get("/v1/nullifiers").json() == {"nullifiers": []}


def test_concurrent_fetch_never_sees_torn_state(tmp_path, ca_keys):
    ca_sk, ca_vk = ca_keys
    server = make_server(tmp_path, ca_vk, depth=5)
    seen_roots = []
    stop = threading.Event()
    failures = []

    def hammer():
        while not stop.is_set():
            blob = server.fetch_tree()
            try:
                tree = merkle.MerkleTree.from_bytes(blob, "algebraic")
            except ValueError as exc:
                failures.append(str(exc))
                return
            seen_roots.append(tree.get_root())

    readers = [threading.Thread(target=hammer, daemon=True) for _ in range(4)]
    for r in readers:
        r.start()
    for i in range(12):
        note, commitment, cert, ck = enroll(f"stress-{i}", ca_sk)
        server.register(cert, commitment, cp.sign(commitment, ck))
    stop.set()
    for r in readers:
        r.join(timeout=10)
    assert not failures
    valid = set(server.fetch_old_roots()) | {server.current_root()}
    assert seen_roots and set(seen_roots) <= valid
