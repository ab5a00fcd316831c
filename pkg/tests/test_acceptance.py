"""Acceptance gate: ten protocol-level properties at pinned tolerances.

Each test prints exactly one pass/fail line for its criterion. The suite
builds real deployments (groth16 proofs, HTTP registrar, TCP tunnel) and
takes a few minutes; run it with the rest of the tests, not in a loop.
"""

import math
import time
from collections import deque
from types import SimpleNamespace

import pytest
from fastapi.testclient import TestClient

from veilkey import auth_server as asrv
from veilkey import bench_harness as bh
from veilkey import client, merkle, nfc_tunnel, pvs, zkp
from veilkey import core_primitives as cp
from veilkey.backends import params


@pytest.fixture
def report(capsys):
    """One visible pass/fail line per criterion, through pytest's capture."""

    def _report(number: int, name: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:02d} {'PASS' if ok else 'FAIL'} {name}: {detail}"
        with capsys.disabled():
            print(line)
        assert ok, line

    return _report


# ---------------------------------------------------------------------------
# criteria 1 and 2 share one full deployment
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def workflow(tmp_path_factory):
    started = time.monotonic()
    base = tmp_path_factory.mktemp("e2e")
    ca_sk, ca_vk = cp.signature_keygen(cp.MockEntropy(b"acceptance-ca"))
    server = asrv.AuthServer.server_setup(
        base / "as", depth=8, ca_verify_key=ca_vk, backend="groth16",
        seed=b"acceptance-as",
    )
    http = TestClient(asrv.build_app(server))
    store = client.UserStore(base / "wallet", "acceptance", create=True, kdf_cost=1 << 10)
    registrar = client.Client(store, as_url="http://testserver", http_client=http)

    note_ids = []
    for i in range(10):
        note_id, _ = registrar.init_note()
        ck, vkey = cp.signature_keygen(cp.MockEntropy(b"acceptance-user-%d" % i))
        cert = cp.certificate_to_bytes(cp.issue_certificate(ca_sk, f"user-{i}", vkey))
        registrar.register(note_id, cert, ck)
        note_ids.append(note_id)

    vendor = pvs.Pvs.load(server.data_dir, entropy=cp.MockEntropy(b"acceptance-pool"))
    tunnel = pvs.PvsTunnelServer(vendor)
    tunnel.start()
    user = client.Client(
        store, as_url="http://testserver", pvs_addr=tunnel.address, http_client=http
    )

    envelopes, keys = [], []
    for note_id in note_ids:
        envelope = user.prove(note_id, t=64)
        envelopes.append(envelope)
        keys.append(user.request_key(envelope))

    oracle = cp.MockEntropy(b"acceptance-pool")
    expected = [oracle.random_bytes(64) for _ in range(10)]
    yield SimpleNamespace(
        store=store, vendor=vendor, envelopes=envelopes, keys=keys,
        expected=expected, elapsed=time.monotonic() - started,
    )
    tunnel.stop()


def test_criterion_01_end_to_end_happy_path(workflow, report):
    exact = sum(
        1 for key, want in zip(workflow.keys, workflow.expected) if key == want
    )
    spent = sum(1 for row in workflow.store.notes.values() if row["status"] == "spent")
    ok = (
        exact == 10
        and spent == 10
        and all(len(key) == 64 for key in workflow.keys)
        and workflow.elapsed < 600
    )
    report(
        1, "end-to-end happy path", ok,
        f"10 users registered, {exact}/10 delivered keys byte-exact vs seeded "
        f"oracle at t=64 over the tunnel, {workflow.elapsed:.1f}s < 600s",
    )


def test_criterion_02_replay_resistance(workflow, report):
    statement_bytes, proof_bytes, _, _ = nfc_tunnel.decode_request_envelope(
        workflow.envelopes[0]
    )
    statement = zkp.statement_from_bytes(statement_bytes)
    proof = zkp.Proof(proof_bytes)
    deliveries_before = len(workflow.vendor.records())
    outcomes = [workflow.vendor.verify_proof(proof, statement) for _ in range(1000)]
    rejected = sum(
        1 for o in outcomes
        if not o.accepted and o.reason == pvs.REASON_NULLIFIER_SPENT
    )
    deliveries = len(workflow.vendor.records()) - deliveries_before
    ok = rejected == 1000 and deliveries == 0
    report(
        2, "replay resistance", ok,
        f"{rejected}/1000 replays rejected as {pvs.REASON_NULLIFIER_SPENT}, "
        f"{deliveries} key deliveries",
    )


def test_criterion_03_unforgeability_battery(report):
    summary = bh.game_unforgeability(
        trials=1000, seed=b"acceptance-unforge", backend="groth16",
        mutation_proofs=100, mutation_positions=64,
    )
    mutation = next(
        r for r in summary["records"] if r["scenario"].endswith("proof-mutation")
    )
    ok = (
        summary["ok"]
        and summary["acceptances"] == 0
        and mutation["metrics"]["attempts"] == 64 * 100
    )
    report(
        3, "unforgeability battery", ok,
        f"{summary['acceptances']} acceptances over {summary['attempts']} attempts "
        f"(incl. {mutation['metrics']['attempts']} proof mutations)",
    )


def test_criterion_04_old_root_validity(tmp_path, report):
    ca_sk, ca_vk = cp.signature_keygen(cp.MockEntropy(b"acceptance-oldroot-ca"))
    server = asrv.AuthServer.server_setup(
        tmp_path / "as", depth=6, ca_verify_key=ca_vk, backend="groth16",
        seed=b"acceptance-oldroot",
    )
    stream = cp.MockEntropy(b"acceptance-oldroot-users")
    trials = []
    for i in range(55):
        note = cp.user_init(256, "dh", stream)
        commitment = cp.derive_commitment(note).value
        ck, vkey = cp.signature_keygen(stream)
        cert = cp.issue_certificate(ca_sk, f"user-{i}", vkey)
        assert server.register(cert, commitment, cp.sign(commitment, ck)).accepted
        if i < 50:
            # capture the proof inputs against the root as of this registration
            index = server.tree.get_index_of(commitment)
            trials.append((
                zkp.Statement(cp.derive_nullifier(note).value, server.current_root()),
                zkp.Witness(note, index, server.tree.validation_list(index)),
            ))

    vendor = pvs.Pvs.load(server.data_dir, entropy=cp.MockEntropy(b"x"))
    rng = bh._seeded_rng(b"acceptance-oldroot", "prove")
    current = server.current_root()
    accepted = stale = 0
    for statement, witness in trials:
        if statement.root != current:
            stale += 1
        proof = zkp.prove(server.crs, statement, witness, rng=rng)
        if vendor.verify_proof(proof, statement).accepted:
            accepted += 1
    ok = accepted == 50 and stale == 50
    report(
        4, "old-root validity", ok,
        f"{accepted}/50 proofs against superseded roots accepted after >=5 "
        f"subsequent registrations",
    )


def test_criterion_05_merkle_oracle_equivalence(report):
    def naive_root(leaves: list[bytes], depth: int) -> bytes:
        level = leaves + [cp.empty_leaf_digest()] * ((1 << depth) - len(leaves))
        while len(level) > 1:
            level = [
                cp.hash_pair(level[j], level[j + 1]) for j in range(0, len(level), 2)
            ]
        return level[0]

    cases = mismatches = 0
    for depth in range(2, 7):
        for run in range(2):
            rng = bh._seeded_rng(b"acceptance-merkle", f"{depth}/{run}")
            tree = merkle.empty_tree(depth)
            inserted: list[bytes] = []
            for _ in range(tree.capacity):
                leaf = rng.randrange(params.R).to_bytes(32, "big")
                tree.add_leaf(leaf)
                inserted.append(leaf)
                root = naive_root(inserted, depth)
                cases += 1
                if tree.get_root() != root:
                    mismatches += 1
                for j, leaf_j in enumerate(inserted):
                    val = tree.validation_list(j)
                    cases += 2
                    if not merkle.is_leaf_of_tree(leaf_j, j, val, root):
                        mismatches += 1
                    absent = rng.randrange(params.R).to_bytes(32, "big")
                    if merkle.is_leaf_of_tree(absent, j, val, root):
                        mismatches += 1
    ok = mismatches == 0
    report(
        5, "merkle oracle equivalence", ok,
        f"depths 2-6 exhaustive insertions, {cases} cases, {mismatches} mismatches",
    )


# ---------------------------------------------------------------------------
# criteria 6 and 7 share one scaling run
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def scaling():
    return bh.bench_prove_scaling(
        depths=(4, 8, 12, 16), samples=4, seed=b"acceptance-scaling",
        backend="groth16",
    )


def test_criterion_06_succinctness_constancy(scaling, report):
    subset = [r for r in scaling["records"] if r["params"]["depth"] in (4, 8, 16)]
    sizes = {r["metrics"]["proof_bytes"] for r in subset}
    verifies = [r["metrics"]["verify_s"] for r in subset]
    spread = max(verifies) / min(verifies)
    ok = len(sizes) == 1 and spread < 2
    report(
        6, "succinctness and verify constancy", ok,
        f"proof size {sizes} bytes across depths {{4,8,16}}, "
        f"verify max/min {spread:.2f} < 2",
    )


def test_criterion_07_linear_proving_scaling(scaling, report):
    prove_fit = scaling["fits"]["prove_time"]
    constraint_fit = scaling["fits"]["constraints"]
    ok = prove_fit["r2"] > 0.99 and constraint_fit["r2"] > 0.99
    report(
        7, "linear proving scaling", ok,
        f"depths {{4,8,12,16}}: prove-time r2 {prove_fit['r2']:.4f}, "
        f"constraint-count r2 {constraint_fit['r2']:.4f} (> 0.99)",
    )


class _LoopbackLink:
    """Reader-side link wired straight into a CardEndpoint, no threads."""

    def __init__(self, card: nfc_tunnel.CardEndpoint):
        self.card = card
        self._pending: deque[bytes] = deque()

    def send_frame(self, frame: bytes) -> None:
        response = self.card.handle(nfc_tunnel.ApduCommand.decode(frame))
        self._pending.append(response.encode())

    def recv_frame(self, timeout: float = 30.0):
        return self._pending.popleft()

    def close(self) -> None:
        pass


def test_criterion_08_tunnel_correctness(report):
    rng = bh._seeded_rng(b"acceptance-tunnel", "payloads")
    lengths = [1, 4096, 250, 251] + [rng.randint(1, 4096) for _ in range(196)]
    checked = failures = 0
    for length in lengths:
        payload = rng.randbytes(length)
        card = nfc_tunnel.CardEndpoint(payload)
        transcript = nfc_tunnel.Transcript()
        reader = nfc_tunnel.ReaderSession(_LoopbackLink(card), transcript=transcript)
        seen = {}
        reader.run(lambda data: seen.setdefault("request", data) or data)
        commands = [
            nfc_tunnel.ApduCommand.decode(frame)
            for direction, frame in transcript.entries
            if direction == "cmd"
        ]
        pulls = sum(1 for c in commands if c.ins == nfc_tunnel.INS_GET_CHUNK)
        pushes = sum(1 for c in commands if c.ins == nfc_tunnel.INS_SEND_CHUNK)
        want = math.ceil(length / nfc_tunnel.CHUNK_SIZE)
        checked += 1
        if not (
            seen["request"] == payload
            and card.result == payload
            and pulls == want
            and pushes == want
            and nfc_tunnel.check_reader_initiates(transcript)
        ):
            failures += 1
    ok = failures == 0 and checked == 200
    report(
        8, "tunnel correctness", ok,
        f"{checked} payloads 1-4096 B, chunk counts = ceil(L/250) both ways, "
        f"reassembly bit-exact, reader-initiates holds, {failures} failures",
    )


def test_criterion_09_transfer_share_shape(report):
    summary = bh.bench_key_request(
        sizes=(32, 256, 4096), rate=12000.0, seed=b"acceptance-transfer"
    )
    shares = summary["key_transfer_shares"]
    ok = summary["monotone_key_transfer"]
    report(
        9, "transfer-share shape", ok,
        "key-transfer share monotone over t in {32,256,4096}: "
        + ", ".join(f"{t}B={share:.2f}" for t, share in shares.items()),
    )


def test_criterion_10_anonymity_confidentiality_sanity(report):
    anonymity = bh.game_anonymity(
        trials=1000, seed=b"acceptance-anon", backend="groth16"
    )
    confidentiality = bh.game_confidentiality(trials=1000, seed=b"acceptance-conf")
    rate = anonymity["guess_rate"]
    cross_scan = anonymity["records"][0]["metrics"]["cross_scan_extra"]
    ok = (
        0.45 <= rate <= 0.55
        and anonymity["linked_trials"] == 0
        and cross_scan == []
        and confidentiality["ok"]
        and confidentiality["attempts"] >= 1000
        and confidentiality["recoveries"] == 0
    )
    report(
        10, "anonymity and confidentiality sanity", ok,
        f"guess rate {rate:.3f} in [0.45,0.55] over 1000 trials, "
        f"{confidentiality['recoveries']}/{confidentiality['attempts']} key "
        f"recoveries, store cross-scan shares roots only",
    )
