"""The verification service: proof checking, nullifier bookkeeping, and
KEM-wrapped delivery of entropy.

verify_proof applies three ordered checks and reports the first failure:
root validity (current root or any recorded old root), nullifier
freshness, then the proof itself. The check and the nullifier insert
happen inside one critical section, so of any number of concurrent
submissions with the same statement exactly one is accepted.

The service persists only (nullifier, root, proof, timestamp). No stored
field joins against the registrar's audit log except root values, which
is the point: delivery records cannot be linked back to registrations.

If delivery fails after a proof was accepted, the nullifier stays spent.
That is deliberate: un-spending on error would turn any induced delivery
failure into a replay primitive. The incident is logged instead.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from . import core_primitives as cp
from . import merkle, nfc_tunnel, zkp

logger = logging.getLogger(__name__)

REASON_ROOT_INVALID = "root-invalid"
REASON_NULLIFIER_SPENT = "nullifier-spent"
REASON_PROOF_INVALID = "proof-invalid"
REASON_T_RANGE = "t-out-of-range"
REASON_PK_MALFORMED = "pk-malformed"
REASON_ENVELOPE = "envelope-malformed"
REASON_DELIVERY = "delivery-failed"
REASON_SESSION_CONSUMED = "session-consumed"

DEFAULT_MAX_T = 65536

_NULLIFIER_LOG = "nullifiers.log"
_NULLIFIER_SNAP = "nullifiers.snap"
_RECORDS_LOG = "pvs_records.jsonl"
_SNAP_MAGIC = b"VKNS1"


class DeliveryError(Exception):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class VerifyOutcome:
    accepted: bool
    reason: str | None = None


class NullifierStore:
    """Append-only spent-nullifier set backed by a log plus a compacted
    snapshot; the in-memory set is rebuilt from both at startup."""

    def __init__(self, directory: str | Path):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self._log_path = directory / _NULLIFIER_LOG
        self._snap_path = directory / _NULLIFIER_SNAP
        self._entries: set[bytes] = set(
            self.read_entries(self._log_path, self._snap_path)
        )
        self._log = open(self._log_path, "a", encoding="ascii")

    @staticmethod
    def read_entries(log_path: Path, snap_path: Path | None = None) -> list[bytes]:
        entries: set[bytes] = set()
        if snap_path is None:
            snap_path = Path(log_path).with_name(_NULLIFIER_SNAP)
        if snap_path.exists():
            blob = snap_path.read_bytes()
            if blob[:5] != _SNAP_MAGIC:
                raise ValueError("bad nullifier snapshot header")
            count = int.from_bytes(blob[5:9], "big")
            if len(blob) != 9 + 32 * count:
                raise ValueError("nullifier snapshot length mismatch")
            for i in range(count):
                entries.add(blob[9 + 32 * i : 9 + 32 * (i + 1)])
        log_path = Path(log_path)
        if log_path.exists():
            for line in log_path.read_text(encoding="ascii").splitlines():
                line = line.strip()
                if line:
                    entries.add(bytes.fromhex(line))
        return sorted(entries)

    def __contains__(self, nullifier: bytes) -> bool:
        return nullifier in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, nullifier: bytes) -> None:
        if nullifier in self._entries:
            raise ValueError("nullifier already spent")
        self._entries.add(nullifier)
        self._log.write(nullifier.hex() + "\n")
        self._log.flush()
        os.fsync(self._log.fileno())

    def entries(self) -> list[bytes]:
        return sorted(self._entries)

    def compact(self) -> None:
        ordered = self.entries()
        blob = _SNAP_MAGIC + len(ordered).to_bytes(4, "big") + b"".join(ordered)
        tmp = self._snap_path.with_suffix(".tmp")
        tmp.write_bytes(blob)
        os.replace(tmp, self._snap_path)
        self._log.close()
        self._log = open(self._log_path, "w", encoding="ascii")

    def close(self) -> None:
        self._log.close()


def make_entropy(kind: str, mock_seed: bytes | None = None, latency_s: float = 0.002):
    """mock: seeded deterministic; os: platform CSPRNG; external: a remote
    source emulated by connection-setup latency on top of a seeded stream."""
    if kind == "mock":
        return cp.MockEntropy(mock_seed if mock_seed is not None else b"veilkey-mock")
    if kind == "os":
        return cp.OsEntropy()
    if kind == "external":
        inner = cp.MockEntropy(mock_seed) if mock_seed is not None else cp.OsEntropy()
        return cp.ExternalEntropy(inner, latency_s=latency_s)
    raise ValueError(f"unknown entropy kind {kind!r}")


class Pvs:
    def __init__(
        self,
        data_dir: str | Path,
        crs: zkp.CRS,
        config: cp.ProtocolConfig,
        entropy,
        max_t: int = DEFAULT_MAX_T,
        as_url: str | None = None,
        http_client=None,
    ):
        self.data_dir = Path(data_dir)
        self.crs = crs
        self.config = config
        self.entropy = entropy
        self.max_t = max_t
        self.as_url = as_url.rstrip("/") if as_url else None
        self._http = http_client
        self._store = NullifierStore(self.data_dir)
        self._records_path = self.data_dir / _RECORDS_LOG
        self._lock = threading.Lock()
        self.current_root: bytes | None = None
        self.old_roots: list[bytes] = []
        self._old_root_set: set[bytes] = set()
        self.last_sync: float | None = None
        self.stale = True

    @classmethod
    def load(
        cls,
        data_dir: str | Path,
        entropy_kind: str = "os",
        mock_seed: bytes | None = None,
        entropy=None,
        max_t: int = DEFAULT_MAX_T,
        as_url: str | None = None,
        http_client=None,
        latency_s: float = 0.002,
    ) -> "Pvs":
        """Bring up a PVS over a data directory the registrar prepared."""
        data_dir = Path(data_dir)
        config = cp.load_config(data_dir / "config.json")
        crs = zkp.load_crs(data_dir / "crs", skip_proving=True).verifier_view()
        if entropy is None:
            entropy = make_entropy(entropy_kind, mock_seed, latency_s)
        pvs = cls(data_dir, crs, config, entropy, max_t, as_url, http_client)
        pvs.sync_registry()
        return pvs

    # -- registry view ------------------------------------------------------

    def sync_registry(self) -> tuple[bytes | None, list[bytes]]:
        """Refresh root and old-root history from the AS (HTTP if a URL is
        configured, otherwise the shared data directory). On failure the
        last snapshot stays in force and the health endpoint flags it."""
        try:
            if self.as_url is not None:
                root, old_roots = self._fetch_remote()
            else:
                root, old_roots = self._fetch_shared()
        except Exception as exc:
            logger.warning("registry sync failed, keeping last snapshot: %s", exc)
            with self._lock:
                self.stale = True
            return self.current_root, list(self.old_roots)
        with self._lock:
            self.current_root = root
            self.old_roots = old_roots
            self._old_root_set = set(old_roots)
            self.last_sync = time.time()
            self.stale = False
        return root, list(old_roots)

    def _fetch_remote(self) -> tuple[bytes, list[bytes]]:
        import httpx

        client = self._http or httpx
        tree = client.get(f"{self.as_url}/v1/tree").json()
        roots = client.get(f"{self.as_url}/v1/old-roots").json()
        return bytes.fromhex(tree["root"]), [bytes.fromhex(r) for r in roots["old_roots"]]

    def _fetch_shared(self) -> tuple[bytes, list[bytes]]:
        tree = merkle.MerkleTree.from_bytes(
            (self.data_dir / "tree.bin").read_bytes(), self.config.hash_profile
        )
        from .auth_server import load_old_roots

        return tree.get_root(), load_old_roots(self.data_dir / "old_roots.bin")

    # -- the two protocol operations ----------------------------------------

    def verify_proof(self, proof: zkp.Proof, statement: zkp.Statement) -> VerifyOutcome:
        with self._lock:
            if self.current_root is None or (
                statement.root != self.current_root
                and statement.root not in self._old_root_set
            ):
                return VerifyOutcome(False, REASON_ROOT_INVALID)
            if statement.nullifier in self._store:
                return VerifyOutcome(False, REASON_NULLIFIER_SPENT)
            if not zkp.verify(self.crs, statement, proof):
                return VerifyOutcome(False, REASON_PROOF_INVALID)
            self._store.add(statement.nullifier)
            self._append_record(statement, proof)
            return VerifyOutcome(True)

    def deliver_key(self, t: int, pk: bytes) -> cp.EncapsulatedKey:
        """Draws exactly t bytes and encapsulates them under pk. The
        plaintext buffer is wiped after encapsulation and never logged;
        CPython may still hold transient copies, which is as far as a
        pure-Python zeroization can go."""
        if not isinstance(t, int) or not 1 <= t <= self.max_t:
            raise DeliveryError(REASON_T_RANGE, f"t must be in [1, {self.max_t}]")
        try:
            buf = bytearray(self.entropy.random_bytes(t))
        except cp.EntropyError as exc:
            logger.error("entropy source failed during delivery: %s", exc)
            raise DeliveryError(REASON_DELIVERY, "entropy source failure") from None
        try:
            enc = cp.kem_encap(bytes(buf), pk, self.config.kem_profile)
        except cp.KemError as exc:
            raise DeliveryError(REASON_DELIVERY, str(exc)) from None
        finally:
            for i in range(len(buf)):
                buf[i] = 0
        return enc

    def _append_record(self, statement: zkp.Statement, proof: zkp.Proof) -> None:
        record = {
            "nullifier": statement.nullifier.hex(),
            "root": statement.root.hex(),
            "proof": proof.data.hex(),
            "timestamp": time.time(),
        }
        with open(self._records_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    # -- observability -------------------------------------------------------

    def health(self) -> dict:
        with self._lock:
            return {
                "status": "ok",
                "stale": self.stale,
                "last_sync": self.last_sync,
                "root": self.current_root.hex() if self.current_root else None,
                "old_roots": len(self.old_roots),
                "nullifiers": len(self._store),
                "max_t": self.max_t,
            }

    def nullifiers(self) -> list[bytes]:
        with self._lock:
            return self._store.entries()

    def records(self) -> list[dict]:
        if not self._records_path.exists():
            return []
        return [
            json.loads(line)
            for line in self._records_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]

    def compact(self) -> None:
        with self._lock:
            self._store.compact()


class PvsSession:
    """One verified proof buys at most one delivery, within one session."""

    def __init__(self, pvs: Pvs):
        self.pvs = pvs
        self.consumed = False
        self.timings: dict[str, float] = {}

    def handle_request(self, envelope: bytes) -> bytes:
        if self.consumed:
            return nfc_tunnel.encode_response_error(REASON_SESSION_CONSUMED)
        self.consumed = True
        try:
            statement_raw, proof_raw, t, pk = nfc_tunnel.decode_request_envelope(envelope)
            statement = zkp.statement_from_bytes(statement_raw)
        except (nfc_tunnel.EnvelopeError, ValueError) as exc:
            return nfc_tunnel.encode_response_error(f"{REASON_ENVELOPE}: {exc}")

        # parameter validation comes first: a bad request must be turned
        # away before the proof check can spend the nullifier
        if not 1 <= t <= self.pvs.max_t:
            return nfc_tunnel.encode_response_error(REASON_T_RANGE)
        if self.pvs.config.kem_profile == "dh" and len(pk) != 32:
            return nfc_tunnel.encode_response_error(REASON_PK_MALFORMED)
        if not pk:
            return nfc_tunnel.encode_response_error(REASON_PK_MALFORMED)

        t0 = time.perf_counter()
        outcome = self.pvs.verify_proof(zkp.Proof(proof_raw), statement)
        t1 = time.perf_counter()
        self.timings["verify"] = t1 - t0
        if not outcome.accepted:
            return nfc_tunnel.encode_response_error(outcome.reason)
        try:
            enc = self.pvs.deliver_key(t, pk)
        except DeliveryError as exc:
            logger.error(
                "delivery failed after acceptance; nullifier %s stays spent: %s",
                statement.nullifier.hex(), exc,
            )
            return nfc_tunnel.encode_response_error(exc.reason)
        finally:
            self.timings["deliver"] = time.perf_counter() - t1
        return nfc_tunnel.encode_response_key(enc.ciphertext)


class PvsTunnelServer:
    """TCP listener speaking the APDU tunnel; one session per connection."""

    def __init__(
        self,
        pvs: Pvs,
        host: str = "127.0.0.1",
        port: int = 0,
        aid: bytes = nfc_tunnel.DEFAULT_AID,
        rate_limit: nfc_tunnel.RateLimit | None = None,
        keep_transcripts: bool = False,
    ):
        self.pvs = pvs
        self.aid = aid
        self.rate_limit = rate_limit
        self.keep_transcripts = keep_transcripts
        self.transcripts: list[nfc_tunnel.Transcript] = []
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(16)
        # closing a listening socket does not wake a blocked accept on
        # Linux, so poll with a short timeout instead
        self._sock.settimeout(0.2)
        self.address = self._sock.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)

    def start(self) -> "PvsTunnelServer":
        self._thread.start()
        return self

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(None)
            threading.Thread(
                target=self.serve_link,
                args=(nfc_tunnel.TcpLink(conn, self.rate_limit),),
                daemon=True,
            ).start()

    def serve_link(self, link) -> None:
        """Drive one reader session over an established link."""
        transcript = nfc_tunnel.Transcript() if self.keep_transcripts else None
        reader = nfc_tunnel.ReaderSession(link, self.aid, transcript)
        session = PvsSession(self.pvs)
        try:
            reader.run(session.handle_request)
        except (nfc_tunnel.TransportDropped, nfc_tunnel.SessionError, nfc_tunnel.FramingError) as exc:
            logger.info("tunnel session aborted: %s", exc)
        finally:
            if transcript is not None:
                self.transcripts.append(transcript)
            link.close()

    def stop(self) -> None:
        self._stop.set()
        self._sock.close()
        if self._thread.is_alive():
            self._thread.join(timeout=5)


def build_health_app(pvs: Pvs):
    """Observability surface; the protocol itself never rides HTTP."""
    from fastapi import FastAPI

    app = FastAPI(title="veilkey pvs", docs_url=None, redoc_url=None)

    @app.get("/health")
    def health():
        return pvs.health()

    @app.get("/nullifiers")
    def nullifiers():
        return {"nullifiers": [n.hex() for n in pvs.nullifiers()]}

    return app
