"""The registrar: validates certificates, appends commitments to the
tree, and publishes all verification state.

register() performs every check before the first byte of state changes,
so a rejected call leaves the persisted files byte-identical. The root
history invariant is Alg-style push-before-append: old_roots[k] is the
root as it stood immediately before the (k+1)-th successful
registration, which is exactly what lets in-flight proofs outlive later
registrations.

The AS and the verification service are separate logical entities that
share one data directory; tests run both in-process, deployments run two
services over the same files or use the HTTP surface.
"""

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from . import core_primitives as cp
from . import merkle, zkp

_OLD_ROOTS_MAGIC = b"VKOR1"

REASON_CERT_INVALID = "certificate-invalid"
REASON_SIGNATURE_INVALID = "signature-invalid"
REASON_COMMITMENT_MALFORMED = "commitment-malformed"
REASON_TREE_FULL = "tree-full"
REASON_DUPLICATE = "duplicate-commitment"


class StateExistsError(Exception):
    pass


@dataclass(frozen=True)
class AuditRecord:
    seq: int
    subject_id: str
    commitment: bytes
    timestamp: float


@dataclass(frozen=True)
class RegistrationResult:
    accepted: bool
    new_root: bytes | None = None
    reason: str | None = None


def dump_old_roots(roots: list[bytes]) -> bytes:
    return _OLD_ROOTS_MAGIC + len(roots).to_bytes(4, "big") + b"".join(roots)


def load_old_roots(path: str | Path) -> list[bytes]:
    blob = Path(path).read_bytes()
    if blob[:5] != _OLD_ROOTS_MAGIC:
        raise ValueError("bad old-roots file header")
    count = int.from_bytes(blob[5:9], "big")
    if len(blob) != 9 + 32 * count:
        raise ValueError("old-roots file length mismatch")
    return [blob[9 + 32 * i : 9 + 32 * (i + 1)] for i in range(count)]


class AuthServer:
    def __init__(
        self,
        data_dir: str | Path,
        config: cp.ProtocolConfig,
        crs: zkp.CRS,
        ca_verify_key: bytes,
        tree: merkle.MerkleTree,
        old_roots: list[bytes],
        audit_log: list[AuditRecord],
        old_root_retention: int | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.config = config
        self.crs = crs
        self.ca_verify_key = ca_verify_key
        self.tree = tree
        self._old_roots = old_roots
        self._audit_log = audit_log
        self.old_root_retention = old_root_retention
        self._lock = threading.Lock()

    # -- lifecycle -----------------------------------------------------------

    @classmethod
    def server_setup(
        cls,
        data_dir: str | Path,
        depth: int,
        config: cp.ProtocolConfig | None = None,
        ca_verify_key: bytes | None = None,
        backend: str = "groth16",
        seed: bytes | None = None,
        reset: bool = False,
        old_root_retention: int | None = None,
    ) -> "AuthServer":
        """Fresh deployment: generate the CRS, an empty tree of the given
        depth, empty histories, and persist the lot. Refuses to clobber an
        existing deployment unless reset is explicit."""
        data_dir = Path(data_dir)
        if (data_dir / "tree.bin").exists() and not reset:
            raise StateExistsError(
                f"{data_dir} already holds server state; pass reset=True to discard it"
            )
        config = config or cp.ProtocolConfig()
        if ca_verify_key is None:
            raise ValueError("server_setup needs the certificate authority's verify key")
        crs = zkp.setup(depth, config.hash_profile, backend=backend, seed=seed)
        tree = merkle.empty_tree(depth, config.hash_profile)
        server = cls(data_dir, config, crs, ca_verify_key, tree, [], [], old_root_retention)

        data_dir.mkdir(parents=True, exist_ok=True)
        cp.dump_config(config, data_dir / "config.json")
        zkp.save_crs(crs, data_dir / "crs")
        (data_dir / "ca.vk").write_bytes(ca_verify_key)
        server._persist_tree()
        server._persist_old_roots()
        (data_dir / "audit.jsonl").write_text("")
        return server

    @classmethod
    def load(cls, data_dir: str | Path, old_root_retention: int | None = None) -> "AuthServer":
        data_dir = Path(data_dir)
        config = cp.load_config(data_dir / "config.json")
        crs = zkp.load_crs(data_dir / "crs")
        ca_verify_key = (data_dir / "ca.vk").read_bytes()
        tree = merkle.MerkleTree.from_bytes(
            (data_dir / "tree.bin").read_bytes(), config.hash_profile
        )
        old_roots = load_old_roots(data_dir / "old_roots.bin")
        audit_log = []
        audit_path = data_dir / "audit.jsonl"
        if audit_path.exists():
            for line in audit_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    raw = json.loads(line)
                    audit_log.append(
                        AuditRecord(
                            raw["seq"], raw["subject_id"],
                            bytes.fromhex(raw["commitment"]), raw["timestamp"],
                        )
                    )
        return cls(data_dir, config, crs, ca_verify_key, tree, old_roots, audit_log,
                   old_root_retention)

    def _persist_tree(self) -> None:
        tmp = self.data_dir / "tree.bin.tmp"
        tmp.write_bytes(self.tree.to_bytes())
        tmp.replace(self.data_dir / "tree.bin")

    def _persist_old_roots(self) -> None:
        tmp = self.data_dir / "old_roots.bin.tmp"
        tmp.write_bytes(dump_old_roots(self._old_roots))
        tmp.replace(self.data_dir / "old_roots.bin")

    def _append_audit(self, record: AuditRecord) -> None:
        with open(self.data_dir / "audit.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps({
                "seq": record.seq,
                "subject_id": record.subject_id,
                "commitment": record.commitment.hex(),
                "timestamp": record.timestamp,
            }) + "\n")

    # -- the registration step ------------------------------------------------

    def register(
        self, cert: cp.Certificate | bytes, commitment: bytes, signature: bytes
    ) -> RegistrationResult:
        """Append one commitment if the certificate chains to the CA and
        the signature covers the commitment. Authentication failures come
        back as a rejected result; capacity and duplicates raise, since
        those are resource states the caller must treat differently."""
        with self._lock:
            if isinstance(cert, bytes):
                try:
                    cert = cp.certificate_from_bytes(cert)
                except cp.CertificateError:
                    return RegistrationResult(False, reason=REASON_CERT_INVALID)
            if len(commitment) != cp.DIGEST_SIZE:
                return RegistrationResult(False, reason=REASON_COMMITMENT_MALFORMED)
            try:
                authentic = cp.verify_sign(cert, commitment, signature, self.ca_verify_key)
            except cp.CertificateError:
                return RegistrationResult(False, reason=REASON_CERT_INVALID)
            if not authentic:
                return RegistrationResult(False, reason=REASON_SIGNATURE_INVALID)

            if self.tree.next_free >= self.tree.capacity:
                raise merkle.CapacityError(
                    f"tree at depth {self.tree.depth} is full ({self.tree.capacity} leaves)"
                )
            try:
                self.tree.get_index_of(commitment)
            except merkle.AbsentLeafError:
                pass
            else:
                raise merkle.DuplicateLeafError("commitment is already registered")

            # all checks passed: apply the three appends together
            previous_root = self.tree.get_root()
            self.tree.add_leaf(commitment)
            self._old_roots.append(previous_root)
            if self.old_root_retention is not None:
                # documented deviation: proofs against evicted roots fail
                del self._old_roots[: max(0, len(self._old_roots) - self.old_root_retention)]
            record = AuditRecord(
                seq=len(self._audit_log),
                subject_id=cert.subject_id,
                commitment=commitment,
                timestamp=time.time(),
            )
            self._audit_log.append(record)

            self._persist_tree()
            self._persist_old_roots()
            self._append_audit(record)
            return RegistrationResult(True, new_root=self.tree.get_root())

    # -- public reads ----------------------------------------------------------

    def current_root(self) -> bytes:
        with self._lock:
            return self.tree.get_root()

    def fetch_tree(self) -> bytes:
        with self._lock:
            return self.tree.to_bytes()

    def fetch_old_roots(self) -> list[bytes]:
        with self._lock:
            return list(self._old_roots)

    def fetch_crs_verification_key(self) -> bytes:
        return zkp.verification_key_bytes(self.crs)

    def fetch_audit_log(self) -> list[AuditRecord]:
        with self._lock:
            return list(self._audit_log)

    @property
    def registered_count(self) -> int:
        return self.tree.next_free


def build_app(server: AuthServer):
    """REST surface under /v1; hex-encoded digests in JSON envelopes."""
    from fastapi import FastAPI, HTTPException
    from pydantic import BaseModel

    app = FastAPI(title="veilkey auth server", docs_url=None, redoc_url=None)

    class RegisterBody(BaseModel):
        certificate: str
        commitment: str
        signature: str

    @app.post("/v1/register")
    def register(body: RegisterBody):
        try:
            cert = bytes.fromhex(body.certificate)
            commitment = bytes.fromhex(body.commitment)
            signature = bytes.fromhex(body.signature)
        except ValueError:
            raise HTTPException(status_code=400, detail="fields must be hex")
        try:
            result = server.register(cert, commitment, signature)
        except merkle.CapacityError:
            raise HTTPException(status_code=409, detail=REASON_TREE_FULL)
        except merkle.DuplicateLeafError:
            raise HTTPException(status_code=409, detail=REASON_DUPLICATE)
        return {
            "accepted": result.accepted,
            "new_root": result.new_root.hex() if result.new_root else None,
            "reason": result.reason,
        }

    @app.get("/v1/tree")
    def tree():
        snapshot = server.fetch_tree()
        with server._lock:
            root = server.tree.get_root().hex()
            depth = server.tree.depth
            next_free = server.tree.next_free
        return {
            "depth": depth,
            "next_free": next_free,
            "root": root,
            "snapshot": snapshot.hex(),
        }

    @app.get("/v1/old-roots")
    def old_roots():
        return {"old_roots": [r.hex() for r in server.fetch_old_roots()]}

    @app.get("/v1/vk")
    def vk():
        return {
            "backend": server.crs.backend,
            "depth": server.crs.depth,
            "hash_profile": server.crs.hash_profile,
            "fingerprint": server.crs.fingerprint.hex(),
            "vk": server.fetch_crs_verification_key().hex(),
        }

    @app.get("/v1/crs")
    def crs():
        """The proving half; public material, just large."""
        from . import groth16

        if server.crs.backend == "mock":
            pk_hex = server.crs.proving_key.hex()
        else:
            pk_hex = groth16.proving_key_to_bytes(server.crs.proving_key).hex()
        return {
            "backend": server.crs.backend,
            "depth": server.crs.depth,
            "hash_profile": server.crs.hash_profile,
            "fingerprint": server.crs.fingerprint.hex(),
            "pk": pk_hex,
        }

    @app.get("/v1/nullifiers")
    def nullifiers():
        """Proxied from the shared store for user convenience."""
        from .pvs import NullifierStore, _NULLIFIER_LOG

        log_path = server.data_dir / _NULLIFIER_LOG
        try:
            entries = NullifierStore.read_entries(log_path)
        except (OSError, ValueError):
            entries = []
        return {"nullifiers": [n.hex() for n in entries]}

    return app
