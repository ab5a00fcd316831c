"""User-side orchestration: the note store and the three protocol steps.

A note moves created -> registered -> spent, never backward. Every
operation checks the local state machine before any traffic leaves the
machine, and the store is encrypted at rest under a passphrase.
"""

import json
import os
import time
from pathlib import Path

import httpx
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from . import core_primitives as cp
from . import merkle, nfc_tunnel, pvs, zkp

STATUS_CREATED = "created"
STATUS_REGISTERED = "registered"
STATUS_SPENT = "spent"

DEFAULT_T = 64

_STORE_MAGIC = b"VKST1"
_STORE_NAME = "store.bin"
_LOCK_NAME = ".lock"
_KDF_COST = 1 << 14


class ClientError(Exception):
    """Local failure; the CLI exits 2."""

    exit_code = 2


class StoreError(ClientError):
    pass


class StateError(ClientError):
    """The note is in the wrong state for the requested operation."""


class StaleRegistrationError(ClientError):
    """The fetched tree does not contain the note's commitment."""


class AsError(ClientError):
    """Registrar-side failure; the CLI exits 3."""

    exit_code = 3


class PvsError(ClientError):
    """Vending-side failure; the CLI exits 4."""

    exit_code = 4

    def __init__(self, reason: str, note_spent: bool = False):
        super().__init__(reason)
        self.reason = reason
        self.note_spent = note_spent


class UserStore:
    """Encrypted JSON blob plus a lock file for exclusive access.

    The proving material cache lives next to the blob as plain files:
    it is public, large, and not worth re-encrypting on every save.
    """

    def __init__(self, directory, passphrase: str, create: bool = False,
                 kdf_cost: int = _KDF_COST):
        self.directory = Path(directory)
        self._blob_path = self.directory / _STORE_NAME
        self._lock_path = self.directory / _LOCK_NAME
        self._locked = False
        self.directory.mkdir(parents=True, exist_ok=True)
        if create and self._blob_path.exists():
            raise StoreError(f"a store already exists at {self._blob_path}")
        if not create and not self._blob_path.exists():
            raise StoreError(f"no store at {self._blob_path}; run init first")
        self._acquire_lock()
        try:
            if create:
                self._salt = os.urandom(16)
                self._kdf_cost = kdf_cost
                self._key = self._derive(passphrase)
                self.data = {"version": 1, "notes": {}, "cache": {}}
                self.save()
            else:
                self._load(passphrase)
        except BaseException:
            self._release_lock()
            raise

    # -- lifecycle ------------------------------------------------------------

    def __enter__(self) -> "UserStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        self._release_lock()

    def _acquire_lock(self) -> None:
        try:
            fd = os.open(self._lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o600)
        except FileExistsError:
            raise StoreError(
                f"store is locked by another invocation; remove {self._lock_path} "
                "if that process is gone"
            ) from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        self._locked = True

    def _release_lock(self) -> None:
        if self._locked:
            try:
                os.unlink(self._lock_path)
            except OSError:
                pass
            self._locked = False

    # -- encryption at rest ----------------------------------------------------

    def _derive(self, passphrase: str) -> bytes:
        return Scrypt(
            salt=self._salt, length=32, n=self._kdf_cost, r=8, p=1
        ).derive(passphrase.encode("utf-8"))

    def _header(self) -> bytes:
        return _STORE_MAGIC + self._kdf_cost.to_bytes(4, "big") + self._salt

    def _load(self, passphrase: str) -> None:
        blob = self._blob_path.read_bytes()
        if blob[:5] != _STORE_MAGIC or len(blob) < 37:
            raise StoreError(f"{self._blob_path} is not a note store")
        self._kdf_cost = int.from_bytes(blob[5:9], "big")
        self._salt = blob[9:25]
        self._key = self._derive(passphrase)
        try:
            plain = AESGCM(self._key).decrypt(blob[25:37], blob[37:], blob[:25])
        except InvalidTag:
            raise StoreError("wrong passphrase or corrupted store") from None
        self.data = json.loads(plain)

    def save(self) -> None:
        nonce = os.urandom(12)
        sealed = AESGCM(self._key).encrypt(
            nonce, json.dumps(self.data).encode("utf-8"), self._header()
        )
        tmp = self._blob_path.with_suffix(".tmp")
        fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        try:
            os.write(fd, self._header() + nonce + sealed)
            os.fsync(fd)
        finally:
            os.close(fd)
        os.replace(tmp, self._blob_path)

    # -- note access ------------------------------------------------------------

    @property
    def notes(self) -> dict:
        return self.data["notes"]

    def get(self, note_id: str) -> dict:
        try:
            return self.notes[note_id]
        except KeyError:
            raise StoreError(f"no note {note_id!r} in this store") from None


def open_store(directory, passphrase: str, create_ok: bool = False,
               kdf_cost: int = _KDF_COST) -> UserStore:
    """Opens the store at directory, creating it first when allowed."""
    missing = not (Path(directory) / _STORE_NAME).exists()
    return UserStore(directory, passphrase, create=create_ok and missing, kdf_cost=kdf_cost)


def _record_note(rec: dict) -> cp.Note:
    return cp.Note(
        bytes.fromhex(rec["rho"]), bytes.fromhex(rec["pk"]), bytes.fromhex(rec["sk"])
    )


def _write_key_file(path, key: bytes) -> None:
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    try:
        os.fchmod(fd, 0o600)
        os.write(fd, key)
    finally:
        os.close(fd)


class Client:
    """Drives one user's notes against a registrar and a vending service."""

    def __init__(self, store: UserStore, as_url: str | None = None,
                 pvs_addr: tuple[str, int] | None = None, http_client=None):
        self.store = store
        self.as_url = as_url.rstrip("/") if as_url else None
        self.pvs_addr = pvs_addr
        self._http = http_client
        self.last_transcript: nfc_tunnel.Transcript | None = None

    # -- step 1: UserInit --------------------------------------------------------

    def init_note(self, lam: int = 256, kem_profile: str = "dh",
                  hash_profile: str = "algebraic", entropy=None) -> tuple[str, bytes]:
        """Creates and persists a note; returns (note id, commitment)."""
        note = cp.user_init(lam, kem_profile, entropy)
        commitment = cp.derive_commitment(note, hash_profile).value
        note_id = commitment.hex()[:8]
        if note_id in self.store.notes:
            raise StoreError(f"note id {note_id} collides with an existing note")
        self.store.notes[note_id] = {
            "rho": note.rho.hex(),
            "pk": note.pk.hex(),
            "sk": note.sk.hex(),
            "lam": lam,
            "kem_profile": kem_profile,
            "hash_profile": hash_profile,
            "status": STATUS_CREATED,
            "created_at": time.time(),
            "registered_root": None,
        }
        self.store.save()
        return note_id, commitment

    # -- step 1: Auth + Register ---------------------------------------------------

    def register(self, note_id: str, certificate: bytes, signing_key: bytes) -> bytes:
        rec = self.store.get(note_id)
        if rec["status"] != STATUS_CREATED:
            raise StateError(
                f"note {note_id} is already {rec['status']}; registration needs a fresh note"
            )
        commitment = cp.derive_commitment(_record_note(rec), rec["hash_profile"]).value
        try:
            signature = cp.sign(commitment, signing_key)
        except ValueError as exc:
            raise ClientError(f"signing key unusable: {exc}") from None
        payload = self._post("/v1/register", {
            "certificate": certificate.hex(),
            "commitment": commitment.hex(),
            "signature": signature.hex(),
        })
        if not payload.get("accepted"):
            raise AsError(payload.get("reason") or "registration rejected")
        # only now, with the AS committed, does the local state move
        rec["status"] = STATUS_REGISTERED
        rec["registered_root"] = payload["new_root"]
        self.store.data["cache"]["root"] = payload["new_root"]
        self.store.save()
        return bytes.fromhex(payload["new_root"])

    # -- step 2: CreateProof ---------------------------------------------------------

    def prove(self, note_id: str, t: int = DEFAULT_T) -> bytes:
        """Builds a self-contained request envelope against a fresh tree.

        Does not change the note's state: spending happens at delivery,
        and several bundles for one note are allowed (they all carry the
        same nullifier, so at most one will ever redeem).
        """
        rec = self.store.get(note_id)
        if rec["status"] == STATUS_CREATED:
            raise StateError(f"note {note_id} is not registered yet")
        if rec["status"] == STATUS_SPENT:
            raise StateError(f"note {note_id} is already spent")

        note = _record_note(rec)
        profile = rec["hash_profile"]
        tree_info = self._get("/v1/tree")
        vk_info = self._get("/v1/vk")
        if vk_info["hash_profile"] != profile:
            raise AsError(
                f"registrar runs hash profile {vk_info['hash_profile']!r}, "
                f"note was created under {profile!r}"
            )
        crs = self._obtain_crs(vk_info)

        tree = merkle.MerkleTree.from_bytes(bytes.fromhex(tree_info["snapshot"]), profile)
        if tree.get_root().hex() != tree_info["root"]:
            raise AsError("tree snapshot does not hash to the advertised root")
        if tree.depth != crs.depth:
            raise AsError(f"tree depth {tree.depth} does not match CRS depth {crs.depth}")

        commitment = cp.derive_commitment(note, profile).value
        try:
            index = tree.get_index_of(commitment)
        except merkle.AbsentLeafError:
            raise StaleRegistrationError(
                f"commitment of note {note_id} is not in the fetched tree; "
                "register it first, or retry once the registrar has caught up"
            ) from None

        statement = zkp.Statement(
            nullifier=cp.derive_nullifier(note, profile).value, root=tree.get_root()
        )
        witness = zkp.Witness(note, index, tree.validation_list(index))
        proof = zkp.prove(crs, statement, witness)
        if not zkp.verify(crs, statement, proof):
            raise ClientError("self-check failed: freshly produced proof does not verify")

        self.store.data["cache"]["root"] = tree_info["root"]
        self.store.data["cache"]["vk_fingerprint"] = vk_info["fingerprint"]
        self.store.save()
        return nfc_tunnel.encode_request_envelope(
            zkp.statement_to_bytes(statement), proof.data, t, note.pk
        )

    def _obtain_crs(self, vk_info: dict) -> zkp.CRS:
        """Proving material, from the plain-file cache when fingerprints agree."""
        base = self.store.directory / "crs"
        meta_path = base.with_suffix(".json")
        if meta_path.exists():
            cached = json.loads(meta_path.read_text())
            if cached.get("fingerprint") == vk_info["fingerprint"]:
                try:
                    return zkp.load_crs(base, require_proving=True)
                except (ValueError, OSError):
                    pass  # cache corrupt; refetch below
        crs_info = self._get("/v1/crs")
        if crs_info["fingerprint"] != vk_info["fingerprint"]:
            raise AsError("published proving and verifying material disagree")
        meta = {k: crs_info[k] for k in ("backend", "depth", "hash_profile", "fingerprint")}
        meta_path.write_text(json.dumps(meta, indent=2) + "\n")
        base.with_suffix(".vk").write_bytes(bytes.fromhex(vk_info["vk"]))
        base.with_suffix(".pk").write_bytes(bytes.fromhex(crs_info["pk"]))
        return zkp.load_crs(base, require_proving=True)

    # -- step 3: the key request --------------------------------------------------------

    def request_key(self, envelope: bytes, t: int | None = None,
                    out_path=None, link=None) -> bytes:
        """Redeems a bundle over the tunnel and decapsulates the key.

        A t override re-encodes the envelope; everything else rides as
        proven. The note backing the bundle is located by its nullifier.
        """
        try:
            statement_raw, proof_raw, _, pk = nfc_tunnel.decode_request_envelope(envelope)
            statement = zkp.statement_from_bytes(statement_raw)
        except (nfc_tunnel.EnvelopeError, ValueError) as exc:
            raise ClientError(f"bundle is not a request envelope: {exc}") from None
        note_id, rec = self._note_for_nullifier(statement.nullifier)
        if rec["status"] == STATUS_SPENT:
            raise StateError(f"note {note_id} is already spent; refusing to retransmit")
        if t is not None:
            envelope = nfc_tunnel.encode_request_envelope(statement_raw, proof_raw, t, pk)

        owned = link is None
        if owned:
            if self.pvs_addr is None:
                raise ClientError("no vending service address configured")
            try:
                link = nfc_tunnel.TcpLink.connect(*self.pvs_addr)
            except OSError as exc:
                raise PvsError(f"vending service unreachable: {exc}") from None
        transcript = nfc_tunnel.Transcript()
        try:
            result = nfc_tunnel.run_key_request_session(link, envelope, transcript=transcript)
        finally:
            self.last_transcript = transcript
            if owned:
                link.close()
        return self._settle(note_id, rec, result, out_path)

    def _settle(self, note_id: str, rec: dict, result: dict, out_path) -> bytes:
        if "key" in result:
            try:
                key = cp.kem_decap(
                    cp.EncapsulatedKey(result["key"]),
                    bytes.fromhex(rec["sk"]),
                    rec["kem_profile"],
                )
            except cp.KemError as exc:
                # the service delivered something, so the nullifier is gone
                self._mark_spent(note_id)
                raise PvsError(f"delivered key unreadable: {exc}", note_spent=True) from None
            self._mark_spent(note_id)
            if out_path is not None:
                _write_key_file(out_path, key)
            return key

        reason = result["error"]
        if reason == "session-aborted":
            if result.get("uploaded"):
                # the request reached the service before the drop; it may
                # have spent the nullifier, so assume the worst
                self._mark_spent(note_id)
                raise PvsError("session aborted after upload; note marked spent",
                               note_spent=True)
            raise PvsError("session aborted before upload; the bundle can be retried")
        if reason in (pvs.REASON_NULLIFIER_SPENT, pvs.REASON_DELIVERY):
            self._mark_spent(note_id)
            raise PvsError(reason, note_spent=True)
        # parameter or proof rejections spend nothing on either side
        raise PvsError(reason)

    def _mark_spent(self, note_id: str) -> None:
        self.store.get(note_id)["status"] = STATUS_SPENT
        self.store.save()

    def _note_for_nullifier(self, nullifier: bytes) -> tuple[str, dict]:
        for note_id, rec in self.store.notes.items():
            note = _record_note(rec)
            if cp.derive_nullifier(note, rec["hash_profile"]).value == nullifier:
                return note_id, rec
        raise ClientError("bundle does not correspond to any note in this store")

    # -- reporting ---------------------------------------------------------------------

    def show(self) -> list[dict]:
        rows = []
        for note_id, rec in sorted(
            self.store.notes.items(), key=lambda kv: kv[1]["created_at"]
        ):
            rows.append({
                "note": note_id,
                "status": rec["status"],
                "lam": rec["lam"],
                "kem_profile": rec["kem_profile"],
                "registered_root": (rec["registered_root"] or "")[:16] or None,
            })
        return rows

    # -- HTTP plumbing -------------------------------------------------------------------

    def _client(self):
        if self.as_url is None:
            raise ClientError("no registrar url configured")
        return self._http or httpx

    def _get(self, path: str) -> dict:
        client = self._client()
        try:
            resp = client.get(self.as_url + path)
        except (httpx.HTTPError, OSError) as exc:
            raise AsError(f"registrar unreachable: {exc}") from None
        return self._payload(resp)

    def _post(self, path: str, body: dict) -> dict:
        client = self._client()
        try:
            resp = client.post(self.as_url + path, json=body)
        except (httpx.HTTPError, OSError) as exc:
            raise AsError(f"registrar unreachable: {exc}") from None
        return self._payload(resp)

    @staticmethod
    def _payload(resp) -> dict:
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail")
            except ValueError:
                detail = None
            raise AsError(detail or f"registrar returned http {resp.status_code}")
        return resp.json()
