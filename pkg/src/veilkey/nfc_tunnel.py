"""APDU-framed request/response tunnel emulating a reader/smart-card link.

The verification service plays the reader and drives every exchange; the
user's device plays the card and only ever answers. A session is: SELECT,
pull the request payload in 250-byte chunks, process, push the response
payload, End Transmission. Payloads are opaque here; the envelope codecs
at the bottom define the one message kind the key-request flow needs.

Transports are local byte streams (in-process queue pair or TCP) with
2-byte length framing, an optional bytes/sec rate limit, and optional
transcript capture for the reader-initiates checker.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

CHUNK_SIZE = 250
MAX_PAYLOAD = 1 << 20
DEFAULT_AID = bytes.fromhex("A0000056454B4559")  # "VKEY" under a test RID

CLA_ISO = 0x00
CLA_APP = 0x80
INS_SELECT = 0xA4
INS_GET_LENGTH = 0x10
INS_GET_CHUNK = 0x12
INS_SET_LENGTH = 0x20
INS_SEND_CHUNK = 0x22
INS_END = 0x30

SW_OK = 0x9000
SW_WRONG_LENGTH = 0x6700
SW_NOT_FOUND = 0x6A82
SW_CONDITIONS = 0x6985

_SW_NAMES = {
    SW_OK: "ok",
    SW_WRONG_LENGTH: "wrong-length",
    SW_NOT_FOUND: "applet-not-found",
    SW_CONDITIONS: "conditions-not-satisfied",
}


class FramingError(Exception):
    pass


class TransportDropped(Exception):
    pass


class SessionError(Exception):
    """Reader-side session failure; carries the offending status word."""

    def __init__(self, message: str, sw: int | None = None):
        self.sw = sw
        if sw is not None:
            message = f"{message} (status {sw:#06x} {_SW_NAMES.get(sw, 'unknown')})"
        super().__init__(message)


# ---------------------------------------------------------------------------
# APDU frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ApduCommand:
    cla: int
    ins: int
    p1: int = 0
    p2: int = 0
    data: bytes = b""
    le: int | None = None

    def encode(self) -> bytes:
        if len(self.data) > CHUNK_SIZE:
            raise FramingError(f"command data exceeds {CHUNK_SIZE} bytes")
        out = bytes([self.cla, self.ins, self.p1, self.p2])
        if self.data:
            out += bytes([len(self.data)]) + self.data
        if self.le is not None:
            out += bytes([self.le & 0xFF])
        if len(out) > 255:
            raise FramingError("encoded frame exceeds 255 bytes")
        return out

    @classmethod
    def decode(cls, frame: bytes) -> "ApduCommand":
        n = len(frame)
        if n < 4 or n > 255:
            raise FramingError(f"command frame length {n} outside [4, 255]")
        cla, ins, p1, p2 = frame[0], frame[1], frame[2], frame[3]
        if n == 4:
            return cls(cla, ins, p1, p2)
        if n == 5:
            return cls(cla, ins, p1, p2, le=frame[4])
        lc = frame[4]
        if lc == 0 or lc > CHUNK_SIZE:
            raise FramingError(f"bad lc byte {lc}")
        if n == 5 + lc:
            return cls(cla, ins, p1, p2, data=frame[5 : 5 + lc])
        if n == 6 + lc:
            return cls(cla, ins, p1, p2, data=frame[5 : 5 + lc], le=frame[5 + lc])
        raise FramingError("command frame length does not match its lc byte")


@dataclass(frozen=True)
class ApduResponse:
    data: bytes = b""
    sw: int = SW_OK

    def encode(self) -> bytes:
        return self.data + self.sw.to_bytes(2, "big")

    @classmethod
    def decode(cls, frame: bytes) -> "ApduResponse":
        if len(frame) < 2:
            raise FramingError("response frame shorter than a status word")
        return cls(data=frame[:-2], sw=int.from_bytes(frame[-2:], "big"))

    @property
    def ok(self) -> bool:
        return self.sw == SW_OK


def chunk_count(length: int) -> int:
    return (length + CHUNK_SIZE - 1) // CHUNK_SIZE


def split_chunks(payload: bytes) -> list[bytes]:
    return [payload[i : i + CHUNK_SIZE] for i in range(0, len(payload), CHUNK_SIZE)]


# ---------------------------------------------------------------------------
# Transports: length-delimited frames over a local stream
# ---------------------------------------------------------------------------


class RateLimit:
    """Models a slow link by sleeping len/rate per frame on send."""

    def __init__(self, bytes_per_second: float, sleep=time.sleep):
        if bytes_per_second <= 0:
            raise ValueError("rate must be positive")
        self.bytes_per_second = bytes_per_second
        self._sleep = sleep

    def charge(self, n_bytes: int) -> None:
        self._sleep(n_bytes / self.bytes_per_second)


class InProcessLink:
    """One endpoint of a queue-backed duplex pipe."""

    _CLOSE = object()

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, rate_limit: RateLimit | None = None):
        self._inbox = inbox
        self._outbox = outbox
        self._rate = rate_limit
        self._closed = False

    @classmethod
    def pair(cls, rate_limit: RateLimit | None = None) -> tuple["InProcessLink", "InProcessLink"]:
        a_to_b: queue.Queue = queue.Queue()
        b_to_a: queue.Queue = queue.Queue()
        return cls(b_to_a, a_to_b, rate_limit), cls(a_to_b, b_to_a, rate_limit)

    def send_frame(self, frame: bytes) -> None:
        if self._closed:
            raise TransportDropped("link closed")
        if self._rate is not None:
            self._rate.charge(len(frame) + 2)
        self._outbox.put(frame)

    def recv_frame(self, timeout: float | None = 30.0) -> bytes | None:
        if self._closed:
            return None
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is self._CLOSE:
            return None
        return item

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(self._CLOSE)


class TcpLink:
    """Length-prefixed frames over a TCP socket."""

    def __init__(self, sock: socket.socket, rate_limit: RateLimit | None = None):
        self._sock = sock
        self._rate = rate_limit
        self._lock = threading.Lock()

    @classmethod
    def connect(cls, host: str, port: int, rate_limit: RateLimit | None = None,
                timeout: float = 30.0) -> "TcpLink":
        sock = socket.create_connection((host, port), timeout=timeout)
        return cls(sock, rate_limit)

    def send_frame(self, frame: bytes) -> None:
        if self._rate is not None:
            self._rate.charge(len(frame) + 2)
        try:
            with self._lock:
                self._sock.sendall(struct.pack(">H", len(frame)) + frame)
        except OSError as exc:
            raise TransportDropped(str(exc)) from None

    def _recv_exact(self, n: int) -> bytes | None:
        buf = b""
        while len(buf) < n:
            try:
                part = self._sock.recv(n - len(buf))
            except OSError:
                return None
            if not part:
                return None
            buf += part
        return buf

    def recv_frame(self, timeout: float | None = 30.0) -> bytes | None:
        self._sock.settimeout(timeout)
        head = self._recv_exact(2)
        if head is None:
            return None
        (length,) = struct.unpack(">H", head)
        return self._recv_exact(length)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


# ---------------------------------------------------------------------------
# Transcript capture and the reader-initiates checker
# ---------------------------------------------------------------------------


@dataclass
class Transcript:
    entries: list[tuple[str, bytes]] = field(default_factory=list)

    def record(self, direction: str, frame: bytes) -> None:
        self.entries.append((direction, frame))


def check_reader_initiates(transcript: Transcript) -> bool:
    """Every card frame must answer exactly one reader frame.

    The transcript alternates strictly cmd, rsp, cmd, rsp, ... starting
    with a command; an unsolicited card frame or a doubled direction
    fails the check.
    """
    entries = transcript.entries
    if not entries:
        return True
    for i, (direction, _) in enumerate(entries):
        expected = "cmd" if i % 2 == 0 else "rsp"
        if direction != expected:
            return False
    return len(entries) % 2 == 0


# ---------------------------------------------------------------------------
# Card endpoint (the user's device: answers, never initiates)
# ---------------------------------------------------------------------------


class CardEndpoint:
    """Holds one outbound payload; accumulates the pushed response.

    After End Transmission the applet deselects itself, so a new session
    over the same stream starts from the unselected state.
    """

    def __init__(self, payload: bytes, aid: bytes = DEFAULT_AID):
        if len(payload) > MAX_PAYLOAD:
            raise ValueError("payload too large")
        self.payload = payload
        self.aid = aid
        self.result: bytes | None = None
        self.ended = False
        self._selected = False
        self._chunks = split_chunks(payload)
        self._served: set[int] = set()
        self._reset_receive()

    @property
    def upload_complete(self) -> bool:
        """True once the reader has pulled every request chunk."""
        return len(self._served) == len(self._chunks)

    def _reset_receive(self) -> None:
        self._expected_len: int | None = None
        self._received: list[bytes] = []

    def handle(self, cmd: ApduCommand) -> ApduResponse:
        if cmd.cla == CLA_ISO and cmd.ins == INS_SELECT:
            if cmd.data == self.aid:
                self._selected = True
                self._reset_receive()
                return ApduResponse()
            return ApduResponse(sw=SW_NOT_FOUND)
        if not self._selected:
            return ApduResponse(sw=SW_CONDITIONS)
        if cmd.cla != CLA_APP:
            return ApduResponse(sw=SW_CONDITIONS)

        if cmd.ins == INS_GET_LENGTH:
            return ApduResponse(data=len(self.payload).to_bytes(4, "big"))

        if cmd.ins == INS_GET_CHUNK:
            index = (cmd.p1 << 8) | cmd.p2
            if index >= len(self._chunks):
                return ApduResponse(sw=SW_WRONG_LENGTH)
            self._served.add(index)
            return ApduResponse(data=self._chunks[index])

        if cmd.ins == INS_SET_LENGTH:
            if len(cmd.data) != 4:
                return ApduResponse(sw=SW_WRONG_LENGTH)
            length = int.from_bytes(cmd.data, "big")
            if length > MAX_PAYLOAD:
                return ApduResponse(sw=SW_WRONG_LENGTH)
            self._expected_len = length
            self._received = []
            if length == 0:
                self.result = b""
            return ApduResponse()

        if cmd.ins == INS_SEND_CHUNK:
            if self._expected_len is None:
                return ApduResponse(sw=SW_CONDITIONS)
            index = (cmd.p1 << 8) | cmd.p2
            if index == len(self._received) - 1:
                return ApduResponse()  # duplicate of the last chunk: idempotent
            if index != len(self._received):
                self._reset_receive()  # out of order: abort the transfer
                return ApduResponse(sw=SW_CONDITIONS)
            self._received.append(cmd.data)
            total = sum(len(c) for c in self._received)
            if total > self._expected_len:
                self._reset_receive()
                return ApduResponse(sw=SW_WRONG_LENGTH)
            if total == self._expected_len:
                self.result = b"".join(self._received)
            return ApduResponse()

        if cmd.ins == INS_END:
            self.ended = True
            self._selected = False
            return ApduResponse()

        return ApduResponse(sw=SW_CONDITIONS)

    def serve(self, link, transcript: Transcript | None = None) -> None:
        """Answer commands until End Transmission or transport drop."""
        while not self.ended:
            frame = link.recv_frame()
            if frame is None:
                return
            if transcript is not None:
                transcript.record("cmd", frame)
            try:
                response = self.handle(ApduCommand.decode(frame))
            except FramingError:
                response = ApduResponse(sw=SW_WRONG_LENGTH)
            out = response.encode()
            if transcript is not None:
                transcript.record("rsp", out)
            try:
                link.send_frame(out)
            except TransportDropped:
                return


# ---------------------------------------------------------------------------
# Reader endpoint (the verification service: drives the session)
# ---------------------------------------------------------------------------


class ReaderSession:
    def __init__(self, link, aid: bytes = DEFAULT_AID, transcript: Transcript | None = None):
        self.link = link
        self.aid = aid
        self.transcript = transcript
        self.timings: dict[str, float] = {}

    def _exchange(self, cmd: ApduCommand) -> ApduResponse:
        frame = cmd.encode()
        if self.transcript is not None:
            self.transcript.record("cmd", frame)
        self.link.send_frame(frame)
        raw = self.link.recv_frame()
        if raw is None:
            raise TransportDropped("peer went away mid-session")
        if self.transcript is not None:
            self.transcript.record("rsp", raw)
        return ApduResponse.decode(raw)

    def select(self) -> None:
        rsp = self._exchange(ApduCommand(CLA_ISO, INS_SELECT, 0x04, 0x00, data=self.aid))
        if not rsp.ok:
            raise SessionError("applet selection failed", rsp.sw)

    def pull_payload(self) -> bytes:
        rsp = self._exchange(ApduCommand(CLA_APP, INS_GET_LENGTH))
        if not rsp.ok or len(rsp.data) != 4:
            raise SessionError("length query failed", rsp.sw)
        length = int.from_bytes(rsp.data, "big")
        if length > MAX_PAYLOAD:
            raise SessionError("peer announced an oversized payload")
        parts = []
        for index in range(chunk_count(length)):
            rsp = self._exchange(ApduCommand(CLA_APP, INS_GET_CHUNK, index >> 8, index & 0xFF))
            if not rsp.ok:
                raise SessionError(f"chunk {index} retrieval failed", rsp.sw)
            parts.append(rsp.data)
        payload = b"".join(parts)
        if len(payload) != length:
            raise SessionError("reassembled payload length mismatch")
        return payload

    def push_payload(self, payload: bytes) -> None:
        rsp = self._exchange(
            ApduCommand(CLA_APP, INS_SET_LENGTH, data=len(payload).to_bytes(4, "big"))
        )
        if not rsp.ok:
            raise SessionError("length announcement failed", rsp.sw)
        for index, chunk in enumerate(split_chunks(payload)):
            rsp = self._exchange(ApduCommand(CLA_APP, INS_SEND_CHUNK, index >> 8, index & 0xFF, data=chunk))
            if not rsp.ok:
                raise SessionError(f"chunk {index} push failed", rsp.sw)

    def end(self) -> None:
        self._exchange(ApduCommand(CLA_APP, INS_END))

    def run(self, process) -> None:
        """Full session: select, pull request, process, push response, end.

        `process` maps request payload bytes to response payload bytes.
        Timings per phase land in self.timings for the bench harness.
        """
        t0 = time.perf_counter()
        self.select()
        t1 = time.perf_counter()
        request = self.pull_payload()
        t2 = time.perf_counter()
        response = process(request)
        t3 = time.perf_counter()
        self.push_payload(response)
        self.end()
        t4 = time.perf_counter()
        self.timings = {
            "select": t1 - t0,
            "pull": t2 - t1,
            "process": t3 - t2,
            "push": t4 - t3,
        }


# ---------------------------------------------------------------------------
# Key-request envelopes
# ---------------------------------------------------------------------------

ENVELOPE_VERSION = 1
_TAG_STATEMENT = 0x01
_TAG_PROOF = 0x02
_TAG_T = 0x03
_TAG_PK = 0x04
_TAG_KEY = 0x10
_TAG_ERROR = 0x11


class EnvelopeError(Exception):
    pass


def _tlv(tag: int, value: bytes) -> bytes:
    return bytes([tag]) + len(value).to_bytes(4, "big") + value


def _parse_tlv(data: bytes) -> dict[int, bytes]:
    fields: dict[int, bytes] = {}
    pos = 0
    while pos < len(data):
        if pos + 5 > len(data):
            raise EnvelopeError("truncated field header")
        tag = data[pos]
        length = int.from_bytes(data[pos + 1 : pos + 5], "big")
        pos += 5
        if pos + length > len(data):
            raise EnvelopeError("field value overruns the envelope")
        if tag in fields:
            raise EnvelopeError(f"duplicate field tag {tag:#04x}")
        fields[tag] = data[pos : pos + length]
        pos += length
    return fields


def encode_request_envelope(statement: bytes, proof: bytes, t: int, pk: bytes) -> bytes:
    if not 0 <= t < 1 << 32:
        raise EnvelopeError("t does not fit the 4-byte field")
    return (
        bytes([ENVELOPE_VERSION])
        + _tlv(_TAG_STATEMENT, statement)
        + _tlv(_TAG_PROOF, proof)
        + _tlv(_TAG_T, t.to_bytes(4, "big"))
        + _tlv(_TAG_PK, pk)
    )


def decode_request_envelope(data: bytes) -> tuple[bytes, bytes, int, bytes]:
    if not data or data[0] != ENVELOPE_VERSION:
        raise EnvelopeError("unknown envelope version")
    fields = _parse_tlv(data[1:])
    try:
        statement = fields[_TAG_STATEMENT]
        proof = fields[_TAG_PROOF]
        t_raw = fields[_TAG_T]
        pk = fields[_TAG_PK]
    except KeyError as exc:
        raise EnvelopeError(f"missing field tag {exc.args[0]:#04x}") from None
    if len(t_raw) != 4:
        raise EnvelopeError("t field must be 4 bytes")
    return statement, proof, int.from_bytes(t_raw, "big"), pk


def encode_response_key(ciphertext: bytes) -> bytes:
    return bytes([ENVELOPE_VERSION]) + _tlv(_TAG_KEY, ciphertext)


def encode_response_error(reason: str) -> bytes:
    return bytes([ENVELOPE_VERSION]) + _tlv(_TAG_ERROR, reason.encode("utf-8"))


def decode_response_envelope(data: bytes) -> tuple[str, bytes | str]:
    if not data or data[0] != ENVELOPE_VERSION:
        raise EnvelopeError("unknown envelope version")
    fields = _parse_tlv(data[1:])
    if _TAG_KEY in fields:
        return "key", fields[_TAG_KEY]
    if _TAG_ERROR in fields:
        return "error", fields[_TAG_ERROR].decode("utf-8", errors="replace")
    raise EnvelopeError("response carries neither a key nor an error")


def run_key_request_session(
    link, envelope: bytes, aid: bytes = DEFAULT_AID, transcript: Transcript | None = None
) -> dict:
    """Card-side driver: serve the reader until End Transmission.

    Returns {"key": ciphertext bytes} or {"error": reason}. A transport
    drop before the response arrived reports "session-aborted" plus
    whether the upload had finished (if it had, the server may already
    have spent the nullifier).
    """
    card = CardEndpoint(envelope, aid)
    card.serve(link, transcript)
    if card.result is None:
        return {"error": "session-aborted", "uploaded": card.upload_complete}
    try:
        kind, value = decode_response_envelope(card.result)
    except EnvelopeError as exc:
        return {"error": f"malformed-response: {exc}"}
    return {kind: value}
