"""Wire format, simulated server deployment and fixture storage.

Each query row travels as its own frame and is answered by a frame with the
same sequence number, so the client can line answers up with the rows of the
noise code. Servers derive the common randomness of every retrieval from a
shared seed and a retrieval counter that all of them advance in lockstep.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .field import FieldMismatchError, PrimeField, decode_elements, encode_elements
from .linalg import matrix
from .plan import SchemeParams
from .scheme import build_scheme
from .scheme_low import DecodeSingular, PrecodingBundle, bundle_from_blocks
from .codes import build_noise_code, noise_code_from_generator

MAGIC = b"ETP1"
QUERY, ANSWER, ERROR = 0x01, 0x02, 0x03
HEADER = struct.Struct("<4sB5QQQ")  # magic, type, K N T E q, payload bytes, seq

ERR_FIELD = 1
ERR_PARAMS = 2
ERR_MALFORMED = 3


class FrameError(ValueError):
    pass


class FrameOrderError(FrameError):
    """Answer frames arrived out of sequence."""


class RemoteError(RuntimeError):
    def __init__(self, server: int, code: int):
        super().__init__(f"server {server} returned error code {code}")
        self.server = server
        self.code = code


@dataclass(frozen=True)
class WireFrame:
    ftype: int
    params: tuple[int, int, int, int, int]  # K, N, T, E, q
    seq: int
    payload: np.ndarray

    def encode(self) -> bytes:
        body = encode_elements(self.payload)
        return HEADER.pack(MAGIC, self.ftype, *self.params, len(body), self.seq) + body


def decode_frame(data: bytes, offset: int = 0, field: PrimeField | None = None) -> tuple[WireFrame, int]:
    """Parse one frame starting at ``offset``; returns it and the next offset.

    With ``field`` given, a header declaring any other modulus raises
    FieldMismatchError before the payload is touched.
    """
    if len(data) - offset < HEADER.size:
        raise FrameError("truncated frame header")
    magic, ftype, K, N, T, E, q, length, seq = HEADER.unpack_from(data, offset)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if ftype not in (QUERY, ANSWER, ERROR):
        raise FrameError(f"unknown frame type {ftype:#x}")
    if field is not None and q != field.q:
        raise FieldMismatchError(f"frame declares q={q}, expected {field.q}")
    start = offset + HEADER.size
    if length % 8 or len(data) < start + length:
        raise FrameError("payload length inconsistent with frame")
    raw = data[start:start + length]
    if ftype == ERROR:
        payload = np.frombuffer(raw, dtype="<u8").astype(np.int64)
    else:
        payload = decode_elements(raw, field if field is not None else PrimeField(q))
    return WireFrame(ftype, (K, N, T, E, q), seq, payload), start + length


def decode_stream(data: bytes, field: PrimeField | None = None) -> list[WireFrame]:
    frames, pos = [], 0
    while pos < len(data):
        frame, pos = decode_frame(data, pos, field)
        frames.append(frame)
    return frames


def _header(params: SchemeParams) -> tuple[int, int, int, int, int]:
    return (*params.as_tuple(), params.q)


# ------------------------------------------------------------------ server

@dataclass
class ServerState:
    """One replica: the stored database, the shared seed and the public codes."""

    n: int
    params: SchemeParams
    stored: np.ndarray  # K x width, zero-padded
    seed: int
    scheme: object = dc_field(repr=False)
    counter: int = 0
    reorder: bool = False  # misbehave by sending answers out of order (tests only)
    lock: threading.Lock = dc_field(default_factory=threading.Lock, repr=False)

    def randomness(self, counter: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, counter]))
        return self.scheme.sample_randomness(rng)

    def handle(self, data: bytes) -> bytes:
        """Answer every query frame in ``data``; one retrieval per call."""
        header = _header(self.params)
        try:
            frames = decode_stream(data, self.params.field)
        except FieldMismatchError:
            return _error(header, 0, ERR_FIELD)
        except (FrameError, ValueError):
            return _error(header, 0, ERR_MALFORMED)
        for f in frames:
            if f.params != header or f.ftype != QUERY:
                return _error(header, f.seq, ERR_PARAMS)
        p, s = self.params, self.scheme
        if len(frames) != s.D or any(f.payload.size != p.K * s.width for f in frames):
            return _error(header, frames[0].seq if frames else 0, ERR_MALFORMED)
        with self.lock:
            counter = self.counter
            self.counter += 1
        S = self.randomness(counter)
        query = np.stack([f.payload.reshape(p.K, s.width) for f in frames]).astype(p.field.dtype)
        answers = s.answer(self.n, query, self.stored, S)
        out = [WireFrame(ANSWER, header, f.seq, np.array([a])) for f, a in zip(frames, answers)]
        if self.reorder and len(out) > 1:
            out = out[::-1]
        return b"".join(fr.encode() for fr in out)


def _error(header, seq: int, code: int) -> bytes:
    return WireFrame(ERROR, header, seq, np.array([code])).encode()


# -------------------------------------------------------------- deployment

class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        data = self.rfile.read()
        self.wfile.write(self.server.state.handle(data))


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


@dataclass
class Deployment:
    params: SchemeParams
    scheme: object
    servers: list[ServerState]
    mode: str
    addresses: list[tuple[str, int]] = dc_field(default_factory=list)
    taps: dict[int, list[tuple[str, bytes]]] = dc_field(default_factory=dict)
    _tcp: list[_TCPServer] = dc_field(default_factory=list, repr=False)

    def tap(self, subset) -> None:
        """Copy every frame sent to or from these servers (the eavesdropper)."""
        for n in subset:
            self.taps.setdefault(n, [])

    def exchange(self, n: int, data: bytes) -> bytes:
        if n in self.taps:
            self.taps[n].append(("query", data))
        if self.mode == "inproc":
            reply = self.servers[n - 1].handle(data)
        else:
            with socket.create_connection(self.addresses[n - 1], timeout=30) as conn:
                conn.sendall(data)
                conn.shutdown(socket.SHUT_WR)
                chunks = []
                while chunk := conn.recv(65536):
                    chunks.append(chunk)
                reply = b"".join(chunks)
        if n in self.taps:
            self.taps[n].append(("answer", reply))
        return reply

    def close(self) -> None:
        for srv in self._tcp:
            srv.shutdown()
            srv.server_close()
        self._tcp.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def deploy(params: SchemeParams, messages, *, mode: str = "inproc", seed: int = 0, rng=None,
           scheme=None, retry: bool = False) -> Deployment:
    """Start N servers holding the same messages (K x L) and the same seed."""
    if mode not in ("inproc", "tcp_loopback"):
        raise ValueError(f"unknown deployment mode {mode!r}")
    rng = np.random.default_rng(seed) if rng is None else rng
    scheme = build_scheme(params, rng, retry=retry) if scheme is None else scheme
    stored = scheme.pad(messages)
    stored.setflags(write=False)
    servers = [ServerState(n, params, stored, seed, scheme) for n in range(1, params.N + 1)]
    dep = Deployment(params, scheme, servers, mode)
    if mode == "tcp_loopback":
        for st in servers:
            srv = _TCPServer(("127.0.0.1", 0), _Handler)
            srv.state = st
            threading.Thread(target=srv.serve_forever, daemon=True).start()
            dep._tcp.append(srv)
            dep.addresses.append(srv.server_address)
    return dep


@dataclass(frozen=True)
class RetrievalResult:
    k: int
    message: np.ndarray | None
    answers: np.ndarray  # N x D
    download: int
    error: str | None
    summary: dict

    @property
    def ok(self) -> bool:
        return self.error is None


def query_frames(params: SchemeParams, query: np.ndarray, base_seq: int) -> bytes:
    header = _header(params)
    return b"".join(WireFrame(QUERY, header, base_seq + r, row.reshape(-1)).encode()
                    for r, row in enumerate(query))


def parse_answers(n: int, params: SchemeParams, data: bytes, base_seq: int, count: int) -> np.ndarray:
    frames = decode_stream(data)
    for f in frames:
        if f.ftype == ERROR:
            raise RemoteError(n, int(f.payload[0]) if f.payload.size else 0)
    if len(frames) != count:
        raise FrameError(f"server {n} sent {len(frames)} answers, expected {count}")
    for r, f in enumerate(frames):
        if f.seq != base_seq + r:
            raise FrameOrderError(f"server {n}: answer seq {f.seq} where {base_seq + r} was due")
        if f.ftype != ANSWER or f.payload.size != 1:
            raise FrameError(f"server {n}: malformed answer frame")
    return np.array([int(f.payload[0]) for f in frames], dtype=np.int64).astype(params.field.dtype)


def retrieve(dep: Deployment, k: int, rng=None, *, base_seq: int = 0) -> RetrievalResult:
    """Send all N queries concurrently, join on the answers, then decode."""
    p, s = dep.params, dep.scheme
    rng = np.random.default_rng() if rng is None else rng
    session = s.open(k, rng)
    Q = s.queries(session)

    def one(n: int) -> np.ndarray:
        reply = dep.exchange(n, query_frames(p, Q[n - 1], base_seq))
        return parse_answers(n, p, reply, base_seq, s.D)

    with ThreadPoolExecutor(max_workers=p.N) as pool:
        answers = np.stack(list(pool.map(one, range(1, p.N + 1))))
    summary = {"regime": s.regime, "mode": s.mode, "download": int(answers.size), "L": s.counts.L,
               "rate": f"{s.counts.L}/{answers.size}", "privacy_certified": s.privacy_certified(session)}
    try:
        message = s.decode(session, answers)
        return RetrievalResult(k, message, answers, int(answers.size), None, summary)
    except DecodeSingular as exc:
        return RetrievalResult(k, None, answers, int(answers.size), f"decode_singular: {exc}", summary)


def captured_queries(dep: Deployment) -> np.ndarray:
    """Rebuild the (N, D, K, width) query array from tapped frames; untapped servers stay zero."""
    p, s = dep.params, dep.scheme
    Q = np.zeros((p.N, s.D, p.K, s.width), dtype=np.int64).astype(p.field.dtype)
    for n, log in dep.taps.items():
        sent = [data for direction, data in log if direction == "query"]
        if sent:
            frames = decode_stream(sent[-1])
            Q[n - 1] = np.stack([f.payload.reshape(p.K, s.width) for f in frames])
    return Q


# ----------------------------------------------------------------- storage

def save_messages(directory, params: SchemeParams, W) -> Path:
    """Write K x L messages as flat little-endian elements plus a JSON sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    W = params.field.array(W)
    (d / "messages.bin").write_bytes(encode_elements(W.reshape(-1)))
    K, N, T, E = params.as_tuple()
    meta = {"schema": "messages_v1", "K": K, "N": N, "T": T, "E": E, "q": params.q,
            "L": int(W.shape[1])}
    (d / "messages.json").write_text(json.dumps(meta, indent=2) + "\n")
    return d


def load_messages(directory) -> tuple[SchemeParams, np.ndarray]:
    d = Path(directory)
    meta = json.loads((d / "messages.json").read_text())
    params = SchemeParams(meta["K"], meta["N"], meta["T"], meta["E"], meta["q"])
    flat = decode_elements((d / "messages.bin").read_bytes(), params.field)
    if flat.size != meta["K"] * meta["L"]:
        raise ValueError(f"messages.bin holds {flat.size} elements, sidecar promises {meta['K'] * meta['L']}")
    return params, flat.reshape(meta["K"], meta["L"])


def save_bundle(path, bundle: PrecodingBundle) -> Path:
    """Persist a LowE precoding bundle (noise generator, desired precoding, M blocks) as JSON."""
    K, N, T, E = bundle.params.as_tuple()
    doc = {
        "schema": "bundle_v1", "K": K, "N": N, "T": T, "E": E, "q": bundle.params.q,
        "C_S": bundle.noise.C_S.tolist(),
        "G_desired": bundle.G_desired.tolist(),
        "M_lower": [lp.M_lower.tolist() for lp in bundle.G_pairs],
    }
    path = Path(path)
    path.write_text(json.dumps(doc) + "\n")
    return path


def load_bundle(path) -> PrecodingBundle:
    doc = json.loads(Path(path).read_text())
    params = SchemeParams(doc["K"], doc["N"], doc["T"], doc["E"], doc["q"])
    F = params.field
    noise = noise_code_from_generator(matrix(doc["C_S"], F)) if doc["E"] else build_noise_code(params.N, 0, F)
    G = matrix(doc["G_desired"], F)
    blocks = [matrix(m, F) for m in doc["M_lower"]]
    return bundle_from_blocks(params, noise, G, blocks)

