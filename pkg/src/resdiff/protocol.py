"""Wire protocol for out-of-process predictors.

A predictor server is any program that answers framed predict requests
over standard streams (child process) or a TCP connection. Exactly one
request may be in flight per connection.

Frame layout (all integers little-endian)::

    offset  size  field
    0       4     magic "DGPR"
    4       1     protocol version (1)
    5       1     message type
    6       4     payload length (uint32)
    10      ...   payload

Message types::

    0  HELLO             payload: uint8 version (sent by both sides
                         once at connect; versions must match)
    1  PREDICT_REQUEST   payload:
                           float64  t
                           float64  alpha_bar
                           float64  beta_bar
                           float64  delta_bar
                           uint8    flags (bit0 want_eps, bit1 want_gradient)
                           uint8    ndim
                           uint32*  extents (ndim entries, all nonzero)
                           float32* x_t     (prod(extents) entries)
                           float32* x_in    (prod(extents) entries)
    2  PREDICT_RESPONSE  payload:
                           uint8    status
                           status 0 (ok):
                             uint8    flags (bit0 has_eps, bit1 has_gradient)
                             uint8    ndim
                             uint32*  extents
                             float32* res
                             float32* eps       (iff has_eps)
                             float32* gradient  (iff has_gradient)
                           status != 0 (error):
                             uint16   message length
                             bytes    utf-8 message

Header reals are 64-bit and tensor payloads 32-bit, so a round trip
through the wire quantizes tensors to float32. Response statuses: 0 ok,
1 malformed or internal failure, 2 invalid shape (zero extent or length
mismatch), 3 requested capability missing.
"""

from __future__ import annotations

import os
import select
import shlex
import socket
import struct
import subprocess
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .fields import as_field, same_shape
from .predictors import Predictor, PredictorOutput
from .schedule import Schedule

__all__ = [
    "PROTOCOL_VERSION",
    "MAGIC",
    "MSG_HELLO",
    "MSG_PREDICT_REQUEST",
    "MSG_PREDICT_RESPONSE",
    "STATUS_OK",
    "STATUS_MALFORMED",
    "STATUS_INVALID_SHAPE",
    "STATUS_CAPABILITY_MISSING",
    "ProtocolError",
    "InvalidShapeError",
    "PredictRequest",
    "PredictResponse",
    "encode_frame",
    "read_frame",
    "encode_request",
    "decode_request",
    "encode_response",
    "decode_response",
    "ExternalPredictor",
    "spawn_external_predictor",
    "serve_connection",
    "serve_stdio",
    "serve_tcp",
    "ConformanceReport",
    "conformance_check",
]

PROTOCOL_VERSION = 1
MAGIC = b"DGPR"
HEADER = struct.Struct("<4sBBI")

MSG_HELLO = 0
MSG_PREDICT_REQUEST = 1
MSG_PREDICT_RESPONSE = 2

STATUS_OK = 0
STATUS_MALFORMED = 1
STATUS_INVALID_SHAPE = 2
STATUS_CAPABILITY_MISSING = 3

# refuse absurd frames before allocating
_MAX_PAYLOAD = 1 << 30


class ProtocolError(Exception):
    """Wire-level failure; ``status`` holds the peer's status code when
    the failure was reported by a well-formed error response."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class InvalidShapeError(ProtocolError):
    def __init__(self, message: str):
        super().__init__(message, status=STATUS_INVALID_SHAPE)


@dataclass
class PredictRequest:
    t: float
    alpha_bar: float
    beta_bar: float
    delta_bar: float
    x_t: np.ndarray
    x_in: np.ndarray
    want_eps: bool = True
    want_gradient: bool = False


@dataclass
class PredictResponse:
    status: int = STATUS_OK
    message: str = ""
    res: np.ndarray | None = None
    eps: np.ndarray | None = None
    gradient: np.ndarray | None = None


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    return HEADER.pack(MAGIC, PROTOCOL_VERSION, msg_type, len(payload)) + payload


def _tensor_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def encode_request(req: PredictRequest) -> bytes:
    """Frame a predict request; tensors are cast to float32."""
    x_t = np.asarray(req.x_t)
    x_in = np.asarray(req.x_in)
    if x_t.shape != x_in.shape:
        raise ProtocolError(f"x_t and x_in shapes differ: {x_t.shape} vs {x_in.shape}")
    if x_t.ndim == 0 or x_t.ndim > 255 or x_t.size == 0:
        raise InvalidShapeError(f"unsupported tensor shape {x_t.shape}")
    flags = (1 if req.want_eps else 0) | (2 if req.want_gradient else 0)
    head = struct.pack(
        "<ddddBB", req.t, req.alpha_bar, req.beta_bar, req.delta_bar, flags, x_t.ndim
    )
    extents = struct.pack(f"<{x_t.ndim}I", *x_t.shape)
    payload = head + extents + _tensor_bytes(x_t) + _tensor_bytes(x_in)
    return encode_frame(MSG_PREDICT_REQUEST, payload)


def decode_request(payload: bytes) -> PredictRequest:
    """Parse a predict-request payload.

    Raises :class:`InvalidShapeError` for zero extents and
    :class:`ProtocolError` for any other malformation, so servers can
    map the two to their distinct statuses.
    """
    try:
        t, alpha, beta, delta, flags, ndim = struct.unpack_from("<ddddBB", payload, 0)
        off = 34
        extents = struct.unpack_from(f"<{ndim}I", payload, off)
        off += 4 * ndim
    except struct.error as exc:
        raise ProtocolError(f"malformed predict request: {exc}") from exc
    if ndim == 0 or any(e == 0 for e in extents):
        raise InvalidShapeError(f"invalid tensor shape {tuple(extents)}")
    n = 1
    for e in extents:
        n *= e
    need = off + 2 * 4 * n
    if len(payload) != need:
        raise ProtocolError(
            f"predict request length {len(payload)} != expected {need} for shape {tuple(extents)}"
        )
    x_t = np.frombuffer(payload, dtype="<f4", count=n, offset=off).reshape(extents)
    x_in = np.frombuffer(payload, dtype="<f4", count=n, offset=off + 4 * n).reshape(extents)
    return PredictRequest(
        t=t, alpha_bar=alpha, beta_bar=beta, delta_bar=delta,
        x_t=x_t.astype(np.float64), x_in=x_in.astype(np.float64),
        want_eps=bool(flags & 1), want_gradient=bool(flags & 2),
    )


def encode_response(resp: PredictResponse) -> bytes:
    if resp.status != STATUS_OK:
        msg = resp.message.encode("utf-8")[:65535]
        payload = struct.pack("<BH", resp.status, len(msg)) + msg
        return encode_frame(MSG_PREDICT_RESPONSE, payload)
    res = np.asarray(resp.res)
    if res.ndim == 0 or res.size == 0 or res.ndim > 255:
        raise InvalidShapeError(f"unsupported tensor shape {res.shape}")
    flags = (1 if resp.eps is not None else 0) | (2 if resp.gradient is not None else 0)
    payload = struct.pack("<BBB", STATUS_OK, flags, res.ndim)
    payload += struct.pack(f"<{res.ndim}I", *res.shape)
    payload += _tensor_bytes(res)
    if resp.eps is not None:
        payload += _tensor_bytes(np.asarray(resp.eps).reshape(res.shape))
    if resp.gradient is not None:
        payload += _tensor_bytes(np.asarray(resp.gradient).reshape(res.shape))
    return encode_frame(MSG_PREDICT_RESPONSE, payload)


def decode_response(payload: bytes) -> PredictResponse:
    try:
        (status,) = struct.unpack_from("<B", payload, 0)
        if status != STATUS_OK:
            (mlen,) = struct.unpack_from("<H", payload, 1)
            msg = payload[3 : 3 + mlen].decode("utf-8", "replace")
            return PredictResponse(status=status, message=msg)
        flags, ndim = struct.unpack_from("<BB", payload, 1)
        off = 3
        extents = struct.unpack_from(f"<{ndim}I", payload, off)
        off += 4 * ndim
    except struct.error as exc:
        raise ProtocolError(f"malformed predict response: {exc}") from exc
    if ndim == 0 or any(e == 0 for e in extents):
        raise InvalidShapeError(f"invalid tensor shape {tuple(extents)}")
    n = 1
    for e in extents:
        n *= e
    tensors = 1 + (1 if flags & 1 else 0) + (1 if flags & 2 else 0)
    if len(payload) != off + tensors * 4 * n:
        raise ProtocolError("predict response length mismatch")

    def take(i):
        return (
            np.frombuffer(payload, dtype="<f4", count=n, offset=off + i * 4 * n)
            .reshape(extents)
            .astype(np.float64)
        )

    res = take(0)
    idx = 1
    eps = gradient = None
    if flags & 1:
        eps = take(idx)
        idx += 1
    if flags & 2:
        gradient = take(idx)
    return PredictResponse(status=STATUS_OK, res=res, eps=eps, gradient=gradient)


class _Transport:
    """Blocking byte transport with a deadline, over a socket or a raw
    fd pair. One in-flight request: send, then read to completion.

    Pipes are read with select + os.read on the raw descriptor (never a
    buffered wrapper, whose internal buffer would defeat select).
    """

    def __init__(self, sock=None, rfd=None, wfd=None, proc=None):
        self._sock = sock
        self._rfd = rfd
        self._wfd = wfd
        self._proc = proc

    def send(self, data: bytes) -> None:
        if self._sock is not None:
            self._sock.sendall(data)
            return
        view = memoryview(data)
        while view:
            written = os.write(self._wfd, view)
            view = view[written:]

    def recv_exact(self, n: int, timeout: float) -> bytes:
        deadline = time.monotonic() + timeout
        chunks = []
        got = 0
        while got < n:
            remain = deadline - time.monotonic()
            if remain <= 0:
                raise ProtocolError(f"timed out reading {n} bytes (got {got})")
            if self._sock is not None:
                self._sock.settimeout(remain)
                try:
                    chunk = self._sock.recv(n - got)
                except socket.timeout:
                    continue
            else:
                ready, _, _ = select.select([self._rfd], [], [], remain)
                if not ready:
                    continue
                chunk = os.read(self._rfd, n - got)
            if not chunk:
                raise ProtocolError("peer closed the connection mid-frame")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        if self._proc is not None:
            # closing the child's stdin signals a clean shutdown
            for stream in (self._proc.stdin, self._proc.stdout):
                try:
                    if stream is not None:
                        stream.close()
                except OSError:
                    pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait(timeout=5)


def read_frame(transport: _Transport, timeout: float) -> tuple[int, bytes]:
    """Read one frame; returns (message type, payload)."""
    head = transport.recv_exact(HEADER.size, timeout)
    magic, version, msg_type, length = HEADER.unpack(head)
    if magic != MAGIC:
        raise ProtocolError(f"bad frame magic {magic!r}")
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"protocol version mismatch: peer {version}, local {PROTOCOL_VERSION}")
    if length > _MAX_PAYLOAD:
        raise ProtocolError(f"frame payload {length} exceeds limit")
    payload = transport.recv_exact(length, timeout) if length else b""
    return msg_type, payload


class ExternalPredictor(Predictor):
    """Client adapter: a remote predictor behind the Predictor interface.

    Wire tensors are float32, so round trips quantize values; the
    request carries the schedule coefficients at t so servers stay
    schedule-agnostic. Gradient capability is probed per call: a
    capability-missing status maps to None, matching the in-process
    convention.
    """

    def __init__(self, transport: _Transport, timeout: float = 30.0, label: str = "external"):
        self._transport = transport
        self.timeout = timeout
        self.label = label
        self._closed = False
        self._handshake()

    def _handshake(self) -> None:
        self._transport.send(encode_frame(MSG_HELLO, bytes([PROTOCOL_VERSION])))
        msg_type, payload = read_frame(self._transport, self.timeout)
        if msg_type != MSG_HELLO or len(payload) != 1:
            raise ProtocolError("handshake failed: expected a hello frame")
        if payload[0] != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: peer {payload[0]}, local {PROTOCOL_VERSION}"
            )

    def _roundtrip(self, frame: bytes) -> PredictResponse:
        if self._closed:
            raise ProtocolError("predictor connection is closed")
        self._transport.send(frame)
        msg_type, payload = read_frame(self._transport, self.timeout)
        if msg_type != MSG_PREDICT_RESPONSE:
            raise ProtocolError(f"expected a predict response, got message type {msg_type}")
        return decode_response(payload)

    def _request(self, x_t, x_in, t, schedule, want_eps, want_gradient) -> PredictResponse:
        x_t = as_field(x_t, "x_t")
        x_in = as_field(x_in, "x_in")
        same_shape(x_t, x_in)
        alpha, beta, delta = schedule.eval(t)
        req = PredictRequest(
            t=float(t), alpha_bar=alpha, beta_bar=beta, delta_bar=delta,
            x_t=x_t, x_in=x_in, want_eps=want_eps, want_gradient=want_gradient,
        )
        return self._roundtrip(encode_request(req))

    def predict(self, x_t, x_in, t, schedule) -> PredictorOutput:
        resp = self._request(x_t, x_in, t, schedule, want_eps=True, want_gradient=False)
        if resp.status != STATUS_OK:
            raise ProtocolError(
                f"{self.label} predictor failed (status {resp.status}): {resp.message}",
                status=resp.status,
            )
        res = resp.res.reshape(np.asarray(x_t).shape)
        if resp.eps is None:
            return PredictorOutput(res=res, eps=None, derived_eps=True)
        return PredictorOutput(res=res, eps=resp.eps.reshape(res.shape))

    def guidance_gradient(self, x_t, x_in, t, schedule) -> np.ndarray | None:
        resp = self._request(x_t, x_in, t, schedule, want_eps=False, want_gradient=True)
        if resp.status == STATUS_CAPABILITY_MISSING:
            return None
        if resp.status != STATUS_OK:
            raise ProtocolError(
                f"{self.label} predictor failed (status {resp.status}): {resp.message}",
                status=resp.status,
            )
        if resp.gradient is None:
            raise ProtocolError("server omitted the requested gradient")
        return resp.gradient.reshape(np.asarray(x_t).shape)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _looks_like_address(target: str) -> bool:
    if any(c.isspace() for c in target) or ":" not in target:
        return False
    host, _, port = target.rpartition(":")
    return bool(host) and port.isdigit()


def spawn_external_predictor(target: str, timeout: float = 30.0) -> ExternalPredictor:
    """Connect to a predictor server and perform the handshake.

    ``target`` is either ``host:port`` (TCP) or a command line to spawn
    as a child process speaking the protocol over stdin/stdout; the
    child's stderr passes through for diagnostics.
    """
    if _looks_like_address(target):
        host, _, port = target.rpartition(":")
        try:
            sock = socket.create_connection((host, int(port)), timeout=timeout)
        except OSError as exc:
            raise ProtocolError(f"cannot connect to {target}: {exc}") from exc
        return ExternalPredictor(_Transport(sock=sock), timeout, label=target)
    argv = shlex.split(target)
    if not argv:
        raise ValueError("empty predictor command")
    try:
        proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=None
        )
    except OSError as exc:
        raise ProtocolError(f"cannot spawn {argv[0]!r}: {exc}") from exc
    transport = _Transport(
        rfd=proc.stdout.fileno(), wfd=proc.stdin.fileno(), proc=proc
    )
    return ExternalPredictor(transport, timeout, label=argv[0])


def _handle_predict(predictor: Predictor, payload: bytes) -> PredictResponse:
    try:
        req = decode_request(payload)
    except InvalidShapeError as exc:
        return PredictResponse(status=STATUS_INVALID_SHAPE, message=str(exc))
    except ProtocolError as exc:
        return PredictResponse(status=STATUS_MALFORMED, message=str(exc))
    stub = _CoefficientStub(req)
    try:
        out = predictor.predict(req.x_t, req.x_in, req.t, stub)
        gradient = None
        if req.want_gradient:
            gradient = predictor.guidance_gradient(req.x_t, req.x_in, req.t, stub)
            if gradient is None:
                return PredictResponse(
                    status=STATUS_CAPABILITY_MISSING,
                    message="predictor has no guidance gradient",
                )
        eps = out.eps if (req.want_eps and out.eps is not None) else None
        return PredictResponse(status=STATUS_OK, res=out.res, eps=eps, gradient=gradient)
    except Exception as exc:  # noqa: BLE001 - server must answer, not die
        return PredictResponse(status=STATUS_MALFORMED, message=f"{type(exc).__name__}: {exc}")


class _CoefficientStub:
    """Schedule stand-in built from a request's coefficient triple, so
    in-process predictors can serve without knowing the peer's family."""

    def __init__(self, req: PredictRequest):
        self._triple = (req.alpha_bar, req.beta_bar, req.delta_bar)
        self.T = max(req.t, 1.0)

    def eval(self, t):
        return self._triple

    def alpha_bar(self, t):
        return self._triple[0]

    def beta_bar(self, t):
        return self._triple[1]

    def delta_bar(self, t):
        return self._triple[2]


def serve_connection(predictor: Predictor, transport: _Transport, timeout: float = 3600.0) -> None:
    """Serve one connection until the peer closes it.

    Hello frames are answered with hello; predict requests are answered
    with status-coded responses (decode failures included, so a content
    error never kills the loop).
    """
    while True:
        try:
            msg_type, payload = read_frame(transport, timeout)
        except ProtocolError:
            return  # closed, timed out, or desynced beyond recovery
        if msg_type == MSG_HELLO:
            transport.send(encode_frame(MSG_HELLO, bytes([PROTOCOL_VERSION])))
            continue
        if msg_type == MSG_PREDICT_REQUEST:
            resp = _handle_predict(predictor, payload)
        else:
            resp = PredictResponse(
                status=STATUS_MALFORMED, message=f"unexpected message type {msg_type}"
            )
        try:
            data = encode_response(resp)
        except ProtocolError as exc:
            data = encode_response(PredictResponse(status=STATUS_MALFORMED, message=str(exc)))
        transport.send(data)


@dataclass
class ConformanceReport:
    """Fixture-by-fixture outcome of a conformance run."""

    entries: list[tuple[str, bool, str]] = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.entries.append((name, passed, detail))

    @property
    def all_passed(self) -> bool:
        return all(ok for _, ok, _ in self.entries)

    def __str__(self) -> str:
        lines = [
            f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
            for name, ok, detail in self.entries
        ]
        return "\n".join(lines)


def _f32(x):
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def conformance_check(
    external: ExternalPredictor,
    reference: Predictor,
    schedule: Schedule | None = None,
    tol: float = 1e-6,
) -> ConformanceReport:
    """Run the protocol fixture suite against a live server.

    Compares the external predictor with an in-process reference on a
    battery of shapes and times (inputs pre-rounded to float32 so both
    sides see identical values), checks zero-extent rejection and
    gradient-capability signaling, and finishes with a small end-to-end
    solve. All comparisons use the given max-norm tolerance.
    """
    from .schedule import build_schedule
    from .solver import SolverConfig, solve

    if schedule is None:
        schedule = build_schedule()
    report = ConformanceReport()
    rng = np.random.default_rng(20240817)
    T = schedule.T

    def compare(name, shape, t):
        x_t = _f32(rng.standard_normal(shape))
        x_in = _f32(rng.standard_normal(shape) * 0.5 + 0.4)
        try:
            got = external.predict(x_t, x_in, t, schedule)
            want = reference.predict(x_t, x_in, t, schedule)
            err = float(np.max(np.abs(got.res - want.res)))
            ok = err <= tol and got.res.shape == tuple(shape)
            detail = f"max res err {err:.2e}"
            if want.eps is not None and got.eps is not None:
                err_e = float(np.max(np.abs(got.eps - want.eps)))
                ok = ok and err_e <= tol
                detail += f", max eps err {err_e:.2e}"
            elif (want.eps is None) != (got.eps is None):
                ok = False
                detail += ", eps presence mismatch"
            report.add(name, ok, detail)
        except Exception as exc:  # noqa: BLE001 - a fixture failure is a report entry
            report.add(name, False, f"{type(exc).__name__}: {exc}")

    compare("predict-vector", (4,), 0.7 * T)
    compare("predict-matrix", (5, 3), 0.7 * T)
    compare("predict-volume", (2, 3, 4), 0.7 * T)
    for i, t in enumerate((T, 0.61 * T, 0.27 * T, 0.05 * T)):
        compare(f"predict-time-{i}", (4,), t)

    # zero-extent tensors must be refused with the invalid-shape status
    try:
        payload = struct.pack("<ddddBB", 0.5 * T, 0.5, 0.5, 0.25, 1, 1) + struct.pack("<I", 0)
        resp = external._roundtrip(encode_frame(MSG_PREDICT_REQUEST, payload))
        ok = resp.status == STATUS_INVALID_SHAPE
        report.add("zero-extent-rejected", ok, f"status {resp.status}")
    except Exception as exc:  # noqa: BLE001
        report.add("zero-extent-rejected", False, f"{type(exc).__name__}: {exc}")

    # gradient capability must match the reference's, values included
    try:
        x_t = _f32(rng.standard_normal((4,)))
        x_in = _f32(rng.standard_normal((4,)))
        t = 0.6 * T
        got = external.guidance_gradient(x_t, x_in, t, schedule)
        want = reference.guidance_gradient(x_t, x_in, t, schedule)
        if want is None:
            report.add("gradient-capability", got is None,
                       "expected capability-missing" if got is not None else "capability missing on both sides")
        elif got is None:
            report.add("gradient-capability", False, "server reported capability missing")
        else:
            err = float(np.max(np.abs(got - want)))
            report.add("gradient-capability", err <= tol, f"max err {err:.2e}")
    except Exception as exc:  # noqa: BLE001
        report.add("gradient-capability", False, f"{type(exc).__name__}: {exc}")

    # end-to-end: a small solve through the wire must track in-process
    try:
        x_in = _f32(rng.standard_normal((3, 3)) * 0.3 + 0.5)
        x_T = _f32(rng.standard_normal((3, 3)))
        cfg = SolverConfig(order=2, steps=4, ups=False)
        far = solve(cfg, x_T, x_in, external, schedule).final
        near = solve(cfg, x_T, x_in, reference, schedule).final
        err = float(np.max(np.abs(far - near)))
        report.add("solve-end-to-end", err <= tol, f"max err {err:.2e}")
    except Exception as exc:  # noqa: BLE001
        report.add("solve-end-to-end", False, f"{type(exc).__name__}: {exc}")
    return report


def serve_stdio(predictor: Predictor) -> None:
    """Serve one connection over this process's standard streams."""
    transport = _Transport(rfd=sys.stdin.fileno(), wfd=sys.stdout.fileno())
    serve_connection(predictor, transport)


def serve_tcp(predictor: Predictor, host: str, port: int) -> None:
    """Accept TCP connections forever, serving them one at a time."""
    with socket.create_server((host, port)) as server:
        sys.stderr.write(f"listening on {host}:{server.getsockname()[1]}\n")
        sys.stderr.flush()
        while True:
            conn, _ = server.accept()
            with conn:
                serve_connection(predictor, _Transport(sock=conn))
