"""Binary message encoding for the detection protocol.

Every frame is length-prefixed::

    [length: u32 LE] [tag: u8] [body ...]

where length counts the tag byte plus the body.  All integers are
little-endian, all reals are IEEE-754 binary64 little-endian.

Tag   Message      Body layout
----  -----------  -----------------------------------------------------------
0x01  Hello        version u16, n u32, f u32, method u8, epsilon f64,
                   matrix_seed u64, fs_matrix_seed u64, rp_seed u64
0x02  HelloAck     bob_doc_count u32
0x03  DfVector     n u32, counts u32[n]
0x10  FilterQuery  query_id u32, index_count u32, indexes u32[index_count],
                   z f64[f]
0x11  FilterReply  query_id u32, m u32, then m entries of
                   {s f64, norm_v2 f64, t f64[ceil(f/2)]}
0x20  FullQuery    query_id u32, survivor_count u32,
                   survivor_ids u32[survivor_count], z f64[n]
0x21  FullReply    query_id u32, k u32, then k entries of
                   {doc_id u32, s f64, t f64[ceil(n/2)]}
0xFF  Bye          (empty)

Reply entries follow the responder's document-id order.  Decoding recovers
the f64 array widths from the body length, so a frame is self-describing;
any inconsistency raises FrameError, an unknown tag raises ProtocolError.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FrameError, ProtocolError

__all__ = [
    "MSG_HELLO",
    "MSG_HELLO_ACK",
    "MSG_DF_VECTOR",
    "MSG_FILTER_QUERY",
    "MSG_FILTER_REPLY",
    "MSG_FULL_QUERY",
    "MSG_FULL_REPLY",
    "MSG_BYE",
    "Hello",
    "HelloAck",
    "DfVector",
    "FilterQuery",
    "FilterReply",
    "FullQuery",
    "FullReply",
    "Bye",
    "encode_message",
    "decode_message",
]

MSG_HELLO = 0x01
MSG_HELLO_ACK = 0x02
MSG_DF_VECTOR = 0x03
MSG_FILTER_QUERY = 0x10
MSG_FILTER_REPLY = 0x11
MSG_FULL_QUERY = 0x20
MSG_FULL_REPLY = 0x21
MSG_BYE = 0xFF

HEADER_SIZE = 4
MAX_FRAME_SIZE = 1 << 30

_HELLO_FMT = struct.Struct("<HIIBdQQQ")


def _u32s(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<u4").tobytes()


def _f64s(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _eq_arrays(a: np.ndarray, b: np.ndarray) -> bool:
    if a.size == 0 and b.size == 0:
        return True
    return a.shape == b.shape and np.array_equal(a, b, equal_nan=True)


@dataclass(frozen=True)
class Hello:
    version: int
    n: int
    f: int
    method: int
    epsilon: float
    matrix_seed: int
    fs_matrix_seed: int
    rp_seed: int


@dataclass(frozen=True)
class HelloAck:
    bob_doc_count: int


@dataclass(eq=False)
class DfVector:
    counts: np.ndarray

    def __eq__(self, other):
        return isinstance(other, DfVector) and _eq_arrays(self.counts, other.counts)


@dataclass(eq=False)
class FilterQuery:
    query_id: int
    indexes: np.ndarray  # empty when the responder derives the set itself
    z: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, FilterQuery)
            and self.query_id == other.query_id
            and _eq_arrays(self.indexes, other.indexes)
            and _eq_arrays(self.z, other.z)
        )


@dataclass(eq=False)
class FilterReply:
    query_id: int
    s: np.ndarray  # (m,)
    norm_v2: np.ndarray  # (m,)
    t: np.ndarray  # (m, ceil(f/2))

    def __eq__(self, other):
        return (
            isinstance(other, FilterReply)
            and self.query_id == other.query_id
            and _eq_arrays(self.s, other.s)
            and _eq_arrays(self.norm_v2, other.norm_v2)
            and _eq_arrays(self.t, other.t)
        )


@dataclass(eq=False)
class FullQuery:
    query_id: int
    survivor_ids: np.ndarray
    z: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, FullQuery)
            and self.query_id == other.query_id
            and _eq_arrays(self.survivor_ids, other.survivor_ids)
            and _eq_arrays(self.z, other.z)
        )


@dataclass(eq=False)
class FullReply:
    query_id: int
    doc_ids: np.ndarray  # (k,)
    s: np.ndarray  # (k,)
    t: np.ndarray  # (k, ceil(n/2))

    def __eq__(self, other):
        return (
            isinstance(other, FullReply)
            and self.query_id == other.query_id
            and _eq_arrays(self.doc_ids, other.doc_ids)
            and _eq_arrays(self.s, other.s)
            and _eq_arrays(self.t, other.t)
        )


@dataclass(frozen=True)
class Bye:
    pass


ProtocolMessage = (
    Hello | HelloAck | DfVector | FilterQuery | FilterReply | FullQuery | FullReply | Bye
)


def encode_message(msg: ProtocolMessage) -> bytes:
    """Full frame (length prefix included) for one message."""
    if isinstance(msg, Hello):
        body = _HELLO_FMT.pack(
            msg.version,
            msg.n,
            msg.f,
            msg.method,
            msg.epsilon,
            msg.matrix_seed,
            msg.fs_matrix_seed,
            msg.rp_seed,
        )
        tag = MSG_HELLO
    elif isinstance(msg, HelloAck):
        body = struct.pack("<I", msg.bob_doc_count)
        tag = MSG_HELLO_ACK
    elif isinstance(msg, DfVector):
        body = struct.pack("<I", len(msg.counts)) + _u32s(msg.counts)
        tag = MSG_DF_VECTOR
    elif isinstance(msg, FilterQuery):
        body = (
            struct.pack("<II", msg.query_id, len(msg.indexes))
            + _u32s(msg.indexes)
            + _f64s(msg.z)
        )
        tag = MSG_FILTER_QUERY
    elif isinstance(msg, FilterReply):
        m = len(msg.s)
        parts = [struct.pack("<II", msg.query_id, m)]
        for i in range(m):
            parts.append(struct.pack("<dd", msg.s[i], msg.norm_v2[i]))
            parts.append(_f64s(msg.t[i]))
        body = b"".join(parts)
        tag = MSG_FILTER_REPLY
    elif isinstance(msg, FullQuery):
        body = (
            struct.pack("<II", msg.query_id, len(msg.survivor_ids))
            + _u32s(msg.survivor_ids)
            + _f64s(msg.z)
        )
        tag = MSG_FULL_QUERY
    elif isinstance(msg, FullReply):
        k = len(msg.doc_ids)
        parts = [struct.pack("<II", msg.query_id, k)]
        for i in range(k):
            parts.append(struct.pack("<Id", msg.doc_ids[i], msg.s[i]))
            parts.append(_f64s(msg.t[i]))
        body = b"".join(parts)
        tag = MSG_FULL_REPLY
    elif isinstance(msg, Bye):
        body = b""
        tag = MSG_BYE
    else:
        raise ProtocolError(f"cannot encode {type(msg).__name__}")
    payload_len = 1 + len(body)
    if payload_len > MAX_FRAME_SIZE:
        raise FrameError(f"frame of {payload_len} bytes exceeds the limit")
    return struct.pack("<I", payload_len) + bytes([tag]) + body


def _need(body: bytes, size: int, what: str) -> None:
    if len(body) < size:
        raise FrameError(f"{what}: body of {len(body)} bytes is too short")


def _decode_hello(body: bytes) -> Hello:
    if len(body) != _HELLO_FMT.size:
        raise FrameError(f"hello body must be {_HELLO_FMT.size} bytes, got {len(body)}")
    version, n, f, method, epsilon, mseed, fseed, rseed = _HELLO_FMT.unpack(body)
    return Hello(version, n, f, method, epsilon, mseed, fseed, rseed)


def _decode_df(body: bytes) -> DfVector:
    _need(body, 4, "df vector")
    (n,) = struct.unpack_from("<I", body)
    if len(body) != 4 + 4 * n:
        raise FrameError(f"df vector: expected {4 + 4 * n} body bytes, got {len(body)}")
    counts = np.frombuffer(body, dtype="<u4", count=n, offset=4).astype(np.int64)
    return DfVector(counts=counts)


def _decode_filter_query(body: bytes) -> FilterQuery:
    _need(body, 8, "filter query")
    query_id, index_count = struct.unpack_from("<II", body)
    off = 8 + 4 * index_count
    rest = len(body) - off
    if rest < 0 or rest % 8:
        raise FrameError("filter query: index block and z block do not fit")
    indexes = np.frombuffer(body, dtype="<u4", count=index_count, offset=8).astype(
        np.int64
    )
    z = np.frombuffer(body, dtype="<f8", count=rest // 8, offset=off)
    return FilterQuery(query_id=query_id, indexes=indexes, z=z.copy())


def _decode_filter_reply(body: bytes) -> FilterReply:
    _need(body, 8, "filter reply")
    query_id, m = struct.unpack_from("<II", body)
    rest = len(body) - 8
    if m == 0:
        if rest:
            raise FrameError("filter reply: entries present despite m=0")
        empty = np.empty(0)
        return FilterReply(query_id, empty, empty, np.empty((0, 0)))
    if rest % m:
        raise FrameError("filter reply: body does not divide into m entries")
    entry = rest // m
    if entry < 16 or (entry - 16) % 8:
        raise FrameError("filter reply: entry size is not 16 + 8*cols")
    cols = (entry - 16) // 8
    flat = np.frombuffer(body, dtype="<f8", offset=8).reshape(m, 2 + cols)
    return FilterReply(
        query_id=query_id,
        s=flat[:, 0].copy(),
        norm_v2=flat[:, 1].copy(),
        t=flat[:, 2:].copy(),
    )


def _decode_full_query(body: bytes) -> FullQuery:
    _need(body, 8, "full query")
    query_id, count = struct.unpack_from("<II", body)
    off = 8 + 4 * count
    rest = len(body) - off
    if rest < 0 or rest % 8:
        raise FrameError("full query: survivor block and z block do not fit")
    ids = np.frombuffer(body, dtype="<u4", count=count, offset=8).astype(np.int64)
    z = np.frombuffer(body, dtype="<f8", count=rest // 8, offset=off)
    return FullQuery(query_id=query_id, survivor_ids=ids, z=z.copy())


def _decode_full_reply(body: bytes) -> FullReply:
    _need(body, 8, "full reply")
    query_id, k = struct.unpack_from("<II", body)
    rest = len(body) - 8
    if k == 0:
        if rest:
            raise FrameError("full reply: entries present despite k=0")
        return FullReply(
            query_id, np.empty(0, np.int64), np.empty(0), np.empty((0, 0))
        )
    if rest % k:
        raise FrameError("full reply: body does not divide into k entries")
    entry = rest // k
    if entry < 12 or (entry - 12) % 8:
        raise FrameError("full reply: entry size is not 12 + 8*cols")
    cols = (entry - 12) // 8
    doc_ids = np.empty(k, dtype=np.int64)
    s = np.empty(k)
    t = np.empty((k, cols))
    off = 8
    for i in range(k):
        doc_ids[i], s[i] = struct.unpack_from("<Id", body, off)
        t[i] = np.frombuffer(body, dtype="<f8", count=cols, offset=off + 12)
        off += entry
    return FullReply(query_id=query_id, doc_ids=doc_ids, s=s, t=t)


_DECODERS = {
    MSG_HELLO: _decode_hello,
    MSG_HELLO_ACK: lambda b: HelloAck(*struct.unpack("<I", b))
    if len(b) == 4
    else _raise_frame("hello ack body must be 4 bytes"),
    MSG_DF_VECTOR: _decode_df,
    MSG_FILTER_QUERY: _decode_filter_query,
    MSG_FILTER_REPLY: _decode_filter_reply,
    MSG_FULL_QUERY: _decode_full_query,
    MSG_FULL_REPLY: _decode_full_reply,
    MSG_BYE: lambda b: Bye() if not b else _raise_frame("bye carries no body"),
}


def _raise_frame(message: str):
    raise FrameError(message)


def decode_message(frame: bytes) -> ProtocolMessage:
    """Decode one full frame (length prefix included)."""
    if len(frame) < HEADER_SIZE + 1:
        raise FrameError(f"frame of {len(frame)} bytes is too short")
    (declared,) = struct.unpack_from("<I", frame)
    if declared > MAX_FRAME_SIZE:
        raise FrameError(f"declared payload of {declared} bytes exceeds the limit")
    if declared != len(frame) - HEADER_SIZE:
        raise FrameError(
            f"declared payload {declared} != actual {len(frame) - HEADER_SIZE}"
        )
    tag = frame[HEADER_SIZE]
    decoder = _DECODERS.get(tag)
    if decoder is None:
        raise ProtocolError(f"unknown message tag 0x{tag:02x}")
    return decoder(frame[HEADER_SIZE + 1 :])
