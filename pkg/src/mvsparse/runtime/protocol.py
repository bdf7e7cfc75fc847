"""Length-prefixed binary protocol between camera nodes and the server.

Frame layout: 4-byte magic ``MVSP``, 1-byte version, 1-byte message type,
4-byte little-endian payload length, payload. All payload integers and
floats are little-endian; block bitmaps are row-major with little-endian
bit order inside each byte. Messages are immutable after construction and
safe to hand across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..detector import Detection
from ..geometry import BBox, GroundPoint

MAGIC = b"MVSP"
VERSION = 1

TYPE_HELLO = 1
TYPE_BLOCK_UPDATE = 2
TYPE_SERVER_FEEDBACK = 3
TYPE_END_OF_SEQUENCE = 4

_HEADER = struct.Struct("<4sBBI")
_DET = struct.Struct("<6ddB")  # bbox x,y,w,h + ground x,y + score + stale flag


class ProtocolError(Exception):
    pass


class BadMagic(ProtocolError):
    pass


class VersionMismatch(ProtocolError):
    pass


class UnknownType(ProtocolError):
    pass


class TruncatedFrame(ProtocolError):
    pass


class MalformedPayload(ProtocolError):
    pass


@dataclass(frozen=True)
class Hello:
    """Camera self-identification, sent once after connecting."""

    camera_id: int


@dataclass(frozen=True)
class EndOfSequence:
    camera_id: int


@dataclass(frozen=True, eq=False)
class BlockUpdate:
    """Camera -> server, one per frame: actions plus the view's detections.

    The simulated pipeline transmits detection records; the per-fresh-block
    pixel payload is modeled analytically by ``account_traffic``.
    """

    frame_id: int
    camera_id: int
    actions: np.ndarray  # (rows, cols) in {0, 1}
    detections: tuple[Detection, ...]

    @property
    def payload_blocks(self) -> int:
        """Fresh-block payload count; always the popcount of the bitmap."""
        return int(np.count_nonzero(self.actions))

    def __eq__(self, other):
        return (
            isinstance(other, BlockUpdate)
            and self.frame_id == other.frame_id
            and self.camera_id == other.camera_id
            and np.array_equal(self.actions, other.actions)
            and self.detections == other.detections
        )


@dataclass(frozen=True, eq=False)
class ServerFeedback:
    """Server -> camera, one per frame: the view's top-K assignment, its
    induced block mask, the fused ground-plane detections and the view's
    processing target."""

    frame_id: int
    camera_id: int
    tau: float
    topk_boxes: tuple[BBox, ...]
    mask: np.ndarray  # (rows, cols) in {0, 1}
    fused_grounds: tuple[GroundPoint, ...]

    def __eq__(self, other):
        return (
            isinstance(other, ServerFeedback)
            and self.frame_id == other.frame_id
            and self.camera_id == other.camera_id
            and self.tau == other.tau
            and self.topk_boxes == other.topk_boxes
            and np.array_equal(self.mask, other.mask)
            and self.fused_grounds == other.fused_grounds
        )


Message = Hello | EndOfSequence | BlockUpdate | ServerFeedback


def _pack_bitmap(grid_array: np.ndarray) -> bytes:
    flat = np.asarray(grid_array, dtype=np.uint8).reshape(-1)
    return np.packbits(flat, bitorder="little").tobytes()


def _unpack_bitmap(data: bytes, rows: int, cols: int) -> np.ndarray:
    n = rows * cols
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if bits.size < n:
        raise TruncatedFrame("bitmap shorter than grid")
    return bits[:n].reshape(rows, cols).astype(np.uint8)


def _bitmap_nbytes(rows: int, cols: int) -> int:
    return (rows * cols + 7) // 8


def _encode_detections(dets: tuple[Detection, ...]) -> bytes:
    out = bytearray()
    for d in dets:
        out += _DET.pack(
            d.bbox.x,
            d.bbox.y,
            d.bbox.w,
            d.bbox.h,
            d.ground.x,
            d.ground.y,
            d.score,
            1 if d.stale else 0,
        )
    return bytes(out)


def _decode_detections(data: bytes, count: int, camera_id: int) -> tuple[Detection, ...]:
    need = count * _DET.size
    if len(data) < need:
        raise TruncatedFrame("detection records shorter than count")
    dets = []
    for i in range(count):
        x, y, w, h, gx, gy, score, stale = _DET.unpack_from(data, i * _DET.size)
        try:
            box = BBox(x, y, w, h)
        except ValueError as exc:
            raise MalformedPayload(f"detection {i}: {exc}") from exc
        dets.append(Detection(camera_id, box, GroundPoint(gx, gy), score, bool(stale)))
    return tuple(dets)


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, Hello):
        mtype, payload = TYPE_HELLO, struct.pack("<H", msg.camera_id)
    elif isinstance(msg, EndOfSequence):
        mtype, payload = TYPE_END_OF_SEQUENCE, struct.pack("<H", msg.camera_id)
    elif isinstance(msg, BlockUpdate):
        rows, cols = msg.actions.shape
        payload = struct.pack(
            "<IHBBH", msg.frame_id, msg.camera_id, rows, cols, len(msg.detections)
        )
        payload += _pack_bitmap(msg.actions)
        payload += _encode_detections(msg.detections)
        mtype = TYPE_BLOCK_UPDATE
    elif isinstance(msg, ServerFeedback):
        rows, cols = msg.mask.shape
        payload = struct.pack(
            "<IHBBdHH",
            msg.frame_id,
            msg.camera_id,
            rows,
            cols,
            msg.tau,
            len(msg.topk_boxes),
            len(msg.fused_grounds),
        )
        payload += _pack_bitmap(msg.mask)
        for b in msg.topk_boxes:
            payload += struct.pack("<4d", b.x, b.y, b.w, b.h)
        for g in msg.fused_grounds:
            payload += struct.pack("<2d", g.x, g.y)
        mtype = TYPE_SERVER_FEEDBACK
    else:
        raise TypeError(f"not a protocol message: {type(msg)!r}")
    return _HEADER.pack(MAGIC, VERSION, mtype, len(payload)) + payload


def _decode_block_update(payload: bytes) -> BlockUpdate:
    head = struct.Struct("<IHBBH")
    if len(payload) < head.size:
        raise TruncatedFrame("update payload shorter than its fixed header")
    frame_id, camera_id, rows, cols, n_dets = head.unpack_from(payload)
    if rows == 0 or cols == 0:
        raise MalformedPayload("empty block grid")
    off = head.size
    nb = _bitmap_nbytes(rows, cols)
    if len(payload) < off + nb:
        raise TruncatedFrame("bitmap truncated")
    actions = _unpack_bitmap(payload[off : off + nb], rows, cols)
    dets = _decode_detections(payload[off + nb :], n_dets, camera_id)
    return BlockUpdate(frame_id, camera_id, actions, dets)


def _decode_server_feedback(payload: bytes) -> ServerFeedback:
    head = struct.Struct("<IHBBdHH")
    if len(payload) < head.size:
        raise TruncatedFrame("feedback payload shorter than its fixed header")
    frame_id, camera_id, rows, cols, tau, n_topk, n_fused = head.unpack_from(payload)
    if rows == 0 or cols == 0:
        raise MalformedPayload("empty block grid")
    off = head.size
    nb = _bitmap_nbytes(rows, cols)
    if len(payload) < off + nb:
        raise TruncatedFrame("bitmap truncated")
    mask = _unpack_bitmap(payload[off : off + nb], rows, cols)
    off += nb
    if len(payload) < off + 32 * n_topk + 16 * n_fused:
        raise TruncatedFrame("feedback boxes truncated")
    boxes = []
    for i in range(n_topk):
        x, y, w, h = struct.unpack_from("<4d", payload, off + 32 * i)
        try:
            boxes.append(BBox(x, y, w, h))
        except ValueError as exc:
            raise MalformedPayload(f"feedback box {i}: {exc}") from exc
    off += 32 * n_topk
    grounds = [
        GroundPoint(*struct.unpack_from("<2d", payload, off + 16 * i)) for i in range(n_fused)
    ]
    return ServerFeedback(frame_id, camera_id, tau, tuple(boxes), mask, tuple(grounds))


def decode_message(data: bytes) -> tuple[Message, int]:
    """Decode one frame from the head of ``data``; returns (message, bytes
    consumed). Every malformed prefix raises a ProtocolError subclass."""
    if len(data) < _HEADER.size:
        raise TruncatedFrame(f"need {_HEADER.size} header bytes, have {len(data)}")
    magic, version, mtype, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"version {version}, expected {VERSION}")
    if mtype not in (TYPE_HELLO, TYPE_BLOCK_UPDATE, TYPE_SERVER_FEEDBACK, TYPE_END_OF_SEQUENCE):
        raise UnknownType(f"unknown message type {mtype}")
    if len(data) < _HEADER.size + length:
        raise TruncatedFrame(f"payload length {length} exceeds buffer")
    payload = data[_HEADER.size : _HEADER.size + length]
    try:
        if mtype == TYPE_HELLO:
            (camera_id,) = struct.unpack("<H", payload[:2]) if len(payload) >= 2 else (None,)
            if camera_id is None:
                raise TruncatedFrame("hello payload too short")
            msg: Message = Hello(camera_id)
        elif mtype == TYPE_END_OF_SEQUENCE:
            if len(payload) < 2:
                raise TruncatedFrame("end-of-sequence payload too short")
            msg = EndOfSequence(struct.unpack("<H", payload[:2])[0])
        elif mtype == TYPE_BLOCK_UPDATE:
            msg = _decode_block_update(payload)
        else:
            msg = _decode_server_feedback(payload)
    except struct.error as exc:
        raise TruncatedFrame(str(exc)) from exc
    return msg, _HEADER.size + length


def read_message(sock) -> Message:
    """Blocking read of exactly one protocol frame from a socket."""
    header = _recv_exact(sock, _HEADER.size)
    magic, version, mtype, length = _HEADER.unpack(header)
    body = _recv_exact(sock, length) if length else b""
    msg, _ = decode_message(header + body)
    return msg


def send_message(sock, msg: Message) -> None:
    sock.sendall(encode_message(msg))


def _recv_exact(sock, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise TruncatedFrame(f"connection closed with {remaining} bytes pending")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def block_payload_bytes(block_size: int) -> int:
    """Raw bytes of one RGB block at full resolution."""
    return 3 * block_size * block_size


def account_traffic(update: BlockUpdate, cfg) -> float:
    """Modeled camera->server bytes for one frame of one camera.

    Wire framing, bitmap and detection records are counted at their encoded
    size; the per-fresh-block pixel payload is modeled as raw RGB divided by
    the configured compression factor. Affine in the bitmap popcount.
    """
    wire = len(encode_message(update))
    payload = update.payload_blocks * block_payload_bytes(cfg.block_size) / cfg.compression_factor
    return wire + payload
