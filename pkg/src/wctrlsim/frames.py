"""Bit-exact codec for the 16-byte MAC payload.

All multi-byte fields are little-endian.  Layouts (offsets in bytes):

    SYNC:  [0]=0  [1]=src  [2]=0xFF  [3:5]=seq u16  [5:9]=cycle u32  [9]=wave u8   [10:16]=0
    CMD:   [0]=1  [1]=src  [2]=dst   [3:5]=seq u16  [5:7]=left i16   [7:9]=right i16
           [9]=flags (bit0 = emergency stop)                                        [10:16]=0
    FB:    [0]=2  [1]=src  [2]=dst   [3:5]=seq u16  [5:9]=left ticks i32
           [9:13]=right ticks i32    [13:15]=distance mm u16 (0xFFFF = no reading)  [15]=0
    ESTOP: [0]=3  [1]=src  [2]=0xFF  [3:5]=seq u16                                  [5:16]=0

Wheel speeds are in mm/s, encoder ticks are cumulative (two's complement wrap).
Decoding rejects unknown message types and nonzero reserved bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Union

FRAME_SIZE = 16
BROADCAST = 0xFF
NO_READING = 0xFFFF

_ESTOP_FLAG = 0x01

_SYNC_STRUCT = struct.Struct("<BBBHIB6s")
_CMD_STRUCT = struct.Struct("<BBBHhhB6s")
_FB_STRUCT = struct.Struct("<BBBHiiHB")
_ESTOP_STRUCT = struct.Struct("<BBBH11s")

_ZERO6 = bytes(6)
_ZERO11 = bytes(11)


class MsgType(IntEnum):
    SYNC = 0
    CMD = 1
    FB = 2
    ESTOP = 3


class FrameError(ValueError):
    """Invalid frame contents (encode) or malformed payload bytes (decode)."""


@dataclass(frozen=True)
class SyncFrame:
    src: int
    seq: int
    cycle_index: int
    wave: int
    dst: int = BROADCAST


@dataclass(frozen=True)
class CmdFrame:
    src: int
    dst: int
    seq: int
    left_mms: int
    right_mms: int
    estop: bool = False


@dataclass(frozen=True)
class FbFrame:
    src: int
    dst: int
    seq: int
    left_ticks: int
    right_ticks: int
    distance_mm: int | None = None


@dataclass(frozen=True)
class EstopFrame:
    src: int
    seq: int
    dst: int = BROADCAST


Frame = Union[SyncFrame, CmdFrame, FbFrame, EstopFrame]


def _check_u8(value: int, name: str) -> int:
    if not 0 <= value <= 0xFF:
        raise FrameError(f"{name} {value} outside u8 range")
    return value


def _check_u16(value: int, name: str) -> int:
    if not 0 <= value <= 0xFFFF:
        raise FrameError(f"{name} {value} outside u16 range")
    return value


def _check_i16(value: int, name: str) -> int:
    if not -0x8000 <= value <= 0x7FFF:
        raise FrameError(f"{name} {value} outside i16 range")
    return value


def wrap_i32(value: int) -> int:
    """Two's-complement wrap of an unbounded tick count into i32."""
    return ((value + 0x80000000) & 0xFFFFFFFF) - 0x80000000


def msg_type_of(frame: Frame) -> MsgType:
    if isinstance(frame, SyncFrame):
        return MsgType.SYNC
    if isinstance(frame, CmdFrame):
        return MsgType.CMD
    if isinstance(frame, FbFrame):
        return MsgType.FB
    if isinstance(frame, EstopFrame):
        return MsgType.ESTOP
    raise FrameError(f"not a frame: {frame!r}")


def encode_frame(frame: Frame) -> bytes:
    """Serialize a frame to its 16-byte wire form."""
    if isinstance(frame, SyncFrame):
        if frame.dst != BROADCAST:
            raise FrameError("sync frames are broadcast only")
        if not 0 <= frame.cycle_index <= 0xFFFFFFFF:
            raise FrameError(f"cycle index {frame.cycle_index} outside u32 range")
        return _SYNC_STRUCT.pack(
            MsgType.SYNC,
            _check_u8(frame.src, "src"),
            BROADCAST,
            _check_u16(frame.seq, "seq"),
            frame.cycle_index,
            _check_u8(frame.wave, "wave"),
            _ZERO6,
        )
    if isinstance(frame, CmdFrame):
        return _CMD_STRUCT.pack(
            MsgType.CMD,
            _check_u8(frame.src, "src"),
            _check_u8(frame.dst, "dst"),
            _check_u16(frame.seq, "seq"),
            _check_i16(frame.left_mms, "left wheel speed"),
            _check_i16(frame.right_mms, "right wheel speed"),
            _ESTOP_FLAG if frame.estop else 0,
            _ZERO6,
        )
    if isinstance(frame, FbFrame):
        distance = NO_READING if frame.distance_mm is None else frame.distance_mm
        if not 0 <= distance <= 0xFFFF:
            raise FrameError(f"distance {distance} outside u16 range")
        if not -0x80000000 <= frame.left_ticks <= 0x7FFFFFFF:
            raise FrameError(f"left ticks {frame.left_ticks} outside i32 range")
        if not -0x80000000 <= frame.right_ticks <= 0x7FFFFFFF:
            raise FrameError(f"right ticks {frame.right_ticks} outside i32 range")
        return _FB_STRUCT.pack(
            MsgType.FB,
            _check_u8(frame.src, "src"),
            _check_u8(frame.dst, "dst"),
            _check_u16(frame.seq, "seq"),
            frame.left_ticks,
            frame.right_ticks,
            distance,
            0,
        )
    if isinstance(frame, EstopFrame):
        if frame.dst != BROADCAST:
            raise FrameError("estop frames are broadcast only")
        return _ESTOP_STRUCT.pack(
            MsgType.ESTOP,
            _check_u8(frame.src, "src"),
            BROADCAST,
            _check_u16(frame.seq, "seq"),
            _ZERO11,
        )
    raise FrameError(f"not a frame: {frame!r}")


def decode_frame(data: bytes) -> Frame:
    """Parse 16 payload bytes back into a frame, rejecting malformed input."""
    if len(data) != FRAME_SIZE:
        raise FrameError(f"payload must be exactly {FRAME_SIZE} bytes, got {len(data)}")
    msg_type = data[0]
    if msg_type == MsgType.SYNC:
        _, src, dst, seq, cycle_index, wave, tail = _SYNC_STRUCT.unpack(data)
        if dst != BROADCAST:
            raise FrameError(f"sync dst must be broadcast, got {dst:#04x}")
        if tail != _ZERO6:
            raise FrameError("nonzero reserved bytes in sync frame")
        return SyncFrame(src=src, seq=seq, cycle_index=cycle_index, wave=wave)
    if msg_type == MsgType.CMD:
        _, src, dst, seq, left, right, flags, tail = _CMD_STRUCT.unpack(data)
        if flags & ~_ESTOP_FLAG:
            raise FrameError(f"reserved command flag bits set: {flags:#04x}")
        if tail != _ZERO6:
            raise FrameError("nonzero reserved bytes in command frame")
        return CmdFrame(src=src, dst=dst, seq=seq, left_mms=left, right_mms=right,
                        estop=bool(flags & _ESTOP_FLAG))
    if msg_type == MsgType.FB:
        _, src, dst, seq, left_ticks, right_ticks, distance, tail = _FB_STRUCT.unpack(data)
        if tail != 0:
            raise FrameError("nonzero reserved byte in feedback frame")
        return FbFrame(src=src, dst=dst, seq=seq, left_ticks=left_ticks,
                       right_ticks=right_ticks,
                       distance_mm=None if distance == NO_READING else distance)
    if msg_type == MsgType.ESTOP:
        _, src, dst, seq, tail = _ESTOP_STRUCT.unpack(data)
        if dst != BROADCAST:
            raise FrameError(f"estop dst must be broadcast, got {dst:#04x}")
        if tail != _ZERO11:
            raise FrameError("nonzero reserved bytes in estop frame")
        return EstopFrame(src=src, seq=seq)
    raise FrameError(f"unknown message type {msg_type}")
