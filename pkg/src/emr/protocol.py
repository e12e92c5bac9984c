"""Byte-level host command codec, serial framing and bus address rules.

The command set is two ASCII-ish byte families: 'a'/'b' + channel char
for ADC/distance queries, 'e' for a local scan, 'm'/'n' + action char
for the two stepper motors. encode/decode are exact inverses over the
whole 79-command space; PROTOCOL.md is rendered from the same registry
so documentation cannot drift from the code.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

STX = 0x02
ETX = 0x03
ACK = 0x06
NAK = 0x15

QUERY_ADC_LEAD = 0x61       # 'a'
QUERY_DISTANCE_LEAD = 0x62  # 'b'
LOCAL_SCAN_LEAD = 0x65      # 'e'
MOTOR_LEADS = (0x6D, 0x6E)  # 'm', 'n'


class CommandError(ValueError):
    """Base for decode failures."""


class UnknownCommandError(CommandError):
    pass


class IncompleteCommandError(CommandError):
    pass


class BadArgumentError(CommandError):
    pass


class FrameError(ValueError):
    """Bad delimiters or lengths in a wire frame."""


class ChecksumError(FrameError):
    """Frame checksum mismatch (NAK-equivalent)."""


# ---------------------------------------------------------------------------
# commands

class MotorAction(Enum):
    OFF = "a"
    ON = "e"
    HALF_MODE = "h"
    DIR_LEFT = "l"
    DIR_RIGHT = "r"
    STEP = "s"
    FULL_MODE = "v"


_ACTION_TEXT = {
    MotorAction.OFF: "switch off",
    MotorAction.ON: "switch on",
    MotorAction.HALF_MODE: "select half-step mode",
    MotorAction.DIR_LEFT: "set direction left",
    MotorAction.DIR_RIGHT: "set direction right",
    MotorAction.STEP: "execute one step",
    MotorAction.FULL_MODE: "select full-step mode",
}


@dataclass(frozen=True)
class QueryAdc:
    channel: int  # 1..32

    def __post_init__(self):
        if not 1 <= self.channel <= 32:
            raise BadArgumentError(f"channel {self.channel} outside 1..32")


@dataclass(frozen=True)
class QueryDistance:
    channel: int  # 1..32

    def __post_init__(self):
        if not 1 <= self.channel <= 32:
            raise BadArgumentError(f"channel {self.channel} outside 1..32")


@dataclass(frozen=True)
class LocalScan:
    pass


@dataclass(frozen=True)
class Motor:
    motor: int  # 1..2
    action: MotorAction

    def __post_init__(self):
        if self.motor not in (1, 2):
            raise BadArgumentError(f"motor {self.motor} outside 1..2")


Command = Union[QueryAdc, QueryDistance, LocalScan, Motor]


def _channel_char(channel: int) -> int:
    # 1..16 -> '1'..'@' (0x31..0x40), 17..32 -> 'A'..'P' (0x41..0x50)
    if channel <= 16:
        return 0x30 + channel
    return 0x41 + (channel - 17)


def _channel_from_char(b: int) -> int:
    if 0x31 <= b <= 0x40:
        return b - 0x30
    if 0x41 <= b <= 0x50:
        return b - 0x41 + 17
    raise BadArgumentError(f"channel byte 0x{b:02X} outside the channel range")


def encode(cmd: Command) -> bytes:
    """Command to its exact wire bytes."""
    if isinstance(cmd, QueryAdc):
        return bytes((QUERY_ADC_LEAD, _channel_char(cmd.channel)))
    if isinstance(cmd, QueryDistance):
        return bytes((QUERY_DISTANCE_LEAD, _channel_char(cmd.channel)))
    if isinstance(cmd, LocalScan):
        return bytes((LOCAL_SCAN_LEAD,))
    if isinstance(cmd, Motor):
        return bytes((MOTOR_LEADS[cmd.motor - 1], ord(cmd.action.value)))
    raise TypeError(f"not a command: {cmd!r}")


def decode(data: bytes) -> Command:
    """Exact inverse of encode.

    Raises UnknownCommandError for a lead byte outside the table,
    IncompleteCommandError for a truncated two-byte command and
    BadArgumentError for an out-of-range argument or trailing bytes.
    """
    if not data:
        raise IncompleteCommandError("empty command")
    lead = data[0]
    if lead == LOCAL_SCAN_LEAD:
        if len(data) != 1:
            raise BadArgumentError("scan command takes no argument bytes")
        return LocalScan()
    if lead in (QUERY_ADC_LEAD, QUERY_DISTANCE_LEAD):
        if len(data) < 2:
            raise IncompleteCommandError("query command missing its channel byte")
        if len(data) > 2:
            raise BadArgumentError("trailing bytes after query command")
        channel = _channel_from_char(data[1])
        return QueryAdc(channel) if lead == QUERY_ADC_LEAD else QueryDistance(channel)
    if lead in MOTOR_LEADS:
        if len(data) < 2:
            raise IncompleteCommandError("motor command missing its action byte")
        if len(data) > 2:
            raise BadArgumentError("trailing bytes after motor command")
        try:
            action = MotorAction(chr(data[1]))
        except ValueError:
            raise BadArgumentError(f"unknown motor action byte 0x{data[1]:02X}") from None
        return Motor(MOTOR_LEADS.index(lead) + 1, action)
    raise UnknownCommandError(f"unknown command byte 0x{lead:02X}")


def all_commands() -> list[Command]:
    """The full command space: 32 + 32 + 1 + 14 = 79 commands."""
    cmds: list[Command] = []
    cmds += [QueryAdc(k) for k in range(1, 33)]
    cmds += [QueryDistance(k) for k in range(1, 33)]
    cmds.append(LocalScan())
    for m in (1, 2):
        cmds += [Motor(m, a) for a in MotorAction]
    return cmds


def describe(cmd: Command) -> str:
    if isinstance(cmd, QueryAdc):
        return f"read raw ADC value of sensor channel {cmd.channel}"
    if isinstance(cmd, QueryDistance):
        return f"convert and return distance of IR sensor {cmd.channel}"
    if isinstance(cmd, LocalScan):
        return "capture the local environment (scan sweep)"
    return f"stepper motor {cmd.motor}: {_ACTION_TEXT[cmd.action]}"


# ---------------------------------------------------------------------------
# bus address classes

class AddressClass(Enum):
    OK = "ok"
    GENERAL_CALL = "general-call"
    START_BYTE = "start-byte"
    CBUS = "cbus"
    OTHER_BUS_FORMAT = "other-bus-format"
    FUTURE_EXTENSION_LOW = "future-extension-low"
    HS_MODE_MASTER = "hs-mode-master"
    TEN_BIT_ADDRESSING = "ten-bit-addressing"
    FUTURE_EXTENSION_HIGH = "future-extension-high"


def validate_address(addr: int, rw: int) -> AddressClass:
    """Classify a 7-bit address + R/W bit against the reserved groups.

    The two groups 0000XXX and 1111XXX are special; everything else is a
    plain device address.
    """
    if not 0 <= addr < 128:
        raise ValueError(f"address {addr} is not 7-bit")
    if rw not in (0, 1):
        raise ValueError(f"R/W bit must be 0 or 1, got {rw}")
    top4 = addr >> 3
    low3 = addr & 0x7
    if top4 == 0b0000:
        if low3 == 0:
            return AddressClass.START_BYTE if rw else AddressClass.GENERAL_CALL
        if low3 == 1:
            return AddressClass.CBUS
        if low3 == 2:
            return AddressClass.OTHER_BUS_FORMAT
        if low3 == 3:
            return AddressClass.FUTURE_EXTENSION_LOW
        return AddressClass.HS_MODE_MASTER
    if top4 == 0b1111:
        if addr & 0b0000100:
            return AddressClass.FUTURE_EXTENSION_HIGH
        return AddressClass.TEN_BIT_ADDRESSING
    return AddressClass.OK


# ---------------------------------------------------------------------------
# wire framing

@dataclass(frozen=True)
class Frame:
    """A parsed command frame: 7-bit address, R/W bit and payload bytes."""

    address: int
    read_write: int
    payload: bytes


def _xor(data: bytes) -> int:
    c = 0
    for b in data:
        c ^= b
    return c


def frame(payload: bytes, address: int, read_write: int = 0) -> bytes:
    """Wrap command bytes for the wire.

    Layout: STX, address byte (addr<<1 | rw), length, payload, XOR checksum
    over address+length+payload, ETX. Payload is limited to 255 bytes.
    """
    if validate_address(address, read_write) is not AddressClass.OK:
        raise FrameError(f"address 0x{address:02X} is reserved")
    if len(payload) > 255:
        raise FrameError("payload exceeds one length byte")
    addr_byte = (address << 1) | read_write
    body = bytes((addr_byte, len(payload))) + payload
    return bytes((STX,)) + body + bytes((_xor(body), ETX))


def unframe(data: bytes) -> Frame:
    """Parse and verify a wire frame; ChecksumError is the NAK case."""
    if len(data) < 5:
        raise FrameError(f"frame too short ({len(data)} bytes)")
    if data[0] != STX or data[-1] != ETX:
        raise FrameError("missing STX/ETX delimiters")
    addr_byte, length = data[1], data[2]
    payload = data[3:3 + length]
    if len(data) != 5 + length:
        raise FrameError(f"length byte {length} does not match frame size {len(data)}")
    checksum = data[3 + length]
    expect = _xor(data[1:3 + length])
    if checksum != expect:
        raise ChecksumError(f"checksum 0x{checksum:02X}, expected 0x{expect:02X}")
    return Frame(address=addr_byte >> 1, read_write=addr_byte & 1, payload=payload)


# ---------------------------------------------------------------------------
# responses

class NakCode(Enum):
    BUSY = 0x01
    MOTOR_OFF = 0x02
    RESOLUTION = 0x03
    UNKNOWN_COMMAND = 0x04
    BAD_ARGUMENT = 0x05
    INCOMPLETE = 0x06
    CHECKSUM = 0x07
    FAULT = 0x08
    LIMIT = 0x09


def ack_response(payload: bytes) -> bytes:
    """ACK (0x06) + length (u16 BE) + payload + XOR checksum.

    The two-byte length lets a scan reply carry a whole map block.
    """
    body = len(payload).to_bytes(2, "big") + payload
    return bytes((ACK,)) + body + bytes((_xor(body),))


def nak_response(code: NakCode) -> bytes:
    return bytes((NAK, code.value))


def parse_response(data: bytes) -> tuple[bool, Union[bytes, NakCode]]:
    """Split a response into (ok, payload) or (not ok, NakCode)."""
    if not data:
        raise FrameError("empty response")
    if data[0] == NAK:
        if len(data) != 2:
            raise FrameError("NAK response must be exactly two bytes")
        return False, NakCode(data[1])
    if data[0] == ACK:
        if len(data) < 4:
            raise FrameError("ACK response too short")
        length = int.from_bytes(data[1:3], "big")
        payload = data[3:3 + length]
        if len(data) != 4 + length:
            raise FrameError("ACK length field does not match response size")
        if data[3 + length] != _xor(data[1:3 + length]):
            raise ChecksumError("ACK response checksum mismatch")
        return True, payload
    raise FrameError(f"response must start with ACK or NAK, got 0x{data[0]:02X}")


# ---------------------------------------------------------------------------
# registry-driven documentation

_ADDRESS_ROWS = (
    ("0000 000", "0", "general call address"),
    ("0000 000", "1", "start byte"),
    ("0000 001", "X", "CBUS address"),
    ("0000 010", "X", "reserved for other bus formats"),
    ("0000 011", "X", "reserved for future extensions"),
    ("0000 1XX", "X", "high-speed mode master code"),
    ("1111 0XX", "X", "10-bit slave addressing"),
    ("1111 1XX", "X", "reserved for future extensions"),
)


def render_protocol_md() -> str:
    """Render PROTOCOL.md from the live command registry."""
    lines = [
        "# Wire protocol",
        "",
        "All multi-byte commands are sent inside one frame. Generated from",
        "`emr.protocol`; regenerate with `python -m emr.protocol`.",
        "",
        "## Command frame",
        "",
        "```",
        "STX(0x02)  address byte (7-bit addr << 1 | R/W)  length  payload...  XOR  ETX(0x03)",
        "```",
        "",
        "The XOR checksum covers address byte, length and payload. A frame",
        "with a bad checksum is answered with NAK(CHECKSUM); bad delimiters",
        "are rejected outright. The empty payload (length 0) is legal.",
        "",
        "## Responses",
        "",
        "```",
        "ACK(0x06)  length (u16 big-endian)  payload...  XOR(length+payload)",
        "NAK(0x15)  error code",
        "```",
        "",
        "Reply payloads: raw ADC value as 2 bytes big-endian, distance as",
        "1 byte (cm, 0 = no echo / out of range), scan as a packed local map",
        "block (`EMRM` format).",
        "",
        "### NAK codes",
        "",
        "| code | meaning |",
        "|------|---------|",
    ]
    for code in NakCode:
        lines.append(f"| 0x{code.value:02X} | {code.name.lower().replace('_', '-')} |")
    lines += [
        "",
        "## Commands",
        "",
        "| bytes (hex) | chars | meaning |",
        "|-------------|-------|---------|",
    ]
    for cmd in all_commands():
        raw = encode(cmd)
        hexs = " ".join(f"{b:02X}" for b in raw)
        chars = " ".join(chr(b) for b in raw)
        lines.append(f"| {hexs} | {chars} | {describe(cmd)} |")
    lines += [
        "",
        "## Reserved bus addresses",
        "",
        "Two groups of eight 7-bit addresses (0000XXX and 1111XXX) are",
        "reserved; frames must target an ordinary address.",
        "",
        "| slave address | R/W | class |",
        "|---------------|-----|-------|",
    ]
    for pattern, rw, text in _ADDRESS_ROWS:
        lines.append(f"| {pattern} | {rw} | {text} |")
    lines.append("")
    return "\n".join(lines)


if __name__ == "__main__":
    print(render_protocol_md(), end="")
