import pytest
from hypothesis import given, settings, strategies as st

from emr.protocol import (AddressClass, BadArgumentError, ChecksumError,
                          CommandError, Frame, FrameError,
                          IncompleteCommandError, LocalScan, Motor,
                          MotorAction, NakCode, QueryAdc, QueryDistance,
                          UnknownCommandError, ack_response, all_commands,
                          decode, encode, frame, nak_response, parse_response,
                          render_protocol_md, unframe, validate_address)


class TestEncode:
    def test_query_adc_channel_1(self):
        assert encode(QueryAdc(1)) == bytes((0x61, 0x31))

    def test_query_adc_channel_16_and_17(self):
        assert encode(QueryAdc(16)) == bytes((0x61, 0x40))
        assert encode(QueryAdc(17)) == bytes((0x61, 0x41))

    def test_query_adc_channel_32(self):
        assert encode(QueryAdc(32)) == bytes((0x61, 0x50))

    def test_query_distance_channel_10(self):
        assert encode(QueryDistance(10)) == bytes((0x62, 0x3A))

    def test_local_scan(self):
        assert encode(LocalScan()) == bytes((0x65,))

    def test_motor_1_step(self):
        assert encode(Motor(1, MotorAction.STEP)) == bytes((0x6D, 0x73))

    def test_motor_2_full_mode(self):
        assert encode(Motor(2, MotorAction.FULL_MODE)) == bytes((0x6E, 0x76))

    def test_channel_out_of_range_rejected(self):
        with pytest.raises(BadArgumentError):
            QueryAdc(0)
        with pytest.raises(BadArgumentError):
            QueryAdc(33)


class TestDecode:
    def test_query_distance_10(self):
        assert decode(bytes((0x62, 0x3A))) == QueryDistance(10)

    def test_motor_2_full_mode(self):
        assert decode(bytes((0x6E, 0x76))) == Motor(2, MotorAction.FULL_MODE)

    def test_unknown_lead_byte(self):
        with pytest.raises(UnknownCommandError):
            decode(b"\xff")

    def test_truncated_query(self):
        with pytest.raises(IncompleteCommandError):
            decode(b"\x61")

    def test_bad_channel_byte(self):
        with pytest.raises(BadArgumentError):
            decode(bytes((0x61, 0x30)))
        with pytest.raises(BadArgumentError):
            decode(bytes((0x61, 0x51)))

    def test_trailing_bytes_rejected(self):
        with pytest.raises(BadArgumentError):
            decode(bytes((0x65, 0x00)))

    def test_exhaustive_inverse(self):
        cmds = all_commands()
        assert len(cmds) == 79
        seen = set()
        for cmd in cmds:
            raw = encode(cmd)
            assert raw not in seen
            seen.add(raw)
            assert decode(raw) == cmd

    @settings(max_examples=2000)
    @given(st.binary(max_size=8))
    def test_decode_never_crashes(self, raw):
        try:
            decode(raw)
        except CommandError:
            pass


class TestAddressClassifier:
    def test_general_call_vs_start_byte(self):
        assert validate_address(0, 0) is AddressClass.GENERAL_CALL
        assert validate_address(0, 1) is AddressClass.START_BYTE

    def test_plain_address_ok(self):
        assert validate_address(0b0101000, 0) is AddressClass.OK

    def test_cbus_and_formats(self):
        assert validate_address(0b0000001, 0) is AddressClass.CBUS
        assert validate_address(0b0000010, 1) is AddressClass.OTHER_BUS_FORMAT
        assert validate_address(0b0000011, 0) is AddressClass.FUTURE_EXTENSION_LOW

    def test_hs_mode_group(self):
        for addr in range(0b0000100, 0b0001000):
            assert validate_address(addr, 0) is AddressClass.HS_MODE_MASTER

    def test_ten_bit_and_future(self):
        assert validate_address(0b1111000, 0) is AddressClass.TEN_BIT_ADDRESSING
        assert validate_address(0b1111011, 1) is AddressClass.TEN_BIT_ADDRESSING
        assert validate_address(0b1111100, 0) is AddressClass.FUTURE_EXTENSION_HIGH
        assert validate_address(0b1111111, 1) is AddressClass.FUTURE_EXTENSION_HIGH

    def test_partition_complete(self):
        reserved_kinds = set()
        ok = 0
        for addr in range(128):
            for rw in (0, 1):
                k = validate_address(addr, rw)
                if k is AddressClass.OK:
                    ok += 1
                else:
                    reserved_kinds.add(k)
        assert ok == (128 - 16) * 2
        assert len(reserved_kinds) == 8

    def test_eight_bit_address_rejected(self):
        with pytest.raises(ValueError):
            validate_address(128, 0)


class TestFraming:
    def test_round_trip(self):
        wire = frame(b"\x61\x31", address=0x28)
        parsed = unframe(wire)
        assert parsed == Frame(address=0x28, read_write=0, payload=b"\x61\x31")

    def test_empty_payload_valid(self):
        wire = frame(b"", address=0x28)
        assert unframe(wire).payload == b""
        assert wire[2] == 0

    def test_bit_flip_detected(self):
        wire = bytearray(frame(b"\x65", address=0x28))
        wire[3] ^= 0x01
        with pytest.raises(ChecksumError):
            unframe(bytes(wire))

    def test_bad_delimiters(self):
        wire = bytearray(frame(b"\x65", address=0x28))
        wire[0] = 0x07
        with pytest.raises(FrameError):
            unframe(bytes(wire))

    def test_reserved_address_rejected(self):
        with pytest.raises(FrameError):
            frame(b"\x65", address=0)

    @given(st.binary(max_size=255), st.integers(8, 119))
    def test_round_trip_any_payload(self, payload, addr):
        if validate_address(addr, 0) is not AddressClass.OK:
            return
        assert unframe(frame(payload, addr)).payload == payload


class TestResponses:
    def test_ack_round_trip(self):
        ok, payload = parse_response(ack_response(b"\x12\x34"))
        assert ok and payload == b"\x12\x34"

    def test_ack_large_payload(self):
        blob = bytes(range(256)) * 50
        ok, payload = parse_response(ack_response(blob))
        assert ok and payload == blob

    def test_nak(self):
        ok, code = parse_response(nak_response(NakCode.MOTOR_OFF))
        assert not ok and code is NakCode.MOTOR_OFF

    def test_ack_corruption_detected(self):
        raw = bytearray(ack_response(b"\x01"))
        raw[3] ^= 0x40
        with pytest.raises(ChecksumError):
            parse_response(bytes(raw))


class TestDocumentation:
    def test_rendered_doc_contains_all_commands(self):
        doc = render_protocol_md()
        for cmd in all_commands():
            hexs = " ".join(f"{b:02X}" for b in encode(cmd))
            assert hexs in doc

    def test_checked_in_doc_matches_registry(self):
        import pathlib
        path = pathlib.Path(__file__).resolve().parent.parent / "PROTOCOL.md"
        assert path.exists(), "PROTOCOL.md missing; run python -m emr.protocol > PROTOCOL.md"
        assert path.read_text() == render_protocol_md()
