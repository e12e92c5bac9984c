/**
 * Byte-level mirror of the module's command protocol.
 *
 * The console builds exactly one wire frame per user action and displays
 * only what response payloads contain; all distance math stays on the
 * module side. Keep this file in lockstep with the service's PROTOCOL.md -
 * the conformance test replays fixtures exported by the service package.
 */

export const STX = 0x02;
export const ETX = 0x03;
export const ACK = 0x06;
export const NAK = 0x15;

export type MotorAction = "a" | "e" | "h" | "l" | "r" | "s" | "v";

export const MOTOR_ACTIONS: Record<MotorAction, string> = {
  a: "off",
  e: "on",
  h: "half-step",
  l: "dir left",
  r: "dir right",
  s: "step",
  v: "full-step",
};

export const NAK_NAMES: Record<number, string> = {
  0x01: "busy",
  0x02: "motor-off",
  0x03: "resolution",
  0x04: "unknown-command",
  0x05: "bad-argument",
  0x06: "incomplete",
  0x07: "checksum",
  0x08: "fault",
  0x09: "limit",
};

export function bytesToHex(data: Uint8Array): string {
  return Array.from(data, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function hexToBytes(hex: string): Uint8Array {
  if (hex.length % 2 !== 0 || /[^0-9a-fA-F]/.test(hex)) {
    throw new Error(`not a hex string: ${hex}`);
  }
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

function channelChar(channel: number): number {
  if (channel < 1 || channel > 32) {
    throw new Error(`channel ${channel} outside 1..32`);
  }
  return channel <= 16 ? 0x30 + channel : 0x41 + (channel - 17);
}

export function queryAdc(channel: number): Uint8Array {
  return new Uint8Array([0x61, channelChar(channel)]);
}

export function queryDistance(channel: number): Uint8Array {
  return new Uint8Array([0x62, channelChar(channel)]);
}

export function localScan(): Uint8Array {
  return new Uint8Array([0x65]);
}

export function motor(motorNo: 1 | 2, action: MotorAction): Uint8Array {
  return new Uint8Array([motorNo === 1 ? 0x6d : 0x6e, action.charCodeAt(0)]);
}

/** Wrap command bytes: STX, addr<<1|rw, length, payload, XOR, ETX. */
export function frame(payload: Uint8Array, address: number, rw = 0): Uint8Array {
  const body = new Uint8Array(2 + payload.length);
  body[0] = (address << 1) | rw;
  body[1] = payload.length;
  body.set(payload, 2);
  let checksum = 0;
  for (const b of body) checksum ^= b;
  const wire = new Uint8Array(body.length + 3);
  wire[0] = STX;
  wire.set(body, 1);
  wire[wire.length - 2] = checksum;
  wire[wire.length - 1] = ETX;
  return wire;
}

export interface AckResponse {
  ok: true;
  payload: Uint8Array;
}

export interface NakResponse {
  ok: false;
  code: number;
  name: string;
}

export type ModuleResponse = AckResponse | NakResponse;

/** Split a module reply: ACK + u16 length + payload + XOR, or NAK + code. */
export function parseResponse(data: Uint8Array): ModuleResponse {
  if (data.length === 0) throw new Error("empty response");
  if (data[0] === NAK) {
    if (data.length !== 2) throw new Error("NAK must be two bytes");
    return { ok: false, code: data[1], name: NAK_NAMES[data[1]] ?? `0x${data[1].toString(16)}` };
  }
  if (data[0] !== ACK) throw new Error(`response is neither ACK nor NAK: 0x${data[0].toString(16)}`);
  if (data.length < 4) throw new Error("ACK response too short");
  const length = (data[1] << 8) | data[2];
  if (data.length !== 4 + length) throw new Error("ACK length mismatch");
  const payload = data.slice(3, 3 + length);
  let checksum = 0;
  for (let i = 1; i < 3 + length; i++) checksum ^= data[i];
  if (checksum !== data[3 + length]) throw new Error("ACK checksum mismatch");
  return { ok: true, payload };
}

/** Raw ADC replies are two bytes big-endian. */
export function adcValue(payload: Uint8Array): number {
  if (payload.length !== 2) throw new Error("ADC payload must be two bytes");
  return (payload[0] << 8) | payload[1];
}

/** Distance replies are one byte of centimeters; 0 means no echo. */
export function distanceValue(payload: Uint8Array): number {
  if (payload.length !== 1) throw new Error("distance payload must be one byte");
  return payload[0];
}
