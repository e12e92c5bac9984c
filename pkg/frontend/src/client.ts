/**
 * Thin HTTP client for the scanner service: hex frames over POST /command,
 * state polling, map fetch and the server-sent state stream.
 */

import { bytesToHex, frame, hexToBytes, ModuleResponse, parseResponse } from "./protocol.js";

export interface MotorSnapshot {
  enabled: boolean;
  mode: string;
  direction: string;
  step_index: number;
  head_angle_deg: number;
  head_step_deg: number;
  coils: { s1a: string; s1b: string; s2a: string; s2b: string };
}

export interface StateSnapshot {
  phase: string;
  sim_clock: number;
  reset_count: number;
  motors: MotorSnapshot[];
  power: { mode: string; powered_channel: number | null; table: Record<string, boolean> };
  last_scan: { cells: number; side: number; elapsed_s: number } | null;
}

export interface LogEntry {
  sentHex: string;
  responseHex: string;
  timestamp: number;
}

export class ScannerClient {
  readonly address: number;
  readonly log: LogEntry[] = [];

  constructor(private base = "", address = 40) {
    this.address = address;
  }

  /** Send one command; the log keeps every sent/received frame pair. */
  async command(payload: Uint8Array): Promise<ModuleResponse> {
    const wire = frame(payload, this.address);
    const resp = await fetch(`${this.base}/command`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ frame: bytesToHex(wire) }),
    });
    if (!resp.ok) {
      throw new Error(`service error ${resp.status}: ${await resp.text()}`);
    }
    const body = (await resp.json()) as { response: string };
    this.log.push({
      sentHex: bytesToHex(wire),
      responseHex: body.response,
      timestamp: Date.now(),
    });
    return parseResponse(hexToBytes(body.response));
  }

  async state(): Promise<StateSnapshot> {
    const resp = await fetch(`${this.base}/state`);
    if (!resp.ok) throw new Error(`state fetch failed: ${resp.status}`);
    return (await resp.json()) as StateSnapshot;
  }

  async localMap(): Promise<Uint8Array | null> {
    const resp = await fetch(`${this.base}/map/local`);
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`map fetch failed: ${resp.status}`);
    return new Uint8Array(await resp.arrayBuffer());
  }

  async setScanConfig(sweepDeg: number, segmentDeg: number): Promise<void> {
    const resp = await fetch(`${this.base}/scan-config`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ sweep_deg: sweepDeg, segment_deg: segmentDeg }),
    });
    if (!resp.ok) {
      const detail = await resp.json().catch(() => ({ detail: resp.statusText }));
      throw new Error(`scan config rejected: ${detail.detail}`);
    }
  }

  /** Push-stream of state snapshots; one callback per executed command. */
  subscribe(onState: (state: StateSnapshot) => void): () => void {
    const source = new EventSource(`${this.base}/events`);
    source.onmessage = (event) => {
      const data = JSON.parse(event.data) as { state: StateSnapshot };
      if (data.state) onState(data.state);
    };
    return () => source.close();
  }
}
