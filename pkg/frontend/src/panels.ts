/**
 * The three console panels: manual motor jog, live sensor readouts and the
 * scan view. Each user action maps to exactly one protocol frame; NAK
 * responses surface inline next to the control that caused them.
 */

import { ScannerClient, StateSnapshot } from "./client.js";
import { decodeLocalMap, drawMap, renderModel } from "./mapview.js";
import {
  adcValue, distanceValue, localScan, motor, MotorAction, MOTOR_ACTIONS,
  queryAdc, queryDistance,
} from "./protocol.js";

function el<T extends HTMLElement>(tag: string, cls = "", text = ""): T {
  const node = document.createElement(tag) as T;
  if (cls) node.className = cls;
  if (text) node.textContent = text;
  return node;
}

function badge(parent: HTMLElement, text: string, kind: "ok" | "err"): void {
  const b = el<HTMLSpanElement>("span", `badge ${kind}`, text);
  parent.appendChild(b);
  setTimeout(() => b.remove(), 4000);
}

export function motorJogPanel(root: HTMLElement, client: ScannerClient): void {
  const readouts: HTMLElement[] = [];
  const coilRows: HTMLElement[] = [];
  for (const motorNo of [1, 2] as const) {
    const box = el<HTMLDivElement>("div", "motor-box");
    box.appendChild(el("h3", "", `motor ${motorNo}`));
    const angle = el<HTMLDivElement>("div", "angle-readout", "0.0000°");
    const coils = el<HTMLDivElement>("div", "coil-row", "coils: - - - -");
    const buttons = el<HTMLDivElement>("div", "button-row");
    for (const action of Object.keys(MOTOR_ACTIONS) as MotorAction[]) {
      const btn = el<HTMLButtonElement>("button", "", MOTOR_ACTIONS[action]);
      btn.addEventListener("click", async () => {
        const reply = await client.command(motor(motorNo, action));
        if (!reply.ok) badge(box, `NAK(${reply.name})`, "err");
      });
      buttons.appendChild(btn);
    }
    box.appendChild(buttons);
    box.appendChild(angle);
    box.appendChild(coils);
    root.appendChild(box);
    readouts.push(angle);
    coilRows.push(coils);
  }
  client.subscribe((state: StateSnapshot) => {
    state.motors.forEach((m, i) => {
      if (readouts[i]) {
        readouts[i].textContent = `${m.head_angle_deg.toFixed(4)}° `
          + `(${m.enabled ? "on" : "off"}, ${m.mode}, ${m.direction})`;
      }
      if (coilRows[i]) {
        const c = m.coils;
        coilRows[i].textContent = `coils: ${c.s1a} ${c.s1b} ${c.s2a} ${c.s2b} `
          + `(row ${((m.step_index % 8) + 8) % 8 + 1})`;
      }
    });
  });
}

export function sensorPanel(root: HTMLElement, client: ScannerClient): void {
  const select = el<HTMLSelectElement>("select");
  for (let ch = 1; ch <= 32; ch++) {
    const opt = el<HTMLOptionElement>("option", "", `channel ${ch}`);
    opt.value = String(ch);
    select.appendChild(opt);
  }
  const adcCell = el<HTMLSpanElement>("span", "readout", "-");
  const distCell = el<HTMLSpanElement>("span", "readout", "-");
  const warn = el<HTMLSpanElement>("span", "badge err", "");
  warn.style.display = "none";
  const toggle = el<HTMLButtonElement>("button", "", "start poll");
  let timer: number | null = null;

  async function pollOnce(): Promise<void> {
    const ch = Number(select.value);
    const adcReply = await client.command(queryAdc(ch));
    const distReply = await client.command(queryDistance(ch));
    if (adcReply.ok) adcCell.textContent = String(adcValue(adcReply.payload));
    if (distReply.ok) {
      const cm = distanceValue(distReply.payload);
      distCell.textContent = `${cm} cm`;
      // 0 cm means no echo: out of range, unpowered or a broken sensor lead
      warn.textContent = "no echo / defekt";
      warn.style.display = cm === 0 ? "inline" : "none";
    }
  }

  toggle.addEventListener("click", () => {
    if (timer === null) {
      timer = window.setInterval(() => void pollOnce(), 500);
      toggle.textContent = "stop poll";
      void pollOnce();
    } else {
      window.clearInterval(timer);
      timer = null;
      toggle.textContent = "start poll";
    }
  });

  const row = el<HTMLDivElement>("div", "sensor-row");
  row.appendChild(select);
  row.appendChild(toggle);
  row.appendChild(el("span", "label", "ADC:"));
  row.appendChild(adcCell);
  row.appendChild(el("span", "label", "distance:"));
  row.appendChild(distCell);
  row.appendChild(warn);
  root.appendChild(row);
}

export function scanPanel(root: HTMLElement, client: ScannerClient): void {
  const sweep = el<HTMLInputElement>("input");
  sweep.type = "number";
  sweep.value = "180";
  const segment = el<HTMLInputElement>("input");
  segment.type = "number";
  segment.value = "1.5";
  segment.step = "0.1";
  const trigger = el<HTMLButtonElement>("button", "", "scan");
  const status = el<HTMLDivElement>("div", "scan-status", "");
  const canvas = el<HTMLCanvasElement>("canvas");
  canvas.width = canvas.height = 480;

  trigger.addEventListener("click", async () => {
    trigger.disabled = true;
    status.textContent = "scanning...";
    try {
      await client.setScanConfig(Number(sweep.value), Number(segment.value));
      const reply = await client.command(localScan());
      if (!reply.ok) {
        status.textContent = reply.name === "resolution"
          ? "NAK(resolution): the segment angle is not a whole number of head steps"
          : `NAK(${reply.name})`;
        return;
      }
      const grid = decodeLocalMap(reply.payload);
      const ctx = canvas.getContext("2d");
      if (ctx) drawMap(ctx, renderModel(grid, canvas.width));
      status.textContent = `${grid.cells.length} obstacle cells (side ${grid.side})`;
    } catch (err) {
      status.textContent = String(err);
    } finally {
      trigger.disabled = false;
    }
  });

  const controls = el<HTMLDivElement>("div", "scan-controls");
  controls.appendChild(el("span", "label", "sweep°:"));
  controls.appendChild(sweep);
  controls.appendChild(el("span", "label", "segment°:"));
  controls.appendChild(segment);
  controls.appendChild(trigger);
  root.appendChild(controls);
  root.appendChild(status);
  root.appendChild(canvas);
}

export function commandLogPanel(root: HTMLElement, client: ScannerClient): void {
  const list = el<HTMLPreElement>("pre", "command-log");
  root.appendChild(list);
  window.setInterval(() => {
    const tail = client.log.slice(-12);
    list.textContent = tail
      .map((e) => `${new Date(e.timestamp).toISOString()}  > ${e.sentHex}  < ${e.responseHex}`)
      .join("\n");
  }, 500);
}
