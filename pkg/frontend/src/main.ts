/**
 * Console bootstrap: connection header plus the three diagnostic panels.
 * Serve the package's HTTP service (`emr serve`) and open /ui/.
 */

import { ScannerClient } from "./client.js";
import { commandLogPanel, motorJogPanel, scanPanel, sensorPanel } from "./panels.js";

function section(title: string): HTMLElement {
  const box = document.createElement("section");
  const h = document.createElement("h2");
  h.textContent = title;
  box.appendChild(h);
  document.body.appendChild(box);
  return box;
}

const client = new ScannerClient("");

const header = section("module");
const status = document.createElement("div");
status.className = "conn-status";
status.textContent = "connecting...";
header.appendChild(status);

client.subscribe((state) => {
  status.textContent = `phase ${state.phase} | sim clock ${state.sim_clock.toFixed(2)} s`
    + ` | resets ${state.reset_count}`
    + (state.last_scan ? ` | last scan ${state.last_scan.cells} cells` : "");
});
client.state()
  .then((s) => { status.textContent = `phase ${s.phase}`; })
  .catch(() => { status.textContent = "disconnected"; });

motorJogPanel(section("motor jog"), client);
sensorPanel(section("sensors"), client);
scanPanel(section("local scan"), client);
commandLogPanel(section("command log"), client);
