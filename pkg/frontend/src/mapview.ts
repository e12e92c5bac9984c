/**
 * Local map decoding and rendering.
 *
 * The wire block is the service's packed form: magic "EMRM", side as
 * u16 little-endian, then a row-major bitset, rows north to south, each
 * padded to a byte boundary, MSB first. Rendering splits into a pure
 * "render model" (cell rectangles, origin marker, degree grid) that the
 * snapshot test checks, and a trivial canvas painter.
 */

export interface LocalMapGrid {
  side: number;
  cells: Array<[number, number]>; // x east, y north
}

export function decodeLocalMap(block: Uint8Array): LocalMapGrid {
  const magic = String.fromCharCode(...block.slice(0, 4));
  if (magic !== "EMRM") throw new Error(`bad map magic ${magic}`);
  const side = block[4] | (block[5] << 8);
  const rowBytes = Math.ceil(side / 8);
  const body = block.slice(6);
  if (body.length !== side * rowBytes) {
    throw new Error(`map body ${body.length} bytes, expected ${side * rowBytes}`);
  }
  const cells: Array<[number, number]> = [];
  for (let r = 0; r < side; r++) {
    const y = side - 1 - r;
    for (let x = 0; x < side; x++) {
      const byte = body[r * rowBytes + (x >> 3)];
      if (byte & (0x80 >> (x & 7))) cells.push([x, y]);
    }
  }
  return { side, cells };
}

export interface CellRect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface MapRenderModel {
  canvas: number;               // square canvas edge in px
  cellPx: number;
  obstacles: CellRect[];        // red per the occupied/free colour scheme
  origin: CellRect;             // scan-head axis marker
  gridLines: Array<{ angleDeg: number; x2: number; y2: number }>;
}

/** Project the grid into canvas pixels, north up, origin centered. */
export function renderModel(map: LocalMapGrid, canvas = 480): MapRenderModel {
  const cellPx = canvas / map.side;
  const toPx = (cx: number, cy: number): CellRect => ({
    x: Math.round(cx * cellPx * 100) / 100,
    y: Math.round((map.side - 1 - cy) * cellPx * 100) / 100,
    w: Math.ceil(cellPx),
    h: Math.ceil(cellPx),
  });
  const obstacles = map.cells
    .slice()
    .sort((a, b) => a[0] - b[0] || a[1] - b[1])
    .map(([x, y]) => toPx(x, y));
  const half = map.side / 2;
  const gridLines = [];
  for (let angle = -180; angle < 180; angle += 30) {
    const rad = (angle * Math.PI) / 180;
    gridLines.push({
      angleDeg: angle,
      x2: Math.round((half + Math.sin(rad) * half) * cellPx * 100) / 100,
      y2: Math.round((map.side - (half + Math.cos(rad) * half)) * cellPx * 100) / 100,
    });
  }
  return { canvas, cellPx, obstacles, origin: toPx(half, half), gridLines };
}

export function drawMap(ctx: CanvasRenderingContext2D, model: MapRenderModel): void {
  ctx.clearRect(0, 0, model.canvas, model.canvas);
  ctx.fillStyle = "#10131a";
  ctx.fillRect(0, 0, model.canvas, model.canvas);
  ctx.strokeStyle = "#2a3244";
  ctx.lineWidth = 1;
  const mid = model.canvas / 2;
  for (const line of model.gridLines) {
    ctx.beginPath();
    ctx.moveTo(mid, mid);
    ctx.lineTo(line.x2, line.y2);
    ctx.stroke();
  }
  ctx.fillStyle = "#e33";
  for (const rect of model.obstacles) {
    ctx.fillRect(rect.x, rect.y, rect.w, rect.h);
  }
  ctx.fillStyle = "#6f6";
  ctx.fillRect(model.origin.x, model.origin.y, model.origin.w, model.origin.h);
}
