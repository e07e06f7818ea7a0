/** Map text parsing and pixel-space helpers for the canvas view.
 *
 * Mirrors the server's map format: optional '%' comment lines, a
 * "<width> <height> <resolution>" header, then `height` rows of
 * '.'/'#'/'?' characters with the TOP row first. World origin is the
 * bottom-left corner; the canvas origin is top-left, so y flips.
 */

export const FREE = 0;
export const OCCUPIED = 1;
export const UNKNOWN = 2;

export interface Grid {
  width: number;
  height: number;
  resolution: number;
  /** Row-major, iy = 0 at the bottom (world order, same as the server). */
  cells: Uint8Array;
}

export class MapFormatError extends Error {}

export function parseMapText(text: string): Grid {
  const lines = text.split("\n").filter((ln) => !ln.startsWith("%"));
  while (lines.length && lines[lines.length - 1].trim() === "") lines.pop();
  if (!lines.length) throw new MapFormatError("empty map");
  const header = lines[0].trim().split(/\s+/);
  if (header.length !== 3) throw new MapFormatError("bad header");
  const width = Number(header[0]);
  const height = Number(header[1]);
  const resolution = Number(header[2]);
  if (!Number.isInteger(width) || !Number.isInteger(height) ||
      width < 1 || height < 1 || !(resolution > 0)) {
    throw new MapFormatError("bad header values");
  }
  if (lines.length - 1 !== height) {
    throw new MapFormatError(`expected ${height} rows, got ${lines.length - 1}`);
  }
  const cells = new Uint8Array(width * height);
  for (let j = 0; j < height; j++) {
    const row = lines[1 + j];
    if (row.length !== width) {
      throw new MapFormatError(`row ${j + 1} has ${row.length} cells`);
    }
    const iy = height - 1 - j; // text top row is the highest y
    for (let ix = 0; ix < width; ix++) {
      const ch = row[ix];
      if (ch === ".") cells[iy * width + ix] = FREE;
      else if (ch === "#") cells[iy * width + ix] = OCCUPIED;
      else if (ch === "?") cells[iy * width + ix] = UNKNOWN;
      else throw new MapFormatError(`bad cell '${ch}' in row ${j + 1}`);
    }
  }
  return { width, height, resolution, cells };
}

/** World metres -> canvas pixels at `scale` px per cell. */
export function worldToPixel(
  grid: Grid,
  scale: number,
  x: number,
  y: number,
): [number, number] {
  return [(x / grid.resolution) * scale, (grid.height - y / grid.resolution) * scale];
}

/** Canvas pixels -> world metres (for map clicks). */
export function pixelToWorld(
  grid: Grid,
  scale: number,
  px: number,
  py: number,
): [number, number] {
  return [(px / scale) * grid.resolution, (grid.height - py / scale) * grid.resolution];
}

const COLORS: Record<number, [number, number, number]> = {
  [FREE]: [248, 249, 250],
  [OCCUPIED]: [52, 58, 64],
  [UNKNOWN]: [206, 212, 218],
};

/** RGBA raster of the grid at `scale` px per cell (drawn once, cached). */
export function rasterize(
  grid: Grid,
  scale: number,
): Uint8ClampedArray<ArrayBuffer> {
  const w = grid.width * scale;
  const h = grid.height * scale;
  const out = new Uint8ClampedArray(new ArrayBuffer(w * h * 4));
  for (let py = 0; py < h; py++) {
    const iy = grid.height - 1 - Math.floor(py / scale);
    for (let px = 0; px < w; px++) {
      const ix = Math.floor(px / scale);
      const [r, g, b] = COLORS[grid.cells[iy * grid.width + ix]];
      const o = (py * w + px) * 4;
      out[o] = r;
      out[o + 1] = g;
      out[o + 2] = b;
      out[o + 3] = 255;
    }
  }
  return out;
}
