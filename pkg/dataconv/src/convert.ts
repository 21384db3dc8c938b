/**
 * SVHN cropped-digits conversion: .mat container -> DRIM raw file.
 *
 * The source stores images as a column-major [height, width, channels, N]
 * uint8 array named X and labels as a numeric array named y with values
 * 1..10, where 10 encodes the digit 0. Output items are C,H,W byte
 * blocks with labels remapped to 0..9.
 */

import * as fs from "fs";

import { encodeDrim } from "./drim";
import { MatFormatError, MatVariable, readMat } from "./mat";

export class ConvertError extends Error {}

export interface ConvertSummary {
  count: number;
  channels: number;
  height: number;
  width: number;
  /** items per remapped class 0..9 */
  histogram: number[];
}

function requireVariable(vars: Map<string, MatVariable>, name: string): MatVariable {
  const v = vars.get(name);
  if (!v) {
    throw new ConvertError(`missing variable ${name} (found: ${[...vars.keys()].join(", ") || "none"})`);
  }
  return v;
}

/**
 * Column-major (H,W,C) block -> C-order (C,H,W) index permutation.
 * perm[sourceIndex] = destinationIndex within one item.
 */
function itemPermutation(h: number, w: number, c: number): Uint32Array {
  const perm = new Uint32Array(h * w * c);
  for (let ch = 0; ch < c; ch++) {
    for (let x = 0; x < w; x++) {
      for (let y = 0; y < h; y++) {
        // source walks y fastest, then x, then ch (column-major)
        perm[y + h * x + h * w * ch] = ch * h * w + y * w + x;
      }
    }
  }
  return perm;
}

export function convertBuffers(mat: Buffer): { drim: Buffer; summary: ConvertSummary } {
  let vars: Map<string, MatVariable>;
  try {
    vars = readMat(mat);
  } catch (err) {
    if (err instanceof MatFormatError) throw new ConvertError(err.message);
    throw err;
  }
  const xVar = requireVariable(vars, "X");
  const yVar = requireVariable(vars, "y");

  if (xVar.dims.length !== 4) {
    throw new ConvertError(`X must be 4-dimensional, got [${xVar.dims.join("x")}]`);
  }
  const [height, width, channels, count] = xVar.dims;
  if (channels !== 3 || height > 255 || width > 255) {
    throw new ConvertError(`unexpected image geometry [${xVar.dims.join("x")}]`);
  }
  if (!(xVar.data instanceof Uint8Array)) {
    throw new ConvertError("X must be stored as uint8 pixels");
  }
  const labelCount = yVar.data.length;
  if (labelCount !== count) {
    throw new ConvertError(`y holds ${labelCount} labels for ${count} images`);
  }

  const labels = new Uint8Array(count);
  const histogram = new Array<number>(10).fill(0);
  for (let n = 0; n < count; n++) {
    const raw = Number(yVar.data[n]);
    if (!Number.isInteger(raw) || raw < 1 || raw > 10) {
      throw new ConvertError(`label ${raw} at item ${n} outside 1..10`);
    }
    const mapped = raw % 10; // 10 encodes digit 0
    labels[n] = mapped;
    histogram[mapped]++;
  }

  const itemSize = channels * height * width;
  const perm = itemPermutation(height, width, channels);
  const pixels = new Uint8Array(count * itemSize);
  const src = xVar.data;
  for (let n = 0; n < count; n++) {
    const srcBase = n * itemSize;
    const dstBase = n * itemSize;
    for (let i = 0; i < itemSize; i++) {
      pixels[dstBase + perm[i]] = src[srcBase + i];
    }
  }

  const drim = encodeDrim({ count, channels, height, width, labels, pixels });
  return { drim, summary: { count, channels, height, width, histogram } };
}

export function convertFile(srcPath: string, dstPath: string): ConvertSummary {
  const { drim, summary } = convertBuffers(fs.readFileSync(srcPath));
  fs.writeFileSync(dstPath, drim);
  return summary;
}

export function formatSummary(summary: ConvertSummary): string {
  const lines = [
    `items     ${summary.count}`,
    `geometry  ${summary.channels}x${summary.height}x${summary.width}`,
    "class histogram:",
  ];
  for (let k = 0; k < 10; k++) {
    lines.push(`  ${k}: ${summary.histogram[k]}`);
  }
  return lines.join("\n");
}
