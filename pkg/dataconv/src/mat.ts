/**
 * Minimal MATLAB level-5 MAT-file reader: numeric N-D arrays only.
 *
 * Supports the storage subset the SVHN cropped-digits containers use:
 * little- and big-endian files, plain and zlib-compressed (miCOMPRESSED)
 * elements, the "small data element" tag packing, and numeric arrays whose
 * storage type may be narrower than their MATLAB class (e.g. a double
 * array stored as uint8 values). Values are kept column-major exactly as
 * stored; consumers handle layout.
 */

import * as zlib from "zlib";

// storage data types
const MI_INT8 = 1;
const MI_UINT8 = 2;
const MI_INT16 = 3;
const MI_UINT16 = 4;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;
const MI_UTF8 = 16;

export type NumericArray =
  | Int8Array
  | Uint8Array
  | Int16Array
  | Uint16Array
  | Int32Array
  | Uint32Array
  | Float32Array
  | Float64Array;

export interface MatVariable {
  name: string;
  /** MATLAB dimensions, column-major layout. */
  dims: number[];
  /** mxCLASS id from the array flags (6 = double, 9 = uint8, ...). */
  classId: number;
  /** Raw stored values in file order (column-major). */
  data: NumericArray;
}

export class MatFormatError extends Error {}

interface Cursor {
  view: DataView;
  offset: number;
  little: boolean;
}

function u16(c: Cursor, at: number): number {
  return c.view.getUint16(at, c.little);
}

function u32(c: Cursor, at: number): number {
  return c.view.getUint32(at, c.little);
}

function align8(offset: number): number {
  return offset + ((8 - (offset % 8)) % 8);
}

interface Element {
  type: number;
  /** Absolute byte range of the element payload inside the cursor's view. */
  start: number;
  size: number;
  /** Offset just past the element, 8-byte aligned. */
  next: number;
}

function readElementHeader(c: Cursor): Element {
  if (c.offset + 8 > c.view.byteLength) {
    throw new MatFormatError(`truncated element header at byte ${c.offset}`);
  }
  const typeField = u32(c, c.offset);
  const small = typeField >>> 16;
  if (small !== 0) {
    // small data element: size in the upper half, payload in the next 4 bytes
    return { type: typeField & 0xffff, start: c.offset + 4, size: small, next: c.offset + 8 };
  }
  const size = u32(c, c.offset + 4);
  const start = c.offset + 8;
  if (start + size > c.view.byteLength) {
    throw new MatFormatError(`element at byte ${c.offset} overruns the file`);
  }
  return { type: typeField, start, size, next: align8(start + size) };
}

function sliceBytes(c: Cursor, el: Element): Uint8Array {
  return new Uint8Array(c.view.buffer, c.view.byteOffset + el.start, el.size);
}

function numericData(c: Cursor, el: Element): NumericArray {
  const bytes = sliceBytes(c, el);
  // Copy so the result survives the source buffer and has native alignment.
  const copy = bytes.slice();
  const view = new DataView(copy.buffer);
  const readers: Record<number, [number, (i: number) => number]> = {
    [MI_INT8]: [1, (i) => view.getInt8(i)],
    [MI_UINT8]: [1, (i) => view.getUint8(i)],
    [MI_INT16]: [2, (i) => view.getInt16(i, c.little)],
    [MI_UINT16]: [2, (i) => view.getUint16(i, c.little)],
    [MI_INT32]: [4, (i) => view.getInt32(i, c.little)],
    [MI_UINT32]: [4, (i) => view.getUint32(i, c.little)],
    [MI_SINGLE]: [4, (i) => view.getFloat32(i, c.little)],
    [MI_DOUBLE]: [8, (i) => view.getFloat64(i, c.little)],
  };
  const entry = readers[el.type];
  if (!entry) {
    throw new MatFormatError(`unsupported numeric storage type ${el.type}`);
  }
  const [width, read] = entry;
  const count = el.size / width;
  if (!Number.isInteger(count)) {
    throw new MatFormatError(`element size ${el.size} not a multiple of ${width}`);
  }
  if (el.type === MI_UINT8) return copy;
  const ctor: Record<number, new (n: number) => NumericArray> = {
    [MI_INT8]: Int8Array,
    [MI_INT16]: Int16Array,
    [MI_UINT16]: Uint16Array,
    [MI_INT32]: Int32Array,
    [MI_UINT32]: Uint32Array,
    [MI_SINGLE]: Float32Array,
    [MI_DOUBLE]: Float64Array,
  };
  const out = new ctor[el.type](count);
  for (let i = 0; i < count; i++) out[i] = read(i * width);
  return out;
}

function parseMatrix(c: Cursor, el: Element): MatVariable {
  const inner: Cursor = { view: c.view, offset: el.start, little: c.little };
  const end = el.start + el.size;

  const flagsEl = readElementHeader(inner);
  if (flagsEl.type !== MI_UINT32 || flagsEl.size < 8) {
    throw new MatFormatError("matrix missing array-flags subelement");
  }
  const classId = u32(inner, flagsEl.start) & 0xff;
  inner.offset = flagsEl.next;

  const dimsEl = readElementHeader(inner);
  if (dimsEl.type !== MI_INT32) {
    throw new MatFormatError("matrix missing dimensions subelement");
  }
  const dims: number[] = [];
  for (let i = 0; i < dimsEl.size / 4; i++) {
    dims.push(c.view.getInt32(dimsEl.start + 4 * i, c.little));
  }
  inner.offset = dimsEl.next;

  const nameEl = readElementHeader(inner);
  if (nameEl.type !== MI_INT8 && nameEl.type !== MI_UTF8) {
    throw new MatFormatError("matrix missing name subelement");
  }
  const name = Buffer.from(sliceBytes(inner, nameEl)).toString("utf8");
  inner.offset = nameEl.next;

  if (inner.offset >= end) {
    throw new MatFormatError(`variable ${name}: no data subelement`);
  }
  const dataEl = readElementHeader(inner);
  const data = numericData(inner, dataEl);

  const expected = dims.reduce((a, b) => a * b, 1);
  if (data.length !== expected) {
    throw new MatFormatError(
      `variable ${name}: ${data.length} values for dims [${dims.join("x")}]`,
    );
  }
  return { name, dims, classId, data };
}

function parseTopLevel(c: Cursor, out: Map<string, MatVariable>): void {
  while (c.offset + 8 <= c.view.byteLength) {
    const el = readElementHeader(c);
    if (el.type === MI_COMPRESSED) {
      const inflated = zlib.inflateSync(Buffer.from(sliceBytes(c, el)));
      const view = new DataView(inflated.buffer, inflated.byteOffset, inflated.byteLength);
      parseTopLevel({ view, offset: 0, little: c.little }, out);
    } else if (el.type === MI_MATRIX) {
      const variable = parseMatrix(c, el);
      out.set(variable.name, variable);
    }
    // other element kinds (globals, subsystem data) are skipped
    c.offset = el.next;
  }
}

/** Parse a MAT 5 buffer into its named numeric variables. */
export function readMat(buf: Buffer): Map<string, MatVariable> {
  if (buf.length < 128) {
    throw new MatFormatError("file too short for a MAT 5 header");
  }
  const head = buf.toString("latin1", 0, 4);
  if (head.startsWith("\0")) {
    throw new MatFormatError("MAT 4 files are not supported");
  }
  const endianPair = buf.toString("latin1", 126, 128);
  let little: boolean;
  if (endianPair === "IM") {
    little = true;
  } else if (endianPair === "MI") {
    little = false;
  } else {
    throw new MatFormatError(`bad endian indicator ${JSON.stringify(endianPair)}`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const cursor: Cursor = { view, offset: 128, little };
  const version = u16(cursor, 124);
  if (version !== 0x0100) {
    throw new MatFormatError(`unsupported MAT version 0x${version.toString(16)}`);
  }
  const out = new Map<string, MatVariable>();
  parseTopLevel(cursor, out);
  return out;
}
