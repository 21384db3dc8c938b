/**
 * DRIM raw container: the consuming library's image format.
 *
 * Layout (integers little-endian):
 *   magic   4 bytes "DRIM"
 *   count   u32
 *   chan    u8, height u8, width u8
 *   items   count times: u8 label + chan*height*width pixel bytes (C,H,W order)
 */

export const DRIM_MAGIC = "DRIM";

export interface DrimDataset {
  count: number;
  channels: number;
  height: number;
  width: number;
  labels: Uint8Array;
  /** count * channels*height*width pixel bytes, per-item C,H,W order. */
  pixels: Uint8Array;
}

export function encodeDrim(ds: DrimDataset): Buffer {
  const itemSize = ds.channels * ds.height * ds.width;
  if (ds.labels.length !== ds.count || ds.pixels.length !== ds.count * itemSize) {
    throw new Error("label/pixel extents disagree with count");
  }
  const out = Buffer.alloc(11 + ds.count * (1 + itemSize));
  out.write(DRIM_MAGIC, 0, "latin1");
  out.writeUInt32LE(ds.count, 4);
  out.writeUInt8(ds.channels, 8);
  out.writeUInt8(ds.height, 9);
  out.writeUInt8(ds.width, 10);
  let at = 11;
  for (let n = 0; n < ds.count; n++) {
    out.writeUInt8(ds.labels[n], at);
    out.set(ds.pixels.subarray(n * itemSize, (n + 1) * itemSize), at + 1);
    at += 1 + itemSize;
  }
  return out;
}

export function decodeDrim(buf: Buffer): DrimDataset {
  if (buf.toString("latin1", 0, 4) !== DRIM_MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(buf.toString("latin1", 0, 4))}`);
  }
  const count = buf.readUInt32LE(4);
  const channels = buf.readUInt8(8);
  const height = buf.readUInt8(9);
  const width = buf.readUInt8(10);
  const itemSize = channels * height * width;
  if (buf.length !== 11 + count * (1 + itemSize)) {
    throw new Error(`count ${count} disagrees with file size ${buf.length}`);
  }
  const labels = new Uint8Array(count);
  const pixels = new Uint8Array(count * itemSize);
  let at = 11;
  for (let n = 0; n < count; n++) {
    labels[n] = buf.readUInt8(at);
    pixels.set(buf.subarray(at + 1, at + 1 + itemSize), n * itemSize);
    at += 1 + itemSize;
  }
  return { count, channels, height, width, labels, pixels };
}
