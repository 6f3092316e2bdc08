// Binary mesh frame codec (little-endian, see docs/formats.md):
//   magic "CLMF" | frame u64 | count u32
//   per category: id u32, vcount u32, icount u32, f32 xyz * vcount, u32 * icount

const MAGIC = 0x464d4c43; // "CLMF" read as LE u32

export interface MeshBlock {
  categoryId: number;
  vertices: Float32Array; // length 3 * vertexCount
  indices: Uint32Array;   // length 3 * triangleCount
}

export interface MeshFrame {
  frame: number;
  blocks: MeshBlock[];
}

export function decodeMeshFrame(buf: ArrayBuffer): MeshFrame {
  const view = new DataView(buf);
  if (buf.byteLength < 16 || view.getUint32(0, true) !== MAGIC) {
    throw new Error("bad mesh frame magic");
  }
  const frame = Number(view.getBigUint64(4, true));
  const count = view.getUint32(12, true);
  let off = 16;
  const blocks: MeshBlock[] = [];
  for (let i = 0; i < count; i++) {
    const categoryId = view.getUint32(off, true);
    const vcount = view.getUint32(off + 4, true);
    const icount = view.getUint32(off + 8, true);
    off += 12;
    // byte offsets are 4-aligned throughout, so views are safe
    const vertices = new Float32Array(buf, off, vcount * 3).slice();
    off += vcount * 12;
    const indices = new Uint32Array(buf, off, icount).slice();
    off += icount * 4;
    blocks.push({ categoryId, vertices, indices });
  }
  if (off !== buf.byteLength) {
    throw new Error(`mesh frame has ${buf.byteLength - off} trailing bytes`);
  }
  return { frame, blocks };
}

export function encodeMeshFrame(frame: MeshFrame): ArrayBuffer {
  let size = 16;
  for (const b of frame.blocks) size += 12 + b.vertices.byteLength + b.indices.byteLength;
  const buf = new ArrayBuffer(size);
  const view = new DataView(buf);
  view.setUint32(0, MAGIC, true);
  view.setBigUint64(4, BigInt(frame.frame), true);
  view.setUint32(12, frame.blocks.length, true);
  let off = 16;
  for (const b of frame.blocks) {
    view.setUint32(off, b.categoryId, true);
    view.setUint32(off + 4, b.vertices.length / 3, true);
    view.setUint32(off + 8, b.indices.length, true);
    off += 12;
    new Float32Array(buf, off, b.vertices.length).set(b.vertices);
    off += b.vertices.byteLength;
    new Uint32Array(buf, off, b.indices.length).set(b.indices);
    off += b.indices.byteLength;
  }
  return buf;
}
