/**
 * Portable Float Map decoding: enough to read the service's linear renders
 * and the user's point-map files in the browser or in tests.
 */

export interface PfmImage {
  width: number;
  height: number;
  channels: 1 | 3;
  /** Row-major, top-down, interleaved. */
  data: Float32Array;
}

export function decodePfm(buffer: ArrayBuffer): PfmImage {
  const bytes = new Uint8Array(buffer);
  const tokens: string[] = [];
  let pos = 0;
  while (tokens.length < 4) {
    while (pos < bytes.length && isSpace(bytes[pos])) pos++;
    const start = pos;
    while (pos < bytes.length && !isSpace(bytes[pos])) pos++;
    if (start === pos) throw new Error("truncated PFM header");
    tokens.push(String.fromCharCode(...bytes.subarray(start, pos)));
  }
  pos++; // single whitespace after the scale line
  const [magic, w, h, scaleStr] = tokens;
  if (magic !== "PF" && magic !== "Pf") throw new Error(`not a PFM (magic ${magic})`);
  const channels = magic === "PF" ? 3 : 1;
  const width = parseInt(w, 10);
  const height = parseInt(h, 10);
  const scale = parseFloat(scaleStr);
  if (!(width > 0) || !(height > 0) || !scale === undefined || scale === 0) {
    throw new Error("malformed PFM header");
  }
  const count = width * height * channels;
  if (bytes.length - pos < count * 4) throw new Error("PFM payload truncated");
  const littleEndian = scale < 0;
  const view = new DataView(buffer, pos, count * 4);
  const data = new Float32Array(count);
  const rowLen = width * channels;
  for (let y = 0; y < height; y++) {
    const srcRow = height - 1 - y; // stored bottom-to-top
    for (let i = 0; i < rowLen; i++) {
      data[y * rowLen + i] = view.getFloat32((srcRow * rowLen + i) * 4, littleEndian);
    }
  }
  const mag = Math.abs(scale);
  if (mag !== 1) for (let i = 0; i < count; i++) data[i] *= mag;
  return { width, height, channels: channels as 1 | 3, data };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x0a || byte === 0x0d || byte === 0x09;
}

export function meanValue(img: PfmImage): number {
  let sum = 0;
  for (let i = 0; i < img.data.length; i++) sum += img.data[i];
  return sum / img.data.length;
}
