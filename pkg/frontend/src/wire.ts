/**
 * Framed wire protocol for out-of-process predictors.
 *
 * Every frame is a 10-byte header followed by a payload, all integers
 * little-endian:
 *
 *     offset  size  field
 *     0       4     magic "DGPR"
 *     4       1     protocol version (1)
 *     5       1     message type
 *     6       4     payload length (uint32)
 *
 * Message types: 0 hello (payload: uint8 version), 1 predict request,
 * 2 predict response. Header reals are float64 and tensor payloads
 * float32, so a round trip quantizes tensors to float32. Response
 * statuses: 0 ok, 1 malformed or internal failure, 2 invalid shape,
 * 3 requested capability missing.
 */

export const MAGIC = Buffer.from("DGPR", "ascii");
export const PROTOCOL_VERSION = 1;
export const HEADER_SIZE = 10;

export const MSG_HELLO = 0;
export const MSG_PREDICT_REQUEST = 1;
export const MSG_PREDICT_RESPONSE = 2;

export const STATUS_OK = 0;
export const STATUS_MALFORMED = 1;
export const STATUS_INVALID_SHAPE = 2;
export const STATUS_CAPABILITY_MISSING = 3;

// refuse absurd frames before allocating
const MAX_PAYLOAD = 1 << 30;

export class ProtocolError extends Error {
  status: number;

  constructor(message: string, status: number = STATUS_MALFORMED) {
    super(message);
    this.name = "ProtocolError";
    this.status = status;
  }
}

export class InvalidShapeError extends ProtocolError {
  constructor(message: string) {
    super(message, STATUS_INVALID_SHAPE);
    this.name = "InvalidShapeError";
  }
}

/** Dense tensor, row-major; float32 on the wire, widened for math. */
export interface Tensor {
  shape: number[];
  data: Float64Array;
}

export interface PredictRequest {
  t: number;
  alphaBar: number;
  betaBar: number;
  deltaBar: number;
  xT: Tensor;
  xIn: Tensor;
  wantEps: boolean;
  wantGradient: boolean;
}

export interface PredictResponse {
  status: number;
  message: string;
  res: Tensor | null;
  eps: Tensor | null;
  gradient: Tensor | null;
}

export function elementCount(shape: number[]): number {
  let n = 1;
  for (const extent of shape) n *= extent;
  return n;
}

function shapeText(shape: number[]): string {
  return `(${shape.join(", ")})`;
}

function writeF32Array(buf: Buffer, offset: number, data: ArrayLike<number>): number {
  for (let i = 0; i < data.length; i++) {
    offset = buf.writeFloatLE(data[i], offset);
  }
  return offset;
}

function readF32Array(buf: Buffer, offset: number, n: number): Float64Array {
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = buf.readFloatLE(offset + 4 * i);
  }
  return out;
}

export function encodeFrame(msgType: number, payload: Buffer): Buffer {
  const head = Buffer.alloc(HEADER_SIZE);
  MAGIC.copy(head, 0);
  head.writeUInt8(PROTOCOL_VERSION, 4);
  head.writeUInt8(msgType, 5);
  head.writeUInt32LE(payload.length, 6);
  return Buffer.concat([head, payload]);
}

export interface Frame {
  msgType: number;
  payload: Buffer;
}

/**
 * Incremental frame splitter for a byte stream delivered in chunks.
 *
 * push() absorbs one chunk and returns every frame it completed. A bad
 * header (wrong magic, wrong version, oversized payload) throws
 * ProtocolError; the stream is desynced beyond recovery at that point
 * and the connection should be dropped.
 */
export class FrameParser {
  private pending: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): Frame[] {
    this.pending = this.pending.length
      ? Buffer.concat([this.pending, chunk])
      : chunk;
    const frames: Frame[] = [];
    while (this.pending.length >= HEADER_SIZE) {
      if (!this.pending.subarray(0, 4).equals(MAGIC)) {
        throw new ProtocolError(
          `bad frame magic 0x${this.pending.subarray(0, 4).toString("hex")}`
        );
      }
      const version = this.pending.readUInt8(4);
      if (version !== PROTOCOL_VERSION) {
        throw new ProtocolError(
          `protocol version mismatch: peer ${version}, local ${PROTOCOL_VERSION}`
        );
      }
      const msgType = this.pending.readUInt8(5);
      const length = this.pending.readUInt32LE(6);
      if (length > MAX_PAYLOAD) {
        throw new ProtocolError(`frame payload ${length} exceeds limit`);
      }
      if (this.pending.length < HEADER_SIZE + length) break;
      // copy the payload so the retained buffer can be released
      const payload = Buffer.from(
        this.pending.subarray(HEADER_SIZE, HEADER_SIZE + length)
      );
      this.pending = this.pending.subarray(HEADER_SIZE + length);
      frames.push({ msgType, payload });
    }
    return frames;
  }
}

/** Frame a predict request; tensors are cast to float32. */
export function encodeRequest(req: PredictRequest): Buffer {
  const shape = req.xT.shape;
  if (
    shape.length !== req.xIn.shape.length ||
    shape.some((e, i) => e !== req.xIn.shape[i])
  ) {
    throw new ProtocolError(
      `x_t and x_in shapes differ: ${shapeText(shape)} vs ${shapeText(req.xIn.shape)}`
    );
  }
  if (shape.length === 0 || shape.length > 255 || elementCount(shape) === 0) {
    throw new InvalidShapeError(`unsupported tensor shape ${shapeText(shape)}`);
  }
  const n = elementCount(shape);
  const payload = Buffer.alloc(34 + 4 * shape.length + 2 * 4 * n);
  let off = 0;
  off = payload.writeDoubleLE(req.t, off);
  off = payload.writeDoubleLE(req.alphaBar, off);
  off = payload.writeDoubleLE(req.betaBar, off);
  off = payload.writeDoubleLE(req.deltaBar, off);
  off = payload.writeUInt8((req.wantEps ? 1 : 0) | (req.wantGradient ? 2 : 0), off);
  off = payload.writeUInt8(shape.length, off);
  for (const extent of shape) off = payload.writeUInt32LE(extent, off);
  off = writeF32Array(payload, off, req.xT.data);
  writeF32Array(payload, off, req.xIn.data);
  return encodeFrame(MSG_PREDICT_REQUEST, payload);
}

/**
 * Parse a predict-request payload.
 *
 * Throws InvalidShapeError for zero extents and plain ProtocolError for
 * any other malformation, so servers can map the two to their distinct
 * statuses.
 */
export function decodeRequest(payload: Buffer): PredictRequest {
  if (payload.length < 34) {
    throw new ProtocolError(
      `malformed predict request: ${payload.length} bytes is too short for the header`
    );
  }
  const t = payload.readDoubleLE(0);
  const alphaBar = payload.readDoubleLE(8);
  const betaBar = payload.readDoubleLE(16);
  const deltaBar = payload.readDoubleLE(24);
  const flags = payload.readUInt8(32);
  const ndim = payload.readUInt8(33);
  let off = 34;
  if (payload.length < off + 4 * ndim) {
    throw new ProtocolError("malformed predict request: truncated extents");
  }
  const shape: number[] = [];
  for (let i = 0; i < ndim; i++) {
    shape.push(payload.readUInt32LE(off));
    off += 4;
  }
  if (ndim === 0 || shape.some((e) => e === 0)) {
    throw new InvalidShapeError(`invalid tensor shape ${shapeText(shape)}`);
  }
  const n = elementCount(shape);
  const need = off + 2 * 4 * n;
  if (payload.length !== need) {
    throw new ProtocolError(
      `predict request length ${payload.length} != expected ${need} for shape ${shapeText(shape)}`
    );
  }
  const xT: Tensor = { shape, data: readF32Array(payload, off, n) };
  const xIn: Tensor = { shape, data: readF32Array(payload, off + 4 * n, n) };
  return {
    t,
    alphaBar,
    betaBar,
    deltaBar,
    xT,
    xIn,
    wantEps: (flags & 1) !== 0,
    wantGradient: (flags & 2) !== 0,
  };
}

export function errorResponse(status: number, message: string): PredictResponse {
  return { status, message, res: null, eps: null, gradient: null };
}

export function encodeResponse(resp: PredictResponse): Buffer {
  if (resp.status !== STATUS_OK) {
    const msg = Buffer.from(resp.message, "utf8").subarray(0, 65535);
    const payload = Buffer.alloc(3 + msg.length);
    payload.writeUInt8(resp.status, 0);
    payload.writeUInt16LE(msg.length, 1);
    msg.copy(payload, 3);
    return encodeFrame(MSG_PREDICT_RESPONSE, payload);
  }
  const res = resp.res;
  if (
    res === null ||
    res.shape.length === 0 ||
    res.shape.length > 255 ||
    elementCount(res.shape) === 0
  ) {
    throw new InvalidShapeError(
      `unsupported tensor shape ${shapeText(res?.shape ?? [])}`
    );
  }
  const n = elementCount(res.shape);
  for (const [name, tensor] of [["eps", resp.eps], ["gradient", resp.gradient]] as const) {
    if (tensor !== null && tensor.data.length !== n) {
      throw new ProtocolError(
        `${name} carries ${tensor.data.length} elements, res carries ${n}`
      );
    }
  }
  const tensors = 1 + (resp.eps ? 1 : 0) + (resp.gradient ? 1 : 0);
  const payload = Buffer.alloc(3 + 4 * res.shape.length + tensors * 4 * n);
  let off = 0;
  off = payload.writeUInt8(STATUS_OK, off);
  off = payload.writeUInt8((resp.eps ? 1 : 0) | (resp.gradient ? 2 : 0), off);
  off = payload.writeUInt8(res.shape.length, off);
  for (const extent of res.shape) off = payload.writeUInt32LE(extent, off);
  off = writeF32Array(payload, off, res.data);
  if (resp.eps) off = writeF32Array(payload, off, resp.eps.data);
  if (resp.gradient) writeF32Array(payload, off, resp.gradient.data);
  return encodeFrame(MSG_PREDICT_RESPONSE, payload);
}

export function decodeResponse(payload: Buffer): PredictResponse {
  if (payload.length < 1) {
    throw new ProtocolError("malformed predict response: empty payload");
  }
  const status = payload.readUInt8(0);
  if (status !== STATUS_OK) {
    if (payload.length < 3) {
      throw new ProtocolError("malformed predict response: truncated error");
    }
    const mlen = payload.readUInt16LE(1);
    const message = payload.subarray(3, 3 + mlen).toString("utf8");
    return { status, message, res: null, eps: null, gradient: null };
  }
  if (payload.length < 3) {
    throw new ProtocolError("malformed predict response: truncated header");
  }
  const flags = payload.readUInt8(1);
  const ndim = payload.readUInt8(2);
  let off = 3;
  if (payload.length < off + 4 * ndim) {
    throw new ProtocolError("malformed predict response: truncated extents");
  }
  const shape: number[] = [];
  for (let i = 0; i < ndim; i++) {
    shape.push(payload.readUInt32LE(off));
    off += 4;
  }
  if (ndim === 0 || shape.some((e) => e === 0)) {
    throw new InvalidShapeError(`invalid tensor shape ${shapeText(shape)}`);
  }
  const n = elementCount(shape);
  const tensors = 1 + (flags & 1 ? 1 : 0) + (flags & 2 ? 1 : 0);
  if (payload.length !== off + tensors * 4 * n) {
    throw new ProtocolError("predict response length mismatch");
  }
  const res: Tensor = { shape, data: readF32Array(payload, off, n) };
  off += 4 * n;
  let eps: Tensor | null = null;
  if (flags & 1) {
    eps = { shape, data: readF32Array(payload, off, n) };
    off += 4 * n;
  }
  let gradient: Tensor | null = null;
  if (flags & 2) {
    gradient = { shape, data: readF32Array(payload, off, n) };
  }
  return { status: STATUS_OK, message: "", res, eps, gradient };
}
