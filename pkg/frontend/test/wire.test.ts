// Frame codec tests. The golden hex literals are shared with the
// primary package's protocol suite, so both implementations are pinned
// to the same bytes rather than to each other's code.

import { describe, expect, it } from "vitest";

import {
  FrameParser,
  InvalidShapeError,
  MSG_HELLO,
  MSG_PREDICT_REQUEST,
  MSG_PREDICT_RESPONSE,
  PredictRequest,
  PredictResponse,
  ProtocolError,
  STATUS_MALFORMED,
  STATUS_OK,
  decodeRequest,
  decodeResponse,
  encodeFrame,
  encodeRequest,
  encodeResponse,
  errorResponse,
} from "../src/wire";

const GOLDEN_REQUEST_HEX =
  "44475052010136000000" +
  "000000000000e03f000000000000d03f000000000000e03f000000000000d03f" +
  "0101020000000000803e0000003f0000803f00000000";

const GOLDEN_RESPONSE_HEX =
  "44475052010217000000" +
  "00010102000000" +
  "0000403f000000bf0000003e00000040";

function makeRequest(overrides: Partial<PredictRequest> = {}): PredictRequest {
  return {
    t: 0.5,
    alphaBar: 0.25,
    betaBar: 0.5,
    deltaBar: 0.25,
    xT: { shape: [2], data: Float64Array.from([0.25, 0.5]) },
    xIn: { shape: [2], data: Float64Array.from([1.0, 0.0]) },
    wantEps: true,
    wantGradient: false,
    ...overrides,
  };
}

describe("golden frames", () => {
  it("encodes the reference request bytes", () => {
    expect(encodeRequest(makeRequest()).toString("hex")).toBe(GOLDEN_REQUEST_HEX);
  });

  it("encodes the reference response bytes", () => {
    const resp: PredictResponse = {
      status: STATUS_OK,
      message: "",
      res: { shape: [2], data: Float64Array.from([0.75, -0.5]) },
      eps: { shape: [2], data: Float64Array.from([0.125, 2.0]) },
      gradient: null,
    };
    expect(encodeResponse(resp).toString("hex")).toBe(GOLDEN_RESPONSE_HEX);
  });

  it("decodes the reference request bytes", () => {
    const frame = Buffer.from(GOLDEN_REQUEST_HEX, "hex");
    const req = decodeRequest(frame.subarray(10));
    expect(req.t).toBe(0.5);
    expect(req.alphaBar).toBe(0.25);
    expect(req.betaBar).toBe(0.5);
    expect(req.deltaBar).toBe(0.25);
    expect(req.wantEps).toBe(true);
    expect(req.wantGradient).toBe(false);
    expect(req.xT.shape).toEqual([2]);
    expect(Array.from(req.xT.data)).toEqual([0.25, 0.5]);
    expect(Array.from(req.xIn.data)).toEqual([1.0, 0.0]);
  });

  it("decodes the reference response bytes", () => {
    const frame = Buffer.from(GOLDEN_RESPONSE_HEX, "hex");
    const resp = decodeResponse(frame.subarray(10));
    expect(resp.status).toBe(STATUS_OK);
    expect(Array.from(resp.res!.data)).toEqual([0.75, -0.5]);
    expect(Array.from(resp.eps!.data)).toEqual([0.125, 2.0]);
    expect(resp.gradient).toBeNull();
  });
});

describe("round trips", () => {
  it("keeps a multi-dimensional request intact", () => {
    const data = Float64Array.from({ length: 6 }, (_, i) => (i - 2.5) / 4);
    const req = makeRequest({
      xT: { shape: [2, 3], data },
      xIn: { shape: [2, 3], data: data.map((v) => v * 0.5) },
      wantEps: false,
      wantGradient: true,
    });
    const back = decodeRequest(encodeRequest(req).subarray(10));
    expect(back.xT.shape).toEqual([2, 3]);
    expect(back.wantEps).toBe(false);
    expect(back.wantGradient).toBe(true);
    // values chosen exactly representable in float32
    expect(Array.from(back.xT.data)).toEqual(Array.from(data));
    expect(Array.from(back.xIn.data)).toEqual(Array.from(data.map((v) => v * 0.5)));
  });

  it.each([
    { eps: false, gradient: false },
    { eps: true, gradient: false },
    { eps: false, gradient: true },
    { eps: true, gradient: true },
  ])("keeps a response intact (eps=$eps gradient=$gradient)", ({ eps, gradient }) => {
    const shape = [3, 1];
    const mk = (base: number) =>
      ({ shape, data: Float64Array.from([base, base + 0.25, base - 0.75]) });
    const resp: PredictResponse = {
      status: STATUS_OK,
      message: "",
      res: mk(0.5),
      eps: eps ? mk(-1.5) : null,
      gradient: gradient ? mk(2.0) : null,
    };
    const back = decodeResponse(encodeResponse(resp).subarray(10));
    expect(back.res!.shape).toEqual(shape);
    expect(Array.from(back.res!.data)).toEqual(Array.from(resp.res!.data));
    if (eps) expect(Array.from(back.eps!.data)).toEqual(Array.from(resp.eps!.data));
    else expect(back.eps).toBeNull();
    if (gradient)
      expect(Array.from(back.gradient!.data)).toEqual(Array.from(resp.gradient!.data));
    else expect(back.gradient).toBeNull();
  });

  it("keeps an error response intact", () => {
    const resp = errorResponse(STATUS_MALFORMED, "boom: é");
    const back = decodeResponse(encodeResponse(resp).subarray(10));
    expect(back.status).toBe(STATUS_MALFORMED);
    expect(back.message).toBe("boom: é");
    expect(back.res).toBeNull();
  });
});

describe("malformed payloads", () => {
  it("flags zero extents as an invalid shape", () => {
    const payload = Buffer.alloc(38);
    payload.writeDoubleLE(0.5, 0);
    payload.writeDoubleLE(0.5, 8);
    payload.writeDoubleLE(0.5, 16);
    payload.writeDoubleLE(0.25, 24);
    payload.writeUInt8(1, 32);
    payload.writeUInt8(1, 33);
    payload.writeUInt32LE(0, 34);
    expect(() => decodeRequest(payload)).toThrow(InvalidShapeError);
  });

  it("treats truncation as malformed, not invalid shape", () => {
    const frame = Buffer.from(GOLDEN_REQUEST_HEX, "hex");
    for (const cut of [frame.subarray(10, 20), frame.subarray(10, frame.length - 1)]) {
      let caught: unknown;
      try {
        decodeRequest(Buffer.from(cut));
      } catch (err) {
        caught = err;
      }
      expect(caught).toBeInstanceOf(ProtocolError);
      expect(caught).not.toBeInstanceOf(InvalidShapeError);
    }
  });

  it("rejects a response whose tensors disagree with its extents", () => {
    const frame = Buffer.from(GOLDEN_RESPONSE_HEX, "hex");
    expect(() => decodeResponse(frame.subarray(10, frame.length - 4))).toThrow(
      ProtocolError
    );
  });
});

describe("frame parser", () => {
  it("reassembles frames fed one byte at a time", () => {
    const bytes = Buffer.concat([
      encodeFrame(MSG_HELLO, Buffer.from([1])),
      Buffer.from(GOLDEN_REQUEST_HEX, "hex"),
      Buffer.from(GOLDEN_RESPONSE_HEX, "hex"),
    ]);
    const parser = new FrameParser();
    const frames = [];
    for (let i = 0; i < bytes.length; i++) {
      frames.push(...parser.push(bytes.subarray(i, i + 1)));
    }
    expect(frames.map((f) => f.msgType)).toEqual([
      MSG_HELLO,
      MSG_PREDICT_REQUEST,
      MSG_PREDICT_RESPONSE,
    ]);
    expect(frames[0].payload).toEqual(Buffer.from([1]));
    expect(frames[1].payload.length).toBe(0x36);
    expect(frames[2].payload.length).toBe(0x17);
  });

  it("throws on a bad magic", () => {
    const bad = Buffer.from(GOLDEN_REQUEST_HEX, "hex");
    bad[0] = 0x58;
    expect(() => new FrameParser().push(bad)).toThrow(/magic/);
  });

  it("throws on a version mismatch", () => {
    const bad = Buffer.from(GOLDEN_REQUEST_HEX, "hex");
    bad[4] = 9;
    expect(() => new FrameParser().push(bad)).toThrow(/version/);
  });

  it("holds a partial frame until the rest arrives", () => {
    const frame = Buffer.from(GOLDEN_REQUEST_HEX, "hex");
    const parser = new FrameParser();
    expect(parser.push(frame.subarray(0, 15))).toEqual([]);
    const frames = parser.push(frame.subarray(15));
    expect(frames.length).toBe(1);
    expect(frames[0].msgType).toBe(MSG_PREDICT_REQUEST);
  });
});
