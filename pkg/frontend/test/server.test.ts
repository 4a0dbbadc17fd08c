// Request handling and process-level behavior. The in-process tests
// drive handleFrame directly; the spawn tests run the built entry
// point over real pipes and a real TCP socket (npm test builds first).

import { spawn } from "node:child_process";
import { existsSync } from "node:fs";
import * as net from "node:net";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

import {
  Frame,
  FrameParser,
  MSG_HELLO,
  MSG_PREDICT_REQUEST,
  PROTOCOL_VERSION,
  PredictRequest,
  STATUS_CAPABILITY_MISSING,
  STATUS_INVALID_SHAPE,
  STATUS_MALFORMED,
  STATUS_OK,
  decodeResponse,
  encodeFrame,
  encodeRequest,
} from "../src/wire";
import { makeGaussianOracle, parseKind } from "../src/predictors";
import { handleFrame, handlePredict } from "../src/server";

const SERVER_JS = path.resolve(__dirname, "../dist/server.js");

function request(overrides: Partial<PredictRequest> = {}): PredictRequest {
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

function predictPayload(overrides: Partial<PredictRequest> = {}): Buffer {
  return encodeRequest(request(overrides)).subarray(10);
}

describe("handlePredict", () => {
  it("serves constant heads at the requested shape", () => {
    const resp = handlePredict(parseKind("constant:0.1,0.2"), predictPayload());
    expect(resp.status).toBe(STATUS_OK);
    // quantization to float32 happens at encode time, not here
    expect(Array.from(resp.res!.data)).toEqual([0.1, 0.1]);
    expect(resp.res!.shape).toEqual([2]);
    expect(resp.eps!.data[0]).toBe(0.2);
    expect(resp.gradient).toBeNull();
  });

  it("omits eps when the request does not ask for it", () => {
    const resp = handlePredict(
      parseKind("constant:0.1,0.2"),
      predictPayload({ wantEps: false })
    );
    expect(resp.status).toBe(STATUS_OK);
    expect(resp.eps).toBeNull();
  });

  it("omits eps when the kind has no noise head, even if asked", () => {
    const resp = handlePredict(parseKind("gaussian-oracle:0.2,0.3"), predictPayload());
    expect(resp.status).toBe(STATUS_OK);
    expect(resp.eps).toBeNull();
  });

  it("includes a zero gradient for state-independent kinds", () => {
    const resp = handlePredict(
      parseKind("constant:0.1"),
      predictPayload({ wantGradient: true })
    );
    expect(resp.status).toBe(STATUS_OK);
    expect(Array.from(resp.gradient!.data)).toEqual([0, 0]);
  });

  it("answers capability-missing for echo gradients", () => {
    const resp = handlePredict(parseKind("echo"), predictPayload({ wantGradient: true }));
    expect(resp.status).toBe(STATUS_CAPABILITY_MISSING);
    expect(resp.message).toBe("predictor has no guidance gradient");
  });

  it("rejects zero extents with the invalid-shape status", () => {
    const payload = Buffer.alloc(38);
    payload.writeDoubleLE(0.5, 0);
    payload.writeDoubleLE(0.5, 8);
    payload.writeDoubleLE(0.5, 16);
    payload.writeDoubleLE(0.25, 24);
    payload.writeUInt8(1, 32);
    payload.writeUInt8(1, 33);
    payload.writeUInt32LE(0, 34);
    const resp = handlePredict(parseKind("echo"), payload);
    expect(resp.status).toBe(STATUS_INVALID_SHAPE);
  });

  it("flags garbage payloads as malformed", () => {
    const resp = handlePredict(parseKind("echo"), Buffer.from([1, 2, 3, 4, 5]));
    expect(resp.status).toBe(STATUS_MALFORMED);
  });

  it("flags non-finite tensor values as malformed", () => {
    const resp = handlePredict(
      parseKind("echo"),
      predictPayload({ xT: { shape: [2], data: Float64Array.from([NaN, 0]) } })
    );
    expect(resp.status).toBe(STATUS_MALFORMED);
    expect(resp.message).toMatch(/non-finite/);
  });
});

describe("handleFrame", () => {
  it("echoes hello with the protocol version", () => {
    const reply = handleFrame(parseKind("echo"), {
      msgType: MSG_HELLO,
      payload: Buffer.from([PROTOCOL_VERSION]),
    });
    expect(reply.toString("hex")).toBe("4447505201000100000001");
  });

  it("answers unexpected message types with a malformed status", () => {
    const reply = handleFrame(parseKind("echo"), { msgType: 7, payload: Buffer.alloc(0) });
    const resp = decodeResponse(reply.subarray(10));
    expect(resp.status).toBe(STATUS_MALFORMED);
    expect(resp.message).toBe("unexpected message type 7");
  });

  it("matches the in-process oracle through the full codec", () => {
    const req = request({
      xT: { shape: [2], data: Float64Array.from([0.3, -0.7]) },
      xIn: { shape: [2], data: Float64Array.from([0.8, 0.1]) },
    });
    const reply = handleFrame(parseKind("gaussian-oracle:0.2,0.3"), {
      msgType: MSG_PREDICT_REQUEST,
      payload: encodeRequest(req).subarray(10),
    });
    const resp = decodeResponse(reply.subarray(10));
    const want = makeGaussianOracle(0.2, 0.3).predict(req.xT.data, req.xIn.data, {
      t: req.t,
      alphaBar: req.alphaBar,
      betaBar: req.betaBar,
      deltaBar: req.deltaBar,
      shape: [2],
    });
    expect(resp.status).toBe(STATUS_OK);
    for (let i = 0; i < 2; i++) {
      expect(resp.res!.data[i]).toBeCloseTo(want.res[i], 7);
    }
  });
});

interface RunResult {
  code: number | null;
  frames: Frame[];
  stderr: string;
}

function runServer(args: string[], input: Buffer): Promise<RunResult> {
  return new Promise((resolve, reject) => {
    const child = spawn(process.execPath, [SERVER_JS, ...args], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    const out: Buffer[] = [];
    const err: Buffer[] = [];
    child.stdout.on("data", (c: Buffer) => out.push(c));
    child.stderr.on("data", (c: Buffer) => err.push(c));
    child.on("error", reject);
    const timer = setTimeout(() => {
      child.kill();
      reject(new Error("server did not exit"));
    }, 8000);
    child.on("close", (code) => {
      clearTimeout(timer);
      try {
        resolve({
          code,
          frames: new FrameParser().push(Buffer.concat(out)),
          stderr: Buffer.concat(err).toString(),
        });
      } catch (e) {
        reject(e);
      }
    });
    child.stdin.write(input);
    child.stdin.end();
  });
}

describe("built entry point", () => {
  it("exists (run npm run build first)", () => {
    expect(existsSync(SERVER_JS)).toBe(true);
  });

  it("handshakes, answers, and exits cleanly when stdin closes", async () => {
    const hello = encodeFrame(MSG_HELLO, Buffer.from([PROTOCOL_VERSION]));
    const { code, frames } = await runServer(
      ["--kind", "gaussian-oracle:0.2,0.3"],
      Buffer.concat([hello, encodeRequest(request())])
    );
    expect(code).toBe(0);
    expect(frames.length).toBe(2);
    expect(frames[0].msgType).toBe(MSG_HELLO);
    expect(frames[0].payload).toEqual(Buffer.from([PROTOCOL_VERSION]));
    const resp = decodeResponse(frames[1].payload);
    const req = request();
    const want = makeGaussianOracle(0.2, 0.3).predict(req.xT.data, req.xIn.data, {
      t: req.t,
      alphaBar: req.alphaBar,
      betaBar: req.betaBar,
      deltaBar: req.deltaBar,
      shape: [2],
    });
    expect(resp.status).toBe(STATUS_OK);
    for (let i = 0; i < 2; i++) {
      expect(resp.res!.data[i]).toBeCloseTo(want.res[i], 7);
    }
  });

  it("survives a content error and keeps serving", async () => {
    const hello = encodeFrame(MSG_HELLO, Buffer.from([PROTOCOL_VERSION]));
    const garbage = encodeFrame(MSG_PREDICT_REQUEST, Buffer.from([9, 9, 9, 9, 9]));
    const good = encodeRequest(request());
    const { code, frames } = await runServer(
      ["--kind", "constant:0.5"],
      Buffer.concat([hello, garbage, good])
    );
    expect(code).toBe(0);
    expect(frames.length).toBe(3);
    expect(decodeResponse(frames[1].payload).status).toBe(STATUS_MALFORMED);
    const resp = decodeResponse(frames[2].payload);
    expect(resp.status).toBe(STATUS_OK);
    expect(resp.res!.data[0]).toBe(0.5);
  });

  it("rejects a bad kind with a nonzero exit", async () => {
    const { code, stderr } = await runServer(["--kind", "transformer:large"], Buffer.alloc(0));
    expect(code).not.toBe(0);
    expect(stderr).toMatch(/unknown predictor kind/);
  });

  it("serves over TCP via --listen", async () => {
    const child = spawn(process.execPath, [SERVER_JS, "--kind", "constant:0.25", "--listen", "127.0.0.1:0"]);
    try {
      const address = await new Promise<{ host: string; port: number }>((resolve, reject) => {
        let text = "";
        const timer = setTimeout(() => reject(new Error(`no listening line, got: ${text}`)), 8000);
        child.stderr.on("data", (c: Buffer) => {
          text += c.toString();
          const m = text.match(/listening on ([\d.]+):(\d+)/);
          if (m) {
            clearTimeout(timer);
            resolve({ host: m[1], port: Number(m[2]) });
          }
        });
      });
      const frames = await new Promise<Frame[]>((resolve, reject) => {
        const socket = net.connect(address.port, address.host);
        const parser = new FrameParser();
        const collected: Frame[] = [];
        const timer = setTimeout(() => {
          socket.destroy();
          reject(new Error("no TCP reply"));
        }, 8000);
        socket.on("connect", () => {
          socket.write(encodeFrame(MSG_HELLO, Buffer.from([PROTOCOL_VERSION])));
          socket.write(encodeRequest(request()));
        });
        socket.on("data", (c: Buffer) => {
          collected.push(...parser.push(c));
          if (collected.length >= 2) {
            clearTimeout(timer);
            socket.end();
            resolve(collected);
          }
        });
        socket.on("error", (e) => {
          clearTimeout(timer);
          reject(e);
        });
      });
      expect(frames[0].msgType).toBe(MSG_HELLO);
      const resp = decodeResponse(frames[1].payload);
      expect(resp.status).toBe(STATUS_OK);
      expect(resp.res!.data[0]).toBe(0.25);
      expect(resp.res!.data[1]).toBe(0.25);
    } finally {
      child.kill();
    }
  });
});
