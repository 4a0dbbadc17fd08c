/**
 * Reference predictor server.
 *
 *     node dist/server.js --kind gaussian-oracle:0.2,0.3
 *     node dist/server.js --kind constant:0.1 --listen 127.0.0.1:9321
 *
 * Speaks the framed tensor protocol on standard streams by default or
 * on a TCP address with --listen. Hello frames are answered with
 * hello; predict requests are answered with status-coded responses, so
 * a content error never kills the loop. The process exits cleanly when
 * the peer closes the stream. Predictor state loads once at startup
 * and every request is handled statelessly.
 */

import * as net from "node:net";
import { parseArgs } from "node:util";

import {
  Frame,
  FrameParser,
  MSG_HELLO,
  MSG_PREDICT_REQUEST,
  PROTOCOL_VERSION,
  PredictRequest,
  PredictResponse,
  STATUS_CAPABILITY_MISSING,
  STATUS_INVALID_SHAPE,
  STATUS_MALFORMED,
  STATUS_OK,
  InvalidShapeError,
  ProtocolError,
  decodeRequest,
  encodeFrame,
  encodeResponse,
  errorResponse,
} from "./wire";
import { PredictContext, Predictor, parseKind } from "./predictors";

function assertFinite(data: Float64Array, name: string): void {
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new Error(`${name} contains non-finite values`);
    }
  }
}

export function handlePredict(predictor: Predictor, payload: Buffer): PredictResponse {
  let req: PredictRequest;
  try {
    req = decodeRequest(payload);
  } catch (err) {
    if (err instanceof InvalidShapeError) {
      return errorResponse(STATUS_INVALID_SHAPE, err.message);
    }
    if (err instanceof ProtocolError) {
      return errorResponse(STATUS_MALFORMED, err.message);
    }
    throw err;
  }
  const ctx: PredictContext = {
    t: req.t,
    alphaBar: req.alphaBar,
    betaBar: req.betaBar,
    deltaBar: req.deltaBar,
    shape: req.xT.shape,
  };
  try {
    assertFinite(req.xT.data, "x_t");
    assertFinite(req.xIn.data, "x_in");
    const out = predictor.predict(req.xT.data, req.xIn.data, ctx);
    let gradient: Float64Array | null = null;
    if (req.wantGradient) {
      gradient = predictor.gradient(req.xT.data, req.xIn.data, ctx);
      if (gradient === null) {
        return errorResponse(STATUS_CAPABILITY_MISSING, "predictor has no guidance gradient");
      }
    }
    const eps = req.wantEps && out.eps !== null ? out.eps : null;
    return {
      status: STATUS_OK,
      message: "",
      res: { shape: req.xT.shape, data: out.res },
      eps: eps === null ? null : { shape: req.xT.shape, data: eps },
      gradient: gradient === null ? null : { shape: req.xT.shape, data: gradient },
    };
  } catch (err) {
    const e = err as Error;
    const name = e?.name || "Error";
    const message = e?.message ?? String(err);
    return errorResponse(STATUS_MALFORMED, `${name}: ${message}`);
  }
}

/** Answer one frame; encode failures are downgraded to error responses
 * so the server always has something to send back. */
export function handleFrame(predictor: Predictor, frame: Frame): Buffer {
  if (frame.msgType === MSG_HELLO) {
    return encodeFrame(MSG_HELLO, Buffer.from([PROTOCOL_VERSION]));
  }
  const resp =
    frame.msgType === MSG_PREDICT_REQUEST
      ? handlePredict(predictor, frame.payload)
      : errorResponse(STATUS_MALFORMED, `unexpected message type ${frame.msgType}`);
  try {
    return encodeResponse(resp);
  } catch (err) {
    return encodeResponse(errorResponse(STATUS_MALFORMED, (err as Error).message));
  }
}

function serveStdio(predictor: Predictor): void {
  const parser = new FrameParser();
  const finish = () => {
    // let queued responses drain before the process goes down
    process.stdout.write(Buffer.alloc(0), () => process.exit(0));
  };
  process.stdin.on("data", (chunk: Buffer) => {
    let frames: Frame[];
    try {
      frames = parser.push(chunk);
    } catch (err) {
      process.stderr.write(`dropping connection: ${(err as Error).message}\n`);
      finish();
      return;
    }
    for (const frame of frames) {
      process.stdout.write(handleFrame(predictor, frame));
    }
  });
  process.stdin.on("end", finish);
  process.stdin.on("error", finish);
}

function serveTcp(predictor: Predictor, host: string, port: number): void {
  const server = net.createServer((socket) => {
    const parser = new FrameParser();
    socket.on("data", (chunk: Buffer) => {
      let frames: Frame[];
      try {
        frames = parser.push(chunk);
      } catch {
        socket.destroy();
        return;
      }
      for (const frame of frames) {
        socket.write(handleFrame(predictor, frame));
      }
    });
    socket.on("error", () => socket.destroy());
  });
  server.listen(port, host, () => {
    const addr = server.address() as net.AddressInfo;
    process.stderr.write(`listening on ${addr.address}:${addr.port}\n`);
  });
}

const USAGE = `usage: server.js --kind KIND [--listen HOST:PORT]

kinds:
  constant:RES[,EPS]            constant residual (and noise) heads
  echo                          res = x_in - x_t, no noise head
  gaussian-oracle:MU0,S0[,C0,C1] exact posterior under a Gaussian prior,
                                optional affine noise head c0 + c1*x_t
  custom:PATH                   CommonJS module exporting a predict hook

Without --listen the server speaks the protocol on stdin/stdout.
`;

export function main(argv: string[]): number {
  let values: { kind?: string; listen?: string; help?: boolean };
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        kind: { type: "string" },
        listen: { type: "string" },
        help: { type: "boolean", short: "h" },
      },
    }));
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n${USAGE}`);
    return 2;
  }
  if (values.help) {
    process.stdout.write(USAGE);
    return 0;
  }
  if (!values.kind) {
    process.stderr.write(`error: --kind is required\n${USAGE}`);
    return 2;
  }
  let predictor: Predictor;
  try {
    predictor = parseKind(values.kind);
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
  if (values.listen) {
    const sep = values.listen.lastIndexOf(":");
    const host = sep > 0 ? values.listen.slice(0, sep) : "127.0.0.1";
    const port = Number(sep >= 0 ? values.listen.slice(sep + 1) : values.listen);
    if (!Number.isInteger(port) || port < 0 || port > 65535) {
      process.stderr.write(`error: bad --listen address '${values.listen}'\n`);
      return 2;
    }
    serveTcp(predictor, host, port);
  } else {
    serveStdio(predictor);
  }
  return 0;
}

if (typeof require !== "undefined" && typeof module !== "undefined" && require.main === module) {
  const rc = main(process.argv.slice(2));
  if (rc !== 0) process.exit(rc);
}
