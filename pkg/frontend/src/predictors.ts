/**
 * Analytic predictor kinds served over the wire protocol.
 *
 * A predictor answers one framed request at a time with a residual
 * estimate (degraded input minus clean image) and optionally a noise
 * estimate and a guidance gradient. All math runs in float64 on the
 * float32 values carried by the wire.
 */

import * as path from "node:path";

/** Schedule coefficients and tensor shape for one request. */
export interface PredictContext {
  t: number;
  alphaBar: number;
  betaBar: number;
  deltaBar: number;
  shape: number[];
}

export interface PredictorOutput {
  res: Float64Array;
  /** null leaves noise recovery to the client, algebraically from res
   * and the schedule coefficients. */
  eps: Float64Array | null;
}

export interface Predictor {
  predict(xT: Float64Array, xIn: Float64Array, ctx: PredictContext): PredictorOutput;
  /** Gradient of the measurement-consistency norm with respect to the
   * queried state; null when the capability is absent. */
  gradient(xT: Float64Array, xIn: Float64Array, ctx: PredictContext): Float64Array | null;
}

function filled(n: number, value: number): Float64Array {
  return new Float64Array(n).fill(value);
}

/** Constant heads; the outputs ignore the queried state, so the
 * guidance gradient is an explicit zero field (inert correction, not a
 * missing capability). */
export function makeConstant(cRes: number, cEps?: number): Predictor {
  return {
    predict(xT) {
      return {
        res: filled(xT.length, cRes),
        eps: cEps === undefined ? null : filled(xT.length, cEps),
      };
    },
    gradient(xT) {
      return new Float64Array(xT.length);
    },
  };
}

/** res = x_in - x_t, no noise head, no gradient capability. */
export function makeEcho(): Predictor {
  return {
    predict(xT, xIn) {
      const res = new Float64Array(xT.length);
      for (let i = 0; i < xT.length; i++) res[i] = xIn[i] - xT[i];
      return { res, eps: null };
    },
    gradient() {
      return null;
    },
  };
}

/**
 * Exact-posterior predictor for a Gaussian clean-image prior.
 *
 * With a per-element prior N(mu0, s0^2) the forward process gives
 * x_t = a*x0 + b*x_in + betaBar*eps, a = 1 - alphaBar and
 * b = alphaBar - deltaBar, and conditioning the jointly Gaussian pair
 * yields
 *
 *     E[x0 | x_t] = mu0 + a*s0^2*(x_t - a*mu0 - b*x_in) / (a^2*s0^2 + betaBar^2)
 *
 * The residual head is x_in minus that mean. Without a noise head the
 * guidance field vanishes identically, so the gradient is an explicit
 * zero field; with an affine head eps = c0 + c1*x_t the gradient of the
 * consistency norm follows in closed form from the affine structure.
 */
export function makeGaussianOracle(
  mu0: number,
  s0: number,
  epsHead?: [number, number]
): Predictor {
  if (!(s0 > 0)) {
    throw new Error(`s0 must be positive, got ${s0}`);
  }

  function posteriorGain(ctx: PredictContext): { a: number; b: number; gain: number } {
    const a = 1 - ctx.alphaBar;
    const b = ctx.alphaBar - ctx.deltaBar;
    const denom = a * a * s0 * s0 + ctx.betaBar * ctx.betaBar;
    if (denom === 0) {
      throw new Error("posterior mean undefined: zero observation variance");
    }
    return { a, b, gain: (a * s0 * s0) / denom };
  }

  function predict(xT: Float64Array, xIn: Float64Array, ctx: PredictContext): PredictorOutput {
    const { a, b, gain } = posteriorGain(ctx);
    const res = new Float64Array(xT.length);
    for (let i = 0; i < xT.length; i++) {
      const mean = mu0 + gain * (xT[i] - a * mu0 - b * xIn[i]);
      res[i] = xIn[i] - mean;
    }
    if (epsHead === undefined) return { res, eps: null };
    const [c0, c1] = epsHead;
    const eps = new Float64Array(xT.length);
    for (let i = 0; i < xT.length; i++) eps[i] = c0 + c1 * xT[i];
    return { res, eps };
  }

  return {
    predict,
    gradient(xT, xIn, ctx) {
      if (epsHead === undefined) {
        // algebraic noise recovery makes the guidance field vanish
        // identically, so its norm has a zero (sub)gradient
        return new Float64Array(xT.length);
      }
      const { a, gain } = posteriorGain(ctx);
      const [, c1] = epsHead;
      const out = predict(xT, xIn, ctx);
      const eps = out.eps as Float64Array;
      // field = x_in - (x0_hat + res) with
      // x0_hat = x_t - alphaBar*res - betaBar*eps + deltaBar*x_in
      const field = new Float64Array(xT.length);
      let sq = 0;
      for (let i = 0; i < xT.length; i++) {
        const x0Hat =
          xT[i] - ctx.alphaBar * out.res[i] - ctx.betaBar * eps[i] + ctx.deltaBar * xIn[i];
        field[i] = xIn[i] - (x0Hat + out.res[i]);
        sq += field[i] * field[i];
      }
      const norm = Math.sqrt(sq);
      if (norm === 0) return new Float64Array(xT.length);
      // d(res)/d(x_t) = -gain elementwise, from the affine posterior mean
      const jac = -1 + a * gain + ctx.betaBar * c1;
      const grad = new Float64Array(xT.length);
      for (let i = 0; i < xT.length; i++) grad[i] = (jac * field[i]) / norm;
      return grad;
    },
  };
}

/** Shape of the object handed to a custom hook module. */
export interface CustomHookArgs {
  xT: Float64Array;
  xIn: Float64Array;
  shape: number[];
  t: number;
  alphaBar: number;
  betaBar: number;
  deltaBar: number;
}

export interface CustomHookResult {
  res: ArrayLike<number>;
  eps?: ArrayLike<number>;
  gradient?: ArrayLike<number>;
}

type CustomHook = (args: CustomHookArgs) => CustomHookResult;

function toField(values: ArrayLike<number>, n: number, name: string): Float64Array {
  if (values.length !== n) {
    throw new Error(`custom hook returned ${name} with ${values.length} elements, expected ${n}`);
  }
  return Float64Array.from(values as ArrayLike<number>);
}

/**
 * Mount a user module as a predictor. The module (CommonJS, loaded with
 * require) must export a function, either directly or as `predict`,
 * receiving the request tensors and schedule coefficients and returning
 * `{ res, eps?, gradient? }` with arrays matching the request size.
 * Omitting `gradient` reports the capability as missing. The module
 * loads once at startup; requests are stateless.
 */
export function loadCustomHook(modulePath: string): Predictor {
  // eslint-disable-next-line @typescript-eslint/no-var-requires
  const loaded = require(path.resolve(modulePath));
  const candidate = typeof loaded === "function" ? loaded : loaded?.predict;
  if (typeof candidate !== "function") {
    throw new Error(`custom hook module ${modulePath} must export a predict function`);
  }
  const hook = candidate as CustomHook;

  function invoke(xT: Float64Array, xIn: Float64Array, ctx: PredictContext): CustomHookResult {
    return hook({
      xT,
      xIn,
      shape: ctx.shape,
      t: ctx.t,
      alphaBar: ctx.alphaBar,
      betaBar: ctx.betaBar,
      deltaBar: ctx.deltaBar,
    });
  }

  return {
    predict(xT, xIn, ctx) {
      const result = invoke(xT, xIn, ctx);
      return {
        res: toField(result.res, xT.length, "res"),
        eps: result.eps === undefined ? null : toField(result.eps, xT.length, "eps"),
      };
    },
    gradient(xT, xIn, ctx) {
      const result = invoke(xT, xIn, ctx);
      if (result.gradient === undefined) return null;
      return toField(result.gradient, xT.length, "gradient");
    },
  };
}

function parseFloats(text: string, spec: string, counts: number[]): number[] {
  const parts = text.split(",").filter((s) => s !== "");
  const values = parts.map((s) => Number(s));
  if (values.some((v) => Number.isNaN(v)) || !counts.includes(values.length)) {
    throw new Error(`bad parameters in predictor kind '${spec}'`);
  }
  return values;
}

/**
 * Build a predictor from a --kind spec string:
 *
 *   constant:RES[,EPS]
 *   echo
 *   gaussian-oracle:MU0,S0[,C0,C1]
 *   custom:PATH  (CommonJS module, see loadCustomHook)
 */
export function parseKind(spec: string): Predictor {
  const i = spec.indexOf(":");
  const kind = (i < 0 ? spec : spec.slice(0, i)).trim();
  const rest = i < 0 ? "" : spec.slice(i + 1);
  if (kind === "constant") {
    const values = parseFloats(rest, spec, [1, 2]);
    return makeConstant(values[0], values[1]);
  }
  if (kind === "echo") {
    if (rest !== "") throw new Error("echo takes no parameters");
    return makeEcho();
  }
  if (kind === "gaussian-oracle") {
    const values = parseFloats(rest, spec, [2, 4]);
    if (values.length === 2) return makeGaussianOracle(values[0], values[1]);
    return makeGaussianOracle(values[0], values[1], [values[2], values[3]]);
  }
  if (kind === "custom") {
    if (rest === "") throw new Error("custom wants a module path");
    return loadCustomHook(rest);
  }
  throw new Error(`unknown predictor kind '${spec}'`);
}
