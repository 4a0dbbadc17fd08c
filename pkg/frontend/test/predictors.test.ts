// Predictor kind tests, including the closed-form gradient of the
// Gaussian oracle checked against central finite differences.

import { describe, expect, it } from "vitest";

import {
  PredictContext,
  makeConstant,
  makeEcho,
  makeGaussianOracle,
  parseKind,
} from "../src/predictors";

function ctx(partial: Partial<PredictContext> = {}): PredictContext {
  return { t: 0.5, alphaBar: 0.5, betaBar: 0.5, deltaBar: 0.5, shape: [1], ...partial };
}

const scalar = (v: number) => Float64Array.from([v]);

describe("constant", () => {
  it("fills res with the constant and omits eps without a second value", () => {
    const p = makeConstant(0.1);
    const out = p.predict(new Float64Array(6), new Float64Array(6), ctx({ shape: [2, 3] }));
    expect(Array.from(out.res)).toEqual([0.1, 0.1, 0.1, 0.1, 0.1, 0.1]);
    expect(out.eps).toBeNull();
  });

  it("fills eps when given a second value", () => {
    const out = makeConstant(0.1, 0.2).predict(scalar(3), scalar(4), ctx());
    expect(out.res[0]).toBe(0.1);
    expect(out.eps![0]).toBe(0.2);
  });

  it("reports an inert zero gradient, not a missing capability", () => {
    const g = makeConstant(0.1).gradient(scalar(3), scalar(4), ctx());
    expect(g).not.toBeNull();
    expect(Array.from(g!)).toEqual([0]);
  });
});

describe("echo", () => {
  it("returns the degraded input minus the state", () => {
    const out = makeEcho().predict(scalar(0.3), scalar(0.8), ctx());
    expect(out.res[0]).toBeCloseTo(0.5, 15);
    expect(out.eps).toBeNull();
  });

  it("has no gradient capability", () => {
    expect(makeEcho().gradient(scalar(0), scalar(0), ctx())).toBeNull();
  });
});

describe("gaussian oracle", () => {
  it("matches the worked posterior example", () => {
    // coefficients (0.5, 0.5, 0.5): a = 0.5, b = 0, so
    // mean = 0.5*(0.3)/(0.25 + 0.25) = 0.3 and res = 0.8 - 0.3 = 0.5
    const out = makeGaussianOracle(0.0, 1.0).predict(scalar(0.3), scalar(0.8), ctx());
    expect(out.res[0]).toBeCloseTo(0.5, 14);
    expect(out.eps).toBeNull();
  });

  it("rejects a non-positive prior width", () => {
    expect(() => makeGaussianOracle(0.2, 0)).toThrow(/s0/);
    expect(() => makeGaussianOracle(0.2, -1)).toThrow(/s0/);
  });

  it("is inert to guidance without a noise head", () => {
    const g = makeGaussianOracle(0.2, 0.3).gradient(scalar(0.4), scalar(0.7), ctx());
    expect(Array.from(g!)).toEqual([0]);
  });

  it("serves an affine noise head", () => {
    const out = makeGaussianOracle(0.2, 0.3, [0.05, 0.4]).predict(
      scalar(0.5),
      scalar(0.7),
      ctx()
    );
    expect(out.eps![0]).toBeCloseTo(0.05 + 0.4 * 0.5, 15);
  });

  it("matches central finite differences of the consistency norm", () => {
    const p = makeGaussianOracle(0.15, 0.6, [0.05, 0.4]);
    const c = ctx({ t: 0.4, alphaBar: 0.4, betaBar: 0.3, deltaBar: 0.2, shape: [4] });
    const xT = Float64Array.from([0.31, -0.22, 0.57, 0.08]);
    const xIn = Float64Array.from([0.64, 0.12, -0.4, 0.95]);

    // norm of x_in - (x0_hat + res), recomputed from predict alone
    const rho = (state: Float64Array): number => {
      const out = p.predict(state, xIn, c);
      let sq = 0;
      for (let i = 0; i < state.length; i++) {
        const x0Hat =
          state[i] -
          c.alphaBar * out.res[i] -
          c.betaBar * out.eps![i] +
          c.deltaBar * xIn[i];
        const f = xIn[i] - (x0Hat + out.res[i]);
        sq += f * f;
      }
      return Math.sqrt(sq);
    };

    const grad = p.gradient(xT, xIn, c)!;
    const h = 1e-5;
    for (let i = 0; i < xT.length; i++) {
      const up = Float64Array.from(xT);
      const down = Float64Array.from(xT);
      up[i] += h;
      down[i] -= h;
      const fd = (rho(up) - rho(down)) / (2 * h);
      expect(Math.abs(grad[i] - fd)).toBeLessThan(1e-8);
    }
  });
});

describe("kind parsing", () => {
  it("builds each documented kind", () => {
    expect(parseKind("constant:0.5").predict(scalar(0), scalar(0), ctx()).res[0]).toBe(0.5);
    expect(parseKind("echo").predict(scalar(1), scalar(3), ctx()).res[0]).toBe(2);
    const g = parseKind("gaussian-oracle:0,1").predict(scalar(0.3), scalar(0.8), ctx());
    expect(g.res[0]).toBeCloseTo(0.5, 14);
  });

  it("rejects malformed specs", () => {
    expect(() => parseKind("echo:1")).toThrow(/echo/);
    expect(() => parseKind("constant:")).toThrow(/constant/);
    expect(() => parseKind("constant:1,2,3")).toThrow(/constant/);
    expect(() => parseKind("gaussian-oracle:0.2")).toThrow(/gaussian-oracle/);
    expect(() => parseKind("constant:zero")).toThrow(/constant/);
    expect(() => parseKind("transformer:large")).toThrow(/unknown/);
    expect(() => parseKind("custom:")).toThrow(/custom/);
  });

  it("mounts a custom hook module", () => {
    const modulePath = new URL("./fixtures/doubler.cjs", import.meta.url).pathname;
    const p = parseKind(`custom:${modulePath}`);
    const out = p.predict(scalar(0.1), scalar(0.4), ctx());
    expect(out.res[0]).toBeCloseTo(0.8, 15);
    expect(out.eps).toBeNull();
    expect(p.gradient(scalar(0.1), scalar(0.4), ctx())).toBeNull();
  });
});
