import { beforeAll, describe, expect, it } from "vitest";

import { runHarness, HarnessReport } from "../src/harness";
import { generateBundle } from "./helpers";

let report: HarnessReport;

beforeAll(() => {
  // 50 sequential rebalances; every period rewrites matrix coefficients,
  // so this exercises the embedded refactorization path on each case.
  const bundleDir = generateBundle("portfolio-n10", [
    "--family", "portfolio", "--size", "10", "--fixture-steps", "50",
    "--seed", "3",
  ]);
  report = runHarness(bundleDir);
});

describe("portfolio rebalancing bundle", () => {
  it("replays all 50 recorded periods", () => {
    expect(report.total).toBe(50);
    expect(report.failures).toBe(0);
    expect(report.pass).toBe(true);
  });

  it("matches every period within the fixture tolerances", () => {
    for (const c of report.cases) {
      expect(c.status).toBe(0);
      expect(c.max_rel_theta).toBeLessThanOrEqual(1e-12);
      expect(c.max_abs_x).toBeLessThanOrEqual(1e-6);
    }
  });
});
