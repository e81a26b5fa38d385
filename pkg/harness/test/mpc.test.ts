import { beforeAll, describe, expect, it } from "vitest";

import { runHarness, HarnessReport } from "../src/harness";
import { readManifest } from "../src/manifest";
import { generateBundle } from "./helpers";

let report: HarnessReport;

beforeAll(() => {
  const bundleDir = generateBundle("mpc-h6", [
    "--family", "mpc", "--size", "6", "--fixture-steps", "100",
  ]);
  report = runHarness(bundleDir);
});

describe("model predictive control bundle", () => {
  it("tracks the 100-step closed-loop reference trace", () => {
    expect(report.total).toBe(100);
    expect(report.failures).toBe(0);
    expect(report.pass).toBe(true);
  });

  it("matches every step within the trace tolerances", () => {
    for (const c of report.cases) {
      expect(c.status).toBe(0);
      expect(c.max_rel_theta).toBeLessThanOrEqual(1e-12);
      expect(c.max_abs_x).toBeLessThanOrEqual(1e-6);
    }
  });

  it("static data grows with the horizon", () => {
    const sizes = [6, 12, 18].map((h) => {
      const dir = generateBundle(`mpc-h${h}-size`, [
        "--family", "mpc", "--size", String(h), "--no-fixtures",
      ]);
      return readManifest(dir).static_data_bytes;
    });
    expect(sizes[0]).toBeLessThan(sizes[1]);
    expect(sizes[1]).toBeLessThan(sizes[2]);
  });
});
