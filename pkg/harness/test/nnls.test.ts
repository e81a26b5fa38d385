import * as fs from "node:fs";
import * as path from "node:path";
import { beforeAll, describe, expect, it } from "vitest";

import { runHarness, HarnessReport } from "../src/harness";
import { copyBundle, generateBundle, runCli } from "./helpers";

let bundleDir: string;
let report: HarnessReport;

beforeAll(() => {
  bundleDir = generateBundle("nnls-3x2", [
    "--family", "nnls", "--size", "3", "2", "--fixture-steps", "10",
  ]);
  report = runHarness(bundleDir);
});

describe("nonneg least squares bundle", () => {
  it("compiles under strict flags and replays every recorded case", () => {
    expect(report.compile.ok).toBe(true);
    expect(report.compile.flags).toContain("-Werror");
    expect(report.total).toBe(10);
    expect(report.failures).toBe(0);
    expect(report.pass).toBe(true);
  });

  it("holds every case to the fixture tolerances", () => {
    for (const c of report.cases) {
      expect(c.status).toBe(c.expected_status);
      expect(c.max_rel_theta).toBeLessThanOrEqual(1e-12);
      expect(c.max_abs_x).toBeLessThanOrEqual(1e-6);
    }
  });

  it("reports compiled and static sizes", () => {
    const manifest = JSON.parse(
      fs.readFileSync(path.join(bundleDir, "manifest.json"), "utf8"),
    );
    expect(report.sizes.binary_bytes).toBeGreaterThan(0);
    expect(report.sizes.static_data_bytes).toBe(manifest.static_data_bytes);
    expect(report.sizes.source_bytes).toBe(manifest.total_bytes);
  });

  it("is deterministic run to run", () => {
    const again = runHarness(bundleDir);
    expect(JSON.stringify(again)).toBe(JSON.stringify(report));
  });

  it("exits 0 from the CLI with the report on stdout", () => {
    const run = runCli([bundleDir]);
    expect(run.status).toBe(0);
    const doc = JSON.parse(run.stdout);
    expect(doc.pass).toBe(true);
    expect(doc.total).toBe(10);
  });
});

describe("harness failure modes", () => {
  it("flags exactly one case when one expected value is corrupted", () => {
    const corrupt = copyBundle(bundleDir, "nnls-3x2-corrupt");
    const fixtures = path.join(corrupt, "cpg_fixtures.c");
    const src = fs.readFileSync(fixtures, "utf8");
    const open = src.indexOf("{", src.indexOf("fix_xuser["));
    const comma = src.indexOf(",", open);
    expect(open).toBeGreaterThan(0);
    // first expected solution entry belongs to case 0 alone
    fs.writeFileSync(
      fixtures,
      src.slice(0, open + 1) + "\n    1e30" + src.slice(comma),
    );

    const bad = runHarness(corrupt);
    expect(bad.pass).toBe(false);
    expect(bad.failures).toBe(1);
    const failing = bad.cases.filter((c) => !c.pass);
    expect(failing.length).toBe(1);
    expect(failing[0].case).toBe(0);

    const run = runCli([corrupt]);
    expect(run.status).toBe(1);
  });

  it("surfaces compiler diagnostics when a unit cannot build", () => {
    const broken = copyBundle(bundleDir, "nnls-3x2-broken");
    const unit = path.join(broken, "cpg_canon.c");
    fs.appendFileSync(unit, '\n#error "defaced for the harness self-test"\n');

    const run = runCli([broken]);
    expect(run.status).toBe(2);
    const doc = JSON.parse(run.stdout);
    expect(doc.pass).toBe(false);
    expect(doc.compile.ok).toBe(false);
    expect(doc.compile.diagnostics).toContain("defaced");
  });

  it("rejects a missing bundle directory", () => {
    const run = runCli([path.join(bundleDir, "no-such-dir")]);
    expect(run.status).toBe(2);
    const doc = JSON.parse(run.stdout);
    expect(doc.compile.ok).toBe(false);
  });

  it("prints usage without a bundle argument", () => {
    const run = runCli([]);
    expect(run.status).toBe(2);
    expect(run.stderr).toContain("usage");
  });
});
