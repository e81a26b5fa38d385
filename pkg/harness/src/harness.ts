import * as fs from "node:fs";
import * as path from "node:path";

import { cleanupBinary, compileBundle, CompileError } from "./compile";
import { Manifest, ManifestError, readManifest, replaySources } from "./manifest";
import { CaseResult, runReplay } from "./replay";

export { CompileError } from "./compile";
export { ManifestError } from "./manifest";
export { ReplayError } from "./replay";
export type { CaseResult } from "./replay";
export type { Manifest } from "./manifest";

export interface HarnessReport {
  bundle: string;
  family: string;
  prefix: string;
  float_width: number;
  compile: {
    compiler: string;
    flags: string[];
    sources: string[];
    ok: boolean;
    diagnostics: string;
  };
  sizes: {
    binary_bytes: number;
    source_bytes: number;
    static_data_bytes: number;
    fixture_data_bytes: number;
  };
  total: number;
  failures: number;
  pass: boolean;
  cases: CaseResult[];
}

/**
 * Compile a generated solver bundle, replay its recorded fixtures, and
 * summarize the per-case comparison plus compiled sizes.
 *
 * The numeric checks themselves run inside the bundle's own replay unit
 * (canonical vector relative error, solution absolute error, exact status);
 * the harness verifies the bundle compiles under strict flags, drives the
 * replay, and aggregates.
 */
export function runHarness(bundleDir: string): HarnessReport {
  const bundle = path.resolve(bundleDir);
  if (!fs.existsSync(bundle) || !fs.statSync(bundle).isDirectory()) {
    throw new ManifestError(`bundle directory not found: ${bundle}`);
  }
  const manifest = readManifest(bundle);
  if (manifest.fixture_count < 1) {
    throw new ManifestError("bundle has no fixtures to replay");
  }
  const fixtureUnit = `${manifest.prefix}_fixtures.c`;
  if (!(fixtureUnit in manifest.files)) {
    throw new ManifestError(`bundle does not ship ${fixtureUnit}`);
  }

  const sources = replaySources(manifest);
  const compiled = compileBundle(bundle, sources, "replay_fixtures");
  try {
    const replay = runReplay(compiled.binary);
    if (replay.total !== manifest.fixture_count) {
      throw new ManifestError(
        `manifest promises ${manifest.fixture_count} fixtures, replay ran ${replay.total}`,
      );
    }
    return {
      bundle,
      family: manifest.family,
      prefix: manifest.prefix,
      float_width: manifest.float_width,
      compile: {
        compiler: compiled.compiler,
        flags: compiled.flags,
        sources: compiled.sources,
        ok: true,
        diagnostics: "",
      },
      sizes: {
        binary_bytes: compiled.binaryBytes,
        source_bytes: manifest.total_bytes,
        static_data_bytes: manifest.static_data_bytes,
        fixture_data_bytes: manifest.fixture_data_bytes,
      },
      total: replay.total,
      failures: replay.failures,
      pass: replay.failures === 0,
      cases: replay.cases,
    };
  } finally {
    cleanupBinary(compiled);
  }
}

/** Report emitted when the bundle cannot be compiled or replayed at all. */
export function errorReport(bundleDir: string, err: unknown): HarnessReport {
  const diagnostics =
    err instanceof CompileError && err.diagnostics
      ? `${err.message}\n${err.diagnostics}`
      : String(err instanceof Error ? err.message : err);
  return {
    bundle: path.resolve(bundleDir),
    family: "",
    prefix: "",
    float_width: 0,
    compile: { compiler: "", flags: [], sources: [], ok: false, diagnostics },
    sizes: {
      binary_bytes: 0,
      source_bytes: 0,
      static_data_bytes: 0,
      fixture_data_bytes: 0,
    },
    total: 0,
    failures: 0,
    pass: false,
    cases: [],
  };
}
