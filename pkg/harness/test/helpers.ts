import { execFileSync, spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

const testDir = path.dirname(fileURLToPath(import.meta.url));
export const packageRoot = path.resolve(testDir, "..");

// The generator CLI is the only interface to the producing package; it is
// installed in the repository one level up.
export const repoRoot = path.resolve(packageRoot, "..");

export const cacheDir = path.join(packageRoot, ".cache");

/**
 * Produce a solver bundle via the generator CLI into .cache/<name>,
 * regenerating from scratch so stale artifacts cannot leak between runs.
 */
export function generateBundle(name: string, args: string[]): string {
  const outDir = path.join(cacheDir, name);
  fs.rmSync(outDir, { recursive: true, force: true });
  fs.mkdirSync(outDir, { recursive: true });
  execFileSync(
    "python3",
    ["-m", "qpgen.cli", "generate", "--out", outDir, ...args],
    { cwd: repoRoot, stdio: ["ignore", "ignore", "pipe"], encoding: "utf8" },
  );
  return outDir;
}

/** Copy a bundle directory so a test can deface its own private copy. */
export function copyBundle(srcDir: string, name: string): string {
  const outDir = path.join(cacheDir, name);
  fs.rmSync(outDir, { recursive: true, force: true });
  fs.cpSync(srcDir, outDir, { recursive: true });
  return outDir;
}

export interface CliRun {
  status: number;
  stdout: string;
  stderr: string;
}

/** Invoke the built run_harness CLI (dist/cli.js) on a bundle directory. */
export function runCli(args: string[]): CliRun {
  const cliJs = path.join(packageRoot, "dist", "cli.js");
  const proc = spawnSync(process.execPath, [cliJs, ...args], {
    encoding: "utf8",
    maxBuffer: 1 << 26,
  });
  return {
    status: proc.status ?? -1,
    stdout: proc.stdout ?? "",
    stderr: proc.stderr ?? "",
  };
}
