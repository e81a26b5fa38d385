import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

// The bundles target C99 with no allocation; hold them to strict warnings.
export const CFLAGS = ["-std=c99", "-Wall", "-Wextra", "-Werror", "-O2"];

export class CompileError extends Error {
  constructor(message: string, public readonly diagnostics: string) {
    super(message);
  }
}

export interface CompileResult {
  binary: string;
  binaryBytes: number;
  compiler: string;
  flags: string[];
  sources: string[];
}

export function detectCompiler(): string {
  return process.env.CC ?? "cc";
}

/**
 * Compile the given translation units from a bundle directory into a
 * binary placed under a fresh temp directory. Throws CompileError with
 * the compiler's output when the build fails.
 */
export function compileBundle(
  bundleDir: string,
  sources: string[],
  outName: string,
): CompileResult {
  const compiler = detectCompiler();
  const workDir = fs.mkdtempSync(path.join(os.tmpdir(), "qpgen-harness-"));
  const binary = path.join(workDir, outName);
  const args = [...CFLAGS, ...sources, "-o", binary, "-lm"];

  const proc = spawnSync(compiler, args, {
    cwd: bundleDir,
    encoding: "utf8",
  });
  if (proc.error) {
    throw new CompileError(`failed to run ${compiler}: ${proc.error.message}`, "");
  }
  if (proc.status !== 0) {
    const diagnostics = `${proc.stdout ?? ""}${proc.stderr ?? ""}`.trim();
    throw new CompileError(`${compiler} exited with status ${proc.status}`, diagnostics);
  }
  return {
    binary,
    binaryBytes: fs.statSync(binary).size,
    compiler,
    flags: CFLAGS,
    sources,
  };
}

/** Remove the temp directory holding a compiled binary. */
export function cleanupBinary(result: CompileResult): void {
  fs.rmSync(path.dirname(result.binary), { recursive: true, force: true });
}
