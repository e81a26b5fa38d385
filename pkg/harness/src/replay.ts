import { spawnSync } from "node:child_process";

/** One fixture case as reported by the bundle's self-checking runner. */
export interface CaseResult {
  case: number;
  pass: boolean;
  status: number;
  expected_status: number;
  max_rel_theta: number;
  max_abs_x: number;
  max_abs_x_tilde: number;
  iterations: number;
}

export interface ReplayOutput {
  family: string;
  cases: CaseResult[];
  failures: number;
  total: number;
}

export class ReplayError extends Error {}

/**
 * Run the compiled fixture-replay binary and parse its JSON report.
 * The binary exits 0 on all-pass and 1 when any case fails; both carry
 * a full report on stdout, so only other exits are errors here.
 */
export function runReplay(binary: string): ReplayOutput {
  const proc = spawnSync(binary, [], { encoding: "utf8", maxBuffer: 1 << 26 });
  if (proc.error) {
    throw new ReplayError(`failed to run replay binary: ${proc.error.message}`);
  }
  if (proc.status !== 0 && proc.status !== 1) {
    throw new ReplayError(
      `replay binary exited with status ${proc.status}: ${(proc.stderr ?? "").trim()}`,
    );
  }
  let doc: ReplayOutput;
  try {
    doc = JSON.parse(proc.stdout);
  } catch (err) {
    throw new ReplayError(`replay output is not valid JSON: ${(err as Error).message}`);
  }
  if (!Array.isArray(doc.cases) || typeof doc.failures !== "number") {
    throw new ReplayError("replay output is missing cases/failures");
  }
  const counted = doc.cases.filter((c) => !c.pass).length;
  if (counted !== doc.failures) {
    throw new ReplayError(
      `replay reports ${doc.failures} failures but ${counted} failing cases`,
    );
  }
  return doc;
}
