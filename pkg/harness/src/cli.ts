#!/usr/bin/env node
import { errorReport, runHarness } from "./harness";

function main(argv: string[]): number {
  if (argv.length !== 1 || argv[0] === "-h" || argv[0] === "--help") {
    process.stderr.write("usage: run_harness <bundle_dir>\n");
    return 2;
  }
  const bundleDir = argv[0];
  try {
    const report = runHarness(bundleDir);
    process.stdout.write(JSON.stringify(report, null, 2) + "\n");
    return report.pass ? 0 : 1;
  } catch (err) {
    process.stdout.write(JSON.stringify(errorReport(bundleDir, err), null, 2) + "\n");
    return 2;
  }
}

process.exit(main(process.argv.slice(2)));
