import * as fs from "node:fs";
import * as path from "node:path";

export interface ParameterEntry {
  name: string;
  size: number;
}

export interface VariableEntry {
  name: string;
  rows: number;
  cols: number;
}

/** The subset of manifest.json the harness relies on. */
export interface Manifest {
  prefix: string;
  family: string;
  float_width: number;
  files: Record<string, number>;
  fixture_count: number;
  static_data_bytes: number;
  fixture_data_bytes: number;
  total_bytes: number;
  parameters: ParameterEntry[];
  variables: VariableEntry[];
}

export class ManifestError extends Error {}

function requireKey(doc: Record<string, unknown>, key: string, kind: string): unknown {
  if (!(key in doc)) {
    throw new ManifestError(`manifest is missing "${key}"`);
  }
  const value = doc[key];
  if (typeof value !== kind && kind !== "object") {
    throw new ManifestError(`manifest "${key}" must be a ${kind}`);
  }
  return value;
}

/** Load and validate a bundle's manifest.json. */
export function readManifest(bundleDir: string): Manifest {
  const file = path.join(bundleDir, "manifest.json");
  if (!fs.existsSync(file)) {
    throw new ManifestError(`no manifest.json in ${bundleDir}`);
  }
  let doc: Record<string, unknown>;
  try {
    doc = JSON.parse(fs.readFileSync(file, "utf8"));
  } catch (err) {
    throw new ManifestError(`manifest.json is not valid JSON: ${(err as Error).message}`);
  }

  const prefix = requireKey(doc, "prefix", "string") as string;
  const files = requireKey(doc, "files", "object") as Record<string, number>;
  if (files === null || Array.isArray(files)) {
    throw new ManifestError('manifest "files" must be a name-to-bytes object');
  }
  const manifest: Manifest = {
    prefix,
    family: (doc.family as string) ?? "",
    float_width: requireKey(doc, "float_width", "number") as number,
    files,
    fixture_count: requireKey(doc, "fixture_count", "number") as number,
    static_data_bytes: requireKey(doc, "static_data_bytes", "number") as number,
    fixture_data_bytes: (doc.fixture_data_bytes as number) ?? 0,
    total_bytes: requireKey(doc, "total_bytes", "number") as number,
    parameters: (doc.parameters as ParameterEntry[]) ?? [],
    variables: (doc.variables as VariableEntry[]) ?? [],
  };

  for (const name of Object.keys(manifest.files)) {
    if (!fs.existsSync(path.join(bundleDir, name))) {
      throw new ManifestError(`manifest lists "${name}" but the file is absent`);
    }
  }
  return manifest;
}

/** C translation units to link into the replay binary, example main excluded. */
export function replaySources(manifest: Manifest): string[] {
  const example = `${manifest.prefix}_example_main.c`;
  return Object.keys(manifest.files)
    .filter((name) => name.endsWith(".c") && name !== example)
    .sort();
}
