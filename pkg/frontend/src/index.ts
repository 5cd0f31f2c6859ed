/**
 * Bindings to the shapeprog executor for use from Node.
 *
 * Each function delegates 1:1 to the CLI and exchanges data through its wire
 * formats: programs as DSL text, point clouds as XYZ, primitive sets and
 * gradient reports as JSON. Both sides emit shortest-roundtrip decimals, so
 * float64 values survive the text boundary bit-exactly.
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

/** One posed primitive from the lowered program. */
export interface Primitive {
  kind: "cuboid" | "cylinder";
  size: number[];
  translation: [number, number, number];
  rotation: [number, number, number][];
  provenance: { block: number; iter: number; stmt: number };
}

export interface PrimitiveSet {
  primitives: Primitive[];
}

/** Descriptor of one flat parameter slot; stmt is null for a translation
 * loop's delta component. */
export interface LayoutSlot {
  block: number;
  stmt: number | null;
  param: number;
}

export interface LossSpec {
  loss: "chamfer" | "coverage";
  /** chamfer only; defaults to "sym" */
  direction?: "fwd" | "bwd" | "sym";
  /** defaults to "mean" */
  reduce?: "mean" | "sum";
  /** coverage only; defaults to 1 */
  power?: 1 | 2;
  /** surface samples drawn from the program for chamfer; defaults to 5000 */
  points?: number;
  /** defaults to 0 */
  seed?: number;
  includeCaps?: boolean;
}

export interface LossAndGrad {
  loss: number;
  /** d(loss)/d(parameter) for every continuous program parameter */
  grad: Float64Array;
  layout: LayoutSlot[];
}

/**
 * Command used to reach the executor; override with SHAPEPROG_CLI
 * (whitespace-separated, e.g. "python3 -m shapeprog" or "shapeprog").
 */
function cliCommand(): string[] {
  const override = process.env.SHAPEPROG_CLI;
  if (override && override.trim()) return override.trim().split(/\s+/);
  return ["python3", "-m", "shapeprog"];
}

function runCli(args: string[], okCodes: number[] = [0]): string {
  const [cmd, ...prefix] = cliCommand();
  const result = spawnSync(cmd, [...prefix, ...args], {
    encoding: "utf8",
    maxBuffer: 256 * 1024 * 1024,
  });
  if (result.error) throw result.error;
  if (!okCodes.includes(result.status ?? -1)) {
    throw new Error(
      `shapeprog ${args[0]} exited with ${result.status}: ${result.stderr.trim()}`
    );
  }
  return result.stdout;
}

function withWorkdir<T>(body: (dir: string) => T): T {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "shapeprog-"));
  try {
    return body(dir);
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
}

/** Shortest-roundtrip decimal lines, one "x y z" per point. */
export function cloudToXyz(points: Float64Array): string {
  if (points.length % 3 !== 0) {
    throw new Error(`point buffer length ${points.length} is not a multiple of 3`);
  }
  const lines: string[] = [];
  for (let i = 0; i < points.length; i += 3) {
    lines.push(`${points[i]} ${points[i + 1]} ${points[i + 2]}`);
  }
  return lines.join("\n") + (lines.length ? "\n" : "");
}

export function xyzToCloud(text: string): Float64Array {
  const rows = text.split("\n").filter((line) => line.trim().length > 0);
  const out = new Float64Array(rows.length * 3);
  rows.forEach((row, i) => {
    const fields = row.trim().split(/\s+/);
    if (fields.length < 3) throw new Error(`malformed xyz row: ${row}`);
    out[i * 3] = Number(fields[0]);
    out[i * 3 + 1] = Number(fields[1]);
    out[i * 3 + 2] = Number(fields[2]);
  });
  return out;
}

function lossArgs(program: string, target: string, spec: LossSpec): string[] {
  const args = [
    "--program", program,
    "--target", target,
    "--loss", spec.loss,
    "--direction", spec.direction ?? "sym",
    "--reduce", spec.reduce ?? "mean",
    "--power", String(spec.power ?? 1),
    "--points", String(spec.points ?? 5000),
    "--seed", String(spec.seed ?? 0),
  ];
  if (spec.includeCaps === false) args.push("--no-caps");
  return args;
}

/** Parse, validate, and lower a program to its posed-primitive set. */
export function lower(programText: string): PrimitiveSet {
  return withWorkdir((dir) => {
    const prog = path.join(dir, "prog.sp");
    fs.writeFileSync(prog, programText);
    const out = runCli(["compile", prog]);
    return JSON.parse(out) as PrimitiveSet;
  });
}

/** Sample n surface points; returns a flat buffer of 3n reals. */
export function sample(programText: string, n: number, seed: number): Float64Array {
  return withWorkdir((dir) => {
    const prog = path.join(dir, "prog.sp");
    const cloud = path.join(dir, "cloud.xyz");
    fs.writeFileSync(prog, programText);
    runCli([
      "render", prog,
      "--points", String(n),
      "--seed", String(seed),
      "--out", cloud,
    ]);
    return xyzToCloud(fs.readFileSync(cloud, "utf8"));
  });
}

/**
 * Loss and its gradient with respect to every continuous program parameter.
 *
 * Values come from the gradcheck report (its analytic column is the taped
 * gradient; the finite-difference column is ignored here), so they match the
 * CLI bit for bit. Exit code 4 only signals a finite-difference flag and is
 * tolerated.
 */
export function lossAndGrad(
  programText: string,
  target: Float64Array,
  spec: LossSpec
): LossAndGrad {
  return withWorkdir((dir) => {
    const prog = path.join(dir, "prog.sp");
    const targetPath = path.join(dir, "target.xyz");
    const report = path.join(dir, "report.json");
    fs.writeFileSync(prog, programText);
    fs.writeFileSync(targetPath, cloudToXyz(target));
    runCli(
      ["gradcheck", ...lossArgs(prog, targetPath, spec), "--json", report],
      [0, 4]
    );
    const parsed = JSON.parse(fs.readFileSync(report, "utf8")) as {
      loss: number;
      slots: Array<LayoutSlot & { analytic: number }>;
    };
    const grad = new Float64Array(parsed.slots.length);
    const layout: LayoutSlot[] = [];
    parsed.slots.forEach((slot, i) => {
      grad[i] = slot.analytic;
      layout.push({ block: slot.block, stmt: slot.stmt, param: slot.param });
    });
    return { loss: parsed.loss, grad, layout };
  });
}

/** Scalar loss via the CLI's loss command (same pipeline as lossAndGrad). */
export function loss(
  programText: string,
  target: Float64Array,
  spec: LossSpec
): number {
  return withWorkdir((dir) => {
    const prog = path.join(dir, "prog.sp");
    const targetPath = path.join(dir, "target.xyz");
    fs.writeFileSync(prog, programText);
    fs.writeFileSync(targetPath, cloudToXyz(target));
    const out = runCli(["loss", ...lossArgs(prog, targetPath, spec)]);
    return Number(out.trim());
  });
}
