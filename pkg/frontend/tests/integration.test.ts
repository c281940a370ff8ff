/**
 * End-to-end studio loop against a live relight service:
 * load a synthetic bundle, fit the original lighting, add a point light
 * (brightness strictly increases under a shared seed), then drag it and
 * verify the final displayed frame is byte-identical to a direct render
 * of the final lighting.
 */
import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { RelightClient } from "../src/api";
import { addLight, fromLighting, moveLight, toLighting } from "../src/gizmos";
import { decodePfm, meanValue } from "../src/pfm";
import { Frame, RenderScheduler } from "../src/revision";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const REPO_ROOT = join(dirname(fileURLToPath(import.meta.url)), "..", "..");

let server: ChildProcess | null = null;
let bundleDir: string;

function runPython(args: string[]): Promise<void> {
  return new Promise((resolve, reject) => {
    const p = spawn("python3", args, { cwd: REPO_ROOT, stdio: ["ignore", "ignore", "inherit"] });
    p.on("exit", (code) => (code === 0 ? resolve() : reject(new Error(`python exited ${code}`))));
    p.on("error", reject);
  });
}

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/sessions/probe`);
      if (resp.status === 404) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 300));
  }
  throw new Error("relight service did not come up");
}

beforeAll(async () => {
  bundleDir = mkdtempSync(join(tmpdir(), "relight-bundle-"));
  await runPython(["-m", "relight.synthetic", bundleDir, "64", "48"]);
  server = spawn("python3", ["-m", "relight.cli", "serve", "--port", String(PORT)], {
    cwd: REPO_ROOT,
    stdio: ["ignore", "ignore", "inherit"],
  });
  await waitForServer(120_000);
}, 300_000);

afterAll(() => {
  server?.kill();
});

function loadBundle() {
  return {
    pointmap: new Uint8Array(readFileSync(join(bundleDir, "pointmap.pfm"))),
    albedo: new Uint8Array(readFileSync(join(bundleDir, "albedo.png"))),
    shading: new Uint8Array(readFileSync(join(bundleDir, "shading.pfm"))),
    camera: JSON.parse(readFileSync(join(bundleDir, "manifest.json"), "utf-8")).camera,
  };
}

describe("studio loop against the live service", () => {
  it("loads, fits, adds a light, drags it, and stays consistent", async () => {
    const client = new RelightClient(BASE);
    const { id } = await client.createSession(loadBundle());

    // bundle has shading: initial lighting comes from the fit endpoint
    const status0 = await client.getSession(id);
    expect(status0.has_shading).toBe(true);
    const fit = await client.fit(id, {
      k_lights: 4,
      env_rows: 16,
      max_iters: 40,
      spp: 8,
      max_depth: 2,
      seed: 3,
    });
    expect(fit.final_error).toBeGreaterThanOrEqual(0);
    const status1 = await client.getSession(id);
    expect(status1.lighting_revision).toBe(fit.lighting_revision);
    expect(status1.lighting.lights).toEqual(fit.psi.lights); // installed = reported

    let gizmos = fromLighting(status1.lighting);

    const renderArgs = { format: "pfm" as const, spp: 16, seed: 11, max_depth: 2 };
    const before = await client.render(id, renderArgs);
    const beforeMean = meanValue(decodePfm(before.bytes));

    // add a point light: same seed, shared sample streams -> the render can
    // only gain energy, so mean brightness strictly increases
    gizmos = addLight(gizmos, {
      type: "point",
      position: [0.0, -0.3, -0.3],
      intensity: [0.8, 0.8, 0.8],
    });
    const put1 = await client.putLighting(id, toLighting(gizmos));
    const after = await client.render(id, renderArgs);
    const afterMean = meanValue(decodePfm(after.bytes));
    expect(after.lightingRevision).toBe(put1.revision);
    expect(afterMean).toBeGreaterThan(beforeMean);

    // drag the new light through the debounced, revision-tagged scheduler
    const newest = gizmos.gizmos[gizmos.gizmos.length - 1].id;
    let displayed: Frame | null = null;
    const scheduler = new RenderScheduler(
      async () => {
        const r = await client.render(id, renderArgs);
        return {
          revision: r.lightingRevision,
          bytes: r.bytes,
          millis: r.millis,
          contentType: r.contentType,
        };
      },
      (frame) => {
        displayed = frame;
      },
      100,
    );
    for (let step = 1; step <= 12; step++) {
      gizmos = moveLight(gizmos, newest, [0.0 + step * 0.03, -0.3, -0.3 + step * 0.02]);
      const { revision } = await client.putLighting(id, toLighting(gizmos));
      scheduler.notify(revision);
    }
    const deadline = Date.now() + 60_000;
    while (!scheduler.settled && Date.now() < deadline) {
      await new Promise((r) => setTimeout(r, 100));
    }
    expect(scheduler.settled).toBe(true);
    expect(displayed).not.toBeNull();

    // the frame on screen is exactly the final lighting's render
    const direct = await client.render(id, renderArgs);
    expect(displayed!.revision).toBe(direct.lightingRevision);
    expect(Buffer.from(displayed!.bytes).equals(Buffer.from(direct.bytes))).toBe(true);
    // far fewer renders than drag steps
    expect(scheduler.stats.started).toBeLessThan(12);

    await client.deleteSession(id);
  }, 240_000);

  it("rejects an invalid lighting update without changing state", async () => {
    const client = new RelightClient(BASE);
    const { id } = await client.createSession(loadBundle());
    const before = await client.getSession(id);
    await expect(
      client.putLighting(id, {
        lights: [
          {
            type: "spot",
            position: [0, 0, 0],
            intensity: [1, 1, 1],
            direction: [0, 0, 1],
            cone_inner_deg: 80,
            cone_outer_deg: 20,
          },
        ],
      } as never),
    ).rejects.toThrow();
    const after = await client.getSession(id);
    expect(after.lighting_revision).toBe(before.lighting_revision);
    await client.deleteSession(id);
  }, 120_000);
});
