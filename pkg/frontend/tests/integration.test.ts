/** End-to-end checks against a live backend.
 *
 * Builds a small demo workspace with the pipeline CLI (level-2 mesh, three
 * output channels, ten-lag MLP bank), starts the HTTP service, and drives the
 * same flow the console uses.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ApiClient } from "../src/api.js";
import { runScenarioFlow } from "../src/flow.js";
import { neutralColor } from "../src/colors.js";
import { boxContains, PRESET_REGIONS } from "../src/regions.js";
import { validateDraft } from "../src/validate.js";
import type { RegionBoxSpec, ScenarioDraft } from "../src/types.js";
import fixtures from "./fixtures/drafts.json";

const PORT = 8721;
const BASE = `http://127.0.0.1:${PORT}`;
const BANK_LAGS = [1, 2, 3, 4, 5, 6, 12, 24, 36, 48];

let workdir: string;
let server: ChildProcess | null = null;
const client = new ApiClient(BASE);

function cli(args: string[]): void {
    const direct = spawnSync("fdtemu", args, { encoding: "utf-8" });
    if (direct.status === 0) {
        return;
    }
    const viaPython = spawnSync("python3", ["-m", "fdtemu.cli", ...args],
                                { encoding: "utf-8" });
    if (viaPython.status !== 0) {
        throw new Error(
            `CLI failed: fdtemu ${args.join(" ")}\n` +
            `${direct.stderr ?? ""}${viaPython.stderr ?? ""}`,
        );
    }
}

async function waitForHealth(timeoutMs: number): Promise<void> {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
        try {
            const resp = await fetch(`${BASE}/api/health`);
            if (resp.ok) {
                return;
            }
        } catch {
            // server not up yet
        }
        await new Promise((resolve) => setTimeout(resolve, 250));
    }
    throw new Error("backend did not become healthy in time");
}

beforeAll(async () => {
    workdir = mkdtempSync(join(tmpdir(), "fdtemu-ui-"));
    const raw = join(workdir, "raw");
    const prep = join(workdir, "prep");
    const bank = join(workdir, "bank");
    cli(["synth", "--out", raw, "--level", "2",
         "--channels", "cres:input,tas:output,pr:output,ps:output",
         "--noise-scale", "1.0,0.35,0.35,0.35",
         "--members", "6", "--months", "120", "--burn-in", "100",
         "--seed", "5"]);
    cli(["preprocess", "--data", raw, "--out", prep, "--seed", "5"]);
    cli(["train", "--data", prep, "--out", bank,
         "--lags", BANK_LAGS.join(","), "--kind", "mlp", "--width", "32",
         "--layers", "2", "--epochs", "2", "--batch-size", "128",
         "--seed", "5"]);
    server = spawn("fdtemu", ["serve", "--data", prep, "--bank", bank,
                              "--port", String(PORT)],
                   { stdio: "ignore" });
    await waitForHealth(30_000);
}, 180_000);

afterAll(() => {
    server?.kill();
    if (workdir) {
        rmSync(workdir, { recursive: true, force: true });
    }
});

function nepDraft(overrides: Partial<ScenarioDraft> = {}): ScenarioDraft {
    return {
        regions: ["NEP"],
        amplitudes: { cres: -8.0 },
        samples: 480,
        lags: BANK_LAGS,
        rule: "interp-quadratic",
        seed: 7,
        ...overrides,
    };
}

const cellCount = (svg: string) => (svg.match(/node-cell/g) ?? []).length;
const cellFills = (svg: string) =>
    Array.from(svg.matchAll(/class="node-cell"[^>]*fill="([^"]+)"/g)).map(
        (m) => m[1],
    );

describe("live backend", () => {
    it("describes the demo workspace in /api/meta", async () => {
        const meta = await client.meta();
        expect(meta.mesh_level).toBe(2);
        expect(meta.n_nodes).toBe(162);
        expect(meta.banks[0].lags).toEqual(BANK_LAGS);
        expect(meta.banks[0].channels_out).toEqual(["tas", "pr", "ps"]);
        expect(Object.keys(meta.presets).sort()).toEqual(["NEP", "SEA", "SEP"]);
    });

    it("runs the preset scenario and renders all three output maps",
       async () => {
        const views = await runScenarioFlow(client, nepDraft(), null);
        expect(Object.keys(views.differenceMaps)).toEqual(["tas", "pr", "ps"]);
        for (const svg of Object.values(views.differenceMaps)) {
            expect(cellCount(svg)).toBe(162);
            expect(svg).toContain("region-overlay");
        }
        expect(views.oodScore).not.toBeNull();
        expect(views.oodScore as number).toBeGreaterThan(0);
    }, 60_000);

    it("completes the 480-sample, 10-lag scenario within the latency budget",
       async () => {
        const began = performance.now();
        const views = await runScenarioFlow(client, nepDraft({ seed: 8 }), null);
        const wallSeconds = (performance.now() - began) / 1000;
        expect(views.computeSeconds).not.toBeNull();
        expect(views.computeSeconds as number).toBeLessThan(10);
        expect(wallSeconds).toBeLessThan(10);
    }, 60_000);

    it("agrees with the server-side region mask on 20 probe vertices",
       async () => {
        const meta = await client.meta();
        const field = await client.field(meta.datasets[0].name, 0, 0, "tas");
        const boxes: RegionBoxSpec[] = [
            PRESET_REGIONS.NEP,
            { name: "wrapped", lat_min: -25, lat_max: 15,
              lon_min: 340, lon_max: 20 },
        ];
        for (const box of boxes) {
            const serverMask = await client.regionMask(box);
            const stride = Math.floor(field.lat.length / 20);
            const probes = Array.from({ length: 20 }, (_, k) => k * stride);
            for (const idx of probes) {
                const clientSide = boxContains(box, field.lat[idx],
                                               field.lon[idx]);
                expect(clientSide, `vertex ${idx} of ${box.name}`)
                    .toBe(serverMask[idx]);
            }
        }
    }, 60_000);

    it("renders a zero-amplitude draft as an identically neutral difference view",
       async () => {
        const views = await runScenarioFlow(
            client, nepDraft({ amplitudes: {}, seed: 9 }), null,
        );
        for (const svg of Object.values(views.differenceMaps)) {
            const fills = new Set(cellFills(svg));
            expect(fills.size).toBe(1);
            expect([...fills][0]).toBe(neutralColor());
        }
        // sample mean of unperturbed inputs sits well inside the training cloud
        expect(views.oodScore as number).toBeLessThan(1);
    }, 60_000);

    it("client validation never disagrees with server schema validation",
       async () => {
        for (const { label, draft } of [...fixtures.valid, ...fixtures.invalid]) {
            const clientErrors = validateDraft(draft);
            const resp = await fetch(`${BASE}/api/scenario`, {
                method: "POST",
                headers: { "Content-Type": "application/json" },
                body: JSON.stringify(draft),
            });
            const schemaRejected =
                resp.status === 400 &&
                ((await resp.clone().json()) as { code?: string }).code ===
                    "invalid_scenario";
            expect(schemaRejected, `fixture: ${label}`)
                .toBe(clientErrors.length > 0);
        }
    }, 120_000);

    it("surfaces structured server errors", async () => {
        await expect(
            runScenarioFlow(client, nepDraft({ lags: [99] }), null),
        ).rejects.toMatchObject({ code: "invalid_scenario" });
    });
});
