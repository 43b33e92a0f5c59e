import { describe, expect, it } from "vitest";

import { divergingColor, neutralColor, symmetricMax } from "../src/colors.js";
import { project, unprojectEquirectangular } from "../src/projection.js";
import { renderDifferenceMap, renderFieldMap, renderOodPanel } from "../src/render.js";
import { PRESET_REGIONS } from "../src/regions.js";

function grid(n: number): { lat: number[]; lon: number[] } {
    const lat: number[] = [];
    const lon: number[] = [];
    for (let i = 0; i < n; i++) {
        lat.push(-80 + (160 * i) / (n - 1));
        lon.push((i * 360) / n);
    }
    return { lat, lon };
}

const cellFills = (svg: string) =>
    Array.from(svg.matchAll(/class="node-cell"[^>]*fill="([^"]+)"/g)).map(
        (m) => m[1],
    );

describe("colors", () => {
    it("centers the diverging scale at zero", () => {
        expect(divergingColor(0, 5)).toBe(neutralColor());
        expect(divergingColor(0, 0)).toBe(neutralColor());
        expect(divergingColor(5, 5)).not.toBe(divergingColor(-5, 5));
    });

    it("saturates beyond the symmetric limit", () => {
        expect(divergingColor(99, 5)).toBe(divergingColor(5, 5));
        expect(symmetricMax([-3, 2, 1])).toBe(3);
    });
});

describe("projection", () => {
    it("equirectangular hits the expected corners", () => {
        expect(project("equirectangular", 90, 180)).toEqual({ x: 0.5, y: 0 });
        expect(project("equirectangular", -90, 180)).toEqual({ x: 0.5, y: 1 });
        const p = project("equirectangular", 0, 0);
        expect(p.x).toBeCloseTo(0, 12);
        expect(p.y).toBeCloseTo(0.5, 12);
    });

    it("round-trips through the equirectangular inverse", () => {
        for (const [lat, lon] of [[12.5, 303], [-45, 47.25], [0, 180]]) {
            const p = project("equirectangular", lat, lon);
            const geo = unprojectEquirectangular(p.x, p.y);
            expect(geo.lat).toBeCloseTo(lat, 9);
            expect(geo.lon).toBeCloseTo(lon, 9);
        }
    });

    it("hammer stays inside the unit square", () => {
        for (const lat of [-89, -30, 0, 30, 89]) {
            for (const lon of [0, 90, 179, 181, 359]) {
                const p = project("hammer", lat, lon);
                expect(p.x).toBeGreaterThanOrEqual(0);
                expect(p.x).toBeLessThanOrEqual(1);
                expect(p.y).toBeGreaterThanOrEqual(0);
                expect(p.y).toBeLessThanOrEqual(1);
            }
        }
    });
});

describe("renderFieldMap", () => {
    it("renders one cell per node with hover titles", () => {
        const { lat, lon } = grid(42);
        const values = lat.map((v) => v / 10);
        const svg = renderFieldMap(values, lat, lon);
        expect(cellFills(svg)).toHaveLength(42);
        expect(svg).toContain("<title>lat ");
        expect(svg.match(/<title>/g)).toHaveLength(42);
    });

    it("renders an all-zero field uniformly neutral", () => {
        const { lat, lon } = grid(30);
        const svg = renderFieldMap(new Array(30).fill(0), lat, lon);
        const fills = cellFills(svg);
        expect(new Set(fills).size).toBe(1);
        expect(fills[0]).toBe(neutralColor());
    });

    it("draws region overlays, two segments for wrapped boxes", () => {
        const { lat, lon } = grid(30);
        const values = new Array(30).fill(1);
        const nep = renderFieldMap(values, lat, lon, {
            boxes: [PRESET_REGIONS.NEP],
        });
        expect(nep.match(/region-overlay/g)).toHaveLength(1);
        const sea = renderFieldMap(values, lat, lon, {
            boxes: [PRESET_REGIONS.SEA],
        });
        expect(sea.match(/region-overlay/g)).toHaveLength(2);
    });

    it("keeps per-node values fixed when the projection toggles", () => {
        const { lat, lon } = grid(25);
        const values = lat.map((v, i) => Math.sin(v) + i / 25);
        const titles = (svg: string) =>
            Array.from(svg.matchAll(/<title>([^<]+)<\/title>/g)).map((m) => m[1]);
        const a = titles(renderFieldMap(values, lat, lon,
                                        { projection: "equirectangular" }));
        const b = titles(renderFieldMap(values, lat, lon,
                                        { projection: "hammer" }));
        expect(a).toEqual(b);
        expect(cellFills(renderFieldMap(values, lat, lon,
                                        { projection: "equirectangular" })))
            .toEqual(cellFills(renderFieldMap(values, lat, lon,
                                              { projection: "hammer" })));
    });

    it("throws on mismatched lengths instead of rendering garbage", () => {
        const { lat, lon } = grid(10);
        expect(() => renderFieldMap([1, 2], lat, lon)).toThrow(/coordinates/);
    });
});

describe("renderDifferenceMap", () => {
    it("is identically neutral for identical inputs", () => {
        const { lat, lon } = grid(20);
        const values = lat.map((v) => v * 2);
        const svg = renderDifferenceMap(values, values, lat, lon);
        const fills = cellFills(svg);
        expect(new Set(fills).size).toBe(1);
        expect(fills[0]).toBe(neutralColor());
    });

    it("shows structure when the fields differ", () => {
        const { lat, lon } = grid(20);
        const a = lat.map((v) => v);
        const b = lat.map(() => 0);
        const fills = cellFills(renderDifferenceMap(a, b, lat, lon));
        expect(new Set(fills).size).toBeGreaterThan(1);
    });
});

describe("renderOodPanel", () => {
    it("renders the background scatter and the score bar", () => {
        const points: [number, number][] = [[0, 0], [1, 2], [-1, -2], [0.5, 0]];
        const svg = renderOodPanel(points, 1.75);
        expect(svg.match(/ood-bg/g)).toHaveLength(4);
        expect(svg).toContain("1.75");
        expect(svg).toContain("ood-bar");
        expect(renderOodPanel(points, null)).toContain("no scenario yet");
    });
});
