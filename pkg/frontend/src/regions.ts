/** Region-box geometry shared by validation, overlays, and mask previews. */

import type { RegionBoxSpec } from "./types.js";

/** Study-region presets, mirroring the server (longitudes in [0, 360)). */
export const PRESET_REGIONS: Record<string, RegionBoxSpec> = {
    NEP: { name: "NEP", lat_min: 0, lat_max: 30, lon_min: 210, lon_max: 250 },
    SEP: { name: "SEP", lat_min: -30, lat_max: 0, lon_min: 250, lon_max: 290 },
    SEA: { name: "SEA", lat_min: -30, lat_max: 0, lon_min: 345, lon_max: 25 },
};

export function normalizeLon(lon: number): number {
    return ((lon % 360) + 360) % 360;
}

/** Inclusive membership test; boxes with lon_min > lon_max wrap across 0. */
export function boxContains(box: RegionBoxSpec, lat: number, lon: number): boolean {
    if (lat < box.lat_min || lat > box.lat_max) {
        return false;
    }
    const x = normalizeLon(lon);
    const lo = normalizeLon(box.lon_min);
    const hi = normalizeLon(box.lon_max);
    return lo > hi ? x >= lo || x <= hi : x >= lo && x <= hi;
}

export function resolveRegion(entry: string | RegionBoxSpec): RegionBoxSpec | null {
    if (typeof entry === "string") {
        return PRESET_REGIONS[entry] ?? null;
    }
    return entry;
}

/** Per-vertex membership in the union of the draft's regions. */
export function unionMask(
    regions: (string | RegionBoxSpec)[],
    lat: number[],
    lon: number[],
): boolean[] {
    const boxes = regions
        .map(resolveRegion)
        .filter((b): b is RegionBoxSpec => b !== null);
    return lat.map((la, i) =>
        boxes.some((b) => boxContains(b, la, lon[i])),
    );
}
