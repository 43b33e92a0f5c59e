/** Client-side scenario validation mirroring the server schema.
 *
 * Keep the rules in lockstep with the backend's scenario parser: the suite
 * asserts that a draft fails here exactly when the server rejects it.
 */

import { INTEGRATION_RULES, type RegionBoxSpec, type ScenarioDraft } from "./types.js";
import { PRESET_REGIONS } from "./regions.js";

function isInt(v: unknown): v is number {
    return typeof v === "number" && Number.isInteger(v);
}

function checkBox(entry: Record<string, unknown>, errors: string[]): void {
    const missing = ["lat_min", "lat_max", "lon_min", "lon_max"].filter(
        (k) => !(k in entry),
    );
    if (missing.length) {
        errors.push(`regions: box missing fields [${missing.join(", ")}]`);
        return;
    }
    const latMin = Number(entry.lat_min);
    const latMax = Number(entry.lat_max);
    const lonMin = Number(entry.lon_min);
    const lonMax = Number(entry.lon_max);
    if ([latMin, latMax, lonMin, lonMax].some((v) => !Number.isFinite(v))) {
        errors.push("regions: box bounds must be finite numbers");
        return;
    }
    if (!(-90 <= latMin && latMin < latMax && latMax <= 90)) {
        errors.push(
            `regions: need -90 <= lat_min < lat_max <= 90, got [${latMin}, ${latMax}]`,
        );
    }
}

function checkRegion(entry: unknown, errors: string[]): void {
    if (typeof entry === "string") {
        if (!(entry in PRESET_REGIONS)) {
            errors.push(`regions: unknown preset '${entry}'`);
        }
        return;
    }
    if (entry !== null && typeof entry === "object") {
        const obj = entry as Record<string, unknown>;
        if ("preset" in obj) {
            checkRegion(obj.preset, errors);
        } else {
            checkBox(obj, errors);
        }
        return;
    }
    errors.push("regions: expected preset name or box object");
}

/** Returns the list of field errors; an empty list means submittable. */
export function validateDraft(draft: unknown): string[] {
    const errors: string[] = [];
    if (draft === null || typeof draft !== "object" || Array.isArray(draft)) {
        return ["scenario body must be a JSON object"];
    }
    const d = draft as Partial<ScenarioDraft> & Record<string, unknown>;

    if (!Array.isArray(d.regions) || d.regions.length === 0) {
        errors.push("regions: must be a non-empty list");
    } else {
        for (const entry of d.regions) {
            checkRegion(entry, errors);
        }
    }

    if (d.amplitudes === null || typeof d.amplitudes !== "object"
        || Array.isArray(d.amplitudes)) {
        errors.push("amplitudes: must be an object of channel -> value");
    } else {
        for (const [k, v] of Object.entries(d.amplitudes)) {
            if (typeof v !== "number" || !Number.isFinite(v)) {
                errors.push(`amplitudes: value for '${k}' must be a finite number`);
            }
        }
    }

    const samples = d.samples ?? 480;
    if (!isInt(samples) || samples < 1) {
        errors.push("samples: must be a positive integer");
    }

    const lags = d.lags ?? [];
    if (!Array.isArray(lags) || !lags.every((l) => isInt(l) && l >= 0)) {
        errors.push("lags: must be a list of non-negative integers");
    }

    const rule = d.rule ?? "sum";
    if (!INTEGRATION_RULES.includes(rule as never)) {
        errors.push(`rule: must be one of [${INTEGRATION_RULES.join(", ")}]`);
    }

    if (!isInt(d.seed ?? 0)) {
        errors.push("seed: must be an integer");
    }
    return errors;
}

/** Serialize a draft exactly as the server expects it. */
export function draftToJson(draft: ScenarioDraft): string {
    const regions = draft.regions.map((r) =>
        typeof r === "string"
            ? r
            : {
                  name: r.name,
                  lat_min: r.lat_min,
                  lat_max: r.lat_max,
                  lon_min: r.lon_min,
                  lon_max: r.lon_max,
              } satisfies RegionBoxSpec,
    );
    return JSON.stringify({
        regions,
        amplitudes: draft.amplitudes,
        samples: draft.samples,
        lags: draft.lags,
        rule: draft.rule,
        seed: draft.seed,
    });
}
