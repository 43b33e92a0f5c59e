import { describe, expect, it } from "vitest";

import { draftToJson, validateDraft } from "../src/validate.js";
import type { ScenarioDraft } from "../src/types.js";
import fixtures from "./fixtures/drafts.json";

describe("validateDraft", () => {
    for (const { label, draft } of fixtures.valid) {
        it(`accepts: ${label}`, () => {
            expect(validateDraft(draft)).toEqual([]);
        });
    }

    for (const { label, draft } of fixtures.invalid) {
        it(`rejects: ${label}`, () => {
            expect(validateDraft(draft).length).toBeGreaterThan(0);
        });
    }

    it("names the offending fields", () => {
        const errors = validateDraft({
            regions: ["ATLANTIS"],
            amplitudes: { cres: "lots" },
            samples: 0,
            lags: [1],
            rule: "simpson",
            seed: 0,
        });
        const joined = errors.join(" ");
        expect(joined).toContain("ATLANTIS");
        expect(joined).toContain("cres");
        expect(joined).toContain("samples");
        expect(joined).toContain("rule");
    });

    it("rejects non-object bodies", () => {
        expect(validateDraft(null).length).toBe(1);
        expect(validateDraft([1, 2]).length).toBe(1);
    });
});

describe("draftToJson", () => {
    it("serializes exactly to the scenario file schema", () => {
        const draft: ScenarioDraft = {
            regions: [
                "NEP",
                { name: "box", lat_min: -5, lat_max: 5, lon_min: 350, lon_max: 10 },
            ],
            amplitudes: { cres: -8 },
            samples: 480,
            lags: [1, 2, 3],
            rule: "interp-quadratic",
            seed: 7,
        };
        const parsed = JSON.parse(draftToJson(draft));
        expect(Object.keys(parsed).sort()).toEqual(
            ["amplitudes", "lags", "regions", "rule", "samples", "seed"],
        );
        expect(parsed.regions[0]).toBe("NEP");
        expect(parsed.regions[1]).toEqual({
            name: "box", lat_min: -5, lat_max: 5, lon_min: 350, lon_max: 10,
        });
    });
});
