/** The run-scenario flow: validate, submit, and render the result views.
 *
 * Shared by the live console and the test suite so "submitted from the UI"
 * and "submitted from a test" exercise the same path.
 *
 * The response total returned by the service is already the net difference
 * (mean perturbed minus unperturbed emulator output), so the difference view
 * is the response map itself; a zero-amplitude draft renders it neutral.
 * When a previous run is kept, an extra comparison map shows current minus
 * previous.
 */

import { ApiClient, type ScenarioResult } from "./api.js";
import { renderDifferenceMap, renderFieldMap } from "./render.js";
import { resolveRegion } from "./regions.js";
import type { ProjectionName } from "./projection.js";
import type { RegionBoxSpec, ScenarioDraft, ScenarioResponse } from "./types.js";
import { validateDraft } from "./validate.js";

export interface FlowViews {
    response: ScenarioResponse;
    computeSeconds: number | null;
    /** per output channel: net-difference response map (the difference view) */
    differenceMaps: Record<string, string>;
    /** per output channel: current minus previous run (empty without one) */
    comparisonMaps: Record<string, string>;
    oodScore: number | null;
}

export class DraftInvalidError extends Error {
    constructor(readonly errors: string[]) {
        super(`draft failed validation: ${errors.join("; ")}`);
    }
}

export function draftBoxes(draft: ScenarioDraft): RegionBoxSpec[] {
    return draft.regions
        .map(resolveRegion)
        .filter((b): b is RegionBoxSpec => b !== null);
}

/** Validate, POST, and render one scenario against the previous result. */
export async function runScenarioFlow(
    client: ApiClient,
    draft: ScenarioDraft,
    previous: ScenarioResponse | null,
    projection: ProjectionName = "equirectangular",
): Promise<FlowViews> {
    const errors = validateDraft(draft);
    if (errors.length) {
        throw new DraftInvalidError(errors);
    }
    const result: ScenarioResult = await client.scenario(draft);
    const body = result.body;
    const boxes = draftBoxes(draft);
    const differenceMaps: Record<string, string> = {};
    const comparisonMaps: Record<string, string> = {};
    for (const channel of body.channels) {
        const values = body.totals[channel];
        differenceMaps[channel] = renderFieldMap(values, body.lat, body.lon, {
            projection,
            boxes,
            title: `${channel} response (perturbed - unperturbed)`,
        });
        if (previous) {
            comparisonMaps[channel] = renderDifferenceMap(
                values,
                previous.totals[channel] ?? new Array(values.length).fill(0),
                body.lat,
                body.lon,
                { projection, title: `${channel} vs previous run` },
            );
        }
    }
    return {
        response: body,
        computeSeconds: result.computeSeconds,
        differenceMaps,
        comparisonMaps,
        oodScore: body.ood_score,
    };
}
