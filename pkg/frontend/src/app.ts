/** DOM wiring for the scenario console.
 *
 * Panels: C1 data browsing + projection, C2 run/clear controls, C3 scenario
 * parameters, V1 input field, V2 response + comparison views, V3 OOD panel,
 * V4 static tipping-point legend.
 */

import { ApiClient, ApiError } from "./api.js";
import { DraftInvalidError, runScenarioFlow } from "./flow.js";
import { PROJECTIONS, unprojectEquirectangular, type ProjectionName } from "./projection.js";
import { ScenarioQueue } from "./queue.js";
import { renderFieldMap, renderOodPanel } from "./render.js";
import type {
    MetaResponse,
    RegionBoxSpec,
    ScenarioDraft,
    ScenarioResponse,
} from "./types.js";
import { validateDraft } from "./validate.js";

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node as T;
}

export class ConsoleApp {
    private readonly client: ApiClient;
    private meta!: MetaResponse;
    private background: [number, number][] = [];
    private projection: ProjectionName = "equirectangular";
    private lastResponse: ScenarioResponse | null = null;
    private lastDraftBoxes: RegionBoxSpec[] = [];
    private drawnBox: RegionBoxSpec | null = null;
    private readonly queue: ScenarioQueue<ScenarioDraft>;

    constructor(base = "") {
        this.client = new ApiClient(base);
        this.queue = new ScenarioQueue(
            (draft) => this.execute(draft),
            (s) => {
                el("run-status").textContent = s.running
                    ? s.waiting > 0
                        ? `running (${s.waiting} queued)`
                        : "running"
                    : "idle";
            },
        );
    }

    async start(): Promise<void> {
        this.meta = await this.client.meta();
        this.background = (await this.client.oodBackground()).points;
        this.populateControls();
        this.bindEvents();
        await this.refreshInputView();
        this.renderOod(null);
    }

    // ------------------------------------------------------------------ C1

    private populateControls(): void {
        const dataset = this.meta.datasets[0];
        const bank = this.meta.banks[0];

        const channelSel = el<HTMLSelectElement>("channel-select");
        channelSel.innerHTML = dataset.channels
            .map((c) => `<option value="${c.name}">${c.name} (${c.role})</option>`)
            .join("");
        const memberInput = el<HTMLInputElement>("member-input");
        memberInput.max = String(dataset.members - 1);
        const timeInput = el<HTMLInputElement>("time-input");
        timeInput.max = String(dataset.months - 1);

        el<HTMLSelectElement>("projection-select").innerHTML = PROJECTIONS
            .map((p) => `<option value="${p}">${p}</option>`)
            .join("");

        const presets = el<HTMLDivElement>("preset-boxes");
        presets.innerHTML = Object.keys(this.meta.presets)
            .map(
                (name) =>
                    `<label><input type="checkbox" class="preset-box" ` +
                    `value="${name}" ${name === "NEP" ? "checked" : ""}/> ${name}</label>`,
            )
            .join(" ");

        const amps = el<HTMLDivElement>("amplitude-rows");
        amps.innerHTML = bank.channels_in
            .map(
                (name) =>
                    `<label class="amp-row">${name} <input type="number" ` +
                    `class="amp-input" data-channel="${name}" step="0.5" value="0"/></label>`,
            )
            .join("");

        el<HTMLInputElement>("samples-input").value = String(this.meta.default_samples);
        el<HTMLInputElement>("lags-input").value = bank.lags.join(",");
        el<HTMLSelectElement>("rule-select").value =
            bank.lags.length && bank.lags.join(",") ===
                Array.from({ length: bank.lags.length }, (_, i) => i + bank.lags[0]).join(",")
                ? "sum"
                : "interp-quadratic";
    }

    private bindEvents(): void {
        el("field-refresh").addEventListener("click", () => {
            void this.refreshInputView();
        });
        el<HTMLSelectElement>("projection-select").addEventListener("change", (ev) => {
            this.projection = (ev.target as HTMLSelectElement).value as ProjectionName;
            void this.refreshInputView();
            this.rerenderResponse();
        });
        el("run-button").addEventListener("click", () => {
            const draft = this.collectDraft();
            const errors = validateDraft(draft);
            if (errors.length) {
                this.showError(`invalid draft: ${errors.join("; ")}`);
                return;
            }
            this.clearError();
            this.queue.submit(draft);
        });
        el("clear-button").addEventListener("click", () => {
            this.lastResponse = null;
            el("response-maps").innerHTML = "";
            el("comparison-maps").innerHTML = "";
            this.renderOod(null);
            this.clearError();
        });
        this.bindBoxDrawing();
    }

    /** Drag on the input map (equirectangular only) to define a custom box. */
    private bindBoxDrawing(): void {
        const holder = el("input-map");
        let start: { lat: number; lon: number } | null = null;
        const toGeo = (ev: PointerEvent) => {
            const svg = holder.querySelector("svg");
            if (!svg || this.projection !== "equirectangular") {
                return null;
            }
            const rect = svg.getBoundingClientRect();
            const x = (ev.clientX - rect.left) / rect.width;
            const y = (ev.clientY - rect.top) / rect.height;
            return unprojectEquirectangular(x, y);
        };
        holder.addEventListener("pointerdown", (ev) => {
            start = toGeo(ev as PointerEvent);
        });
        holder.addEventListener("pointerup", (ev) => {
            const end = toGeo(ev as PointerEvent);
            if (!start || !end) {
                return;
            }
            const latMin = Math.min(start.lat, end.lat);
            const latMax = Math.max(start.lat, end.lat);
            if (latMax - latMin < 1) {
                start = null;
                return;
            }
            this.drawnBox = {
                name: "drawn",
                lat_min: Math.round(latMin * 10) / 10,
                lat_max: Math.round(latMax * 10) / 10,
                lon_min: Math.round(start.lon * 10) / 10,
                lon_max: Math.round(end.lon * 10) / 10,
            };
            this.syncBoxInputs();
            start = null;
        });
        el("box-clear").addEventListener("click", () => {
            this.drawnBox = null;
            this.syncBoxInputs();
        });
        for (const id of ["box-latmin", "box-latmax", "box-lonmin", "box-lonmax"]) {
            el<HTMLInputElement>(id).addEventListener("change", () => {
                const read = (i: string) => Number(el<HTMLInputElement>(i).value);
                const box = {
                    name: "custom",
                    lat_min: read("box-latmin"),
                    lat_max: read("box-latmax"),
                    lon_min: read("box-lonmin"),
                    lon_max: read("box-lonmax"),
                };
                this.drawnBox = [box.lat_min, box.lat_max, box.lon_min, box.lon_max]
                    .every(Number.isFinite) && box.lat_min < box.lat_max
                    ? box
                    : null;
            });
        }
    }

    private syncBoxInputs(): void {
        const b = this.drawnBox;
        el<HTMLInputElement>("box-latmin").value = b ? String(b.lat_min) : "";
        el<HTMLInputElement>("box-latmax").value = b ? String(b.lat_max) : "";
        el<HTMLInputElement>("box-lonmin").value = b ? String(b.lon_min) : "";
        el<HTMLInputElement>("box-lonmax").value = b ? String(b.lon_max) : "";
    }

    // ------------------------------------------------------------------ C3

    private collectDraft(): ScenarioDraft {
        const regions: (string | RegionBoxSpec)[] = Array.from(
            document.querySelectorAll<HTMLInputElement>(".preset-box:checked"),
        ).map((box) => box.value);
        if (this.drawnBox) {
            regions.push(this.drawnBox);
        }
        const amplitudes: Record<string, number> = {};
        for (const input of document.querySelectorAll<HTMLInputElement>(".amp-input")) {
            const v = Number(input.value);
            if (v !== 0 && Number.isFinite(v)) {
                amplitudes[input.dataset.channel as string] = v;
            }
        }
        const lags = el<HTMLInputElement>("lags-input").value
            .split(",")
            .map((s) => Number(s.trim()))
            .filter((v) => Number.isFinite(v));
        return {
            regions,
            amplitudes,
            samples: Number(el<HTMLInputElement>("samples-input").value),
            lags,
            rule: el<HTMLSelectElement>("rule-select").value as ScenarioDraft["rule"],
            seed: Number(el<HTMLInputElement>("seed-input").value),
        };
    }

    // -------------------------------------------------------------- V1, V2

    private async refreshInputView(): Promise<void> {
        try {
            const field = await this.client.field(
                this.meta.datasets[0].name,
                Number(el<HTMLInputElement>("member-input").value),
                Number(el<HTMLInputElement>("time-input").value),
                el<HTMLSelectElement>("channel-select").value,
            );
            el("input-map").innerHTML = renderFieldMap(
                field.values, field.lat, field.lon,
                {
                    projection: this.projection,
                    title: `${field.channel} anomaly (member ${field.member}, `
                        + `month ${field.time})`,
                },
            );
            this.clearError();
        } catch (err) {
            this.showError(this.describe(err));
        }
    }

    private async execute(draft: ScenarioDraft): Promise<void> {
        try {
            const views = await runScenarioFlow(
                this.client, draft, this.lastResponse, this.projection,
            );
            this.lastDraftBoxes = draft.regions
                .map((r) => (typeof r === "string" ? this.meta.presets[r] : r))
                .filter((b): b is RegionBoxSpec => Boolean(b));
            el("response-maps").innerHTML = Object.values(views.differenceMaps)
                .map((svg) => `<div class="map-tile">${svg}</div>`)
                .join("");
            el("comparison-maps").innerHTML = Object.values(views.comparisonMaps)
                .map((svg) => `<div class="map-tile">${svg}</div>`)
                .join("");
            el("timing-note").textContent = views.computeSeconds !== null
                ? `computed in ${views.computeSeconds.toFixed(3)} s `
                  + `(${draft.samples} samples x ${draft.lags.length} lags)`
                : "";
            this.lastResponse = views.response;
            this.renderOod(views.oodScore);
            this.clearError();
        } catch (err) {
            this.showError(this.describe(err), () => this.queue.submit(draft));
            throw err;
        }
    }

    private rerenderResponse(): void {
        if (!this.lastResponse) {
            return;
        }
        const body = this.lastResponse;
        el("response-maps").innerHTML = body.channels
            .map((channel) =>
                `<div class="map-tile">${renderFieldMap(
                    body.totals[channel], body.lat, body.lon,
                    {
                        projection: this.projection,
                        boxes: this.lastDraftBoxes,
                        title: `${channel} response (perturbed - unperturbed)`,
                    },
                )}</div>`,
            )
            .join("");
    }

    // ------------------------------------------------------------------ V3

    private renderOod(score: number | null): void {
        el("ood-panel").innerHTML = renderOodPanel(this.background, score);
    }

    // --------------------------------------------------------------- errors

    private describe(err: unknown): string {
        if (err instanceof DraftInvalidError) {
            return err.message;
        }
        if (err instanceof ApiError) {
            const fields = err.fields.length ? ` [${err.fields.join("; ")}]` : "";
            return `${err.code}: ${err.message}${fields}`;
        }
        return err instanceof Error ? err.message : String(err);
    }

    private showError(message: string, retry?: () => void): void {
        const banner = el("error-banner");
        banner.hidden = false;
        banner.textContent = message + " ";
        if (retry) {
            const button = document.createElement("button");
            button.textContent = "retry";
            button.addEventListener("click", () => {
                this.clearError();
                retry();
            });
            banner.appendChild(button);
        }
    }

    private clearError(): void {
        const banner = el("error-banner");
        banner.hidden = true;
        banner.textContent = "";
    }
}
