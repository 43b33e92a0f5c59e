/** Thin fetch client; every non-2xx response carries a structured body. */

import type {
    ApiErrorBody,
    FieldResponse,
    MetaResponse,
    OodBackground,
    RegionBoxSpec,
    ScenarioDraft,
    ScenarioResponse,
} from "./types.js";
import { draftToJson } from "./validate.js";

export class ApiError extends Error {
    readonly code: string;
    readonly fields: string[];
    readonly status: number;

    constructor(status: number, body: ApiErrorBody) {
        super(body.message);
        this.code = body.code;
        this.fields = body.fields ?? [];
        this.status = status;
    }
}

async function parseError(resp: Response): Promise<never> {
    let body: ApiErrorBody;
    try {
        body = (await resp.json()) as ApiErrorBody;
    } catch {
        body = { code: "http_error", message: `HTTP ${resp.status}` };
    }
    throw new ApiError(resp.status, body);
}

export interface ScenarioResult {
    body: ScenarioResponse;
    /** wall-clock seconds reported by the X-Compute-Seconds header */
    computeSeconds: number | null;
}

export class ApiClient {
    constructor(private readonly base: string = "") {}

    private async getJson<T>(path: string): Promise<T> {
        const resp = await fetch(this.base + path);
        if (!resp.ok) {
            await parseError(resp);
        }
        return (await resp.json()) as T;
    }

    meta(): Promise<MetaResponse> {
        return this.getJson("/api/meta");
    }

    field(dataset: string, member: number, time: number,
          channel: string): Promise<FieldResponse> {
        const q = new URLSearchParams({
            dataset,
            member: String(member),
            time: String(time),
            channel,
        });
        return this.getJson(`/api/field?${q}`);
    }

    async scenario(draft: ScenarioDraft, options: {
        includeContributions?: boolean;
        dataset?: string;
        bank?: string;
    } = {}): Promise<ScenarioResult> {
        const payload = {
            ...JSON.parse(draftToJson(draft)),
            ...(options.includeContributions ? { include_contributions: true } : {}),
            ...(options.dataset ? { dataset: options.dataset } : {}),
            ...(options.bank ? { bank: options.bank } : {}),
        };
        const resp = await fetch(`${this.base}/api/scenario`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(payload),
        });
        if (!resp.ok) {
            await parseError(resp);
        }
        const header = resp.headers.get("X-Compute-Seconds");
        return {
            body: (await resp.json()) as ScenarioResponse,
            computeSeconds: header === null ? null : Number(header),
        };
    }

    oodBackground(): Promise<OodBackground> {
        return this.getJson("/api/ood/background");
    }

    async regionMask(box: RegionBoxSpec): Promise<boolean[]> {
        const q = new URLSearchParams({
            lat_min: String(box.lat_min),
            lat_max: String(box.lat_max),
            lon_min: String(box.lon_min),
            lon_max: String(box.lon_max),
        });
        const body = await this.getJson<{ mask: boolean[] }>(`/api/region_mask?${q}`);
        return body.mask;
    }
}
