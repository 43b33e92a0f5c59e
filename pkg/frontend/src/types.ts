/** Wire types of the scenario-console HTTP API. */

export interface ChannelInfo {
    name: string;
    role: "input" | "output" | "static";
    units: string;
}

export interface DatasetInfo {
    name: string;
    members: number;
    months: number;
    mesh_level: number;
    start_month: number;
    channels: ChannelInfo[];
}

export interface BankInfo {
    name: string;
    lags: number[];
    kind: string;
    channels_in: string[];
    channels_out: string[];
}

export interface RegionBoxSpec {
    name: string;
    lat_min: number;
    lat_max: number;
    lon_min: number;
    lon_max: number;
}

export interface MetaResponse {
    mesh_level: number;
    n_nodes: number;
    datasets: DatasetInfo[];
    banks: BankInfo[];
    presets: Record<string, RegionBoxSpec>;
    default_samples: number;
}

export interface FieldResponse {
    dataset: string;
    member: number;
    time: number;
    channel: string;
    units: string;
    values: number[];
    lat: number[];
    lon: number[];
}

export type IntegrationRule = "sum" | "interp-linear" | "interp-quadratic";

export const INTEGRATION_RULES: IntegrationRule[] = [
    "sum",
    "interp-linear",
    "interp-quadratic",
];

/** Client-side scenario draft; serializes 1:1 to the server scenario schema. */
export interface ScenarioDraft {
    regions: (string | RegionBoxSpec)[];
    amplitudes: Record<string, number>;
    samples: number;
    lags: number[];
    rule: IntegrationRule;
    seed: number;
}

export interface ScenarioResponse {
    channels: string[];
    lags: number[];
    rule: string;
    samples: number;
    seed: number | null;
    totals: Record<string, number[]>;
    contributions?: Record<string, Record<string, number[]>>;
    ood_score: number | null;
    lat: number[];
    lon: number[];
}

export interface OodBackground {
    k: number;
    points: [number, number][];
}

export interface ApiErrorBody {
    code: string;
    message: string;
    fields?: string[];
}
