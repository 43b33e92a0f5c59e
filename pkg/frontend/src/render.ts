/** Pure SVG builders for the console's map and diagnostic panels.
 *
 * Everything here is a string-in/string-out function of its inputs, so views
 * re-render identically for identical data and the test suite can inspect
 * output without a DOM.
 */

import { divergingColor, neutralColor, symmetricMax } from "./colors.js";
import { project, type ProjectionName } from "./projection.js";
import type { RegionBoxSpec } from "./types.js";

export interface FieldMapOptions {
    width?: number;
    height?: number;
    projection?: ProjectionName;
    /** color-scale limit; defaults to the field's own max |value| */
    maxAbs?: number;
    boxes?: RegionBoxSpec[];
    title?: string;
}

const esc = (s: string) =>
    s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

function boxBoundarySegments(box: RegionBoxSpec): { lat: number; lon: number }[][] {
    const spans: [number, number][] =
        box.lon_min > box.lon_max
            ? [[box.lon_min, 360], [0, box.lon_max]]
            : [[box.lon_min, box.lon_max]];
    return spans.map(([lo, hi]) => {
        const pts: { lat: number; lon: number }[] = [];
        const n = 24;
        for (let i = 0; i <= n; i++) {
            pts.push({ lat: box.lat_min, lon: lo + ((hi - lo) * i) / n });
        }
        for (let i = 0; i <= n; i++) {
            pts.push({ lat: box.lat_min + ((box.lat_max - box.lat_min) * i) / n, lon: hi });
        }
        for (let i = n; i >= 0; i--) {
            pts.push({ lat: box.lat_max, lon: lo + ((hi - lo) * i) / n });
        }
        for (let i = n; i >= 0; i--) {
            pts.push({ lat: box.lat_min + ((box.lat_max - box.lat_min) * i) / n, lon: lo });
        }
        return pts;
    });
}

function overlayMarkup(boxes: RegionBoxSpec[], projection: ProjectionName,
                       w: number, h: number): string {
    const parts: string[] = [];
    for (const box of boxes) {
        for (const segment of boxBoundarySegments(box)) {
            const coords = segment
                .map((p) => {
                    const q = project(projection, p.lat, p.lon);
                    return `${(q.x * w).toFixed(2)},${(q.y * h).toFixed(2)}`;
                })
                .join(" ");
            parts.push(
                `<polygon class="region-overlay" data-region="${esc(box.name)}" ` +
                `points="${coords}" fill="none" stroke="#222" ` +
                `stroke-dasharray="4 3" stroke-width="1.5"/>`,
            );
        }
    }
    return parts.join("");
}

/** One colored cell per mesh node with a hover title of lat/lon/value. */
export function renderFieldMap(values: number[], lat: number[], lon: number[],
                               opts: FieldMapOptions = {}): string {
    if (values.length !== lat.length || values.length !== lon.length) {
        throw new Error(
            `field has ${values.length} values for ${lat.length} coordinates`,
        );
    }
    const w = opts.width ?? 640;
    const h = opts.height ?? 320;
    const projection = opts.projection ?? "equirectangular";
    const maxAbs = opts.maxAbs ?? symmetricMax(values);
    const radius = Math.max(2, Math.sqrt((w * h) / Math.max(values.length, 1)) * 0.3);

    const cells: string[] = [];
    for (let i = 0; i < values.length; i++) {
        const p = project(projection, lat[i], lon[i]);
        const fill = divergingColor(values[i], maxAbs);
        cells.push(
            `<circle class="node-cell" data-index="${i}" ` +
            `cx="${(p.x * w).toFixed(2)}" cy="${(p.y * h).toFixed(2)}" ` +
            `r="${radius.toFixed(2)}" fill="${fill}">` +
            `<title>lat ${lat[i].toFixed(2)}, lon ${lon[i].toFixed(2)}: ` +
            `${values[i].toPrecision(4)}</title></circle>`,
        );
    }
    const title = opts.title
        ? `<text x="8" y="16" class="map-title">${esc(opts.title)}</text>`
        : "";
    const overlays = opts.boxes ? overlayMarkup(opts.boxes, projection, w, h) : "";
    return (
        `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${w} ${h}" ` +
        `class="field-map" data-projection="${projection}">` +
        `<rect width="${w}" height="${h}" fill="#dfe8f0"/>` +
        cells.join("") + overlays + title +
        `</svg>`
    );
}

/** Map of (current - previous); identical inputs give an all-neutral view. */
export function renderDifferenceMap(current: number[], previous: number[],
                                    lat: number[], lon: number[],
                                    opts: FieldMapOptions = {}): string {
    if (current.length !== previous.length) {
        throw new Error(
            `difference of ${current.length} vs ${previous.length} values`,
        );
    }
    const diff = current.map((v, i) => v - previous[i]);
    return renderFieldMap(diff, lat, lon, opts);
}

/** Training-input scatter in the first two principal components plus the
 * current scenario's distance score (training median sits at 1). */
export function renderOodPanel(points: [number, number][],
                               score: number | null,
                               width = 320, height = 220): string {
    let xMax = 1e-9;
    let yMax = 1e-9;
    for (const [x, y] of points) {
        xMax = Math.max(xMax, Math.abs(x));
        yMax = Math.max(yMax, Math.abs(y));
    }
    const plotH = height - 40;
    const dots = points
        .map(([x, y]) => {
            const px = ((x / xMax + 1) / 2) * width;
            const py = ((1 - y / yMax) / 2) * plotH;
            return `<circle class="ood-bg" cx="${px.toFixed(1)}" ` +
                `cy="${py.toFixed(1)}" r="2" fill="#8fa8c0" opacity="0.6"/>`;
        })
        .join("");
    let gauge = `<text x="8" y="${height - 12}" class="ood-score">no scenario yet</text>`;
    if (score !== null) {
        const limit = Math.max(3, score * 1.2);
        const frac = Math.min(1, score / limit);
        const barW = width - 90;
        gauge =
            `<rect x="8" y="${height - 24}" width="${barW}" height="10" fill="#e3e3e3"/>` +
            `<rect x="8" y="${height - 24}" width="${(barW * frac).toFixed(1)}" ` +
            `height="10" fill="${score > 2 ? "#b2182b" : "#4477aa"}" class="ood-bar"/>` +
            `<line x1="${(8 + barW / limit).toFixed(1)}" y1="${height - 27}" ` +
            `x2="${(8 + barW / limit).toFixed(1)}" y2="${height - 11}" ` +
            `stroke="#555"/>` +
            `<text x="${barW + 14}" y="${height - 15}" class="ood-score">` +
            `${score.toFixed(2)}</text>`;
    }
    return (
        `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
        `class="ood-panel">` +
        `<rect width="${width}" height="${plotH}" fill="#f4f7fa"/>` +
        dots + gauge +
        `</svg>`
    );
}

export { neutralColor };
