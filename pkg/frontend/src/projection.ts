/** Map projections onto the unit square (x right, y down). */

export type ProjectionName = "equirectangular" | "hammer";

export const PROJECTIONS: ProjectionName[] = ["equirectangular", "hammer"];

export interface Point {
    x: number;
    y: number;
}

/** Longitudes arrive in [0, 360); the map is centered on 180E. */
export function project(name: ProjectionName, lat: number, lon: number): Point {
    const lam = ((((lon % 360) + 360) % 360) - 180) * (Math.PI / 180);
    const phi = lat * (Math.PI / 180);
    if (name === "equirectangular") {
        return { x: (lam / Math.PI + 1) / 2, y: (1 - phi / (Math.PI / 2)) / 2 };
    }
    // Hammer equal-area projection
    const denom = Math.sqrt(1 + Math.cos(phi) * Math.cos(lam / 2));
    const hx = (2 * Math.SQRT2 * Math.cos(phi) * Math.sin(lam / 2)) / denom;
    const hy = (Math.SQRT2 * Math.sin(phi)) / denom;
    return {
        x: (hx / (2 * Math.SQRT2) + 1) / 2,
        y: (1 - hy / Math.SQRT2) / 2,
    };
}

/** Inverse of the equirectangular projection, used for drag-drawn boxes. */
export function unprojectEquirectangular(x: number, y: number): { lat: number; lon: number } {
    const lon = (x * 2 - 1) * 180 + 180;
    const lat = (1 - y * 2) * 90;
    return { lat, lon: ((lon % 360) + 360) % 360 };
}
