/** Diverging color scale centered at zero for anomaly and response fields. */

const NEGATIVE: [number, number, number] = [33, 102, 172];   // deep blue
const NEUTRAL: [number, number, number] = [247, 247, 247];   // near white
const POSITIVE: [number, number, number] = [178, 24, 43];    // deep red

function mix(a: [number, number, number], b: [number, number, number], t: number): string {
    const c = a.map((v, i) => Math.round(v + (b[i] - v) * t));
    return `rgb(${c[0]},${c[1]},${c[2]})`;
}

export function neutralColor(): string {
    return mix(NEUTRAL, NEUTRAL, 0);
}

/** value in [-maxAbs, maxAbs] maps blue -> white -> red; 0 is exactly neutral. */
export function divergingColor(value: number, maxAbs: number): string {
    if (maxAbs <= 0 || value === 0) {
        return neutralColor();
    }
    const t = Math.max(-1, Math.min(1, value / maxAbs));
    return t < 0 ? mix(NEUTRAL, NEGATIVE, -t) : mix(NEUTRAL, POSITIVE, t);
}

/** Symmetric color-scale limit for a field (largest absolute value). */
export function symmetricMax(values: number[]): number {
    let m = 0;
    for (const v of values) {
        const a = Math.abs(v);
        if (a > m) {
            m = a;
        }
    }
    return m;
}
