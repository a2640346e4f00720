/**
 * Deterministic SVG figure rendering from spatialval CSV outputs.
 *
 * Four figure kinds:
 *  - error_box:      per-n_val box plots of |estimate - empirical risk|
 *  - rel_error:      same layout for the signed relative error
 *  - selection_rate: share of seeds picking the lower-risk model vs n_val
 *  - site_panels:    validation-site scatter panels with test sites overlaid
 *
 * Rendering is a pure function of the input text, so identical CSVs give
 * byte-identical SVG files. Box median lines carry data-median attributes
 * so the computed statistics can be read back out of the figure.
 */

import {
    ESTIMATORS,
    Estimator,
    parseDatasetCsv,
    parseResultsCsv,
    SchemaError,
} from "./schema.js";
import {
    BoxStats,
    groupedErrorBoxes,
    selectionRates,
} from "./stats.js";

export const FIGURE_KINDS = [
    "error_box", "selection_rate", "site_panels", "rel_error",
] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

// Colors by convention: holdout blue, 1NN orange, SNN green.
export const COLORS: Record<Estimator, string> = {
    holdout: "#1f77b4",
    "1nn": "#ff7f0e",
    snn: "#2ca02c",
};

const WIDTH = 720;
const HEIGHT = 420;
const MARGIN = { top: 36, right: 24, bottom: 48, left: 64 };

export interface RenderResult {
    svg: string;
    /** medians per estimator per n_val (box kinds), or h0 rates (selection) */
    meta: Record<string, Record<string, number>>;
}

function fmt(x: number): string {
    if (!Number.isFinite(x)) throw new Error(`non-finite coordinate ${x}`);
    return Number(x.toPrecision(8)).toString();
}

function svgDocument(body: string[], title: string): string {
    return [
        `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
        `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
        `<text x="${WIDTH / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">${title}</text>`,
        ...body,
        "</svg>",
        "",
    ].join("\n");
}

function legend(x: number, y: number): string[] {
    return ESTIMATORS.flatMap((estimator, i) => [
        `<rect x="${x + i * 90}" y="${y}" width="12" height="12" fill="${COLORS[estimator]}"/>`,
        `<text x="${x + i * 90 + 16}" y="${y + 10}" font-family="sans-serif" font-size="11">${estimator}</text>`,
    ]);
}

interface Scale {
    (value: number): number;
}

function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
    const span = d1 - d0 || 1;
    return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

function yAxis(scale: Scale, lo: number, hi: number, label: string): string[] {
    const parts: string[] = [];
    const x = MARGIN.left;
    parts.push(
        `<line x1="${x}" y1="${scale(lo)}" x2="${x}" y2="${scale(hi)}" stroke="black"/>`,
    );
    for (const t of [lo, (lo + hi) / 2, hi]) {
        parts.push(
            `<line x1="${x - 4}" y1="${fmt(scale(t))}" x2="${x}" y2="${fmt(scale(t))}" stroke="black"/>`,
            `<text x="${x - 8}" y="${fmt(scale(t) + 4)}" text-anchor="end" font-family="sans-serif" font-size="10">${Number(t.toPrecision(3))}</text>`,
        );
    }
    parts.push(
        `<text x="16" y="${(MARGIN.top + HEIGHT - MARGIN.bottom) / 2}" font-family="sans-serif" font-size="11" transform="rotate(-90 16 ${(MARGIN.top + HEIGHT - MARGIN.bottom) / 2})" text-anchor="middle">${label}</text>`,
    );
    return parts;
}

function renderBoxKind(text: string, field: "abs_error" | "rel_error"): RenderResult {
    const rows = parseResultsCsv(text);
    const grouped = groupedErrorBoxes(rows, field);
    const allStats = [...grouped.boxes.values()].flat().filter(
        (b): b is BoxStats => b !== null,
    );
    if (allStats.length === 0) {
        throw new SchemaError(`no usable ${field} values in the result file`);
    }
    const values = allStats.flatMap((b) => [b.whiskerLow, b.whiskerHigh, ...b.outliers]);
    const lo = Math.min(...values, field === "abs_error" ? 0 : Math.min(...values));
    const hi = Math.max(...values);
    const yScale = linearScale(hi, lo, MARGIN.top, HEIGHT - MARGIN.bottom);

    const plotWidth = WIDTH - MARGIN.left - MARGIN.right;
    const groupWidth = plotWidth / grouped.nVals.length;
    const boxWidth = Math.min(28, groupWidth / 4.5);

    const body: string[] = [];
    const meta: Record<string, Record<string, number>> = {};
    grouped.nVals.forEach((nVal, gi) => {
        const groupCenter = MARGIN.left + (gi + 0.5) * groupWidth;
        body.push(
            `<text x="${fmt(groupCenter)}" y="${HEIGHT - MARGIN.bottom + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">${nVal}</text>`,
        );
        ESTIMATORS.forEach((estimator, ei) => {
            const stats = grouped.boxes.get(estimator)![gi];
            if (!stats) return;
            const cx = groupCenter + (ei - 1) * (boxWidth + 6);
            const color = COLORS[estimator];
            const x0 = cx - boxWidth / 2;
            body.push(
                `<line x1="${fmt(cx)}" y1="${fmt(yScale(stats.whiskerLow))}" x2="${fmt(cx)}" y2="${fmt(yScale(stats.q1))}" stroke="${color}"/>`,
                `<line x1="${fmt(cx)}" y1="${fmt(yScale(stats.q3))}" x2="${fmt(cx)}" y2="${fmt(yScale(stats.whiskerHigh))}" stroke="${color}"/>`,
                `<rect x="${fmt(x0)}" y="${fmt(yScale(stats.q3))}" width="${fmt(boxWidth)}" height="${fmt(Math.abs(yScale(stats.q1) - yScale(stats.q3)))}" fill="${color}" fill-opacity="0.35" stroke="${color}"/>`,
                `<line x1="${fmt(x0)}" y1="${fmt(yScale(stats.median))}" x2="${fmt(x0 + boxWidth)}" y2="${fmt(yScale(stats.median))}" stroke="${color}" stroke-width="2" data-estimator="${estimator}" data-n-val="${nVal}" data-median="${stats.median}"/>`,
                ...stats.outliers.map(
                    (v) => `<circle cx="${fmt(cx)}" cy="${fmt(yScale(v))}" r="2" fill="${color}"/>`,
                ),
            );
            (meta[estimator] ??= {})[String(nVal)] = stats.median;
        });
    });
    body.push(...yAxis(yScale, lo, hi,
        field === "abs_error" ? "absolute error" : "relative error"));
    body.push(
        `<text x="${WIDTH / 2}" y="${HEIGHT - 10}" text-anchor="middle" font-family="sans-serif" font-size="11">validation points</text>`,
        ...legend(MARGIN.left + 12, MARGIN.top - 8),
    );
    const title = field === "abs_error"
        ? "Test-risk estimation error by validation size"
        : "Relative test-risk estimation error by validation size";
    return { svg: svgDocument(body, title), meta };
}

function renderSelectionRate(text: string): RenderResult {
    const rows = parseResultsCsv(text);
    const { nVals, rates } = selectionRates(rows);
    const xScale = linearScale(
        Math.min(...nVals), Math.max(...nVals),
        MARGIN.left, WIDTH - MARGIN.right,
    );
    const yScale = linearScale(1, 0, MARGIN.top, HEIGHT - MARGIN.bottom);

    const body: string[] = [];
    const meta: Record<string, Record<string, number>> = {};
    for (const estimator of ESTIMATORS) {
        const series = rates.get(estimator)!;
        const points = nVals
            .map((n, i) => ({ n, rate: series[i] }))
            .filter((p) => Number.isFinite(p.rate));
        if (points.length === 0) continue;
        const path = points
            .map((p) => `${fmt(xScale(p.n))},${fmt(yScale(p.rate))}`)
            .join(" ");
        body.push(
            `<polyline points="${path}" fill="none" stroke="${COLORS[estimator]}" stroke-width="2"/>`,
            ...points.map(
                (p) =>
                    `<circle cx="${fmt(xScale(p.n))}" cy="${fmt(yScale(p.rate))}" r="3" fill="${COLORS[estimator]}" data-estimator="${estimator}" data-n-val="${p.n}" data-rate="${p.rate}"/>`,
            ),
        );
        for (const p of points) (meta[estimator] ??= {})[String(p.n)] = p.rate;
    }
    for (const n of nVals) {
        body.push(
            `<text x="${fmt(xScale(n))}" y="${HEIGHT - MARGIN.bottom + 18}" text-anchor="middle" font-family="sans-serif" font-size="10">${n}</text>`,
        );
    }
    body.push(...yAxis(yScale, 0, 1, "share selecting the lower-risk model"));
    body.push(
        `<text x="${WIDTH / 2}" y="${HEIGHT - 10}" text-anchor="middle" font-family="sans-serif" font-size="11">validation points</text>`,
        ...legend(MARGIN.left + 12, MARGIN.top - 8),
    );
    return { svg: svgDocument(body, "Model selection rate by validation size"), meta };
}

const PANEL_SIZES = [250, 500, 1000, 2000, 4000, 8000];

function renderSitePanels(text: string): RenderResult {
    const points = parseDatasetCsv(text);
    const val = points.filter((p) => p.split === "val");
    const test = points.filter((p) => p.split === "test");
    if (val.length === 0) {
        throw new SchemaError("dataset has no validation points");
    }
    const prefixSizes = PANEL_SIZES.filter((n) => n <= val.length);
    if (prefixSizes.length === 0) prefixSizes.push(val.length);

    const coord = (p: { coords: number[] }) => ({
        x: p.coords[0],
        y: p.coords.length > 1 ? p.coords[1] : 0,
    });
    const everything = [...val, ...test].map(coord);
    const xs = everything.map((p) => p.x);
    const ys = everything.map((p) => p.y);
    const pad = 0.05;
    const cols = Math.min(3, prefixSizes.length);
    const rowsCount = Math.ceil(prefixSizes.length / cols);
    const panelW = (WIDTH - MARGIN.left - MARGIN.right) / cols;
    const panelH = (HEIGHT - MARGIN.top - MARGIN.bottom) / rowsCount;

    const body: string[] = [];
    const meta: Record<string, Record<string, number>> = { panels: {} };
    prefixSizes.forEach((size, pi) => {
        const px = MARGIN.left + (pi % cols) * panelW;
        const py = MARGIN.top + Math.floor(pi / cols) * panelH;
        const xScale = linearScale(
            Math.min(...xs) - pad, Math.max(...xs) + pad, px + 6, px + panelW - 6,
        );
        const yScale = linearScale(
            Math.max(...ys) + pad, Math.min(...ys) - pad, py + 16, py + panelH - 6,
        );
        body.push(
            `<rect x="${fmt(px + 2)}" y="${fmt(py + 2)}" width="${fmt(panelW - 4)}" height="${fmt(panelH - 4)}" fill="none" stroke="#999"/>`,
            `<text x="${fmt(px + panelW / 2)}" y="${fmt(py + 13)}" text-anchor="middle" font-family="sans-serif" font-size="10">n_val = ${size}</text>`,
        );
        for (const p of test.map(coord)) {
            body.push(
                `<circle cx="${fmt(xScale(p.x))}" cy="${fmt(yScale(p.y))}" r="1" fill="${COLORS["1nn"]}" fill-opacity="0.5"/>`,
            );
        }
        for (const p of val.slice(0, size).map(coord)) {
            body.push(
                `<circle cx="${fmt(xScale(p.x))}" cy="${fmt(yScale(p.y))}" r="1.5" fill="${COLORS.holdout}"/>`,
            );
        }
        meta.panels[String(size)] = size;
    });
    return {
        svg: svgDocument(body, "Validation sites (blue) and test sites (orange)"),
        meta,
    };
}

export function renderFigure(kind: FigureKind, inputText: string): RenderResult {
    switch (kind) {
        case "error_box":
            return renderBoxKind(inputText, "abs_error");
        case "rel_error":
            return renderBoxKind(inputText, "rel_error");
        case "selection_rate":
            return renderSelectionRate(inputText);
        case "site_panels":
            return renderSitePanels(inputText);
        default:
            throw new SchemaError(`unknown figure kind "${kind}"`);
    }
}
