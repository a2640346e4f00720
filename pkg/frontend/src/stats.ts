/** Box-plot statistics and selection-rate aggregation over result rows. */

import { Estimator, ESTIMATORS, ResultRow } from "./schema.js";

export interface BoxStats {
    median: number;
    q1: number;
    q3: number;
    whiskerLow: number;
    whiskerHigh: number;
    outliers: number[];
    n: number;
}

/** Linear-interpolation quantile on a sorted copy (same as numpy default). */
export function quantile(values: number[], q: number): number {
    if (values.length === 0) throw new Error("quantile of empty list");
    const sorted = [...values].sort((a, b) => a - b);
    const pos = (sorted.length - 1) * q;
    const lo = Math.floor(pos);
    const hi = Math.ceil(pos);
    if (lo === hi) return sorted[lo];
    return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo);
}

export function median(values: number[]): number {
    return quantile(values, 0.5);
}

/** Tukey box: 1.5 IQR whiskers clamped to data, the rest are outliers. */
export function boxStats(values: number[]): BoxStats {
    const q1 = quantile(values, 0.25);
    const q3 = quantile(values, 0.75);
    const iqr = q3 - q1;
    const loLimit = q1 - 1.5 * iqr;
    const hiLimit = q3 + 1.5 * iqr;
    const inside = values.filter((v) => v >= loLimit && v <= hiLimit);
    return {
        median: median(values),
        q1,
        q3,
        whiskerLow: Math.min(...inside),
        whiskerHigh: Math.max(...inside),
        outliers: values.filter((v) => v < loLimit || v > hiLimit),
        n: values.length,
    };
}

export interface GroupedBoxes {
    nVals: number[];
    /** boxes[estimator][n_val index] */
    boxes: Map<Estimator, (BoxStats | null)[]>;
}

export function groupedErrorBoxes(
    rows: ResultRow[],
    field: "abs_error" | "rel_error",
): GroupedBoxes {
    const nVals = [...new Set(rows.map((r) => r.n_val))].sort((a, b) => a - b);
    const boxes = new Map<Estimator, (BoxStats | null)[]>();
    for (const estimator of ESTIMATORS) {
        const perSize = nVals.map((n) => {
            const values = rows
                .filter((r) => r.estimator === estimator && r.n_val === n)
                .map((r) => (field === "abs_error" ? r.abs_error : r.rel_error))
                .filter((v): v is number => v !== null);
            return values.length ? boxStats(values) : null;
        });
        boxes.set(estimator, perSize);
    }
    return { nVals, boxes };
}

export interface SelectionRates {
    nVals: number[];
    /** rates[estimator][n_val index] = share of seeds selecting h0 */
    rates: Map<Estimator, number[]>;
}

export function selectionRates(rows: ResultRow[]): SelectionRates {
    const tagged = rows.filter((r) => r.selected_model !== "");
    if (tagged.length === 0) {
        throw new Error("no selection rows in the result file");
    }
    const nVals = [...new Set(tagged.map((r) => r.n_val))].sort((a, b) => a - b);
    const rates = new Map<Estimator, number[]>();
    for (const estimator of ESTIMATORS) {
        rates.set(
            estimator,
            nVals.map((n) => {
                const picks = tagged.filter(
                    (r) => r.estimator === estimator && r.n_val === n,
                );
                if (picks.length === 0) return NaN;
                return picks.filter((r) => r.selected_model === "h0").length / picks.length;
            }),
        );
    }
    return { nVals, rates };
}
