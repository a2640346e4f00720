/**
 * Parsing and validation for the spatialval CSV surfaces.
 *
 * A result file starts with a schema comment line, then a header:
 *
 *   # spatialval-results v1
 *   seed,n_val,estimator,value,empirical_risk,abs_error,rel_error,chosen_k,selected_model
 *
 * A dataset dump (for site panels) is a plain CSV with header
 * `split,s1[,s2,...],...,response`.
 */

export const ESTIMATORS = ["holdout", "1nn", "snn"] as const;
export type Estimator = (typeof ESTIMATORS)[number];

export interface ResultRow {
    seed: number;
    n_val: number;
    estimator: Estimator;
    value: number;
    empirical_risk: number;
    abs_error: number;
    rel_error: number | null;
    chosen_k: number | null;
    selected_model: "" | "h0" | "h1";
}

export interface SitePoint {
    split: "train" | "val" | "test";
    coords: number[];
}

export class SchemaError extends Error {}

const RESULT_COLUMNS = [
    "seed", "n_val", "estimator", "value", "empirical_risk",
    "abs_error", "rel_error", "chosen_k", "selected_model",
];

function splitCsvLine(line: string): string[] {
    return line.split(",").map((f) => f.trim());
}

function requireNumber(field: string, context: string): number {
    const value = Number(field);
    if (field === "" || !Number.isFinite(value)) {
        throw new SchemaError(`${context}: expected a number, got "${field}"`);
    }
    return value;
}

export function parseResultsCsv(text: string): ResultRow[] {
    const lines = text.split(/\r?\n/).filter((ln) => ln.trim() !== "");
    const dataLines = lines.filter((ln) => !ln.startsWith("#"));
    if (dataLines.length === 0) {
        throw new SchemaError("empty result file");
    }
    const header = splitCsvLine(dataLines[0]);
    if (JSON.stringify(header) !== JSON.stringify(RESULT_COLUMNS)) {
        throw new SchemaError(
            `unexpected header [${header.join(",")}]; ` +
            `expected [${RESULT_COLUMNS.join(",")}]`,
        );
    }
    const rows: ResultRow[] = [];
    for (let i = 1; i < dataLines.length; i++) {
        const fields = splitCsvLine(dataLines[i]);
        if (fields.length !== RESULT_COLUMNS.length) {
            throw new SchemaError(
                `row ${i}: expected ${RESULT_COLUMNS.length} fields, got ${fields.length}`,
            );
        }
        const estimator = fields[2];
        if (!(ESTIMATORS as readonly string[]).includes(estimator)) {
            throw new SchemaError(`row ${i}: unknown estimator label "${estimator}"`);
        }
        const selected = fields[8];
        if (!["", "h0", "h1"].includes(selected)) {
            throw new SchemaError(`row ${i}: unknown selected_model "${selected}"`);
        }
        rows.push({
            seed: requireNumber(fields[0], `row ${i} seed`),
            n_val: requireNumber(fields[1], `row ${i} n_val`),
            estimator: estimator as Estimator,
            value: requireNumber(fields[3], `row ${i} value`),
            empirical_risk: requireNumber(fields[4], `row ${i} empirical_risk`),
            abs_error: requireNumber(fields[5], `row ${i} abs_error`),
            rel_error: fields[6] === "" ? null : requireNumber(fields[6], `row ${i} rel_error`),
            chosen_k: fields[7] === "" ? null : requireNumber(fields[7], `row ${i} chosen_k`),
            selected_model: selected as ResultRow["selected_model"],
        });
    }
    if (rows.length === 0) {
        throw new SchemaError("result file has a header but no rows");
    }
    return rows;
}

export function parseDatasetCsv(text: string): SitePoint[] {
    const lines = text.split(/\r?\n/).filter((ln) => ln.trim() !== "");
    if (lines.length < 2) {
        throw new SchemaError("dataset file needs a header and at least one row");
    }
    const header = splitCsvLine(lines[0]);
    if (header[0] !== "split" || !header.some((h) => /^s\d+$/.test(h))) {
        throw new SchemaError(
            `dataset header must start with "split" and carry s1[,s2,...] columns`,
        );
    }
    const coordIdx = header
        .map((h, i) => (/^s\d+$/.test(h) ? i : -1))
        .filter((i) => i >= 0);
    const points: SitePoint[] = [];
    for (let i = 1; i < lines.length; i++) {
        const fields = splitCsvLine(lines[i]);
        const split = fields[0];
        if (!["train", "val", "test"].includes(split)) {
            throw new SchemaError(`row ${i}: unknown split tag "${split}"`);
        }
        points.push({
            split: split as SitePoint["split"],
            coords: coordIdx.map((c) => requireNumber(fields[c], `row ${i} ${header[c]}`)),
        });
    }
    return points;
}
