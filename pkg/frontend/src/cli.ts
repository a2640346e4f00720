/**
 * CLI: render a spatialval result CSV into an SVG figure.
 *
 *   spatialval-render render --kind error_box --in results.csv --out fig.svg
 *
 * Exits 0 on success; nonzero with a message on schema or argument errors,
 * in which case no output file is written.
 */

import * as fs from "node:fs";

import { FIGURE_KINDS, FigureKind, renderFigure } from "./render.js";
import { SchemaError } from "./schema.js";

function parseArgs(argv: string[]): { kind: FigureKind; input: string; output: string } {
    if (argv[0] !== "render") {
        throw new SchemaError(`unknown command "${argv[0] ?? ""}"; expected "render"`);
    }
    const options = new Map<string, string>();
    for (let i = 1; i < argv.length; i += 2) {
        const flag = argv[i];
        const value = argv[i + 1];
        if (!flag.startsWith("--") || value === undefined) {
            throw new SchemaError(`malformed arguments near "${flag}"`);
        }
        options.set(flag.slice(2), value);
    }
    const kind = options.get("kind");
    const input = options.get("in");
    const output = options.get("out");
    if (!kind || !input || !output) {
        throw new SchemaError("render requires --kind, --in, and --out");
    }
    if (!(FIGURE_KINDS as readonly string[]).includes(kind)) {
        throw new SchemaError(
            `unknown figure kind "${kind}"; expected one of ${FIGURE_KINDS.join(", ")}`,
        );
    }
    return { kind: kind as FigureKind, input, output };
}

export function main(argv: string[]): number {
    let parsed;
    try {
        parsed = parseArgs(argv);
    } catch (err) {
        console.error(`error: ${(err as Error).message}`);
        return 2;
    }
    let text: string;
    try {
        text = fs.readFileSync(parsed.input, "utf8");
    } catch (err) {
        console.error(`error: cannot read ${parsed.input}: ${(err as Error).message}`);
        return 2;
    }
    try {
        const { svg } = renderFigure(parsed.kind, text);
        fs.writeFileSync(parsed.output, svg);
    } catch (err) {
        if (err instanceof SchemaError) {
            console.error(`error: ${err.message}`);
            return 2;
        }
        throw err;
    }
    console.log(`wrote ${parsed.output}`);
    return 0;
}

if (process.argv[1] && /cli\.(ts|js)$/.test(process.argv[1])) {
    process.exit(main(process.argv.slice(2)));
}
