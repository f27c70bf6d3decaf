#!/usr/bin/env node
/** omjump-plot: render figure specs against emitted simulation data.
 *
 * Usage: omjump-plot plot <spec.json> [more specs ...]
 */

import { renderSpecFile } from "./spec.js";

export function main(argv: string[]): number {
  const args = argv.slice(2);
  if (args.length === 0 || args[0] === "--help") {
    console.log("usage: omjump-plot plot <figure-spec.json> [...]");
    return 0;
  }
  if (args[0] !== "plot" || args.length < 2) {
    console.error("usage: omjump-plot plot <figure-spec.json> [...]");
    return 2;
  }
  for (const spec of args.slice(1)) {
    try {
      const out = renderSpecFile(spec);
      console.log(`wrote ${out}`);
    } catch (err) {
      console.error(`${spec}: ${(err as Error).message}`);
      return 1;
    }
  }
  return 0;
}

const invokedDirectly = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  process.exit(main(process.argv));
}
