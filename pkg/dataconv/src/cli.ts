#!/usr/bin/env node
/** Command line: dataconv convert <src.mat> <dst.drim> */

import { ConvertError, convertFile, formatSummary } from "./convert";
import { MatFormatError } from "./mat";

export function main(argv: string[]): number {
  if (argv.length !== 3 || argv[0] !== "convert") {
    console.error("usage: dataconv convert <src.mat> <dst.drim>");
    return 2;
  }
  const [, src, dst] = argv;
  try {
    const summary = convertFile(src, dst);
    console.log(formatSummary(summary));
    console.log(`wrote ${dst}`);
    return 0;
  } catch (err) {
    if (err instanceof ConvertError || err instanceof MatFormatError ||
        (err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`error: ${(err as Error).message}`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
