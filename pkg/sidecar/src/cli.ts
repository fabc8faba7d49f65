#!/usr/bin/env node
/**
 * ctikg-sidecar parse --in <textfile> --out <jsonfile>
 *
 * Reads IoC-protected report text (protecting is the caller's job, e.g.
 * `ctikg protect`), parses it, self-checks the result against Parse JSON
 * schema v1, and writes the file the graph extractor consumes.
 *
 * Exit codes: 0 ok, 1 input error, 2 model/self-check error.
 */

import * as fs from 'fs';
import * as path from 'path';

import { parseText } from './parser';
import { SchemaError, validateParseDocument } from './schema';

interface Args {
  input: string;
  output: string;
}

function usage(): string {
  return 'usage: ctikg-sidecar parse --in <textfile> --out <jsonfile>';
}

function parseArgs(argv: string[]): Args {
  if (argv[0] !== 'parse') {
    throw new UsageError(`unknown command ${argv[0] ?? '(none)'}\n${usage()}`);
  }
  let input: string | null = null;
  let output: string | null = null;
  for (let i = 1; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) {
      throw new UsageError(`missing value for ${flag}\n${usage()}`);
    }
    if (flag === '--in') {
      input = value;
    } else if (flag === '--out') {
      output = value;
    } else {
      throw new UsageError(`unknown flag ${flag}\n${usage()}`);
    }
  }
  if (!input || !output) {
    throw new UsageError(usage());
  }
  return { input, output };
}

class UsageError extends Error {}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }

  let text: string;
  try {
    text = fs.readFileSync(args.input, 'utf-8');
  } catch (err) {
    process.stderr.write(`error: cannot read ${args.input}: ${(err as Error).message}\n`);
    return 1;
  }

  try {
    const parsed = parseText(text);
    validateParseDocument(parsed); // self-check before anything hits disk
    fs.mkdirSync(path.dirname(path.resolve(args.output)), { recursive: true });
    fs.writeFileSync(args.output, JSON.stringify(parsed, null, 2) + '\n', 'utf-8');
    process.stdout.write(
      `${args.input}: ${parsed.sentences.length} sentences, ` +
        `${parsed.coref_chains.length} coref chains -> ${args.output}\n`,
    );
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      process.stderr.write(`error: schema self-check failed at ${err.path}: ${err.message}\n`);
    } else {
      process.stderr.write(`error: model failure: ${(err as Error).message}\n`);
    }
    return 2;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
