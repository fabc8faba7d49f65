/**
 * Parse JSON schema v1: the file contract between this sidecar and the
 * graph-extraction pipeline that consumes its output.
 *
 * Top level: {"version": 1, "sentences": [...], "coref_chains": [...]}.
 * Token `head` is a 0-based in-sentence index; the root points at itself.
 * All `start`/`end` values are character offsets into the parsed text.
 */

export const PARSE_SCHEMA_VERSION = 1;

export interface TokenRecord {
  text: string;
  lemma: string;
  pos: string;
  head: number;
  deprel: string;
  start: number;
  end: number;
}

export interface SentenceRecord {
  start: number;
  end: number;
  tokens: TokenRecord[];
}

export interface CorefMention {
  sentence: number;
  token_start: number;
  token_end: number;
}

export interface ParseDocument {
  version: number;
  sentences: SentenceRecord[];
  coref_chains: CorefMention[][];
}

export class SchemaError extends Error {
  constructor(public path: string, message: string) {
    super(`${path}: ${message}`);
    this.name = 'SchemaError';
  }
}

function requireInt(value: unknown, path: string): number {
  if (typeof value !== 'number' || !Number.isInteger(value)) {
    throw new SchemaError(path, 'must be an integer');
  }
  return value;
}

function requireString(value: unknown, path: string): string {
  if (typeof value !== 'string') {
    throw new SchemaError(path, 'must be a string');
  }
  return value;
}

/** Validate a document against schema v1; throws SchemaError on violation. */
export function validateParseDocument(doc: ParseDocument): void {
  if (doc.version !== PARSE_SCHEMA_VERSION) {
    throw new SchemaError('/version', `expected ${PARSE_SCHEMA_VERSION}, found ${doc.version}`);
  }
  if (!Array.isArray(doc.sentences)) {
    throw new SchemaError('/sentences', 'must be a list');
  }
  doc.sentences.forEach((sentence, s) => {
    const sPath = `/sentences/${s}`;
    requireInt(sentence.start, `${sPath}/start`);
    requireInt(sentence.end, `${sPath}/end`);
    if (!Array.isArray(sentence.tokens)) {
      throw new SchemaError(`${sPath}/tokens`, 'must be a list');
    }
    const n = sentence.tokens.length;
    let roots = 0;
    sentence.tokens.forEach((token, t) => {
      const tPath = `${sPath}/tokens/${t}`;
      requireString(token.text, `${tPath}/text`);
      requireString(token.lemma, `${tPath}/lemma`);
      requireString(token.pos, `${tPath}/pos`);
      requireString(token.deprel, `${tPath}/deprel`);
      requireInt(token.start, `${tPath}/start`);
      requireInt(token.end, `${tPath}/end`);
      const head = requireInt(token.head, `${tPath}/head`);
      if (head < 0 || head >= n) {
        throw new SchemaError(`${tPath}/head`, `${head} out of range`);
      }
      if (head === t) {
        roots += 1;
      }
    });
    if (n > 0 && roots !== 1) {
      throw new SchemaError(sPath, `expected exactly one root, found ${roots}`);
    }
    sentence.tokens.forEach((_, t) => {
      const seen = new Set<number>([t]);
      let cur = t;
      while (sentence.tokens[cur].head !== cur) {
        cur = sentence.tokens[cur].head;
        if (seen.has(cur)) {
          throw new SchemaError(`${sPath}/tokens/${t}/head`, 'cycle detected');
        }
        seen.add(cur);
      }
    });
  });
  if (!Array.isArray(doc.coref_chains)) {
    throw new SchemaError('/coref_chains', 'must be a list');
  }
  doc.coref_chains.forEach((chain, c) => {
    chain.forEach((mention, m) => {
      const mPath = `/coref_chains/${c}/${m}`;
      const sentence = requireInt(mention.sentence, `${mPath}/sentence`);
      if (sentence < 0 || sentence >= doc.sentences.length) {
        throw new SchemaError(`${mPath}/sentence`, `${sentence} out of range`);
      }
      const limit = doc.sentences[sentence].tokens.length;
      const ts = requireInt(mention.token_start, `${mPath}/token_start`);
      const te = requireInt(mention.token_end, `${mPath}/token_end`);
      if (!(ts >= 0 && ts < te && te <= limit)) {
        throw new SchemaError(mPath, `token span [${ts}, ${te}) invalid for a ${limit}-token sentence`);
      }
    });
  });
}
