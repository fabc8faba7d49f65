/**
 * Parse IoC-protected report text with the wink-nlp English model.
 *
 * The model supplies tokenization, sentence boundaries, POS tags, and
 * lemmas. Dependency heads are attached deterministically (every token to
 * the sentence's first finite verb), matching the flat-tree convention the
 * downstream extractor expects, and co-reference chains link third-person
 * pronouns and definite re-mentions to their nearest preceding noun.
 */

import winkNLP, { ItemSentence, ItemToken } from 'wink-nlp';
import model from 'wink-eng-lite-web-model';

import {
  CorefMention,
  PARSE_SCHEMA_VERSION,
  ParseDocument,
  SentenceRecord,
  TokenRecord,
  validateParseDocument,
} from './schema';

const PRONOUNS = new Set(['it', 'its', 'itself', 'this', 'that', 'they', 'them', 'these', 'those']);
const NOUN_TAGS = new Set(['NOUN', 'PROPN']);

let nlpInstance: ReturnType<typeof winkNLP> | null = null;

export function loadModel() {
  if (nlpInstance === null) {
    nlpInstance = winkNLP(model, ['sbd', 'pos']);
  }
  return nlpInstance;
}

interface RawToken {
  text: string;
  lemma: string;
  pos: string;
  start: number;
  end: number;
}

export function parseText(text: string): ParseDocument {
  const nlp = loadModel();
  // wink's its-helper typings expect span signatures here; the token-level
  // accessors are fine at runtime.
  const its = nlp.its as any;
  const doc = nlp.readDoc(text);

  const sentences: SentenceRecord[] = [];
  const allTokens: RawToken[][] = [];

  doc.sentences().each((sentence: ItemSentence) => {
    const surfaces: RawToken[] = [];
    sentence.tokens().each((token: ItemToken) => {
      surfaces.push({
        text: token.out(),
        lemma: String(token.out(its.lemma)).toLowerCase(),
        pos: String(token.out(its.pos)),
        start: -1,
        end: -1,
      });
    });
    if (surfaces.length > 0) {
      allTokens.push(surfaces);
    }
  });

  // wink reports token surfaces in order but not their positions; recover
  // character offsets with a single cursor scan over the source text.
  let cursor = 0;
  for (const sentenceTokens of allTokens) {
    for (const token of sentenceTokens) {
      const at = text.indexOf(token.text, cursor);
      if (at < 0) {
        throw new Error(`token ${JSON.stringify(token.text)} not found after offset ${cursor}`);
      }
      token.start = at;
      token.end = at + token.text.length;
      cursor = token.end;
    }
  }

  for (const sentenceTokens of allTokens) {
    const rootIndex = findRoot(sentenceTokens);
    const tokens: TokenRecord[] = sentenceTokens.map((token, index) => ({
      text: token.text,
      lemma: token.lemma,
      pos: token.pos,
      head: index === rootIndex ? index : rootIndex,
      deprel: index === rootIndex ? 'root' : 'dep',
      start: token.start,
      end: token.end,
    }));
    sentences.push({
      start: sentenceTokens[0].start,
      end: sentenceTokens[sentenceTokens.length - 1].end,
      tokens,
    });
  }

  const parsed: ParseDocument = {
    version: PARSE_SCHEMA_VERSION,
    sentences,
    coref_chains: corefChains(sentences),
  };
  validateParseDocument(parsed);
  return parsed;
}

function findRoot(tokens: RawToken[]): number {
  const verb = tokens.findIndex((t) => t.pos === 'VERB' || t.pos === 'AUX');
  return verb >= 0 ? verb : 0;
}

/**
 * Pronouns and definite re-mentions link to the nearest preceding noun.
 * Mentions are unioned into chains; only chains with two or more mentions
 * are emitted.
 */
function corefChains(sentences: SentenceRecord[]): CorefMention[][] {
  type Key = string;
  const keyOf = (m: CorefMention): Key => `${m.sentence}:${m.token_start}`;
  const parent = new Map<Key, Key>();
  const mentionOf = new Map<Key, CorefMention>();

  const find = (k: Key): Key => {
    let cur = k;
    while (parent.get(cur) !== cur) {
      parent.set(cur, parent.get(parent.get(cur)!)!);
      cur = parent.get(cur)!;
    }
    return cur;
  };
  const union = (a: CorefMention, b: CorefMention) => {
    for (const m of [a, b]) {
      const k = keyOf(m);
      if (!parent.has(k)) {
        parent.set(k, k);
        mentionOf.set(k, m);
      }
    }
    const ra = find(keyOf(a));
    const rb = find(keyOf(b));
    if (ra !== rb) {
      parent.set(ra < rb ? rb : ra, ra < rb ? ra : rb);
    }
  };

  const nouns: Array<{ sentence: number; token: number; lemma: string }> = [];
  sentences.forEach((sentence, s) => {
    sentence.tokens.forEach((token, t) => {
      const low = token.text.toLowerCase();
      if (token.pos === 'PRON' && PRONOUNS.has(low)) {
        const antecedent = nouns[nouns.length - 1];
        if (antecedent) {
          union(
            { sentence: antecedent.sentence, token_start: antecedent.token, token_end: antecedent.token + 1 },
            { sentence: s, token_start: t, token_end: t + 1 },
          );
        }
        return;
      }
      if (NOUN_TAGS.has(token.pos)) {
        const prev = t > 0 ? sentence.tokens[t - 1].text.toLowerCase() : '';
        if (prev === 'the' || prev === 'this' || prev === 'that') {
          const earlier = nouns.filter((n) => n.lemma === token.lemma && n.sentence < s);
          if (earlier.length > 0) {
            const last = earlier[earlier.length - 1];
            union(
              { sentence: last.sentence, token_start: last.token, token_end: last.token + 1 },
              { sentence: s, token_start: t, token_end: t + 1 },
            );
          }
        }
        nouns.push({ sentence: s, token: t, lemma: token.lemma });
      }
    });
  });

  const cells = new Map<Key, CorefMention[]>();
  for (const k of parent.keys()) {
    const root = find(k);
    const cell = cells.get(root) ?? [];
    cell.push(mentionOf.get(k)!);
    cells.set(root, cell);
  }
  const chains = [...cells.values()]
    .filter((cell) => cell.length > 1)
    .map((cell) =>
      cell.sort((a, b) => a.sentence - b.sentence || a.token_start - b.token_start),
    );
  chains.sort(
    (a, b) => a[0].sentence - b[0].sentence || a[0].token_start - b[0].token_start,
  );
  return chains;
}
