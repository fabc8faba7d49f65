"""Per-sentence token, dependency-tree, and co-reference information.

Two interchangeable providers sit behind one schema: a deterministic
heuristic parser that needs no models, and a loader for parse files
produced by an external NLP sidecar.  Both outputs pass the same
validator, so downstream extraction never cares which one ran.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import NamedTuple

PARSE_SCHEMA_VERSION = 1

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+(?:['’-][A-Za-z0-9_]+)*|[^\sA-Za-z0-9]")

PRONOUN_TOKENS = {"it", "its", "itself", "this", "that", "they", "them", "these", "those"}
DETERMINERS = {"the", "a", "an", "this", "that", "these", "those", "its", "their", "his", "her"}
PREPOSITIONS = {
    "to", "from", "into", "onto", "via", "with", "without", "under", "over",
    "at", "on", "in", "of", "for", "by", "through", "against", "across",
    "within", "between", "during", "after", "before", "inside", "as",
}
CONJUNCTIONS = {"and", "or", "but", "nor", "so", "yet", "if", "when", "while", "once", "which", "that"}
ADVERBS = {
    "then", "also", "subsequently", "afterwards", "later", "next", "finally",
    "first", "second", "additionally", "further", "furthermore", "moreover",
    "meanwhile", "eventually", "immediately", "successfully", "silently",
    "automatically", "remotely", "not", "no", "once",
}
ADJECTIVES = {
    "malicious", "remote", "local", "new", "additional", "same", "such",
    "several", "various", "multiple", "final", "initial", "subsequent",
    "legitimate", "suspicious", "specially", "crafted", "weaponized",
}

# Finite verbs that drive CTI narration; flat heads attach to the first one.
VERB_LEXICON = frozenset("""
is are was were be been being has have had can could will would may might
must shall should does do did
connects connect connected connecting downloads download downloaded runs run
running ran executes execute executed drops drop dropped creates create
created opens open opened sends send sent uses use used using writes write
wrote written modifies modify modified adds add added persists persist
persisted delivers deliver delivered contains contain contained exploits
exploit exploited launches launch launched installs install installed
communicates communicate communicated stores store stored saves save saved
beacons beacon fetches fetch fetched retrieves retrieve retrieved injects
inject injected spawns spawn spawned establishes establish established
enables enable enabled triggers trigger triggered leverages leverage
leveraged abuses abuse abused attaches attach attached embeds embed embedded
steals steal stole stolen exfiltrates exfiltrate exfiltrated collects collect
collected harvests harvest harvested dumps dump dumped encrypts encrypt
encrypted decrypts decrypt decrypted decodes decode decoded obfuscates
obfuscate obfuscated schedules schedule scheduled registers register
registered hides hide hid hidden copies copy copied moves move moved deletes
delete deleted removes remove removed disables disable disabled invokes
invoke invoked calls call called requests request requested resolves resolve
resolved deploys deploy deployed distributes distribute distributed
compromises compromise compromised infects infect infected spreads spread
loads load loaded reads read scans scan scanned enumerates enumerate
enumerated queries query queried receives receive received performs perform
performed conducts conduct conducted attempts attempt attempted begins begin
began starts start started continues continue continued allows allow allowed
instructs instruct instructed lures lure lured tricks trick tricked
convinces convince convinced clicks click clicked visits visit visited
navigates navigate navigated redirects redirect redirected masquerades
masquerade masqueraded mimics mimic mimicked impersonates impersonate
impersonated includes include included gains gain gained achieves achieve
achieved maintains maintain maintained listens listen listened waits wait
waited checks check checked searches search searched locates locate located
identifies identify identified captures capture captured records record
recorded logs logged uploads upload uploaded transfers transfer transferred
issues issue issued points point pointed appends append appended sets set
configures configure configured observes observe observed describes describe
described unpacks unpack unpacked exchanges exchange exchanged lists list
listed beaconed survives survive survived places place placed contacts
contact contacted targets target targeted
""".split())


class ParseValidationError(ValueError):
    pass


class ParseVersionError(ParseValidationError):
    pass


@dataclass(frozen=True)
class Token:
    text: str
    lemma: str
    pos: str
    head: int
    deprel: str
    start: int
    end: int


@dataclass
class ParsedSentence:
    tokens: list[Token]
    start: int
    end: int


class CorefMention(NamedTuple):
    sentence: int
    token_start: int
    token_end: int


@dataclass
class ParsedDocument:
    sentences: list[ParsedSentence] = field(default_factory=list)
    coref_chains: list[list[CorefMention]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": PARSE_SCHEMA_VERSION,
            "sentences": [
                {
                    "start": s.start,
                    "end": s.end,
                    "tokens": [
                        {
                            "text": t.text, "lemma": t.lemma, "pos": t.pos,
                            "head": t.head, "deprel": t.deprel,
                            "start": t.start, "end": t.end,
                        }
                        for t in s.tokens
                    ],
                }
                for s in self.sentences
            ],
            "coref_chains": [
                [
                    {"sentence": m.sentence, "token_start": m.token_start,
                     "token_end": m.token_end}
                    for m in chain
                ]
                for chain in self.coref_chains
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _lemma(text: str) -> str:
    t = text.casefold()
    for suffix in ("ing", "ed", "es"):
        if len(t) > len(suffix) + 2 and t.endswith(suffix) and t[: -len(suffix)] in VERB_LEXICON:
            return t[: -len(suffix)]
    if len(t) > 3 and t.endswith("s") and not t.endswith("ss") and not t.endswith("us"):
        return t[:-1]
    return t


_LY_NOUNS = {"family", "assembly", "italy", "anomaly", "supply", "monopoly", "reply"}


def _pos(text: str, prev_lower: str | None) -> str:
    t = text.casefold()
    if not any(ch.isalnum() for ch in t):
        return "PUNCT"
    if t.isdigit():
        return "NUM"
    if t in PRONOUN_TOKENS and t not in ("that", "this"):
        return "PRON"
    if t in DETERMINERS:
        return "DET"
    if t in PREPOSITIONS:
        return "ADP"
    if t in CONJUNCTIONS:
        return "CCONJ"
    if t in ADVERBS or (t.endswith("ly") and len(t) > 4 and t not in _LY_NOUNS):
        return "ADV"
    if t in ADJECTIVES:
        return "ADJ"
    if t in VERB_LEXICON:
        if prev_lower in DETERMINERS or prev_lower in ADJECTIVES:
            return "NOUN"  # "the exploit", "a dump"
        return "VERB"
    return "NOUN"


def heuristic_parse(protected, spans) -> ParsedDocument:
    """Deterministic, model-free parse of protected text.

    Trees are flat: every token attaches to the sentence's first finite
    verb (or token 0 when no verb is found).  Co-reference covers
    third-person pronouns and definite re-mentions of an earlier noun,
    each linked to its nearest preceding noun.
    """
    text = protected.text if hasattr(protected, "text") else protected
    doc = ParsedDocument()
    for span in spans:
        begin, end = span
        tokens_raw = [
            (m.group(0), begin + m.start(), begin + m.end())
            for m in _TOKEN_RE.finditer(text[begin:end])
        ]
        toks: list[Token] = []
        prev_word: str | None = None
        pos_tags: list[str] = []
        for tok_text, t_start, t_end in tokens_raw:
            tag = _pos(tok_text, prev_word)
            pos_tags.append(tag)
            if tag != "PUNCT":
                prev_word = tok_text.casefold()
        root = next((i for i, tag in enumerate(pos_tags) if tag == "VERB"), 0)
        for i, (tok_text, t_start, t_end) in enumerate(tokens_raw):
            toks.append(
                Token(
                    text=tok_text,
                    lemma=_lemma(tok_text),
                    pos=pos_tags[i],
                    head=root if i != root else i,
                    deprel="root" if i == root else "dep",
                    start=t_start,
                    end=t_end,
                )
            )
        doc.sentences.append(ParsedSentence(tokens=toks, start=begin, end=end))
    doc.coref_chains = _pronoun_chains(doc)
    validate_parsed(doc)
    return doc


def _pronoun_chains(doc: ParsedDocument) -> list[list[CorefMention]]:
    links: list[tuple[CorefMention, CorefMention]] = []
    noun_positions: list[tuple[int, int, str]] = []  # (sentence, token, lemma)

    def nearest_noun_before(sent_idx: int, tok_idx: int) -> CorefMention | None:
        for s, t, _ in reversed(noun_positions):
            if s < sent_idx or (s == sent_idx and t < tok_idx):
                return CorefMention(s, t, t + 1)
        return None

    for s_idx, sentence in enumerate(doc.sentences):
        for t_idx, tok in enumerate(sentence.tokens):
            low = tok.text.casefold()
            if tok.pos == "PRON" and low in PRONOUN_TOKENS:
                antecedent = nearest_noun_before(s_idx, t_idx)
                if antecedent is not None:
                    links.append((antecedent, CorefMention(s_idx, t_idx, t_idx + 1)))
                continue
            if tok.pos == "NOUN":
                prev = sentence.tokens[t_idx - 1].text.casefold() if t_idx else ""
                if prev in ("the", "this", "that"):
                    earlier = [
                        (s, t) for s, t, lem in noun_positions
                        if lem == tok.lemma and s < s_idx
                    ]
                    if earlier:
                        s, t = earlier[-1]
                        links.append(
                            (CorefMention(s, t, t + 1), CorefMention(s_idx, t_idx, t_idx + 1))
                        )
                noun_positions.append((s_idx, t_idx, tok.lemma))

    # Union mentions into chains.
    parent: dict[CorefMention, CorefMention] = {}

    def find(x: CorefMention) -> CorefMention:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in links:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    cells: dict[CorefMention, set[CorefMention]] = {}
    for m in parent:
        cells.setdefault(find(m), set()).add(m)
    return [sorted(cell) for _, cell in sorted(cells.items()) if len(cell) > 1]


def validate_parsed(doc: ParsedDocument) -> None:
    """Shared invariant checks for both parse providers."""
    for s_idx, sentence in enumerate(doc.sentences):
        n = len(sentence.tokens)
        roots = 0
        for t_idx, tok in enumerate(sentence.tokens):
            if not 0 <= tok.head < n:
                raise ParseValidationError(
                    f"/sentences/{s_idx}/tokens/{t_idx}/head: {tok.head} out of range"
                )
            if tok.head == t_idx:
                roots += 1
        if n and roots != 1:
            raise ParseValidationError(
                f"/sentences/{s_idx}: expected exactly one root, found {roots}"
            )
        for t_idx, tok in enumerate(sentence.tokens):
            seen = {t_idx}
            cur = t_idx
            while sentence.tokens[cur].head != cur:
                cur = sentence.tokens[cur].head
                if cur in seen:
                    raise ParseValidationError(
                        f"/sentences/{s_idx}/tokens/{t_idx}/head: cycle detected"
                    )
                seen.add(cur)
    for c_idx, chain in enumerate(doc.coref_chains):
        for m_idx, m in enumerate(chain):
            where = f"/coref_chains/{c_idx}/{m_idx}"
            if not 0 <= m.sentence < len(doc.sentences):
                raise ParseValidationError(f"{where}/sentence: {m.sentence} out of range")
            n = len(doc.sentences[m.sentence].tokens)
            if not 0 <= m.token_start < m.token_end <= n:
                raise ParseValidationError(
                    f"{where}: token span [{m.token_start}, {m.token_end}) invalid "
                    f"for a {n}-token sentence"
                )


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ParseValidationError(f"{path}: {message}")


def parse_from_dict(data: dict) -> ParsedDocument:
    """Build a validated ParsedDocument from Parse JSON schema v1 data."""
    _require(isinstance(data, dict), "", "top level must be an object")
    version = data.get("version")
    if version != PARSE_SCHEMA_VERSION:
        raise ParseVersionError(
            f"/version: expected {PARSE_SCHEMA_VERSION}, found {version!r}"
        )
    doc = ParsedDocument()
    sentences = data.get("sentences")
    _require(isinstance(sentences, list), "/sentences", "must be a list")
    for s_idx, s in enumerate(sentences):
        path = f"/sentences/{s_idx}"
        _require(isinstance(s, dict), path, "must be an object")
        _require(isinstance(s.get("start"), int), f"{path}/start", "must be an int")
        _require(isinstance(s.get("end"), int), f"{path}/end", "must be an int")
        tokens = s.get("tokens")
        _require(isinstance(tokens, list), f"{path}/tokens", "must be a list")
        toks = []
        for t_idx, t in enumerate(tokens):
            tpath = f"{path}/tokens/{t_idx}"
            _require(isinstance(t, dict), tpath, "must be an object")
            for key, kind in (("text", str), ("lemma", str), ("pos", str),
                              ("deprel", str), ("head", int), ("start", int),
                              ("end", int)):
                _require(isinstance(t.get(key), kind), f"{tpath}/{key}",
                         f"must be a {kind.__name__}")
            toks.append(Token(text=t["text"], lemma=t["lemma"], pos=t["pos"],
                              head=t["head"], deprel=t["deprel"],
                              start=t["start"], end=t["end"]))
        doc.sentences.append(ParsedSentence(tokens=toks, start=s["start"], end=s["end"]))
    chains = data.get("coref_chains", [])
    _require(isinstance(chains, list), "/coref_chains", "must be a list")
    for c_idx, chain in enumerate(chains):
        _require(isinstance(chain, list), f"/coref_chains/{c_idx}", "must be a list")
        mentions = []
        for m_idx, m in enumerate(chain):
            mpath = f"/coref_chains/{c_idx}/{m_idx}"
            _require(isinstance(m, dict), mpath, "must be an object")
            for key in ("sentence", "token_start", "token_end"):
                _require(isinstance(m.get(key), int), f"{mpath}/{key}", "must be an int")
            mentions.append(CorefMention(m["sentence"], m["token_start"], m["token_end"]))
        doc.coref_chains.append(mentions)
    validate_parsed(doc)
    return doc


def load_parse(path) -> ParsedDocument:
    """Load and validate a sidecar-produced Parse JSON file."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseValidationError(f"{path}: not valid JSON ({exc})") from exc
    return parse_from_dict(data)
