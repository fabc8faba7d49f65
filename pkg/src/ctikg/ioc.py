"""IoC recognition, protection, and restoration.

Domain-specific terms (hashes, IPs, registry keys, CVEs, paths) confuse
general text processing, so they are swapped for plain English words
before parsing and swapped back afterwards.  The scanner understands the
usual defang spellings (``hxxp://``, ``1.2.3[.]4``) in place, which keeps
every match span valid in the original text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

IOC_CATEGORIES = (
    "ipv4",
    "ipv6",
    "url",
    "domain",
    "email",
    "md5",
    "sha1",
    "sha256",
    "file_path_windows",
    "file_path_unix",
    "registry_key",
    "cve",
    "filename_executable",
    "filename_document",
)

# Tie-break order for equally long candidate matches.
CATEGORY_PRECEDENCE = {
    c: i
    for i, c in enumerate(
        (
            "cve",
            "url",
            "email",
            "registry_key",
            "file_path_windows",
            "file_path_unix",
            "sha256",
            "sha1",
            "md5",
            "ipv6",
            "ipv4",
            "filename_executable",
            "filename_document",
            "domain",
        )
    )
}

# Replacement words per category: common nouns keep the surrounding parse
# natural.  All must be single alphabetic tokens and must not themselves
# look like an IoC (checked at ruleset load).
PLACEHOLDERS = {
    "ipv4": "address",
    "ipv6": "address",
    "url": "website",
    "domain": "website",
    "email": "mailbox",
    "md5": "hashfile",
    "sha1": "hashfile",
    "sha256": "hashfile",
    "file_path_windows": "file",
    "file_path_unix": "file",
    "registry_key": "registry",
    "cve": "vulnerability",
    "filename_executable": "program",
    "filename_document": "document",
}

_DEFANGS = (
    ("[.]", "."),
    ("(.)", "."),
    ("[:]", ":"),
    ("[@]", "@"),
    ("[at]", "@"),
)


class RulesetError(ValueError):
    pass


class RestoreError(ValueError):
    pass


def refang(term: str) -> str:
    """Undo common defang spellings so terms compare cleanly downstream."""
    out = term
    for needle, repl in _DEFANGS:
        out = out.replace(needle, repl)
    out = re.sub(r"^hxxp", "http", out, flags=re.IGNORECASE)
    out = re.sub(r"^fxp", "ftp", out, flags=re.IGNORECASE)
    return out


@dataclass(frozen=True)
class IoCMatch:
    span: tuple[int, int]
    raw: str
    category: str

    @property
    def value(self) -> str:
        """The refanged form of the matched text."""
        return refang(self.raw)


class RuleSet:
    """Compiled IoC regexes, one or more per category."""

    def __init__(self, rules: list[tuple[str, str]]):
        self.patterns: list[tuple[str, int, re.Pattern]] = []
        per_category: dict[str, int] = {}
        for category, pattern in rules:
            if category not in IOC_CATEGORIES:
                raise RulesetError(f"unknown IoC category {category!r}")
            try:
                compiled = re.compile(pattern)
            except re.error as exc:
                raise RulesetError(f"bad regex for {category!r}: {pattern!r} ({exc})") from exc
            idx = per_category.get(category, 0)
            per_category[category] = idx + 1
            self.patterns.append((category, idx, compiled))
        self._check_placeholders()

    def _check_placeholders(self) -> None:
        for word in set(PLACEHOLDERS.values()):
            if not word.isalpha():
                raise RulesetError(f"placeholder {word!r} is not a plain word")
            for category, _, compiled in self.patterns:
                if compiled.search(word):
                    raise RulesetError(
                        f"placeholder {word!r} matches the {category} regex"
                    )

    @classmethod
    def from_lines(cls, lines, where: str = "<ruleset>") -> "RuleSet":
        rules = []
        for lineno, line in enumerate(lines, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise RulesetError(f"{where}:{lineno}: expected 'category<TAB>regex'")
            rules.append((parts[0].strip(), parts[1]))
        if not rules:
            raise RulesetError(f"{where}: no rules found")
        return cls(rules)

    @classmethod
    def from_file(cls, path) -> "RuleSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh, where=str(path))

    @classmethod
    def default(cls, extra_path=None) -> "RuleSet":
        """The bundled ruleset, optionally extended with user rules."""
        text = resources.files("ctikg.data").joinpath("ioc_rules.tsv").read_text("utf-8")
        lines = text.splitlines()
        if extra_path is not None:
            with open(extra_path, encoding="utf-8") as fh:
                lines += fh.read().splitlines()
        return cls.from_lines(lines, where="ioc_rules.tsv")


def scan_iocs(text: str, ruleset: RuleSet) -> list[IoCMatch]:
    """All non-overlapping IoC matches, longest match first, then leftmost."""
    candidates: list[tuple[int, int, int, int, str]] = []
    for category, pat_idx, compiled in ruleset.patterns:
        for m in compiled.finditer(text):
            if m.start() == m.end():
                continue
            candidates.append(
                (
                    -(m.end() - m.start()),
                    m.start(),
                    CATEGORY_PRECEDENCE[category],
                    pat_idx,
                    category,
                )
            )
    candidates.sort()
    taken: list[tuple[int, int]] = []
    out: list[IoCMatch] = []
    for neg_len, start, _, _, category in candidates:
        end = start - neg_len
        if any(start < t_end and t_start < end for t_start, t_end in taken):
            continue
        taken.append((start, end))
        out.append(IoCMatch(span=(start, end), raw=text[start:end], category=category))
    out.sort(key=lambda m: m.span)
    return out


@dataclass
class ProtectedText:
    text: str
    table: list[tuple[tuple[int, int], IoCMatch]]


def protect_iocs(text: str, matches: list[IoCMatch]) -> ProtectedText:
    """Substitute each match with its category placeholder word.

    The table records the placeholder's span in the protected text next to
    the original match, which makes restoration exact.
    """
    ordered = sorted(matches, key=lambda m: m.span)
    for a, b in zip(ordered, ordered[1:]):
        if a.span[1] > b.span[0]:
            raise ValueError(f"overlapping IoC matches: {a.span} and {b.span}")
    pieces: list[str] = []
    table: list[tuple[tuple[int, int], IoCMatch]] = []
    cursor = 0
    out_len = 0
    for m in ordered:
        begin, end = m.span
        if text[begin:end] != m.raw:
            raise ValueError(f"match at {m.span} does not equal the text slice")
        pieces.append(text[cursor:begin])
        out_len += begin - cursor
        word = PLACEHOLDERS[m.category]
        pieces.append(word)
        table.append(((out_len, out_len + len(word)), m))
        out_len += len(word)
        cursor = end
    pieces.append(text[cursor:])
    return ProtectedText(text="".join(pieces), table=table)


def restore_iocs(protected: ProtectedText) -> str:
    """Put the original IoC strings back; inverse of protect_iocs."""
    text = protected.text
    for (begin, end), match in sorted(protected.table, key=lambda e: e[0], reverse=True):
        if text[begin:end] != PLACEHOLDERS[match.category]:
            raise RestoreError(
                f"placeholder table corrupt at {begin}:{end}: "
                f"expected {PLACEHOLDERS[match.category]!r}, found {text[begin:end]!r}"
            )
        text = text[:begin] + match.raw + text[end:]
    return text
