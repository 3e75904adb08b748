"""Sample loading: SemEval-2014 Task 4 XML, the fixture TSV format, tokenisation.

Tokeniser (version 1): lowercase; split on whitespace; inside each
whitespace-delimited chunk, maximal runs of word characters (``\\w``) and
maximal runs of other characters each become one token. Offsets index the
original string by code point.
"""

from __future__ import annotations

import io
import logging
import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .classifier import LABELS

logger = logging.getLogger(__name__)

TOKENIZER_VERSION = 1
_TOKEN_RE = re.compile(r"\w+|[^\w\s]+")


class DataError(ValueError):
    """Fatal problem with an input file."""


@dataclass(frozen=True)
class Sample:
    sentence_tokens: tuple[str, ...]
    aspect_span: tuple[int, int]  # half-open token range
    polarity: str
    raw_text: str
    aspect_chars: tuple[int, int] | None = None
    aspect_term: str | None = None

    def __post_init__(self):
        i, j = self.aspect_span
        if not 0 <= i < j <= len(self.sentence_tokens):
            raise ValueError(f"aspect span {self.aspect_span} invalid for {len(self.sentence_tokens)} tokens")
        if self.polarity not in LABELS:
            raise ValueError(f"polarity must be one of {LABELS}, got {self.polarity!r}")

    @property
    def aspect_tokens(self) -> tuple[str, ...]:
        return self.sentence_tokens[self.aspect_span[0] : self.aspect_span[1]]


@dataclass
class LoadReport:
    dropped_conflict: int = 0
    rejected: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class DatasetStats:
    positive: int = 0
    neutral: int = 0
    negative: int = 0

    @property
    def total(self) -> int:
        return self.positive + self.neutral + self.negative

    def __add__(self, other: "DatasetStats") -> "DatasetStats":
        return DatasetStats(self.positive + other.positive, self.neutral + other.neutral, self.negative + other.negative)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.positive, self.neutral, self.negative)


def tokenize(text: str) -> list[tuple[str, int, int]]:
    return [(m.group().lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def align_aspect_span(tokens: Sequence[tuple[str, int, int]], char_range: tuple[int, int]) -> tuple[int, int]:
    """Smallest token range covering every token that overlaps ``[start, end)``."""
    start, end = char_range
    hit = [k for k, (_, s, e) in enumerate(tokens) if s < end and start < e]
    if not hit:
        raise ValueError(f"character range [{start}, {end}) overlaps no token")
    return hit[0], hit[-1] + 1


def make_sample(text: str, start: int, end: int, polarity: str, term: str | None = None) -> Sample:
    toks = tokenize(text)
    if not 0 <= start < end <= len(text):
        raise ValueError(f"aspect offsets [{start}, {end}) outside sentence of length {len(text)}")
    span = align_aspect_span(toks, (start, end))
    return Sample(tuple(t for t, _, _ in toks), span, polarity, text, (start, end), term)


def parse_semeval_xml(path, report: LoadReport | None = None) -> list[Sample]:
    """One Sample per (sentence, aspectTerm); ``conflict`` terms are dropped."""
    path = Path(path)
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        line, col = exc.position
        context = ""
        try:
            context = path.read_text(encoding="utf-8", errors="replace").splitlines()[line - 1].strip()
        except (OSError, IndexError):
            pass
        raise DataError(f"{path}:{line}:{col}: malformed XML ({exc.msg}) near: {context[:120]!r}") from None
    report = report if report is not None else LoadReport()
    samples = []
    for sent in root.iter("sentence"):
        text_el = sent.find("text")
        text = (text_el.text or "") if text_el is not None else ""
        terms = sent.find("aspectTerms")
        if terms is None:
            continue
        for at in terms.findall("aspectTerm"):
            pol = at.get("polarity")
            if pol == "conflict":
                report.dropped_conflict += 1
                continue
            if pol not in LABELS:
                raise DataError(f"{path}: unknown polarity {pol!r} in sentence id={sent.get('id')}")
            start, end = int(at.get("from")), int(at.get("to"))
            try:
                samples.append(make_sample(text, start, end, pol, at.get("term")))
            except ValueError as exc:
                msg = f"sentence id={sent.get('id')} {text!r}: {exc}"
                report.rejected.append(msg)
                logger.warning("rejected aspect: %s", msg)
    if report.dropped_conflict:
        logger.info("%s: dropped %d conflict aspect terms", path, report.dropped_conflict)
    return samples


TSV_COLUMNS = ("sentence", "aspect_term", "from", "to", "polarity")


def load_tsv(path) -> list[Sample]:
    """Columns: sentence, aspect_term, from, to, polarity. ``#`` lines are comments."""
    path = Path(path)
    samples = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != len(TSV_COLUMNS):
                raise DataError(f"{path}:{lineno}: expected {len(TSV_COLUMNS)} tab-separated columns, got {len(cols)}")
            text, term, start, end, pol = cols
            try:
                samples.append(make_sample(text, int(start), int(end), pol, term))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return samples


def write_tsv(samples: Iterable[Sample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for s in samples:
            if s.aspect_chars is None:
                raise ValueError("sample has no character offsets; cannot export to TSV")
            start, end = s.aspect_chars
            term = s.aspect_term if s.aspect_term is not None else s.raw_text[start:end]
            fh.write("\t".join([s.raw_text, term, str(start), str(end), s.polarity]) + "\n")


def load_samples(path, fmt: str, report: LoadReport | None = None) -> list[Sample]:
    if fmt == "semeval-xml":
        return parse_semeval_xml(path, report)
    if fmt == "tsv":
        return load_tsv(path)
    raise ValueError(f"unknown data format {fmt!r}")


def dataset_stats(samples: Iterable[Sample]) -> DatasetStats:
    c = Counter(s.polarity for s in samples)
    return DatasetStats(c["positive"], c["neutral"], c["negative"])


def format_stats_table(rows: Sequence[tuple[str, DatasetStats]]) -> str:
    width = max([len("Dataset")] + [len(name) for name, _ in rows])
    buf = io.StringIO()
    buf.write(f"{'Dataset':<{width}} | Positive | Neutral | Negative\n")
    buf.write("-" * (width + 32) + "\n")
    for name, st in rows:
        buf.write(f"{name:<{width}} | {st.positive:>8} | {st.neutral:>7} | {st.negative:>8}\n")
    return buf.getvalue()
