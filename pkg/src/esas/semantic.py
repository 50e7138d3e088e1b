"""Text to conceptual-graph triples, vocabulary management, and vectorization.

Triples are linearized conceptual-graph edges ``(verb, role, argument)`` with
roles Agent, Obj, Attr, Dest and Inst.  Extraction is a small deterministic
rule set over tokenized sentences: subject -> Agent, direct object -> Obj,
copular complement -> Attr, and prepositional phrases headed by to/into ->
Dest, by/with -> Inst.  It does no parsing and no lexical expansion.
"""

from __future__ import annotations

import enum
import functools
import re
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Context, Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .errors import CapacityExceeded, TripleFormatError, UnknownTriple
from .knnse import PlainVector

IDF_DIGITS = 12

ROLES = ("agent", "obj", "attr", "dest", "inst")


@dataclass(frozen=True, order=True)
class Triple:
    head: str
    relation: str
    tail: str

    def __post_init__(self) -> None:
        for name in ("head", "relation", "tail"):
            value = " ".join(str(getattr(self, name)).split()).lower()
            if not value:
                raise TripleFormatError(f"triple {name} is empty")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)

    def __str__(self) -> str:
        return f"[{self.head}, {self.relation}, {self.tail}]"


class ExtractionMode(enum.Enum):
    THEME_SENTENCE = "theme"
    ALL_SENTENCES = "all"


# -- lexicon -----------------------------------------------------------------

_AUX = {
    "is": "be", "are": "be", "was": "be", "were": "be", "am": "be", "be": "be",
    "been": "be", "being": "be", "'s": "be",
    "has": "have", "have": "have", "had": "have",
    "do": "do", "does": "do", "did": "do",
    "will": "will", "would": "will", "shall": "shall", "should": "shall",
    "can": "can", "could": "can", "may": "may", "might": "may", "must": "must",
}
_DETERMINERS = {
    "the", "a", "an", "this", "that", "these", "those", "his", "her", "its", "their",
    "our", "my", "your", "some", "any", "every", "each", "all", "no", "another",
}
_NEGATIONS = {"not", "never", "n't", "also", "just", "still", "already", "often", "always"}
_CONJUNCTIONS = {"and", "or", "but", "nor"}
_ROLE_PREPOSITIONS = {
    "to": "dest", "into": "dest", "towards": "dest", "toward": "dest", "onto": "dest",
    "by": "inst", "with": "inst", "via": "inst",
}
_OTHER_PREPOSITIONS = {
    "in", "on", "at", "from", "for", "of", "about", "over", "under", "after", "before",
    "during", "through", "between", "near", "across", "against", "without", "within",
    "around", "behind", "beyond", "since", "until", "upon", "as", "than",
}
_PREPOSITIONS = set(_ROLE_PREPOSITIONS) | _OTHER_PREPOSITIONS

_IRREGULAR = {
    "went": "go", "gone": "go", "goes": "go", "ran": "run", "came": "come", "saw": "see",
    "seen": "see", "took": "take", "taken": "take", "gave": "give", "given": "give",
    "made": "make", "wrote": "write", "written": "write", "ate": "eat", "eaten": "eat",
    "drove": "drive", "driven": "drive", "flew": "fly", "flown": "fly", "flies": "fly",
    "bought": "buy", "brought": "bring", "thought": "think", "told": "tell", "said": "say",
    "found": "find", "got": "get", "gotten": "get", "left": "leave", "met": "meet",
    "sent": "send", "spent": "spend", "built": "build", "taught": "teach", "caught": "catch",
    "held": "hold", "kept": "keep", "knew": "know", "known": "know", "led": "lead",
    "paid": "pay", "read": "read", "rode": "ride", "ridden": "ride", "sold": "sell",
    "sat": "sit", "spoke": "speak", "spoken": "speak", "stood": "stand", "began": "begin",
    "begun": "begin", "chose": "choose", "chosen": "choose", "did": "do", "done": "do",
    "had": "have", "has": "have", "felt": "feel", "fell": "fall", "fallen": "fall",
    "grew": "grow", "grown": "grow", "heard": "hear", "lost": "lose", "put": "put",
    "set": "set", "shot": "shoot", "won": "win", "swam": "swim", "threw": "throw",
    "thrown": "throw", "understood": "understand", "woke": "wake", "wore": "wear",
}

_VERBS = {
    "go", "come", "run", "walk", "travel", "drive", "fly", "ride", "move", "visit", "arrive",
    "leave", "return", "see", "watch", "look", "take", "give", "make", "write", "read", "eat",
    "drink", "buy", "sell", "pay", "send", "receive", "bring", "carry", "build", "create",
    "use", "open", "close", "find", "get", "keep", "hold", "meet", "tell", "say", "speak",
    "ask", "answer", "call", "help", "teach", "learn", "study", "work", "play", "live",
    "love", "like", "want", "need", "know", "think", "believe", "treat", "cure", "diagnose",
    "examine", "prescribe", "operate", "admit", "discharge", "store", "encrypt", "decrypt",
    "search", "query", "share", "upload", "download", "access", "protect", "analyze",
    "process", "compute", "calculate", "generate", "transfer", "publish", "report",
    "record", "review", "approve", "reject", "manage", "develop", "design", "test", "deploy",
    "install", "update", "delete", "save", "print", "scan", "measure", "monitor", "observe",
    "discover", "explore", "investigate", "research", "describe", "explain", "present",
    "show", "support", "provide", "require", "include", "contain", "cause", "prevent",
    "reduce", "increase", "improve", "change", "begin", "start", "finish", "end", "stop",
    "continue", "follow", "lead", "join", "attend", "win", "lose", "fall", "grow", "rise",
    "cook", "clean", "wash", "fix", "repair", "paint", "draw", "sing", "dance", "swim",
    "climb", "jump", "sit", "stand", "sleep", "wake", "wear", "catch", "throw", "kick",
    "hit", "cut", "push", "pull", "lift", "order", "deliver", "ship", "plant", "feed",
    "hire", "fire", "train", "check", "choose", "spend", "borrow", "lend",
    "rent", "own", "sign", "listen", "hear", "feel", "smell", "taste", "enjoy", "hate",
    "prefer", "hope", "plan", "decide", "try", "fail", "succeed", "attack", "defend",
    "invade", "capture", "escape", "hide", "seek", "chase", "kill", "die", "marry",
    "understand", "shoot", "put", "set", "be", "have", "do",
}


def _undouble(stem: str) -> Optional[str]:
    if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in "aeiouls":
        return stem[:-1]
    return None


@functools.lru_cache(maxsize=4096)
def lemmatize_verb(word: str) -> str:
    word = word.lower()
    if word in _IRREGULAR:
        return _IRREGULAR[word]
    if word in _AUX:
        return _AUX[word]
    if word in _VERBS:
        return word
    for suffix in ("ing", "ed"):
        if word.endswith(suffix) and len(word) > len(suffix) + 1:
            stem = word[: -len(suffix)]
            candidates = [stem, stem + "e", _undouble(stem)]
            if stem.endswith("i"):
                candidates.append(stem[:-1] + "y")
            for c in candidates:
                if c and c in _VERBS:
                    return c
            return _undouble(stem) or stem
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    for suffix in ("es", "s"):
        if word.endswith(suffix) and len(word) > len(suffix) + 1:
            stem = word[: -len(suffix)]
            if stem in _VERBS:
                return stem
    if word.endswith("s") and not word.endswith("ss") and len(word) > 2:
        return word[:-1]
    return word


def _is_verb_form(word: str) -> bool:
    if word in _IRREGULAR or word in _VERBS:
        return True
    if word.endswith(("ing", "ed")) and len(word) > 4:
        return True
    return lemmatize_verb(word) in _VERBS


_STOPWORDS = (
    set(_AUX) | _DETERMINERS | _NEGATIONS | _CONJUNCTIONS | _PREPOSITIONS
    | {"i", "you", "he", "she", "it", "we", "they", "me", "him", "us", "them", "there"}
)

_SENTENCE_RE = re.compile(r"[^.!?;]+")
_TOKEN_RE = re.compile(r"[A-Za-z0-9]+(?:['-][A-Za-z0-9]+)*|n't|'s")


def split_sentences(text: str) -> list[list[str]]:
    sentences = []
    for chunk in _SENTENCE_RE.findall(text):
        tokens = [t.lower() for t in _TOKEN_RE.findall(chunk)]
        if tokens:
            sentences.append(tokens)
    return sentences


def content_score(tokens: Sequence[str]) -> int:
    return sum(1 for t in tokens if t not in _STOPWORDS)


def _heads(segment: Sequence[str]) -> list[str]:
    """Head nouns of a (possibly coordinated) phrase: last content word of each conjunct."""
    heads, current = [], []
    for tok in list(segment) + ["and"]:
        if tok in _CONJUNCTIONS:
            content = [t for t in current if t not in _STOPWORDS]
            if content:
                heads.append(content[-1])
            current = []
        else:
            current.append(tok)
    return heads


def _find_predicate(tokens: list[str]) -> Optional[tuple[int, str, bool]]:
    """Return ``(index_after_verb, verb_lemma, copular)`` or None."""
    for i, tok in enumerate(tokens):
        if tok in _AUX:
            j = i + 1
            while j < len(tokens) and (tokens[j] in _NEGATIONS or tokens[j] in _AUX or tokens[j].endswith("ly")):
                j += 1
            if j < len(tokens) and tokens[j] not in _DETERMINERS and tokens[j] not in _PREPOSITIONS and _is_verb_form(tokens[j]):
                return j + 1, lemmatize_verb(tokens[j]), False
            # aux with no participle: its last auxiliary is the predicate
            last = max(k for k in range(i, j) if tokens[k] in _AUX)
            lemma = _AUX[tokens[last]]
            return last + 1, lemma, lemma == "be"
    for i, tok in enumerate(tokens[1:], start=1):
        if tok in _DETERMINERS or tok in _PREPOSITIONS or tok in _CONJUNCTIONS:
            continue
        if tok in _IRREGULAR or tok in _VERBS or lemmatize_verb(tok) in _VERBS or tok.endswith("ed"):
            return i + 1, lemmatize_verb(tok), False
    if len(tokens) >= 2 and tokens[1] not in _STOPWORDS:
        return 2, lemmatize_verb(tokens[1]), False
    return None


def sentence_triples(tokens: Sequence[str]) -> list[Triple]:
    tokens = list(tokens)
    found = _find_predicate(tokens)
    if found is None:
        return []
    after, verb, copular = found
    verb_start = after - 1
    while verb_start > 1 and (
        tokens[verb_start - 1] in _AUX
        or tokens[verb_start - 1] in _NEGATIONS
        or tokens[verb_start - 1].endswith("ly")
    ):
        verb_start -= 1
    triples = [Triple(verb, "agent", h) for h in _heads(tokens[:verb_start])]

    segments: list[tuple[Optional[str], list[str]]] = [(None, [])]
    for tok in tokens[after:]:
        if tok in _PREPOSITIONS:
            segments.append((tok, []))
        else:
            segments[-1][1].append(tok)
    for prep, segment in segments:
        if prep is None:
            role = "attr" if copular else "obj"
        else:
            role = _ROLE_PREPOSITIONS.get(prep)
            if role is None:
                continue
        triples.extend(Triple(verb, role, h) for h in _heads(segment))
    # keep first occurrence order, drop repeats within one sentence
    return list(dict.fromkeys(triples))


def extract_triples(text: str, mode: ExtractionMode = ExtractionMode.ALL_SENTENCES) -> list[Triple]:
    sentences = split_sentences(text)
    if not sentences:
        return []
    if mode is ExtractionMode.THEME_SENTENCE:
        best = max(range(len(sentences)), key=lambda i: (content_score(sentences[i]), -i))
        return sentence_triples(sentences[best])
    out: list[Triple] = []
    for tokens in sentences:
        out.extend(sentence_triples(tokens))
    return out


def parse_triples(text: str) -> list[Triple]:
    """Parse ``head<TAB>relation<TAB>tail`` lines; blank lines are skipped."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 3:
            raise TripleFormatError(f"line {lineno}: expected 3 TAB-separated fields, found {len(parts)}")
        try:
            out.append(Triple(*parts))
        except TripleFormatError as exc:
            raise TripleFormatError(f"line {lineno}: {exc}") from None
    return out


def format_triples(triples: Iterable[Triple]) -> str:
    return "".join(f"{t.head}\t{t.relation}\t{t.tail}\n" for t in triples)


# -- vocabulary --------------------------------------------------------------


@dataclass(frozen=True)
class Vocabulary:
    """Append-only triple registry; dimension ``i`` (1-based) is ``triples[i-1]``."""

    capacity: Optional[int] = None
    triples: tuple[Triple, ...] = ()
    df: tuple[int, ...] = ()
    doc_count: int = 0
    version: int = 0
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._index.update({t: i for i, t in enumerate(self.triples)})
        if len(self._index) != len(self.triples):
            raise ValueError("duplicate triples in vocabulary")
        if len(self.df) != len(self.triples):
            raise ValueError("df counters do not match triples")
        if any(d > self.doc_count for d in self.df):
            raise ValueError("document frequency exceeds document count")

    def __len__(self) -> int:
        return len(self.triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._index

    @property
    def width(self) -> int:
        """Vector dimension n: the fixed capacity when set, else the triple count."""
        return self.capacity if self.capacity is not None else len(self.triples)

    def dimension_of(self, triple: Triple) -> int:
        try:
            return self._index[triple] + 1
        except KeyError:
            raise UnknownTriple(f"triple {triple} is not in the vocabulary") from None

    def document_frequency(self, triple: Triple) -> int:
        return self.df[self.dimension_of(triple) - 1]

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "version": self.version,
            "doc_count": self.doc_count,
            "entries": [
                [i + 1, t.head, t.relation, t.tail, d]
                for i, (t, d) in enumerate(zip(self.triples, self.df))
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Vocabulary":
        entries = sorted(data["entries"], key=lambda e: int(e[0]))
        if [int(e[0]) for e in entries] != list(range(1, len(entries) + 1)):
            raise ValueError("vocabulary dimensions are not consecutive")
        return cls(
            capacity=data["capacity"],
            triples=tuple(Triple(e[1], e[2], e[3]) for e in entries),
            df=tuple(int(e[4]) for e in entries),
            doc_count=int(data["doc_count"]),
            version=int(data["version"]),
        )


def update_vocabulary(vocab: Vocabulary, triples: Iterable[Triple]) -> Vocabulary:
    """Register one document's triples: append unseen ones, bump df and N."""
    distinct = list(dict.fromkeys(triples))
    new = [t for t in distinct if t not in vocab]
    if vocab.capacity is not None and len(vocab) + len(new) > vocab.capacity:
        raise CapacityExceeded(
            f"vocabulary capacity {vocab.capacity} exceeded: "
            f"{len(vocab)} registered + {len(new)} new triples"
        )
    df = list(vocab.df) + [0] * len(new)
    all_triples = vocab.triples + tuple(new)
    index = {t: i for i, t in enumerate(all_triples)}
    for t in distinct:
        df[index[t]] += 1
    return Vocabulary(
        capacity=vocab.capacity,
        triples=all_triples,
        df=tuple(df),
        doc_count=vocab.doc_count + 1,
        version=vocab.version + (1 if new else 0),
    )


def vectorize_binary(triples: Iterable[Triple], vocab: Vocabulary) -> PlainVector:
    values = [0] * vocab.width
    for t in triples:
        values[vocab.dimension_of(t) - 1] = 1
    return PlainVector(values, vocab.version)


_IDF_CONTEXT = Context(prec=50)
_IDF_QUANTUM = Decimal(1).scaleb(-IDF_DIGITS)


@functools.lru_cache(maxsize=65536)
def idf(doc_count: int, df: int) -> Fraction:
    """ln(1 + N/df) rounded to 12 fractional digits, as an exact rational."""
    if df < 1 or doc_count < df:
        raise ValueError("need 1 <= df <= N")
    value = (Decimal(1) + Decimal(doc_count) / Decimal(df)).ln(_IDF_CONTEXT)
    return Fraction(value.quantize(_IDF_QUANTUM, rounding=ROUND_HALF_EVEN, context=_IDF_CONTEXT))


def vectorize_tfidf(doc_triples: Sequence[Triple], vocab: Vocabulary) -> PlainVector:
    values = [Fraction(0)] * vocab.width
    counts = Counter(doc_triples)
    total = sum(counts.values())
    for t, c in counts.items():
        dim = vocab.dimension_of(t)
        values[dim - 1] = Fraction(c, total) * idf(vocab.doc_count, vocab.df[dim - 1])
    return PlainVector(values, vocab.version)


def query_to_vector(query_text: str, vocab: Vocabulary) -> PlainVector:
    known = [t for t in extract_triples(query_text, ExtractionMode.ALL_SENTENCES) if t in vocab]
    return vectorize_binary(known, vocab)
