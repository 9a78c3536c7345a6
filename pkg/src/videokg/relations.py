"""Caption-to-relation extraction: triplets, coreference, concreteness filter.

The default parser is a deterministic pattern extractor over tokens with
closed-class lists (an adapter-provided neural parse, when present, takes
precedence upstream).  Relations are kept only when the subject and object
are concrete enough per a ratings lexicon.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

DETERMINERS = frozenset(
    "a an the this that these those his her its their my your our some any "
    "each every another both several".split()
)

PREPOSITIONS = frozenset(
    "in on at with near under over by behind beside above below across inside "
    "outside against along around atop upon beneath between through onto into "
    "of off toward towards".split()
)

COMPOUND_PREPOSITIONS = (
    ("in", "front", "of"),
    ("on", "top", "of"),
    ("next", "to"),
    ("close", "to"),
)

PRONOUNS = frozenset(
    "he she it they him them his hers its their theirs this that these those "
    "i we you me us her who whom someone something anyone anything everyone "
    "everything one ones there".split()
)

VERBS = frozenset(
    "is are was were be being has have had holds hold sits sit stands stand "
    "rides ride wears wear walks walk runs run eats eat drinks drink plays "
    "play looks look carries carry drives drive flies fly jumps jump lies lie "
    "leans lean rests rest hangs hang contains contain shows show".split()
)

# -ing words that are ordinarily nouns in captions
ING_NOUNS = frozenset(
    "building ceiling painting clothing lighting wedding morning evening "
    "thing something anything nothing king ring spring string wing railing "
    "awning sibling duckling dumpling".split()
)

CONJUNCTIONS = frozenset(("and", "or"))

_WORD_RE = re.compile(r"[a-zA-Z][a-zA-Z'-]*")


class RelationError(ValueError):
    pass


@dataclass(frozen=True)
class Triplet:
    subject: str
    relation: str
    object: str
    source: Optional[tuple] = None  # (FrameRef, caption index)

    def __post_init__(self):
        if not self.subject or not self.object:
            raise RelationError(f"empty endpoint in triplet {self!r}")


def tokenize(sentence: str) -> list[str]:
    return [t.lower() for t in _WORD_RE.findall(sentence)]


def is_verb(token: str) -> bool:
    if token in VERBS:
        return True
    if token.endswith("ing") and len(token) >= 5 and token not in ING_NOUNS:
        return True
    if token.endswith("ed") and len(token) >= 4:
        return True
    return False


def _is_noun_like(token: str) -> bool:
    return (
        token not in DETERMINERS
        and token not in PREPOSITIONS
        and token not in PRONOUNS
        and token not in CONJUNCTIONS
        and not is_verb(token)
    )


def _parse_np(tokens: Sequence[str], i: int) -> tuple[Optional[str], int]:
    """Parse det? (adj|noun)* noun+ or a bare pronoun; return (head, next index)."""
    n = len(tokens)
    if i >= n:
        return None, i
    if tokens[i] in PRONOUNS:
        return tokens[i], i + 1
    if tokens[i] in DETERMINERS:
        i += 1
    head = None
    while i < n and _is_noun_like(tokens[i]):
        head = tokens[i]
        i += 1
    return head, i


def _match_preposition(tokens: Sequence[str], i: int) -> tuple[Optional[str], int]:
    for compound in COMPOUND_PREPOSITIONS:
        if tuple(tokens[i : i + len(compound)]) == compound:
            return " ".join(compound), i + len(compound)
    if i < len(tokens) and tokens[i] in PREPOSITIONS:
        return tokens[i], i + 1
    return None, i


def parse_triplets(caption_sentence: str, source: Optional[tuple] = None) -> list[Triplet]:
    """Extract (subject, relation, object) triplets from one caption sentence.

    Pattern: NP (PP)* (VERB (prep)? NP)*, with prepositional phrases attached
    to the nearest noun phrase and verb relations attached to the current
    subject(s).  No match yields an empty list.
    """
    tokens = tokenize(caption_sentence)
    triplets: list[Triplet] = []
    n = len(tokens)
    i = 0
    subjects: list[str] = []
    current: Optional[str] = None  # nearest NP head for PP attachment

    def emit(subject, relation, obj):
        if subject and obj and relation:
            triplets.append(Triplet(subject, relation, obj, source=source))

    head, i = _parse_np(tokens, i)
    if head is None:
        return []
    subjects = [head]
    current = head

    while i < n:
        token = tokens[i]
        prep, j = _match_preposition(tokens, i)
        if prep is not None:
            obj, j2 = _parse_np(tokens, j)
            if obj is not None:
                if current != "there":
                    emit(current, prep, obj)
                current = obj
                i = j2
                continue
            i = j
            continue
        if is_verb(token):
            relation = token
            j = i + 1
            # fold copulas into a following participle: "is sitting" -> sitting
            if token in ("is", "are", "was", "were") and j < n and is_verb(tokens[j]):
                relation = tokens[j]
                j += 1
            prep, j2 = _match_preposition(tokens, j)
            if prep is not None:
                obj, j3 = _parse_np(tokens, j2)
                if obj is not None:
                    for subject in _active_subjects(subjects, relation, tokens):
                        emit(subject, f"{relation} {prep}", obj)
                    current = obj
                    subjects = [obj]
                    i = j3
                    continue
            obj, j2 = _parse_np(tokens, j)
            if obj is not None:
                for subject in _active_subjects(subjects, relation, tokens):
                    emit(subject, relation, obj)
                current = obj
                subjects = [obj]
                i = j2
                continue
            i = j
            continue
        if token in CONJUNCTIONS:
            head, j = _parse_np(tokens, i + 1)
            if head is not None:
                subjects.append(head)
                current = head
                i = j
                continue
            i += 1
            continue
        i += 1
    return triplets


def _active_subjects(subjects: list[str], relation: str, tokens) -> list[str]:
    # existential "there is a dog ..." contributes no real subject
    return [s for s in subjects if s != "there"]


def build_coref_map(caption_sentences: Sequence[str]) -> dict[str, str]:
    """Per-paragraph pronoun resolution: most recent preceding non-pronoun subject."""
    mapping: dict[str, str] = {}
    last_subject: Optional[str] = None
    for sentence in caption_sentences:
        tokens = tokenize(sentence)
        for token in tokens:
            if token in PRONOUNS and last_subject is not None:
                mapping[token] = last_subject
        head, _ = _parse_np(tokens, 0)
        if head is not None and head not in PRONOUNS:
            last_subject = head
    return mapping


def resolve_coreferences(
    triplets: Sequence[Triplet], coref_map: Mapping[str, str]
) -> list[Triplet]:
    """Substitute mapped mentions, then drop triplets still anchored on a pronoun."""
    for canonical in coref_map.values():
        if canonical in PRONOUNS:
            raise RelationError(f"coref canonical {canonical!r} is a pronoun")
    resolved = []
    for t in triplets:
        subject = coref_map.get(t.subject, t.subject)
        obj = coref_map.get(t.object, t.object)
        if subject in PRONOUNS or obj in PRONOUNS:
            continue
        resolved.append(replace(t, subject=subject, object=obj))
    return resolved


class ConcretenessLexicon:
    """word -> rating on the 1..5 concreteness scale; bigram entries allowed."""

    def __init__(self, ratings: Mapping[str, float]):
        self._ratings: dict[str, float] = {}
        for word, rating in ratings.items():
            rating = float(rating)
            if not 1.0 <= rating <= 5.0:
                raise RelationError(f"rating for {word!r} out of [1, 5]: {rating}")
            self._ratings[" ".join(word.lower().split())] = rating

    @classmethod
    def load(cls, path) -> "ConcretenessLexicon":
        ratings = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("|")
            if len(parts) != 2:
                raise RelationError(f"{path}:{lineno}: expected word|rating, got {line!r}")
            try:
                ratings[parts[0].strip()] = float(parts[1])
            except ValueError as exc:
                raise RelationError(f"{path}:{lineno}: bad rating {parts[1]!r}") from exc
        return cls(ratings)

    def get(self, term: str) -> Optional[float]:
        term = " ".join(term.lower().split())
        if term in self._ratings:
            return self._ratings[term]
        head = term.split()[-1] if term else ""
        for candidate in _lookup_forms(head):
            if candidate in self._ratings:
                return self._ratings[candidate]
        return None

    def __len__(self) -> int:
        return len(self._ratings)


def _lookup_forms(head: str) -> list[str]:
    """Lookup candidates for a head noun: surface form, then naive singulars."""
    forms = [head]
    if head.endswith("ies") and len(head) > 4:
        forms.append(head[:-3] + "y")
    if head.endswith("es") and len(head) > 3:
        forms.append(head[:-2])
    if head.endswith("s") and not head.endswith("ss") and len(head) > 2:
        forms.append(head[:-1])
    return forms


def mean_concreteness(triplet: Triplet, lexicon: ConcretenessLexicon) -> Optional[float]:
    """Mean of subject and object ratings; None when either end is unrated."""
    s = lexicon.get(triplet.subject)
    o = lexicon.get(triplet.object)
    if s is None or o is None:
        return None
    return (s + o) / 2.0


def filter_triplets(
    triplets: Sequence[Triplet], lexicon: ConcretenessLexicon, tau: float = 3.0
) -> list[Triplet]:
    """Keep triplets whose mean concreteness is >= tau; unrated ends reject."""
    kept = []
    for t in triplets:
        mean = mean_concreteness(t, lexicon)
        if mean is not None and mean >= tau:
            kept.append(t)
    return kept


def assemble_dense_caption(captions: Sequence[str]) -> str:
    """Concatenate branch captions (whole frame first) into one paragraph."""
    parts = []
    for caption in captions:
        text = caption.strip()
        if not text:
            continue
        if text[-1] not in ".!?":
            text += "."
        parts.append(text)
    return " ".join(parts)


def extract_relations(
    caption_sentences: Sequence[str],
    lexicon: ConcretenessLexicon,
    tau: float = 3.0,
    source: Optional[tuple] = None,
) -> list[Triplet]:
    """Full frame-scope pass: parse each sentence, resolve pronouns, filter."""
    triplets: list[Triplet] = []
    for idx, sentence in enumerate(caption_sentences):
        src = (source, idx) if source is not None else None
        triplets.extend(parse_triplets(sentence, source=src))
    coref = build_coref_map(caption_sentences)
    return filter_triplets(resolve_coreferences(triplets, coref), lexicon, tau)
