"""Lexical database: synset lookup, hypernym traversal, Lesk WSD, virtual synsets.

Two on-disk layouts are supported: the standard WordNet 3.x index/data file
pairs for nouns and verbs, and a compact line-oriented fixture format
(id|lemmas|gloss|hypernym_ids) so the full graph pipeline can run and be
tested without the 150k-synset database.
"""

from __future__ import annotations

import hashlib
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

NOUN = "n"
VERB = "v"
POSES = (NOUN, VERB)

_TOKEN_RE = re.compile(r"[a-z0-9']+")
_SYNSET_ID_RE = re.compile(r"^[a-z0-9_\-'.]+\.(?:virtual\.)?[nv]\.\d{2}$")


class LexiconError(ValueError):
    pass


class ParseError(LexiconError):
    pass


class CycleError(LexiconError):
    pass


class UnknownLemmaError(LexiconError):
    pass


class VirtualSynsetError(LexiconError):
    pass


def parse_synset_id(synset_id: str) -> tuple[str, str, int, bool]:
    """Split an id into (lemma, pos, sense, virtual flag).

    Virtual ids carry a ``virtual`` component right before the pos, e.g.
    ``kn95_face_mask.virtual.n.01``.
    """
    parts = synset_id.split(".")
    if len(parts) >= 4 and parts[-3] == "virtual":
        lemma = ".".join(parts[:-3])
        pos, sense = parts[-2], parts[-1]
        virtual = True
    elif len(parts) >= 3:
        lemma = ".".join(parts[:-2])
        pos, sense = parts[-2], parts[-1]
        virtual = False
    else:
        raise LexiconError(f"malformed synset id {synset_id!r}")
    if pos not in POSES:
        raise LexiconError(f"unsupported pos {pos!r} in {synset_id!r}")
    try:
        sense_no = int(sense)
    except ValueError as exc:
        raise LexiconError(f"bad sense number in {synset_id!r}") from exc
    return lemma, pos, sense_no, virtual


def synset_pos(synset_id: str) -> str:
    return parse_synset_id(synset_id)[1]


def is_virtual_id(synset_id: str) -> bool:
    return parse_synset_id(synset_id)[3]


@dataclass
class Synset:
    id: str
    pos: str
    lemmas: tuple[str, ...]
    gloss: str
    hypernyms: tuple[str, ...]
    hyponyms: tuple[str, ...] = ()
    depth: int = 0


@dataclass(frozen=True)
class VirtualSynset:
    id: str
    parent: str
    name: str
    classifier_ref: str = ""
    created_at: str = ""


def slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")
    if not slug:
        raise VirtualSynsetError(f"name {name!r} slugifies to nothing")
    return slug


class LexiconDb:
    """Read-only after load; the virtual registry mutates under a lock."""

    def __init__(self, synsets: dict[str, Synset], fingerprint: str):
        self._synsets = synsets
        self.fingerprint = fingerprint
        self._lemma_index: dict[tuple[str, str], list[str]] = {}
        self._virtual: dict[str, VirtualSynset] = {}
        self._virtual_children: dict[str, list[str]] = {}
        self._lock = threading.Lock()
        self._roots: dict[str, str] = {}
        self._link_hyponyms()
        self._check_acyclic()
        self._designate_roots()
        self._compute_depths()
        self._build_lemma_index()

    # --- construction ------------------------------------------------------

    def _link_hyponyms(self) -> None:
        hypo: dict[str, list[str]] = {sid: [] for sid in self._synsets}
        for sid, syn in self._synsets.items():
            for hyper in syn.hypernyms:
                if hyper not in self._synsets:
                    raise ParseError(f"{sid}: unknown hypernym {hyper}")
                hypo[hyper].append(sid)
        for sid, children in hypo.items():
            self._synsets[sid].hyponyms = tuple(sorted(children))

    def _check_acyclic(self) -> None:
        WHITE, GRAY, BLACK = 0, 1, 2
        color = {sid: WHITE for sid in self._synsets}
        for start in self._synsets:
            if color[start] != WHITE:
                continue
            stack = [(start, iter(self._synsets[start].hypernyms))]
            color[start] = GRAY
            while stack:
                node, it = stack[-1]
                advanced = False
                for nxt in it:
                    if color[nxt] == GRAY:
                        raise CycleError(f"hypernym cycle through {nxt}")
                    if color[nxt] == WHITE:
                        color[nxt] = GRAY
                        stack.append((nxt, iter(self._synsets[nxt].hypernyms)))
                        advanced = True
                        break
                if not advanced:
                    color[node] = BLACK
                    stack.pop()

    def _designate_roots(self) -> None:
        """Ensure each pos has a single root; synthesize one when needed."""
        for pos in POSES:
            natural = sorted(
                sid
                for sid, syn in self._synsets.items()
                if syn.pos == pos and not syn.hypernyms
            )
            if not natural:
                continue
            if len(natural) == 1:
                self._roots[pos] = natural[0]
                continue
            root_id = f"root.{pos}.00"
            self._synsets[root_id] = Synset(
                id=root_id,
                pos=pos,
                lemmas=(f"root_{pos}",),
                gloss=f"synthetic root joining the {pos} hierarchy",
                hypernyms=(),
                hyponyms=tuple(natural),
            )
            for sid in natural:
                syn = self._synsets[sid]
                syn.hypernyms = (root_id,)
            self._roots[pos] = root_id

    def _compute_depths(self) -> None:
        cache: dict[str, int] = {}

        def depth(sid: str) -> int:
            if sid in cache:
                return cache[sid]
            hypers = self._synsets[sid].hypernyms
            value = 0 if not hypers else 1 + min(depth(h) for h in hypers)
            cache[sid] = value
            return value

        for sid, syn in self._synsets.items():
            syn.depth = depth(sid)

    def _build_lemma_index(self) -> None:
        for sid, syn in self._synsets.items():
            _, _, sense, _ = parse_synset_id(sid)
            for lemma in syn.lemmas:
                self._lemma_index.setdefault((lemma.lower(), syn.pos), []).append(sid)
        for key, ids in self._lemma_index.items():
            ids.sort(key=lambda sid: parse_synset_id(sid)[2])

    # --- lookup -------------------------------------------------------------

    def __contains__(self, synset_id: str) -> bool:
        return synset_id in self._synsets or synset_id in self._virtual

    def __len__(self) -> int:
        return len(self._synsets)

    def synset(self, synset_id: str) -> Synset:
        syn = self._synsets.get(synset_id)
        if syn is None:
            raise LexiconError(f"unknown synset {synset_id!r}")
        return syn

    def root(self, pos: str) -> str:
        if pos not in self._roots:
            raise LexiconError(f"no synsets loaded for pos {pos!r}")
        return self._roots[pos]

    def synsets_of(self, lemma: str, pos: str) -> list[Synset]:
        """Senses in sense-number order; virtual synsets never appear here."""
        ids = self._lemma_index.get((lemma.lower().replace(" ", "_"), pos), [])
        return [self._synsets[sid] for sid in ids]

    def hypernyms(self, synset_id: str) -> tuple[str, ...]:
        if synset_id in self._virtual:
            return (self._virtual[synset_id].parent,)
        return self.synset(synset_id).hypernyms

    def hyponyms(self, synset_id: str) -> tuple[str, ...]:
        real = self.synset(synset_id).hyponyms if synset_id in self._synsets else ()
        virtual = tuple(sorted(self._virtual_children.get(synset_id, ())))
        return real + virtual

    def depth(self, synset_id: str) -> int:
        if synset_id in self._virtual:
            return self.synset(self._virtual[synset_id].parent).depth + 1
        return self.synset(synset_id).depth

    def ancestors_or_self(self, synset_id: str) -> set[str]:
        """Hypernym closure including the synset itself (virtual ids resolve up)."""
        seen: set[str] = set()
        stack = [synset_id]
        while stack:
            sid = stack.pop()
            if sid in seen:
                continue
            seen.add(sid)
            stack.extend(self.hypernyms(sid))
        return seen

    def lowest_common_hypernym(self, a: str, b: str) -> Synset:
        """Deepest common ancestor-or-self; ties break lexicographically."""
        a_real = self._virtual[a].parent if a in self._virtual else a
        b_real = self._virtual[b].parent if b in self._virtual else b
        pos_a, pos_b = synset_pos(a_real), synset_pos(b_real)
        if pos_a != pos_b:
            raise LexiconError(f"pos mismatch: {a} vs {b}")
        common = self.ancestors_or_self(a_real) & self.ancestors_or_self(b_real)
        if not common:
            return self.synset(self.root(pos_a))
        best = min(common, key=lambda sid: (-self._synsets[sid].depth, sid))
        return self._synsets[best]

    def hypernym_chain(self, synset_id: str, ancestor: str) -> list[str]:
        """Shortest hypernym path from a synset up to a given ancestor.

        Deterministic: BFS expanding parents in sorted order; returns the
        node sequence [synset_id, ..., ancestor].  Empty when synset_id is
        already the ancestor.
        """
        if synset_id == ancestor:
            return [synset_id]
        prev: dict[str, str] = {}
        queue = [synset_id]
        seen = {synset_id}
        while queue:
            nxt: list[str] = []
            for node in queue:
                for parent in sorted(self.hypernyms(node)):
                    if parent in seen:
                        continue
                    prev[parent] = node
                    if parent == ancestor:
                        path = [parent]
                        while path[-1] != synset_id:
                            path.append(prev[path[-1]])
                        return list(reversed(path))
                    seen.add(parent)
                    nxt.append(parent)
            queue = nxt
        raise LexiconError(f"{ancestor} is not an ancestor of {synset_id}")

    # --- word sense disambiguation -------------------------------------------

    def lesk_disambiguate(
        self, lemma: str, pos: str, context_bag: Mapping[str, int] | Iterable[str]
    ) -> str:
        """Simplified Lesk: maximal gloss+lemma overlap with the context bag.

        Overlap is multiset intersection size; ties and zero overlap fall back
        to the first (most frequent) sense.
        """
        candidates = self.synsets_of(lemma, pos)
        if not candidates:
            raise UnknownLemmaError(f"unknown lemma {lemma!r} ({pos})")
        context = Counter(context_bag)
        best_id, best_overlap = candidates[0].id, -1
        for syn in candidates:
            bag = Counter(_TOKEN_RE.findall(syn.gloss.lower()))
            for syn_lemma in syn.lemmas:
                bag.update(syn_lemma.lower().split("_"))
            overlap = sum(min(count, context[token]) for token, count in bag.items())
            if overlap > best_overlap:
                best_id, best_overlap = syn.id, overlap
        return best_id

    # --- virtual synsets ------------------------------------------------------

    def register_virtual(self, parent: str, name: str) -> VirtualSynset:
        """Attach a user concept under a real synset as slug.virtual.pos.01."""
        with self._lock:
            if parent in self._virtual:
                raise VirtualSynsetError(f"parent {parent!r} is itself virtual")
            if parent not in self._synsets:
                raise VirtualSynsetError(f"parent {parent!r} not found")
            pos = self._synsets[parent].pos
            slug = slugify(name)
            vid = f"{slug}.virtual.{pos}.01"
            if vid in self._virtual:
                raise VirtualSynsetError(f"duplicate virtual synset {vid!r}")
            created = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
            virtual = VirtualSynset(id=vid, parent=parent, name=name, created_at=created)
            self._virtual[vid] = virtual
            self._virtual_children.setdefault(parent, []).append(vid)
            return virtual

    def set_classifier_ref(self, virtual_id: str, classifier_ref: str) -> VirtualSynset:
        with self._lock:
            if virtual_id not in self._virtual:
                raise VirtualSynsetError(f"unknown virtual synset {virtual_id!r}")
            old = self._virtual[virtual_id]
            updated = VirtualSynset(
                id=old.id,
                parent=old.parent,
                name=old.name,
                classifier_ref=classifier_ref,
                created_at=old.created_at,
            )
            self._virtual[virtual_id] = updated
            return updated

    def virtual(self, virtual_id: str) -> VirtualSynset:
        if virtual_id not in self._virtual:
            raise VirtualSynsetError(f"unknown virtual synset {virtual_id!r}")
        return self._virtual[virtual_id]

    def virtual_synsets(self) -> list[VirtualSynset]:
        return sorted(self._virtual.values(), key=lambda v: v.id)

    def find_virtual_by_slug(self, slug: str) -> Optional[VirtualSynset]:
        for v in self._virtual.values():
            if v.id.split(".virtual.")[0] == slug:
                return v
        return None

    def save_virtual_registry(self, path) -> None:
        lines = [
            f"{v.id}|{v.parent}|{v.name}|{v.classifier_ref}|{v.created_at}"
            for v in self.virtual_synsets()
        ]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    def load_virtual_registry(self, path) -> int:
        count = 0
        text = Path(path).read_text(encoding="utf-8")
        with self._lock:
            for lineno, line in enumerate(text.splitlines(), 1):
                if not line.strip():
                    continue
                parts = line.split("|")
                if len(parts) != 5:
                    raise ParseError(f"{path}:{lineno}: expected 5 fields")
                vid, parent, name, classifier_ref, created_at = parts
                if parent not in self._synsets:
                    raise VirtualSynsetError(f"{path}:{lineno}: unknown parent {parent!r}")
                if vid in self._virtual:
                    continue
                self._virtual[vid] = VirtualSynset(vid, parent, name, classifier_ref, created_at)
                self._virtual_children.setdefault(parent, []).append(vid)
                count += 1
        return count


# --- loaders ------------------------------------------------------------------


def load_lexicon(path) -> LexiconDb:
    """Load either a WordNet database directory or a fixture file.

    The fingerprint hashes the base lexicon content only, so registering
    virtual synsets later does not invalidate persisted graphs.
    """
    path = Path(path)
    if path.is_dir():
        return _load_wordnet_dir(path)
    return _load_fixture_file(path)


def _load_fixture_file(path: Path) -> LexiconDb:
    synsets: dict[str, Synset] = {}
    text = path.read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) != 4:
            raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        sid, lemmas, gloss, hypernyms = parts
        try:
            _, pos, _, virtual = parse_synset_id(sid)
        except LexiconError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if virtual:
            raise ParseError(f"{path}:{lineno}: virtual ids not allowed in fixture")
        if sid in synsets:
            raise ParseError(f"{path}:{lineno}: duplicate synset {sid}")
        synsets[sid] = Synset(
            id=sid,
            pos=pos,
            lemmas=tuple(lm.strip() for lm in lemmas.split(",") if lm.strip()),
            gloss=gloss.strip(),
            hypernyms=tuple(h.strip() for h in hypernyms.split(",") if h.strip()),
        )
    fingerprint = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
    return LexiconDb(synsets, fingerprint)


# WordNet 3.x data.pos line:
#   offset lex_filenum ss_type w_cnt word lex_id [word lex_id...]
#   p_cnt [ptr_symbol offset pos source_target ...] [frames] | gloss
_WN_POINTER_HYPERNYM = ("@", "@i")


def _load_wordnet_dir(path: Path) -> LexiconDb:
    digests = hashlib.sha256()
    raw: dict[str, dict] = {}
    sense_order: dict[tuple[str, str], list[str]] = {}
    for pos, suffix in ((NOUN, "noun"), (VERB, "verb")):
        data_file = path / f"data.{suffix}"
        index_file = path / f"index.{suffix}"
        if not data_file.exists():
            continue
        data_text = data_file.read_text(encoding="utf-8")
        digests.update(data_text.encode("utf-8"))
        for lineno, line in enumerate(data_text.splitlines(), 1):
            if not line or line.startswith(" "):
                continue  # license header lines begin with two spaces
            try:
                entry = _parse_wn_data_line(line, pos)
            except (IndexError, ValueError) as exc:
                raise ParseError(f"{data_file}:{lineno}: {exc}") from exc
            raw[f"{pos}{entry['offset']}"] = entry
        if index_file.exists():
            index_text = index_file.read_text(encoding="utf-8")
            digests.update(index_text.encode("utf-8"))
            for lineno, line in enumerate(index_text.splitlines(), 1):
                if not line or line.startswith(" "):
                    continue
                try:
                    lemma, offsets = _parse_wn_index_line(line)
                except (IndexError, ValueError) as exc:
                    raise ParseError(f"{index_file}:{lineno}: {exc}") from exc
                sense_order[(lemma, pos)] = [f"{pos}{off}" for off in offsets]
    if not raw:
        raise ParseError(f"no WordNet data files under {path}")
    synsets = _name_wordnet_synsets(raw, sense_order)
    return LexiconDb(synsets, digests.hexdigest()[:16])


def _parse_wn_data_line(line: str, pos: str) -> dict:
    head, _, gloss = line.partition("|")
    fields = head.split()
    offset = fields[0]
    w_cnt = int(fields[3], 16)
    words = []
    i = 4
    for _ in range(w_cnt):
        words.append(fields[i].lower())
        i += 2  # skip lex_id
    p_cnt = int(fields[i])
    i += 1
    hypernyms = []
    for _ in range(p_cnt):
        symbol, ptr_offset, ptr_pos = fields[i], fields[i + 1], fields[i + 2]
        if symbol in _WN_POINTER_HYPERNYM and ptr_pos == pos:
            hypernyms.append(f"{pos}{ptr_offset}")
        i += 4
    return {
        "offset": offset,
        "pos": pos,
        "words": words,
        "gloss": gloss.strip(),
        "hypernyms": hypernyms,
    }


def _parse_wn_index_line(line: str) -> tuple[str, list[str]]:
    fields = line.split()
    lemma = fields[0].lower()
    p_cnt = int(fields[2])  # actually synset_cnt; pointer count is fields[3]
    ptr_cnt = int(fields[3])
    offsets = fields[4 + ptr_cnt + 2 :]
    if len(offsets) != p_cnt:
        raise ValueError(f"index entry {lemma!r}: expected {p_cnt} offsets, got {len(offsets)}")
    return lemma, offsets


def _name_wordnet_synsets(raw: dict[str, dict], sense_order) -> dict[str, Synset]:
    """Assign lemma.pos.NN ids: NN is the first lemma's sense position."""
    key_to_id: dict[str, str] = {}
    for key, entry in raw.items():
        first = entry["words"][0]
        order = sense_order.get((first, entry["pos"]))
        if order and key in order:
            sense = order.index(key) + 1
        else:
            sense = 1
        key_to_id[key] = f"{first}.{entry['pos']}.{sense:02d}"
    synsets: dict[str, Synset] = {}
    for key, entry in raw.items():
        sid = key_to_id[key]
        hypernyms = []
        for h in entry["hypernyms"]:
            if h not in key_to_id:
                raise ParseError(f"{sid}: hypernym offset {h[1:]} not in database")
            hypernyms.append(key_to_id[h])
        if sid in synsets:
            raise ParseError(f"duplicate synset name {sid}")
        synsets[sid] = Synset(
            id=sid,
            pos=entry["pos"],
            lemmas=tuple(entry["words"]),
            gloss=entry["gloss"],
            hypernyms=tuple(hypernyms),
        )
    return synsets
