"""Synset knowledge graphs: frame-indexed nodes linked through hypernym structure.

Per keyframe, nouns and verbs are pulled from tags, captions, triplets, OCR
and the window transcript, disambiguated against the video-plus-window
context, and turned into evidence-carrying nodes.  Pairwise lowest common
hypernyms connect the nodes; evidence propagates from children to ancestors;
frame graphs merge into window graphs and then into one graph per video.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .kb import FrameRecord, VideoKnowledgeBase, WindowRecord
from .lexicon import NOUN, VERB, LexiconDb, Synset, UnknownLemmaError, synset_pos
from .segmentation import content_tokens
from .windows import Box, FrameRef

GRAPH_SCHEMA_VERSION = 1


class GraphError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class EvidenceItem:
    kind: str  # tag | caption | triplet | ocr | transcript | detection | classifier
    text: str
    box: Optional[Box] = None


@dataclass
class FrameEvidence:
    frame: FrameRef
    items: tuple[EvidenceItem, ...]

    def merged_with(self, other: "FrameEvidence") -> "FrameEvidence":
        items = tuple(sorted(set(self.items) | set(other.items)))
        return FrameEvidence(self.frame, items)

    def __eq__(self, other):
        return (
            isinstance(other, FrameEvidence)
            and self.frame == other.frame
            and set(self.items) == set(other.items)
        )


@dataclass
class SynsetNode:
    synset_id: str
    direct: bool
    evidence: dict[FrameRef, FrameEvidence] = field(default_factory=dict)

    def add_evidence(self, evidence: FrameEvidence) -> None:
        existing = self.evidence.get(evidence.frame)
        self.evidence[evidence.frame] = (
            evidence if existing is None else existing.merged_with(evidence)
        )

    def __eq__(self, other):
        return (
            isinstance(other, SynsetNode)
            and self.synset_id == other.synset_id
            and self.direct == other.direct
            and self.evidence == other.evidence
        )


class KnowledgeGraph:
    """Nodes by synset id plus child->parent hypernym edges."""

    def __init__(
        self,
        video_id: str,
        lexicon_fingerprint: str = "",
        provenance: Iterable[int] = (),
    ):
        self.video_id = video_id
        self.lexicon_fingerprint = lexicon_fingerprint
        self.provenance: set[int] = set(provenance)
        self.nodes: dict[str, SynsetNode] = {}
        self.edges: set[tuple[str, str]] = set()

    def ensure_node(self, synset_id: str, direct: bool = False) -> SynsetNode:
        node = self.nodes.get(synset_id)
        if node is None:
            node = SynsetNode(synset_id=synset_id, direct=direct)
            self.nodes[synset_id] = node
        elif direct:
            node.direct = True
        return node

    def add_edge(self, child: str, parent: str) -> None:
        if child == parent:
            return
        if child not in self.nodes or parent not in self.nodes:
            raise GraphError(f"edge endpoints missing: {child} -> {parent}")
        self.edges.add((child, parent))

    def children_of(self, synset_id: str) -> list[str]:
        return sorted(c for c, p in self.edges if p == synset_id)

    def __eq__(self, other):
        return (
            isinstance(other, KnowledgeGraph)
            and self.video_id == other.video_id
            and self.nodes == other.nodes
            and self.edges == other.edges
        )

    def __repr__(self):
        return (
            f"KnowledgeGraph({self.video_id!r}, nodes={sorted(self.nodes)}, "
            f"edges={sorted(self.edges)})"
        )


# --- word extraction -----------------------------------------------------------


@dataclass
class WordHit:
    word: str  # resolved lemma
    pos: str
    synsets: list[Synset]
    items: list[EvidenceItem]


def lemma_candidates(token: str, pos: str) -> list[str]:
    """Morphological guesses, most specific first (riding -> ride)."""
    token = token.lower()
    forms = [token]
    if pos == VERB:
        if token.endswith("ies") and len(token) > 4:
            forms.append(token[:-3] + "y")
        if token.endswith("ing") and len(token) > 4:
            stem = token[:-3]
            forms.extend((stem, stem + "e"))
            if len(stem) >= 3 and stem[-1] == stem[-2]:
                forms.append(stem[:-1])
        if token.endswith("ed") and len(token) > 3:
            stem = token[:-2]
            forms.extend((stem, stem + "e"))
            if len(stem) >= 3 and stem[-1] == stem[-2]:
                forms.append(stem[:-1])
        if token.endswith("es") and len(token) > 3:
            forms.append(token[:-2])
        if token.endswith("s") and not token.endswith("ss") and len(token) > 2:
            forms.append(token[:-1])
    else:
        if token.endswith("ies") and len(token) > 4:
            forms.append(token[:-3] + "y")
        if token.endswith("es") and len(token) > 3:
            forms.append(token[:-2])
        if token.endswith("s") and not token.endswith("ss") and len(token) > 2:
            forms.append(token[:-1])
    return forms


def resolve_lemma(token: str, pos: str, lexicon: LexiconDb) -> Optional[tuple[str, list[Synset]]]:
    for form in lemma_candidates(token, pos):
        synsets = lexicon.synsets_of(form, pos)
        if synsets:
            return form, synsets
    return None


def extract_words(
    frame_record: FrameRecord,
    kb_window: WindowRecord,
    lexicon: LexiconDb,
) -> dict[str, WordHit]:
    """Candidate synsets per word of one keyframe record.

    Tokens come from tags, caption content words, triplet endpoints and
    relations, OCR text, and the window transcript.  A token is treated as a
    verb only when it matched the relation slot of a triplet; everything else
    is looked up as a noun.  Tokens absent from the lexicon are dropped.
    """
    verb_tokens = set()
    for triplet in frame_record.triplets:
        first = triplet.relation.split()[0] if triplet.relation.split() else ""
        if first:
            verb_tokens.add(first.lower())

    hits: dict[str, WordHit] = {}

    def contribute(token: str, item: EvidenceItem) -> None:
        token = token.lower().strip()
        if not token:
            return
        pos = VERB if token in verb_tokens else NOUN
        resolved = resolve_lemma(token, pos, lexicon)
        if resolved is None:
            return
        lemma, synsets = resolved
        hit = hits.get(lemma)
        if hit is None:
            hits[lemma] = WordHit(word=lemma, pos=pos, synsets=synsets, items=[item])
        elif item not in hit.items:
            hit.items.append(item)

    for tag in frame_record.tags:
        contribute(tag.label.replace(" ", "_"), EvidenceItem(kind="tag", text=tag.label))
    for det in frame_record.detections:
        contribute(det.label.replace(" ", "_"), EvidenceItem("detection", det.label, det.box))
    for caption in frame_record.captions:
        item = EvidenceItem(kind="caption", text=caption.text, box=caption.box)
        for token in content_tokens(caption.text):
            contribute(token, item)
    for triplet in frame_record.triplets:
        text = f"{triplet.subject} {triplet.relation} {triplet.object}"
        item = EvidenceItem(kind="triplet", text=text)
        contribute(triplet.subject.split()[-1], item)
        contribute(triplet.object.split()[-1], item)
        first = triplet.relation.split()[0] if triplet.relation.split() else ""
        contribute(first, item)
    for span in frame_record.ocr:
        item = EvidenceItem(kind="ocr", text=span.text, box=span.box)
        for token in content_tokens(span.text):
            contribute(token, item)
    for token in content_tokens(kb_window.transcript.text):
        contribute(token, EvidenceItem(kind="transcript", text=token))
    return hits


def window_context_bag(kb_window: WindowRecord) -> Counter:
    """Window-scope context: caption and tag content words."""
    bag: Counter = Counter()
    for frame in kb_window.keyframes:
        for caption in frame.captions:
            bag.update(content_tokens(caption.text))
        for tag in frame.tags:
            bag.update(content_tokens(tag.label))
    return bag


def video_context_bag(kb: VideoKnowledgeBase) -> Counter:
    """Video-scope context: transcript content words across all windows."""
    bag: Counter = Counter()
    for window in kb.windows:
        bag.update(content_tokens(window.transcript.text))
    return bag


def disambiguate_frame(
    words_map: Mapping[str, WordHit],
    kb_window: WindowRecord,
    video_context: Counter,
    lexicon: LexiconDb,
) -> dict[str, str]:
    """Pick one sense per word with the video+window context bag."""
    context = video_context + window_context_bag(kb_window)
    senses: dict[str, str] = {}
    for word, hit in words_map.items():
        try:
            senses[word] = lexicon.lesk_disambiguate(word, hit.pos, context)
        except UnknownLemmaError:
            continue
    return senses


def construct_synset_nodes(
    senses: Mapping[str, str],
    words_map: Mapping[str, WordHit],
    frame_ref: FrameRef,
) -> list[SynsetNode]:
    """One direct node per assigned sense, carrying this frame's evidence."""
    by_id: dict[str, SynsetNode] = {}
    for word in sorted(senses):
        sid = senses[word]
        node = by_id.get(sid)
        if node is None:
            node = SynsetNode(synset_id=sid, direct=True)
            by_id[sid] = node
        node.add_evidence(FrameEvidence(frame_ref, tuple(sorted(set(words_map[word].items)))))
    return list(by_id.values())


def construct_graph(
    nodes: Sequence[SynsetNode],
    lexicon: LexiconDb,
    video_id: str = "",
    provenance: Iterable[int] = (),
) -> KnowledgeGraph:
    """Connect one frame's nodes through their lowest common hypernyms.

    For every unordered same-pos pair the LCH is materialized (direct=False
    when newly created) together with the full hypernym chains down to both
    nodes; evidence then propagates childward-to-ancestor until closed.
    """
    graph = KnowledgeGraph(video_id, lexicon.fingerprint, provenance)
    for node in nodes:
        existing = graph.ensure_node(node.synset_id, direct=node.direct)
        for evidence in node.evidence.values():
            existing.add_evidence(evidence)
    ids = sorted(graph.nodes)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if synset_pos(_real_id(a, lexicon)) != synset_pos(_real_id(b, lexicon)):
                continue
            lch = lexicon.lowest_common_hypernym(a, b)
            graph.ensure_node(lch.id)
            for start in (a, b):
                chain = lexicon.hypernym_chain(start, lch.id)
                for child, parent in zip(chain, chain[1:]):
                    graph.ensure_node(child)
                    graph.ensure_node(parent)
                    graph.add_edge(child, parent)
    propagate_evidence(graph)
    return graph


def _real_id(synset_id: str, lexicon: LexiconDb) -> str:
    from .lexicon import is_virtual_id

    return lexicon.virtual(synset_id).parent if is_virtual_id(synset_id) else synset_id


def propagate_evidence(graph: KnowledgeGraph) -> None:
    """Close evidence upward: every parent absorbs its descendants' evidence."""
    edges = sorted(graph.edges)
    changed = True
    while changed:
        changed = False
        for child, parent in edges:
            child_node = graph.nodes[child]
            parent_node = graph.nodes[parent]
            for frame, evidence in child_node.evidence.items():
                merged = parent_node.evidence.get(frame)
                if merged is None:
                    parent_node.evidence[frame] = FrameEvidence(frame, evidence.items)
                    changed = True
                else:
                    union = merged.merged_with(evidence)
                    if union != merged:
                        parent_node.evidence[frame] = union
                        changed = True


def merge_graphs(
    graphs: Sequence[KnowledgeGraph],
    video_id: Optional[str] = None,
) -> KnowledgeGraph:
    """Union node and edge sets; evidence unions; propagation re-closed."""
    if video_id is None:
        ids = {g.video_id for g in graphs}
        if len(ids) > 1:
            raise GraphError(f"merging graphs of different videos {sorted(ids)} without a merged id")
        video_id = ids.pop() if ids else ""
    fingerprints = {g.lexicon_fingerprint for g in graphs if g.lexicon_fingerprint}
    if len(fingerprints) > 1:
        raise GraphError("merging graphs built against different lexicons")
    merged = KnowledgeGraph(
        video_id,
        fingerprints.pop() if fingerprints else "",
    )
    for g in graphs:
        merged.provenance |= g.provenance
        for sid, node in g.nodes.items():
            target = merged.ensure_node(sid, direct=node.direct)
            for evidence in node.evidence.values():
                target.add_evidence(evidence)
        merged.edges |= g.edges
    propagate_evidence(merged)
    return merged


def video_to_kg(kb: VideoKnowledgeBase, lexicon: LexiconDb) -> KnowledgeGraph:
    """Full conversion: per window, per keyframe, then merge everything."""
    video_context = video_context_bag(kb)
    window_graphs: list[KnowledgeGraph] = []
    for window in kb.windows:
        frame_graphs: list[KnowledgeGraph] = []
        for frame in window.keyframes:
            words = extract_words(frame, window, lexicon)
            senses = disambiguate_frame(words, window, video_context, lexicon)
            nodes = construct_synset_nodes(senses, words, kb.frame_ref(window.index, frame))
            frame_graphs.append(
                construct_graph(nodes, lexicon, video_id=kb.video_id, provenance=(window.index,))
            )
        if frame_graphs:
            window_graphs.append(merge_graphs(frame_graphs, video_id=kb.video_id))
    graph = merge_graphs(window_graphs, video_id=kb.video_id)
    graph.lexicon_fingerprint = lexicon.fingerprint
    return graph


# --- persistence -----------------------------------------------------------------


def graph_to_document(graph: KnowledgeGraph) -> dict:
    nodes = []
    for sid in sorted(graph.nodes):
        node = graph.nodes[sid]
        evidence = []
        for frame in sorted(node.evidence, key=lambda r: (r.window_index, r.frame_index)):
            ev = node.evidence[frame]
            evidence.append(
                {
                    "window": frame.window_index,
                    "frame": frame.frame_index,
                    "t": frame.timestamp,
                    "kinds": sorted({item.kind for item in ev.items}),
                    "items": [
                        {
                            "kind": item.kind,
                            "text": item.text,
                            "box": list(item.box) if item.box else None,
                        }
                        for item in sorted(ev.items)
                    ],
                }
            )
        nodes.append({"id": sid, "direct": node.direct, "evidence": evidence})
    return {
        "version": GRAPH_SCHEMA_VERSION,
        "video_id": graph.video_id,
        "lexicon_fingerprint": graph.lexicon_fingerprint,
        "provenance": sorted(graph.provenance),
        "nodes": nodes,
        "edges": [{"child": c, "parent": p} for c, p in sorted(graph.edges)],
    }


def graph_from_document(doc: dict) -> KnowledgeGraph:
    if doc.get("version") != GRAPH_SCHEMA_VERSION:
        raise GraphError(f"unsupported graph schema version {doc.get('version')!r}")
    graph = KnowledgeGraph(
        video_id=str(doc.get("video_id", "")),
        lexicon_fingerprint=str(doc.get("lexicon_fingerprint", "")),
        provenance=doc.get("provenance", ()),
    )
    for raw in doc.get("nodes", ()):
        node = graph.ensure_node(raw["id"], direct=bool(raw.get("direct")))
        for ev in raw.get("evidence", ()):
            frame = FrameRef(graph.video_id, int(ev["window"]), int(ev["frame"]), float(ev["t"]))
            items = tuple(
                EvidenceItem(
                    kind=item["kind"],
                    text=item["text"],
                    box=tuple(item["box"]) if item.get("box") else None,
                )
                for item in ev.get("items", ())
            )
            node.add_evidence(FrameEvidence(frame, items))
    for edge in doc.get("edges", ()):
        graph.add_edge(edge["child"], edge["parent"])
    return graph


def write_graph(graph: KnowledgeGraph, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(graph_to_document(graph), indent=2, ensure_ascii=False) + "\n"
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    os.replace(tmp, path)
    return path


def load_graph(path: Path | str) -> KnowledgeGraph:
    return graph_from_document(json.loads(Path(path).read_text(encoding="utf-8")))
