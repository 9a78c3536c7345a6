"""Query-to-graph rendering and overlap-based retrieval over the graph store."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .graph import (
    KnowledgeGraph,
    SynsetNode,
    construct_graph,
    resolve_lemma,
)
from .lexicon import NOUN, VERB, LexiconDb
from .segmentation import STOPWORDS, content_tokens
from .windows import FrameRef

_TOKEN_RE = re.compile(r"[a-z0-9']+")


class RetrievalError(ValueError):
    pass


class NoKnownTermsError(RetrievalError):
    pass


class FingerprintMismatchError(RetrievalError):
    pass


@dataclass
class QueryGraph:
    graph: KnowledgeGraph
    direct_ids: frozenset[str]  # nodes originating from query words, not connectives
    origin: str


@dataclass(frozen=True)
class RetrievalHit:
    video_id: str
    score: float
    matched: tuple[str, ...]
    frames: tuple[FrameRef, ...]
    specificity: int


def query_to_graph(text: str, lexicon: LexiconDb) -> QueryGraph:
    """Render a text query into the synset hierarchy.

    Virtual-synset names are matched by slug over token n-grams before lemma
    lookup; remaining tokens resolve as nouns first, verbs second, using the
    query itself as the disambiguation context.
    """
    raw_tokens = _TOKEN_RE.findall(text.lower())
    consumed = [False] * len(raw_tokens)
    nodes: list[SynsetNode] = []
    direct: set[str] = set()

    for size in (4, 3, 2, 1):
        for start in range(0, len(raw_tokens) - size + 1):
            if any(consumed[start : start + size]):
                continue
            slug = "_".join(raw_tokens[start : start + size])
            virtual = lexicon.find_virtual_by_slug(slug)
            if virtual is not None:
                nodes.append(SynsetNode(synset_id=virtual.id, direct=True))
                direct.add(virtual.id)
                for i in range(start, start + size):
                    consumed[i] = True

    context = content_tokens(text)
    for i, token in enumerate(raw_tokens):
        if consumed[i] or token in STOPWORDS:
            continue
        resolved = resolve_lemma(token, NOUN, lexicon) or resolve_lemma(token, VERB, lexicon)
        if resolved is None:
            continue
        lemma, synsets = resolved
        sid = lexicon.lesk_disambiguate(lemma, synsets[0].pos, context)
        if sid not in direct:
            nodes.append(SynsetNode(synset_id=sid, direct=True))
            direct.add(sid)

    if not nodes:
        raise NoKnownTermsError(f"no lexicon terms in query {text!r}")
    graph = construct_graph(nodes, lexicon, video_id="<query>")
    return QueryGraph(graph=graph, direct_ids=frozenset(direct), origin=text)


def overlap_score(
    query: QueryGraph, video_graph: KnowledgeGraph, lexicon: LexiconDb
) -> tuple[float, list[str], int]:
    """|Q_direct ∩ V| / |Q_direct| plus matched ids and their depth sum."""
    if (
        query.graph.lexicon_fingerprint
        and video_graph.lexicon_fingerprint
        and query.graph.lexicon_fingerprint != video_graph.lexicon_fingerprint
    ):
        raise FingerprintMismatchError(
            f"query built against lexicon {query.graph.lexicon_fingerprint}, "
            f"video graph against {video_graph.lexicon_fingerprint}"
        )
    matched = sorted(sid for sid in query.direct_ids if sid in video_graph.nodes)
    score = len(matched) / len(query.direct_ids)
    specificity = sum(lexicon.depth(sid) for sid in matched)
    return score, matched, specificity


def rank_frames(video_graph: KnowledgeGraph, matched: Sequence[str]) -> tuple[FrameRef, ...]:
    """Frames from matched nodes' evidence, by vote count then earliest time."""
    votes: dict[FrameRef, int] = {}
    for sid in matched:
        for frame in video_graph.nodes[sid].evidence:
            votes[frame] = votes.get(frame, 0) + 1
    ordered = sorted(
        votes, key=lambda f: (-votes[f], f.timestamp, f.window_index, f.frame_index)
    )
    return tuple(ordered)


def retrieve(
    query: QueryGraph | str,
    graphs: dict[str, KnowledgeGraph],
    lexicon: LexiconDb,
    top_k: Optional[int] = None,
) -> list[RetrievalHit]:
    """Score every video graph; rank by (score, specificity, video_id).

    Zero-overlap videos are omitted.  ``graphs`` is a store snapshot
    (video_id -> current graph).
    """
    if isinstance(query, str):
        query = query_to_graph(query, lexicon)
    hits: list[RetrievalHit] = []
    for video_id in sorted(graphs):
        graph = graphs[video_id]
        score, matched, specificity = overlap_score(query, graph, lexicon)
        if score <= 0.0:
            continue
        hits.append(
            RetrievalHit(
                video_id=video_id,
                score=score,
                matched=tuple(matched),
                frames=rank_frames(graph, matched),
                specificity=specificity,
            )
        )
    hits.sort(key=lambda h: (-h.score, -h.specificity, h.video_id))
    if top_k is not None:
        hits = hits[:top_k]
    return hits
