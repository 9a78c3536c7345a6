import pytest

from videokg.graph import (
    EvidenceItem,
    FrameEvidence,
    SynsetNode,
    construct_graph,
    disambiguate_frame,
    extract_words,
    graph_from_document,
    graph_to_document,
    lemma_candidates,
    merge_graphs,
    video_context_bag,
    video_to_kg,
    write_graph,
    load_graph,
)
from videokg.kb import (
    CaptionEntry,
    FrameRecord,
    OcrEntry,
    TagEntry,
    TranscriptInfo,
    TripletEntry,
    VideoKnowledgeBase,
    WindowRecord,
)
from videokg.windows import FrameRef

from .kb_fixtures import make_kb
from .oracles import canonical_graph, video_to_kg_oracle


def simple_kb(tags, video_id="v1", transcript="", captions=(), triplets=(), ocr=()):
    frame = FrameRecord(
        frame_index=0,
        t=0.0,
        tags=tuple(TagEntry(t) for t in tags),
        captions=tuple(CaptionEntry(c) for c in captions),
        triplets=tuple(TripletEntry(*t) for t in triplets),
        ocr=tuple(OcrEntry(o) for o in ocr),
    )
    window = WindowRecord(index=0, transcript=TranscriptInfo(transcript, 0.0, 10.0), keyframes=(frame,))
    return VideoKnowledgeBase(video_id=video_id, fingerprint="t", windows=(window,))


class TestExtractWords:
    def test_tags_direct_lookup(self, lexicon):
        kb = simple_kb(["policeman", "chef"])
        words = extract_words(kb.windows[0].keyframes[0], kb.windows[0], lexicon)
        assert set(words) == {"policeman", "chef"}
        assert [s.id for s in words["policeman"].synsets] == ["policeman.n.01"]

    def test_caption_nouns_and_lemmatized_verb(self, lexicon):
        kb = simple_kb(
            [],
            captions=["a man riding a horse"],
            triplets=[("man", "riding", "horse")],
        )
        words = extract_words(kb.windows[0].keyframes[0], kb.windows[0], lexicon)
        assert {"man", "horse", "ride"} <= set(words)
        assert words["ride"].pos == "v"
        assert words["man"].pos == "n"

    def test_ocr_gibberish_excluded(self, lexicon):
        kb = simple_kb([], ocr=["qqq zork"], captions=["zzz"])
        words = extract_words(kb.windows[0].keyframes[0], kb.windows[0], lexicon)
        assert words == {}

    def test_ocr_lexicon_word_included(self, lexicon):
        kb = simple_kb([], ocr=["CAR 42"])
        words = extract_words(kb.windows[0].keyframes[0], kb.windows[0], lexicon)
        assert set(words) == {"car"}
        assert words["car"].items[0].kind == "ocr"

    def test_empty_record(self, lexicon):
        kb = simple_kb([])
        assert extract_words(kb.windows[0].keyframes[0], kb.windows[0], lexicon) == {}

    def test_multiword_tag(self, lexicon):
        kb = simple_kb(["face mask"])
        words = extract_words(kb.windows[0].keyframes[0], kb.windows[0], lexicon)
        assert set(words) == {"face_mask"}

    def test_lemma_candidates_ordering(self):
        assert lemma_candidates("riding", "v")[0] == "riding"
        assert "ride" in lemma_candidates("riding", "v")
        assert "run" in lemma_candidates("running", "v")
        assert "horse" in lemma_candidates("horses", "n")


class TestDisambiguate:
    def test_single_sense_identity(self, lexicon):
        kb = simple_kb(["chef"])
        words = extract_words(kb.windows[0].keyframes[0], kb.windows[0], lexicon)
        senses = disambiguate_frame(words, kb.windows[0], video_context_bag(kb), lexicon)
        assert senses == {"chef": "chef.n.01"}

    def test_video_transcript_context_drives_sense(self, lexicon):
        kb = simple_kb(["bank"], transcript="the river water was high near the sloping land")
        words = extract_words(kb.windows[0].keyframes[0], kb.windows[0], lexicon)
        senses = disambiguate_frame(words, kb.windows[0], video_context_bag(kb), lexicon)
        assert senses["bank"] == "bank.n.02"

    def test_empty_map(self, lexicon):
        kb = simple_kb([])
        assert disambiguate_frame({}, kb.windows[0], video_context_bag(kb), lexicon) == {}


def ref(video_id="v1", w=0, f=0, t=0.0):
    return FrameRef(video_id, w, f, t)


def direct_node(sid, frame, kind="tag", text=None):
    node = SynsetNode(synset_id=sid, direct=True)
    node.add_evidence(FrameEvidence(frame, (EvidenceItem(kind, text or sid),)))
    return node


class TestConstructGraph:
    def test_worked_example_policeman_chef(self, lexicon):
        frame = ref()
        nodes = [direct_node("policeman.n.01", frame), direct_node("chef.n.01", frame)]
        graph = construct_graph(nodes, lexicon, video_id="v1")
        assert set(graph.nodes) == {"policeman.n.01", "chef.n.01", "person.n.01"}
        assert graph.edges == {
            ("policeman.n.01", "person.n.01"),
            ("chef.n.01", "person.n.01"),
        }
        person = graph.nodes["person.n.01"]
        assert not person.direct
        union = set(graph.nodes["policeman.n.01"].evidence[frame].items) | set(
            graph.nodes["chef.n.01"].evidence[frame].items
        )
        assert set(person.evidence[frame].items) == union

    def test_single_node_graph(self, lexicon):
        graph = construct_graph([direct_node("car.n.01", ref())], lexicon, video_id="v1")
        assert set(graph.nodes) == {"car.n.01"}
        assert graph.edges == set()

    def test_ancestor_pair(self, lexicon):
        frame = ref()
        nodes = [direct_node("car.n.01", frame), direct_node("artifact.n.01", frame)]
        graph = construct_graph(nodes, lexicon, video_id="v1")
        assert graph.edges == {("car.n.01", "artifact.n.01")}
        assert set(graph.nodes["artifact.n.01"].evidence[frame].items) >= set(
            graph.nodes["car.n.01"].evidence[frame].items
        )
        assert graph.nodes["artifact.n.01"].direct

    def test_distant_pair_builds_full_chains(self, lexicon):
        frame = ref()
        nodes = [direct_node("policeman.n.01", frame), direct_node("car.n.01", frame)]
        graph = construct_graph(nodes, lexicon, video_id="v1")
        assert set(graph.nodes) == {
            "policeman.n.01", "person.n.01", "car.n.01", "artifact.n.01", "entity.n.01",
        }
        assert graph.edges == {
            ("policeman.n.01", "person.n.01"),
            ("person.n.01", "entity.n.01"),
            ("car.n.01", "artifact.n.01"),
            ("artifact.n.01", "entity.n.01"),
        }

    def test_noun_verb_not_cross_linked(self, lexicon):
        frame = ref()
        nodes = [direct_node("car.n.01", frame), direct_node("ride.v.01", frame)]
        graph = construct_graph(nodes, lexicon, video_id="v1")
        assert graph.edges == set()


class TestMergeGraphs:
    def build(self, lexicon, sid_frames):
        nodes = [direct_node(sid, frame) for sid, frame in sid_frames]
        return construct_graph(nodes, lexicon, video_id="v1")

    def test_idempotent(self, lexicon):
        g = self.build(lexicon, [("policeman.n.01", ref()), ("chef.n.01", ref())])
        assert merge_graphs([g, g]) == g

    def test_commutative(self, lexicon):
        g1 = self.build(lexicon, [("policeman.n.01", ref(f=0))])
        g2 = self.build(lexicon, [("chef.n.01", ref(f=1, t=1.0))])
        assert merge_graphs([g1, g2]) == merge_graphs([g2, g1])

    def test_associative(self, lexicon):
        g1 = self.build(lexicon, [("policeman.n.01", ref(f=0))])
        g2 = self.build(lexicon, [("chef.n.01", ref(f=1, t=1.0))])
        g3 = self.build(lexicon, [("car.n.01", ref(f=2, t=2.0))])
        left = merge_graphs([merge_graphs([g1, g2]), g3])
        right = merge_graphs([g1, merge_graphs([g2, g3])])
        assert left == right

    def test_shared_person_node_unions_evidence(self, lexicon):
        g1 = self.build(lexicon, [("policeman.n.01", ref(f=0)), ("chef.n.01", ref(f=0))])
        g2 = self.build(lexicon, [("man.n.01", ref(f=1, t=1.0)), ("chef.n.01", ref(f=1, t=1.0))])
        merged = merge_graphs([g1, g2])
        person = merged.nodes["person.n.01"]
        assert set(person.evidence) == {ref(f=0), ref(f=1, t=1.0)}


class TestVideoToKg:
    def test_empty_kb(self, lexicon):
        kb = VideoKnowledgeBase(video_id="v1", fingerprint="t", windows=())
        graph = video_to_kg(kb, lexicon)
        assert graph.nodes == {} and graph.edges == set()

    def test_paper_worked_example(self, lexicon):
        kb = simple_kb(["policeman", "chef"])
        graph = video_to_kg(kb, lexicon)
        assert set(graph.nodes) == {"policeman.n.01", "chef.n.01", "person.n.01"}
        frame = kb.frame_ref(0, kb.windows[0].keyframes[0])
        assert frame in graph.nodes["person.n.01"].evidence
        assert graph.nodes["person.n.01"].direct is False

    @pytest.mark.parametrize("seed", range(10))
    def test_equals_bruteforce_oracle(self, lexicon, seed):
        kb = make_kb(f"video-{seed}", seed=seed)
        graph = video_to_kg(kb, lexicon)
        oracle = video_to_kg_oracle(kb, lexicon)
        assert canonical_graph(graph) == oracle

    def test_evidence_closure_invariant(self, lexicon):
        for seed in range(5):
            kb = make_kb(f"v{seed}", seed=100 + seed)
            graph = video_to_kg(kb, lexicon)
            for child, parent in graph.edges:
                child_ev = graph.nodes[child].evidence
                parent_ev = graph.nodes[parent].evidence
                for frame, ev in child_ev.items():
                    assert frame in parent_ev
                    assert set(ev.items) <= set(parent_ev[frame].items)

    def test_direct_nodes_have_evidence(self, lexicon):
        kb = make_kb("v-direct", seed=7)
        graph = video_to_kg(kb, lexicon)
        for node in graph.nodes.values():
            if node.direct:
                assert node.evidence

    def test_provenance_windows(self, lexicon):
        kb = make_kb("v-prov", seed=3)
        graph = video_to_kg(kb, lexicon)
        assert graph.provenance <= {w.index for w in kb.windows}


class TestPersistence:
    def test_round_trip(self, lexicon, tmp_path):
        kb = make_kb("v-rt", seed=11)
        graph = video_to_kg(kb, lexicon)
        path = write_graph(graph, tmp_path / "graph.json")
        loaded = load_graph(path)
        assert loaded == graph
        assert loaded.lexicon_fingerprint == graph.lexicon_fingerprint

    def test_document_deterministic(self, lexicon):
        kb = make_kb("v-det", seed=13)
        a = graph_to_document(video_to_kg(kb, lexicon))
        b = graph_to_document(video_to_kg(kb, lexicon))
        assert a == b

    def test_bad_version(self):
        with pytest.raises(Exception):
            graph_from_document({"version": 99})
