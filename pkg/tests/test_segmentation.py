import json
import math
import random

import pytest

from videokg.segmentation import (
    MalformedDocumentError,
    NonMonotonicTimesError,
    Paragraph,
    SegmenterConfig,
    Sentence,
    VideoSource,
    build_paragraphs,
    coherency_score,
    generate_windows,
    parse_transcript,
    segment_sentences,
    uniform_sampler,
)
from videokg.windows import WordTiming


def words_from(text, start=0.0, step=0.5):
    out = []
    t = start
    for w in text.split():
        out.append(WordTiming(w, t, t + step * 0.8))
        t += step
    return out


def sentence(text, start=0.0):
    return Sentence.from_words(words_from(text, start=start))


def scripted_scorer(scores):
    """Score successive accretion attempts from a fixed per-gap sequence.

    Keyed by the candidate sentence's start time so the script is independent
    of how the current paragraph accreted.
    """

    def scorer(context, candidate):
        return scores[candidate.start]

    return scorer


class TestParseTranscript:
    def test_two_words_ordered(self):
        doc = {"video_id": "v1", "words": [{"w": "world", "s": 0.5, "e": 0.9}, {"w": "hello", "s": 0.0, "e": 0.4}]}
        words = parse_transcript(doc)
        assert [w.surface for w in words] == ["hello", "world"]

    def test_empty_words_legal(self):
        assert parse_transcript({"video_id": "v1", "words": []}) == []

    def test_start_after_end_rejected(self):
        doc = {"video_id": "v1", "words": [{"w": "x", "s": 1.0, "e": 0.5}]}
        with pytest.raises(NonMonotonicTimesError):
            parse_transcript(doc)

    def test_malformed_json(self):
        with pytest.raises(MalformedDocumentError):
            parse_transcript("{not json")

    def test_missing_fields(self):
        with pytest.raises(MalformedDocumentError):
            parse_transcript({"video_id": "v1", "words": [{"w": "x", "s": 0.0}]})

    def test_json_text_round_trip(self):
        doc = json.dumps({"video_id": "v1", "words": [{"w": "hi", "s": 0, "e": 0.2}]})
        assert parse_transcript(doc)[0].surface == "hi"


class TestSegmentSentences:
    def test_two_sentences(self):
        words = words_from("I ran. She laughed.")
        sents = segment_sentences(words)
        assert [s.text for s in sents] == ["I ran.", "She laughed."]
        assert sents[0].start == words[0].start
        assert sents[0].end == words[1].end

    def test_abbreviation_not_a_boundary(self):
        sents = segment_sentences(words_from("Dr. Smith arrived."))
        assert len(sents) == 1

    def test_no_punctuation_single_sentence(self):
        words = words_from("one two three four five six seven eight nine ten eleven twelve")
        assert len(segment_sentences(words)) == 1

    def test_question_and_exclamation(self):
        sents = segment_sentences(words_from("Really? Yes! Fine."))
        assert len(sents) == 3

    def test_trailing_quote_still_boundary(self):
        sents = segment_sentences(words_from('He said "stop." Then left.'))
        assert len(sents) == 2


class TestCoherencyScore:
    def test_identical_sentences(self):
        s = sentence("the red car stopped")
        assert coherency_score([s], s) == pytest.approx(1.0)

    def test_disjoint_vocabulary(self):
        assert coherency_score([sentence("red car")], sentence("green tree", start=9.0)) == 0.0

    def test_hand_computed_cosine(self):
        # {red, car, stopped} . {car, turned} = 1 / sqrt(3 * 2)
        got = coherency_score([sentence("the red car stopped")], sentence("the car turned", start=9.0))
        assert got == pytest.approx(1.0 / math.sqrt(6), abs=1e-12)

    def test_empty_candidate_after_stopwords(self):
        assert coherency_score([sentence("red car")], sentence("the of and", start=9.0)) == 0.0


class TestBuildParagraphs:
    def setup_method(self):
        self.sents = [
            sentence("a b", start=0.0),
            sentence("c d", start=10.0),
            sentence("e f", start=20.0),
            sentence("g h", start=30.0),
        ]

    def test_hand_traced_greedy(self):
        scores = {10.0: 0.8, 20.0: 0.2, 30.0: 0.9}
        cfg = SegmenterConfig(coherency_threshold=0.5, max_paragraph_duration=1e9)
        paras = build_paragraphs(self.sents, cfg, scorer=scripted_scorer(scores))
        assert [len(p.sentences) for p in paras] == [2, 2]
        assert paras[0].sentences == tuple(self.sents[:2])

    def test_theta_zero_single_paragraph(self):
        cfg = SegmenterConfig(coherency_threshold=0.0, max_sentences_per_paragraph=99, max_paragraph_duration=1e9)
        paras = build_paragraphs(self.sents, cfg)
        assert len(paras) == 1

    def test_theta_above_one_every_sentence_alone(self):
        cfg = SegmenterConfig(coherency_threshold=1.000001, max_paragraph_duration=1e9)
        paras = build_paragraphs(self.sents, cfg)
        assert len(paras) == len(self.sents)

    def test_max_sentences_limit_cuts(self):
        cfg = SegmenterConfig(coherency_threshold=0.0, max_sentences_per_paragraph=3, max_paragraph_duration=1e9)
        paras = build_paragraphs(self.sents, cfg)
        assert [len(p.sentences) for p in paras] == [3, 1]

    def test_max_duration_limit_cuts(self):
        cfg = SegmenterConfig(coherency_threshold=0.0, max_sentences_per_paragraph=99, max_paragraph_duration=15.0)
        paras = build_paragraphs(self.sents, cfg)
        # sentence at t=20 would stretch the first paragraph past 15s
        assert len(paras) >= 2

    def test_partition_property_random(self):
        rng = random.Random(7)
        for _ in range(50):
            n = rng.randint(1, 20)
            sents = [sentence(f"w{rng.randint(0, 9)} w{rng.randint(0, 9)}", start=float(i)) for i in range(n)]
            cfg = SegmenterConfig(coherency_threshold=rng.random(), max_sentences_per_paragraph=rng.randint(1, 8))
            paras = build_paragraphs(sents, cfg)
            flattened = [s for p in paras for s in p.sentences]
            assert flattened == sents

    def test_greedy_determinism(self):
        cfg = SegmenterConfig(coherency_threshold=0.3)
        a = build_paragraphs(self.sents, cfg)
        b = build_paragraphs(self.sents, cfg)
        assert a == b

    def test_monotone_theta_with_gap_scores(self):
        rng = random.Random(21)
        for _ in range(100):
            n = rng.randint(2, 15)
            sents = [sentence("x y", start=float(i)) for i in range(n)]
            scores = {float(i): rng.random() for i in range(1, n)}
            max_sentences = rng.randint(2, 9)
            counts = []
            for theta in (0.0, 0.25, 0.5, 0.75, 1.0):
                cfg = SegmenterConfig(coherency_threshold=theta, max_sentences_per_paragraph=max_sentences)
                counts.append(len(build_paragraphs(sents, cfg, scorer=scripted_scorer(scores))))
            assert counts == sorted(counts)

    def test_sentence_span_inside_word_hull(self):
        for p in build_paragraphs(self.sents, SegmenterConfig()):
            for s in p.sentences:
                assert s.start == s.words[0].start
                assert s.end == s.words[-1].end


class TestGenerateWindows:
    def test_two_paragraphs_one_fps(self):
        paras = [
            Paragraph((sentence("first part here now", start=0.0),)),
            Paragraph((sentence("second part of the clip", start=4.0),)),
        ]
        # force exact spans
        paras[0].sentences[0].words[-1]
        p1 = Paragraph((Sentence("first", (WordTiming("first", 0.0, 4.0),), 0.0, 4.0),))
        p2 = Paragraph((Sentence("second", (WordTiming("second", 4.0, 9.0),), 4.0, 9.0),))
        video = VideoSource("v1", duration=9.0, fps=1.0)
        windows = list(generate_windows(video, [p1, p2], SegmenterConfig()))
        assert [len(w.frames) for w in windows] == [4, 5]
        assert [w.window_index for w in windows] == [0, 1]
        assert [f.ref.frame_index for f in windows[1].frames] == [4, 5, 6, 7, 8]

    def test_silent_video_chunked_by_max_duration(self):
        video = VideoSource("v1", duration=70.0, fps=1.0)
        cfg = SegmenterConfig(max_paragraph_duration=30.0)
        windows = list(generate_windows(video, [], cfg))
        assert [len(w.frames) for w in windows] == [30, 30, 10]
        assert all(w.transcript.is_empty for w in windows)

    def test_empty_inputs_empty_stream(self):
        video = VideoSource("v1", duration=0.0, fps=1.0)
        assert list(generate_windows(video, [], SegmenterConfig())) == []

    def test_span_clamped_to_duration(self):
        p = Paragraph((Sentence("x", (WordTiming("x", 0.0, 100.0),), 0.0, 100.0),))
        video = VideoSource("v1", duration=3.0, fps=1.0)
        (w,) = list(generate_windows(video, [p], SegmenterConfig()))
        assert [f.ref.frame_index for f in w.frames] == [0, 1, 2]

    def test_uniform_sampler_half_open(self):
        video = VideoSource("v1", duration=10.0, fps=2.0)
        frames = uniform_sampler(video, 1.0, 2.0, 0)
        assert [f.ref.frame_index for f in frames] == [2, 3]
        assert [f.ref.timestamp for f in frames] == [1.0, 1.5]
