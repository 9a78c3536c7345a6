import pytest

from videokg.kb import (
    KbValidationError,
    MissingKeyframesError,
    OutOfOrderWindowError,
    SchemaVersionError,
    consume,
    from_document,
    load_kb,
    to_document,
    write_kb,
)
from videokg.keyframes import KEYFRAMES_SLOT
from videokg.windows import (
    Caption,
    Detection,
    Frame,
    FrameRef,
    Keyframe,
    KeyframeSelection,
    Tag,
    TranscriptSegment,
    TripletItem,
    WordTiming,
    new_window,
)

from .kb_fixtures import make_kb


def processed_window(video_id="v1", index=0, base_frame=0):
    refs = [FrameRef(video_id, index, base_frame + i, float(base_frame + i)) for i in range(2)]
    words = (WordTiming("hello", refs[0].timestamp, refs[-1].timestamp + 0.5),)
    transcript = TranscriptSegment("hello", words, refs[0].timestamp, refs[-1].timestamp + 1.0)
    w = new_window(video_id, [Frame(r) for r in refs], transcript, window_index=index)
    selection = KeyframeSelection(
        keyframes=(Keyframe(refs[0], 12.5, 0),),
        chosen_k=1,
        scaled_inertia_curve=((1, 1.02),),
    )
    w = w.with_slot(KEYFRAMES_SLOT, selection, producer="keyframes")
    w = w.with_slot("tags", (Tag(refs[0], "car", 0.9),), producer="tagger")
    w = w.with_slot("detections", (Detection(refs[0], "car", (0.1, 0.1, 0.5, 0.5), 0.8),), producer="grounder")
    w = w.with_slot("captions", (Caption(refs[0], "a car", None, 0),), producer="captioner")
    w = w.with_slot("triplets", (TripletItem(refs[0], "car", "on", "road"),), producer="parser")
    return w


class TestConsume:
    def test_two_window_stub_run(self, tmp_path):
        windows = [processed_window(index=0, base_frame=0), processed_window(index=1, base_frame=10)]
        kb = consume(windows, tmp_path / "kb.json", fingerprint="stages:abc")
        assert len(kb.windows) == 2
        assert kb.fingerprint == "stages:abc"
        assert (tmp_path / "kb.json").exists()

    def test_out_of_order_rejected(self):
        windows = [processed_window(index=1, base_frame=10)]
        with pytest.raises(OutOfOrderWindowError):
            consume(windows)

    def test_missing_keyframes_slot(self):
        refs = [FrameRef("v1", 0, 0, 0.0)]
        w = new_window("v1", [Frame(r) for r in refs])
        with pytest.raises(MissingKeyframesError):
            consume([w])

    def test_rerun_byte_identical(self, tmp_path):
        for name in ("a.json", "b.json"):
            consume(
                [processed_window(index=0), processed_window(index=1, base_frame=10)],
                tmp_path / name,
                fingerprint="f",
            )
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_slot_projection(self):
        kb = consume([processed_window()])
        frame = kb.windows[0].keyframes[0]
        assert frame.tags[0].label == "car"
        assert frame.detections[0].box == (0.1, 0.1, 0.5, 0.5)
        assert frame.captions[0].text == "a car"
        assert frame.triplets[0].relation == "on"


class TestRoundTrip:
    def test_load_consume_identity(self, tmp_path):
        kb = consume([processed_window(index=0), processed_window(index=1, base_frame=5)])
        path = write_kb(kb, tmp_path / "kb.json")
        assert load_kb(path) == kb

    @pytest.mark.parametrize("seed", range(4))
    def test_fixture_kbs_round_trip(self, tmp_path, seed):
        kb = make_kb(f"rt-{seed}", seed=seed)
        path = write_kb(kb, tmp_path / f"kb{seed}.json")
        assert load_kb(path) == kb


def valid_doc():
    kb = consume([processed_window()])
    return to_document(kb)


class TestValidation:
    def test_schema_version_mismatch(self):
        doc = valid_doc()
        doc["version"] = 99
        with pytest.raises(SchemaVersionError):
            from_document(doc)

    def test_box_x_reversed(self):
        doc = valid_doc()
        doc["windows"][0]["keyframes"][0]["detections"][0]["box"] = [0.5, 0.1, 0.1, 0.5]
        with pytest.raises(KbValidationError) as err:
            from_document(doc)
        assert "keyframes[0].detections[0]" in str(err.value)

    def test_box_outside_unit_square(self):
        doc = valid_doc()
        doc["windows"][0]["keyframes"][0]["detections"][0]["box"] = [0.1, 0.1, 1.2, 0.5]
        with pytest.raises(KbValidationError):
            from_document(doc)

    def test_confidence_out_of_range(self):
        doc = valid_doc()
        doc["windows"][0]["keyframes"][0]["tags"][0]["confidence"] = 1.5
        with pytest.raises(KbValidationError):
            from_document(doc)

    def test_non_contiguous_windows(self):
        doc = valid_doc()
        doc["windows"][0]["index"] = 3
        with pytest.raises(KbValidationError):
            from_document(doc)

    def test_detection_requires_box(self):
        doc = valid_doc()
        doc["windows"][0]["keyframes"][0]["detections"][0]["box"] = None
        with pytest.raises(KbValidationError):
            from_document(doc)

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        with pytest.raises(KbValidationError):
            load_kb(path)
