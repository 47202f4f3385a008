import json

import pytest

from memloom.errors import (
    EmptyConversation,
    InvariantViolation,
    MalformedInput,
    UnknownCategory,
)
from memloom.ingest import (
    build_conversation,
    conversation_to_dict,
    load_conversation,
    load_qa,
    save_conversation,
)

from fixture_data import scripted_conversation, scripted_qa, write_fixture


class TestLoadConversation:
    def test_parses_sessions_and_utterances(self, tmp_path):
        data = {
            "conversation_id": "c1",
            "participants": ["A", "B"],
            "sessions": [
                {
                    "index": s,
                    "datetime": f"2026-01-0{s + 1}T09:00:00",
                    "utterances": [
                        {"speaker_id": "A" if t % 2 == 0 else "B", "text": f"line {t}",
                         "timestamp": f"2026-01-0{s + 1}T09:0{t}:00"}
                        for t in range(4)
                    ],
                }
                for s in range(2)
            ],
        }
        path = write_fixture(tmp_path, data, "conv.json")
        conversation = load_conversation(path)
        assert len(conversation.sessions) == 2
        assert conversation.utterance_count() == 8
        assert conversation.participants == frozenset({"A", "B"})

    def test_third_speaker_rejected(self, tmp_path):
        data = scripted_conversation()
        data["sessions"][0]["utterances"][0]["speaker_id"] = "Mallory"
        path = write_fixture(tmp_path, data, "conv.json")
        with pytest.raises(InvariantViolation):
            load_conversation(path)

    def test_three_participants_rejected(self, tmp_path):
        data = scripted_conversation()
        data["participants"].append("Mallory")
        path = write_fixture(tmp_path, data, "conv.json")
        with pytest.raises(InvariantViolation):
            load_conversation(path)

    def test_out_of_order_timestamps_rejected(self, tmp_path):
        data = scripted_conversation()
        data["sessions"][0]["utterances"][2]["timestamp"] = "2020-01-01T00:00:00"
        path = write_fixture(tmp_path, data, "conv.json")
        with pytest.raises(InvariantViolation):
            load_conversation(path)

    def test_missing_timestamp_rejected(self, tmp_path):
        data = scripted_conversation()
        del data["sessions"][0]["utterances"][0]["timestamp"]
        path = write_fixture(tmp_path, data, "conv.json")
        with pytest.raises(MalformedInput):
            load_conversation(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MalformedInput):
            load_conversation(tmp_path / "nope.json")

    def test_unparseable_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(MalformedInput):
            load_conversation(path)

    def test_empty_sessions_rejected(self, tmp_path):
        data = scripted_conversation()
        data["sessions"] = []
        path = write_fixture(tmp_path, data, "conv.json")
        with pytest.raises(EmptyConversation):
            load_conversation(path)

    def test_session_indices_strictly_increasing(self, tmp_path):
        data = scripted_conversation()
        data["sessions"][1]["index"] = 0
        path = write_fixture(tmp_path, data, "conv.json")
        with pytest.raises(InvariantViolation):
            load_conversation(path)

    def test_caption_preserved(self, tmp_path):
        data = scripted_conversation()
        data["sessions"][0]["utterances"][0]["image_caption"] = "photo of a pottery bowl"
        path = write_fixture(tmp_path, data, "conv.json")
        conversation = load_conversation(path)
        assert conversation.sessions[0].utterances[0].image_caption == "photo of a pottery bowl"


class TestRoundTrip:
    def test_serialize_parse_equal(self, tmp_path):
        path = write_fixture(tmp_path, scripted_conversation(), "conv.json")
        conversation = load_conversation(path)
        out = tmp_path / "copy.json"
        save_conversation(conversation, out)
        assert load_conversation(out) == conversation

    def test_utterance_count_matches_source(self, tmp_path):
        data = scripted_conversation()
        expected = sum(len(s["utterances"]) for s in data["sessions"])
        path = write_fixture(tmp_path, data, "conv.json")
        assert load_conversation(path).utterance_count() == expected

    def test_dict_round_trip(self):
        conversation = build_conversation(scripted_conversation())
        assert build_conversation(conversation_to_dict(conversation)) == conversation


class TestLoadQA:
    def test_order_preserved(self, tmp_path):
        path = write_fixture(tmp_path, scripted_qa(), "qa.json")
        items = load_qa(path)
        assert len(items) == 10
        assert [i.question for i in items] == [q["question"] for q in scripted_qa()]

    def test_unknown_category(self, tmp_path):
        data = scripted_qa()
        data[0]["category"] = "adversarial"
        path = write_fixture(tmp_path, data, "qa.json")
        with pytest.raises(UnknownCategory):
            load_qa(path)

    def test_empty_list_ok(self, tmp_path):
        path = write_fixture(tmp_path, [], "qa.json")
        assert load_qa(path) == []

    def test_evidence_parsed(self, tmp_path):
        path = write_fixture(tmp_path, scripted_qa(), "qa.json")
        items = load_qa(path)
        assert items[0].evidence == ((0, 2),)

    def test_non_array_rejected(self, tmp_path):
        path = tmp_path / "qa.json"
        path.write_text(json.dumps({"question": "?"}), encoding="utf-8")
        with pytest.raises(MalformedInput):
            load_qa(path)
