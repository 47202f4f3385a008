import threading
import time

import numpy as np
import pytest

from memloom.errors import BackendUnavailable, DimensionMismatch, EmptyInput, TemplateUnbound
from memloom.gateway import (
    BackendConfig,
    ChatRequest,
    EmbeddingVector,
    LlmGateway,
    MockBackend,
    RemoteBackend,
    TransientBackendError,
    create_gateway,
)
from memloom.gateway.remote import BackendTimeout
from memloom.gateway.templates import load_templates


class TestTemplates:
    def test_all_templates_load(self):
        templates = load_templates()
        assert set(templates) == {
            "segment", "extract_semantics", "summarize_episode", "distill_experience",
            "summarize_thread", "title_topic", "title_theme", "select_cards",
            "select_threads", "answer", "judge",
        }
        for template in templates.values():
            assert template.version >= 1
            assert template.system and template.user

    def test_unbound_placeholder_raises(self, gateway):
        with pytest.raises(TemplateUnbound):
            gateway.chat(ChatRequest("segment", {"utterances": "0 | A: hi"}))

    def test_extra_variables_ignored(self, gateway):
        reply = gateway.ask("segment", utterances="0 | A: hi", preceding="x", subsequent="", spare="ok")
        assert reply in ("TC", "TD")

    def test_unknown_template_id(self):
        with pytest.raises(TemplateUnbound):
            ChatRequest("nonexistent", {})


class TestMockChat:
    def test_segment_marker_forces_tc(self, gateway):
        reply = gateway.ask(
            "segment",
            utterances="0 | Melanie: ⟦TC⟧ let's talk about my new job",
            preceding="Caroline: earlier context",
            subsequent="",
        )
        assert reply == "TC"

    def test_segment_same_topic_is_td(self, gateway):
        reply = gateway.ask(
            "segment",
            utterances="0 | Melanie: yes, and it went well",
            preceding="Caroline: how was the interview?",
            subsequent="",
        )
        assert reply == "TD"

    def test_segment_session_start_is_tc(self, gateway):
        reply = gateway.ask("segment", utterances="0 | Melanie: morning!", preceding="", subsequent="")
        assert reply == "TC"

    def test_summarize_episode_truncates_at_400(self, gateway):
        episode = "x" * 900
        reply = gateway.ask("summarize_episode", episode=episode)
        assert reply == "SUMMARY:" + episode[:400]

    def test_mock_chat_is_pure(self, gateway):
        variables = dict(utterances="0 | A: ⟦TC⟧ hi\n1 | B: yes", preceding="", subsequent="")
        first = gateway.chat(ChatRequest("segment", variables))
        second = gateway.chat(ChatRequest("segment", variables))
        assert first == second

    def test_token_counts_nonnegative(self, gateway):
        response = gateway.chat(ChatRequest("answer", {"question": "q?", "context": "a fact."}))
        assert response.prompt_tokens >= 0 and response.completion_tokens >= 0


class TestMockEmbeddings:
    def test_deterministic(self, gateway):
        a = gateway.embed_one("apple pie")
        b = gateway.embed_one("apple pie")
        assert np.array_equal(a.values, b.values)

    def test_shared_tokens_closer_than_disjoint(self, gateway):
        # Two texts sharing 9 of 10 tokens vs two token-disjoint texts.
        base = "alpha beta gamma delta epsilon zeta eta theta iota"
        near_a = gateway.embed_one(base + " kappa")
        near_b = gateway.embed_one(base + " lambda")
        far_a = gateway.embed_one("one two three four five six seven eight nine ten")
        far_b = gateway.embed_one("red blue green yellow purple orange pink brown grey black")
        shared = float(near_a.values @ near_b.values)
        disjoint = float(far_a.values @ far_b.values)
        assert shared > disjoint

    def test_unit_norm(self, gateway):
        for text in ("a", "a b c", "lorem ipsum dolor sit amet", "???"):
            vec = gateway.embed_one(text)
            assert abs(np.linalg.norm(vec.values) - 1.0) < 1e-6

    def test_empty_input(self, gateway):
        with pytest.raises(EmptyInput):
            gateway.embed([])

    def test_dimension_enforced(self):
        gateway = LlmGateway(MockBackend(32), 64)
        with pytest.raises(DimensionMismatch):
            gateway.embed(["text"])


class TestEmbeddingVector:
    def test_normalizes(self):
        vec = EmbeddingVector(np.array([3.0, 4.0]))
        assert abs(np.linalg.norm(vec.values) - 1.0) < 1e-12

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingVector(np.zeros(4))

    def test_read_only(self):
        vec = EmbeddingVector(np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            vec.values[0] = 5.0


class TestRemoteBackend:
    def _backend(self, transport, max_retries=2, max_in_flight=4):
        return RemoteBackend(
            endpoint_url="http://backend.test/v1",
            chat_model="chat-x",
            embed_model="embed-x",
            max_retries=max_retries,
            max_in_flight=max_in_flight,
            transport=transport,
            sleep=lambda s: None,
        )

    def test_unreachable_gives_backend_unavailable_after_retries(self):
        calls = []

        def transport(url, headers, payload, timeout_s):
            calls.append(url)
            raise TransientBackendError("connection refused")

        backend = self._backend(transport, max_retries=2)
        with pytest.raises(BackendUnavailable):
            backend.chat("answer", "sys\n\nuser", {})
        assert len(calls) == 3  # initial attempt + 2 retries

    def test_timeout_surfaces_as_timeout(self):
        def transport(url, headers, payload, timeout_s):
            raise BackendTimeout("too slow")

        from memloom.errors import Timeout

        backend = self._backend(transport, max_retries=1)
        with pytest.raises(Timeout):
            backend.embed(["x"])

    def test_retry_then_success(self):
        attempts = []

        def transport(url, headers, payload, timeout_s):
            attempts.append(1)
            if len(attempts) < 2:
                raise TransientBackendError("blip")
            return {"choices": [{"message": {"content": "hello"}}],
                    "usage": {"prompt_tokens": 3, "completion_tokens": 1}}

        backend = self._backend(transport)
        result = backend.chat("answer", "sys\n\nuser", {})
        assert result["text"] == "hello"
        assert len(attempts) == 2

    def test_max_in_flight_enforced(self):
        active = 0
        peak = 0
        lock = threading.Lock()

        def transport(url, headers, payload, timeout_s):
            nonlocal active, peak
            with lock:
                active += 1
                peak = max(peak, active)
            time.sleep(0.01)
            with lock:
                active -= 1
            return {"data": [{"index": 0, "embedding": [1.0, 0.0]}]}

        backend = self._backend(transport, max_in_flight=2)
        threads = [threading.Thread(target=lambda: backend.embed(["x"])) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert peak <= 2

    def test_embedding_order_from_index_field(self):
        def transport(url, headers, payload, timeout_s):
            return {"data": [
                {"index": 1, "embedding": [0.0, 1.0]},
                {"index": 0, "embedding": [1.0, 0.0]},
            ]}

        backend = self._backend(transport)
        vectors = backend.embed(["first", "second"])
        assert vectors[0][0] == 1.0 and vectors[1][1] == 1.0


class TestCreateGateway:
    def test_mock_kind(self):
        gateway = create_gateway(BackendConfig(kind="mock"), 64)
        assert isinstance(gateway.backend, MockBackend)

    def test_remote_kind(self):
        config = BackendConfig(kind="remote", endpoint_url="http://backend.test/v1")
        gateway = create_gateway(config, 64)
        assert isinstance(gateway.backend, RemoteBackend)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BackendConfig(kind="other")
        with pytest.raises(ValueError):
            BackendConfig(max_in_flight=0)
