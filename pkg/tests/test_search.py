from datetime import datetime

import pytest

from memloom.cards import CardBuilder
from memloom.cluster import Thread, TopicCluster
from memloom.errors import EmptyStore
from memloom.index import VectorRecord, VectorStore
from memloom.search import MemorySearcher, Query, SearchMode
from memloom.synaptic import ExperienceTrace

T0 = datetime(2026, 3, 1, 10, 0)


@pytest.fixture
def populated(gateway):
    """Store with two episodes, one pottery thread, plus both users' cards."""
    store = VectorStore(64)
    episodes = {
        "e0": "SUMMARY:Melanie: I adopted a dog named Luna at the shelter.",
        "e1": "SUMMARY:Caroline: I photographed the lighthouse at dawn.",
        "e2": "SUMMARY:Melanie: My pottery class starts on Tuesday.",
    }
    vectors = gateway.embed(list(episodes.values()))
    store.upsert(
        [
            VectorRecord(eid, "episode", vec, text, {"conversation_id": "c1"})
            for (eid, text), vec in zip(episodes.items(), vectors)
        ]
    )

    builder = CardBuilder(gateway, store, "c1")
    pottery_traces = {
        "t0": ExperienceTrace("t0", "Melanie", "Melanie: My pottery class starts on Tuesday.", T0, "e2"),
        "t1": ExperienceTrace("t1", "Melanie", "Melanie: I glazed a pottery bowl in turquoise.", T0, "e2"),
    }
    photo_traces = {
        "t2": ExperienceTrace("t2", "Caroline", "Caroline: I photographed the lighthouse at dawn.", T0, "e1"),
    }
    melanie_card = builder.build_card(
        "Melanie",
        [TopicCluster(0, ("t0", "t1"))],
        [Thread("c1:Melanie:T0.0", 0, ("t0", "t1"), (T0, T0))],
        pottery_traces,
        version=1,
        as_of=T0,
    )
    caroline_card = builder.build_card(
        "Caroline",
        [TopicCluster(0, ("t2",))],
        [Thread("c1:Caroline:T0.0", 0, ("t2",), (T0, T0))],
        photo_traces,
        version=1,
        as_of=T0,
    )
    return store, [melanie_card, caroline_card]


class TestRetrieveEpisodic:
    def test_k_caps_results(self, gateway, populated):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        hits = searcher.retrieve_episodic(Query("pottery", k=2))
        assert len(hits) <= 2

    def test_identical_text_ranks_first(self, gateway, populated):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        text = "SUMMARY:Melanie: I adopted a dog named Luna at the shelter."
        hits = searcher.retrieve_episodic(Query(text, k=3))
        assert hits[0].id == "e0"
        assert hits[0].score == pytest.approx(1.0, abs=1e-6)

    def test_empty_store_raises(self, gateway):
        searcher = MemorySearcher(gateway, VectorStore(64), [])
        with pytest.raises(EmptyStore):
            searcher.retrieve_episodic(Query("anything"))

    def test_small_store_returns_all(self, gateway, populated):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        hits = searcher.retrieve_episodic(Query("lighthouse pottery dog", k=10))
        assert len(hits) == 3


class TestSelectCards:
    def test_query_naming_user_selects_their_card(self, gateway, populated):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        chosen = searcher.select_cards(Query("What pottery class did Melanie join?"), cards)
        assert [c.user_id for c in chosen] == ["Melanie"]

    def test_user_hint_short_circuits(self, gateway, populated):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        chosen = searcher.select_cards(Query("What about pottery?", user_hint="Caroline"), cards)
        assert [c.user_id for c in chosen] == ["Caroline"]

    def test_no_title_overlap_falls_back_to_all(self, gateway, populated):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        chosen = searcher.select_cards(Query("zzz qqq xyzzy"), cards)
        assert len(chosen) == len(cards)


class TestSelectThreads:
    def test_title_overlap_selects_thread(self, gateway, populated):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        melanie = next(c for c in cards if c.user_id == "Melanie")
        chosen = searcher.select_threads(Query("Tell me about the pottery class"), melanie)
        assert chosen == ["c1:Melanie:T0.0"]

    def test_fabricated_id_dropped(self, gateway, populated, monkeypatch):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        melanie = next(c for c in cards if c.user_id == "Melanie")
        monkeypatch.setattr(
            searcher.gateway, "ask", lambda template_id, **v: "c1:Melanie:T0.0\nfake-id-123"
        )
        chosen = searcher.select_threads(Query("pottery"), melanie)
        assert chosen == ["c1:Melanie:T0.0"]

    def test_empty_card_empty_selection(self, gateway, populated):
        from memloom.cards import MemoryCard

        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        empty = MemoryCard("Nobody", "Nobody: No Memories Yet", (), 1, T0)
        assert searcher.select_threads(Query("pottery"), empty) == []


class TestAnswerQuery:
    def test_full_mode_answers_with_citations(self, gateway, populated):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        answer, bundle = searcher.answer_query(Query("What dog did Melanie adopt at the shelter?"))
        assert "Luna" in answer.text
        assert answer.cited_episode_ids
        assert set(answer.cited_episode_ids) <= {h.id for h in bundle.episodic_hits}
        assert set(answer.cited_thread_ids) <= set(bundle.selected_thread_ids)

    def test_cards_absent_degrades_to_episodic(self, gateway, populated):
        store, _ = populated
        searcher = MemorySearcher(gateway, store, cards=[])
        answer, bundle = searcher.answer_query(Query("What dog did Melanie adopt at the shelter?"))
        assert "Luna" in answer.text
        assert bundle.thread_contents == []
        assert answer.cited_thread_ids == ()

    def test_episodic_only_mode_skips_threads(self, gateway, populated):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards, mode=SearchMode.EPISODIC_ONLY)
        answer, bundle = searcher.answer_query(Query("Which pottery class starts on Tuesday for Melanie?"))
        assert bundle.selected_thread_ids == []
        assert answer.cited_thread_ids == ()

    def test_no_agentic_mode_uses_thread_similarity(self, gateway, populated):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards, mode=SearchMode.NO_AGENTIC)
        _, bundle = searcher.answer_query(Query("What pottery glaze did Melanie use for the bowl?"))
        assert bundle.selected_thread_ids  # similarity-picked, no card walk
        assert bundle.selected_cards == []

    def test_semantic_mode_pulls_facts(self, gateway, populated):
        store, cards = populated
        fact_vec = gateway.embed_one("Melanie | I glazed a pottery bowl in turquoise")
        store.upsert(
            [VectorRecord("f0", "fact", fact_vec, "Melanie | I glazed a pottery bowl in turquoise", {})]
        )
        searcher = MemorySearcher(gateway, store, cards, mode=SearchMode.SEMANTIC_20)
        _, bundle = searcher.answer_query(Query("What glaze did Melanie use?"))
        assert bundle.fact_hits

    def test_missing_thread_not_cited(self, gateway, populated, monkeypatch):
        store, cards = populated
        searcher = MemorySearcher(gateway, store, cards)
        original_select = searcher.select_threads
        monkeypatch.setattr(
            searcher,
            "select_threads",
            lambda query, card: original_select(query, card) + ["c1:ghost:T9.9"]
            if card.user_id == "Melanie"
            else original_select(query, card),
        )
        # Bypass the known-id validation by injecting after selection.
        answer, bundle = searcher.answer_query(Query("pottery class Melanie"))
        assert "c1:ghost:T9.9" not in answer.cited_thread_ids

    def test_query_validation(self):
        with pytest.raises(ValueError):
            Query("")
        with pytest.raises(ValueError):
            Query("x", k=0)
