from __future__ import annotations

import json

import pytest

from icat.aspects import (
    AlignmentError,
    Aspect,
    AspectError,
    AspectSet,
    Qrels,
    align_llm,
    align_manual,
    covered_aspects,
    generate_aspects,
    load_gold_aspects,
    load_qrels,
    load_topics,
)
from icat.backends import MockChatBackend
from icat.claims import AtomicClaim, ClaimParseError
from icat.grounding import Evidence, GroundingResult

from conftest import chat_gateway


def write_topics(tmp_path, records):
    path = tmp_path / "topics.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


def topic_record(query_id="q1", n_subtopics=4):
    return {
        "query_id": query_id,
        "title": f"title {query_id}",
        "description": f"description for {query_id}",
        "subtopics": [
            {"id": str(i), "text": f"aspect {i}"} for i in range(1, n_subtopics + 1)
        ],
    }


def grounding_result(claim_id, supported, first_doc=None, evidence=()):
    return GroundingResult(
        claim_id=claim_id,
        supported=supported,
        evidence=tuple(evidence),
        first_supporting_doc=first_doc,
    )


class TestGoldAspects:
    def test_file_order_and_provenance(self, tmp_path):
        path = write_topics(tmp_path, [topic_record("q1", 4)])
        aspect_set = load_gold_aspects(path, "q1")
        assert len(aspect_set.aspects) == 4
        assert aspect_set.provenance == "gold"
        assert [a.aspect_id for a in aspect_set.aspects] == ["1", "2", "3", "4"]

    def test_unknown_query_rejected(self, tmp_path):
        path = write_topics(tmp_path, [topic_record("q1")])
        with pytest.raises(AspectError, match="q9"):
            load_gold_aspects(path, "q9")

    def test_duplicate_aspect_id_rejected(self, tmp_path):
        record = topic_record("q1", 2)
        record["subtopics"][1]["id"] = "1"
        path = write_topics(tmp_path, [record])
        with pytest.raises(AspectError, match="duplicate"):
            load_gold_aspects(path, "q1")

    def test_zero_subtopics_rejected(self, tmp_path):
        record = topic_record("q1")
        record["subtopics"] = []
        path = write_topics(tmp_path, [record])
        with pytest.raises(AspectError, match="no gold subtopics"):
            load_gold_aspects(path, "q1")

    def test_load_topics_keeps_title_and_description(self, tmp_path):
        path = write_topics(tmp_path, [topic_record("q1"), topic_record("q2")])
        topics = load_topics(path)
        assert topics["q2"].title == "title q2"
        assert topics["q1"].description == "description for q1"


class TestGenerateAspects:
    def test_cap_at_ten(self):
        backend = MockChatBackend(
            rules=[(["QUERYX"], json.dumps([f"aspect {i}" for i in range(12)]))]
        )
        aspect_set = generate_aspects("QUERYX text", chat_gateway(backend), query_id="q1")
        assert len(aspect_set.aspects) == 10
        assert aspect_set.provenance == "generated"

    def test_ordinal_ids(self):
        backend = MockChatBackend(rules=[(["QUERYY"], '["a", "b", "c"]')])
        aspect_set = generate_aspects("QUERYY text", chat_gateway(backend))
        assert [a.aspect_id for a in aspect_set.aspects] == ["1", "2", "3"]

    def test_empty_list_rejected(self):
        backend = MockChatBackend(rules=[(["QUERYZ"], "[]")])
        with pytest.raises(AspectError, match="no aspects generated"):
            generate_aspects("QUERYZ text", chat_gateway(backend))

    def test_empty_query_rejected(self):
        with pytest.raises(AspectError):
            generate_aspects("  ", chat_gateway(MockChatBackend()))


class TestLoadQrels:
    def write(self, tmp_path, lines):
        path = tmp_path / "qrels.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def test_graded_to_binary(self, tmp_path):
        path = self.write(
            tmp_path,
            ["q1 1 d1 2", "q1 1 d2 0", "q1 2 d3 -2", "q1 2 d4 1"],
        )
        qrels = load_qrels(path)
        assert qrels.is_relevant("q1", "1", "d1") is True
        assert qrels.is_relevant("q1", "1", "d2") is False
        assert qrels.is_relevant("q1", "2", "d3") is False
        assert qrels.is_relevant("q1", "2", "d4") is True

    def test_malformed_line_reports_number(self, tmp_path):
        path = self.write(tmp_path, ["q1 1 d1 1", "broken line"])
        with pytest.raises(AspectError, match=":2"):
            load_qrels(path)

    def test_conflicting_duplicate_rejected(self, tmp_path):
        path = self.write(tmp_path, ["q1 1 d1 1", "q1 1 d1 0"])
        with pytest.raises(AspectError, match="conflicting"):
            load_qrels(path)

    def test_consistent_duplicate_tolerated(self, tmp_path):
        path = self.write(tmp_path, ["q1 1 d1 2", "q1 1 d1 1"])
        assert load_qrels(path).is_relevant("q1", "1", "d1")

    def test_binary_conversion_monotone(self, tmp_path):
        for low, high in [(-2, 0), (0, 1), (1, 3), (-1, 4)]:
            qrels_low = load_qrels(self.write(tmp_path, [f"q1 1 d1 {low}"]))
            qrels_high = load_qrels(self.write(tmp_path, [f"q1 1 d1 {high}"]))
            assert qrels_high.is_relevant("q1", "1", "d1") or not qrels_low.is_relevant(
                "q1", "1", "d1"
            )

    def test_relevant_aspects_lookup(self, tmp_path):
        path = self.write(
            tmp_path, ["q1 2 d7 1", "q1 5 d7 2", "q1 3 d7 0", "q2 1 d7 1"]
        )
        assert load_qrels(path).relevant_aspects("q1", "d7") == {"2", "5"}


class TestAlignManual:
    def test_direct_lookup(self):
        qrels = Qrels({("q1", "2", "d7"): True, ("q1", "5", "d7"): True})
        results = [grounding_result(1, True, "d7")]
        alignment = align_manual("q1", results, qrels)
        assert alignment.mapping == {1: frozenset({"2", "5"})}
        assert alignment.method == "manual"

    def test_unjudged_doc_yields_empty_set(self):
        qrels = Qrels({})
        alignment = align_manual("q1", [grounding_result(1, True, "d9")], qrels)
        assert alignment.mapping == {1: frozenset()}

    def test_unsupported_claims_omitted(self):
        qrels = Qrels({("q1", "1", "d1"): True})
        alignment = align_manual(
            "q1",
            [grounding_result(1, False), grounding_result(2, True, "d1")],
            qrels,
        )
        assert set(alignment.mapping) == {2}

    def test_web_mode_rejected(self):
        with pytest.raises(AlignmentError, match="corpus"):
            align_manual("q1", [grounding_result(1, True, None)], Qrels({}))

    def test_aspect_filter_drops_foreign_ids(self):
        qrels = Qrels({("q1", "2", "d7"): True, ("q1", "99", "d7"): True})
        alignment = align_manual(
            "q1", [grounding_result(1, True, "d7")], qrels, aspect_ids={"1", "2", "3"}
        )
        assert alignment.mapping == {1: frozenset({"2"})}

    def test_all_supporting_unions_docs(self):
        qrels = Qrels({("q1", "1", "dA"): True, ("q1", "2", "dB"): True})
        evidence = [
            Evidence("s1", "dA", 1, "entailment", 0.97),
            Evidence("s2", "dC", 2, "neutral", 0.05),
            Evidence("s3", "dB", 3, "entailment", 0.97),
        ]
        first_only = align_manual(
            "q1", [grounding_result(1, True, "dA", evidence)], qrels
        )
        assert first_only.mapping == {1: frozenset({"1"})}
        unioned = align_manual(
            "q1", [grounding_result(1, True, "dA", evidence)], qrels, all_supporting=True
        )
        assert unioned.mapping == {1: frozenset({"1", "2"})}


def aspect_set(n=3, query_id="q1"):
    return AspectSet(
        query_id=query_id,
        aspects=tuple(Aspect(str(i), f"aspect {i}") for i in range(1, n + 1)),
        provenance="gold",
    )


def claims_list(n):
    return [AtomicClaim(claim_id=i, text=f"claim {i}") for i in range(1, n + 1)]


class TestAlignLlm:
    def test_fixture_inversion(self):
        reply = '{"aspect_id": 1, "claim_ids": [1, 2]}\n{"aspect_id": 3, "claim_ids": [2]}'
        backend = MockChatBackend(rules=[(["claim 1"], reply)])
        alignment = align_llm(
            "query text", aspect_set(3), claims_list(2), chat_gateway(backend)
        )
        assert alignment.mapping == {
            1: frozenset({"1"}),
            2: frozenset({"1", "3"}),
        }
        assert alignment.method == "llm"

    def test_unknown_claim_id_dropped(self):
        reply = '{"aspect_id": 1, "claim_ids": [1, 99]}'
        backend = MockChatBackend(rules=[(["claim 1"], reply)])
        alignment = align_llm("q", aspect_set(2), claims_list(1), chat_gateway(backend))
        assert alignment.mapping == {1: frozenset({"1"})}

    def test_unknown_aspect_id_dropped(self):
        reply = '{"aspect_id": 9, "claim_ids": [1]}\n{"aspect_id": 2, "claim_ids": [1]}'
        backend = MockChatBackend(rules=[(["claim 1"], reply)])
        alignment = align_llm("q", aspect_set(2), claims_list(1), chat_gateway(backend))
        assert alignment.mapping == {1: frozenset({"2"})}

    def test_zero_claims_no_backend_call(self):
        backend = MockChatBackend()
        alignment = align_llm("q", aspect_set(2), [], chat_gateway(backend))
        assert alignment.mapping == {}
        assert backend.calls == []

    def test_prose_preamble_stripped(self):
        reply = 'Sure, here is the mapping:\n{"aspect_id": 1, "claim_ids": [1]}'
        backend = MockChatBackend(rules=[(["claim 1"], reply)])
        alignment = align_llm("q", aspect_set(1), claims_list(1), chat_gateway(backend))
        assert alignment.mapping == {1: frozenset({"1"})}

    def test_json_array_accepted(self):
        reply = '[{"aspect_id": 1, "claim_ids": [1]}, {"aspect_id": 2, "claim_ids": [1]}]'
        backend = MockChatBackend(rules=[(["claim 1"], reply)])
        alignment = align_llm("q", aspect_set(2), claims_list(1), chat_gateway(backend))
        assert alignment.mapping == {1: frozenset({"1", "2"})}

    def test_wholesale_failure_reprompts_then_errors(self):
        backend = MockChatBackend(rules=[(["claim 1"], "no json at all")])
        with pytest.raises(ClaimParseError):
            align_llm("q", aspect_set(1), claims_list(1), chat_gateway(backend))
        assert len(backend.calls) == 2

    def test_covered_subset_of_aspect_ids(self):
        reply = '{"aspect_id": 1, "claim_ids": [1]}\n{"aspect_id": 7, "claim_ids": [1]}'
        backend = MockChatBackend(rules=[(["claim 1"], reply)])
        alignment = align_llm("q", aspect_set(2), claims_list(1), chat_gateway(backend))
        assert covered_aspects(alignment) <= aspect_set(2).ids()

    def test_determinism(self):
        reply = '{"aspect_id": 1, "claim_ids": [1]}'

        def once():
            backend = MockChatBackend(rules=[(["claim 1"], reply)])
            return align_llm("q", aspect_set(2), claims_list(1), chat_gateway(backend))

        assert once() == once()


class TestCoveredAspects:
    def test_empty(self):
        from icat.aspects import AlignmentMap

        assert covered_aspects(AlignmentMap("q1", {}, "llm")) == set()

    def test_union(self):
        from icat.aspects import AlignmentMap

        alignment = AlignmentMap(
            "q1", {1: frozenset({"a"}), 2: frozenset({"a", "b"})}, "llm"
        )
        assert covered_aspects(alignment) == {"a", "b"}

    def test_only_empty_sets(self):
        from icat.aspects import AlignmentMap

        alignment = AlignmentMap("q1", {1: frozenset(), 2: frozenset()}, "manual")
        assert covered_aspects(alignment) == set()


class TestAspectSetInvariants:
    def test_generated_cap_enforced(self):
        with pytest.raises(AspectError):
            AspectSet(
                query_id="q1",
                aspects=tuple(Aspect(str(i), f"a{i}") for i in range(11)),
                provenance="generated",
            )

    def test_gold_allows_more_than_ten(self):
        aspect_set = AspectSet(
            query_id="q1",
            aspects=tuple(Aspect(str(i), f"a{i}") for i in range(12)),
            provenance="gold",
        )
        assert len(aspect_set.aspects) == 12
