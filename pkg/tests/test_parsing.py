from __future__ import annotations

import pytest

from docqa.errors import ParseError
from docqa.parsing import parse_grounded_answer


def run_case(case, valid_ids):
    return parse_grounded_answer(
        case["raw"], expects_box=True, valid_ids=frozenset(valid_ids)
    )


class TestMalformedCorpus:
    def test_every_labeled_case(self, malformed_cases):
        valid_ids = malformed_cases["valid_ids"]
        for case in malformed_cases["cases"]:
            if case["expect"] == "error":
                with pytest.raises(ParseError):
                    run_case(case, valid_ids)
                continue
            got = run_case(case, valid_ids)
            expect = case["expect"]
            assert got.answer == expect["answer"], case["name"]
            assert got.not_found == expect["not_found"], case["name"]
            got_ids = list(got.region_ids) if got.region_ids is not None else None
            assert got_ids == expect["region_ids"], case["name"]
            got_box = got.box.as_list() if got.box is not None else None
            assert got_box == expect["box"], case["name"]

    def test_recovery_rate_at_least_18_of_20(self, malformed_cases):
        valid_ids = malformed_cases["valid_ids"]
        recovered = 0
        for case in malformed_cases["cases"]:
            try:
                run_case(case, valid_ids)
                recovered += 1
            except ParseError:
                pass
        assert len(malformed_cases["cases"]) == 20
        assert recovered >= 18

    def test_never_emits_ids_outside_valid_set(self, malformed_cases):
        valid_ids = set(malformed_cases["valid_ids"])
        for case in malformed_cases["cases"]:
            try:
                got = run_case(case, valid_ids)
            except ParseError:
                continue
            if got.region_ids:
                assert set(got.region_ids) <= valid_ids, case["name"]


class TestParseBehavior:
    def test_plain_not_found_text(self):
        assert parse_grounded_answer("not found").not_found
        assert parse_grounded_answer("  N/A  ").not_found

    def test_unparseable_keeps_raw(self):
        raw = "The answer is unclear."
        with pytest.raises(ParseError) as info:
            parse_grounded_answer(raw)
        assert info.value.raw == raw

    def test_duplicate_ids_deduped_in_order(self):
        got = parse_grounded_answer(
            '{"answer":"x","region_ids":[3,1,3,1]}', valid_ids={1, 3}
        )
        assert got.region_ids == (3, 1)

    def test_no_filtering_without_valid_ids(self):
        got = parse_grounded_answer('{"answer":"x","region_ids":[42]}')
        assert got.region_ids == (42,)

    def test_idempotent_under_reserialization(self, malformed_cases):
        valid_ids = set(malformed_cases["valid_ids"])
        for case in malformed_cases["cases"]:
            try:
                first = run_case(case, valid_ids)
            except ParseError:
                continue
            again = parse_grounded_answer(
                first.to_json_text(), expects_box=True, valid_ids=valid_ids
            )
            assert again == first, case["name"]

    def test_confidence_note_captured(self):
        got = parse_grounded_answer('{"answer":"x","note":"low contrast"}')
        assert got.confidence_note == "low contrast"

    def test_inverted_box_dropped(self):
        got = parse_grounded_answer('{"answer":"x","box":[30,5,10,8]}')
        assert got.box is None
        assert got.answer == "x"
