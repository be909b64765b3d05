from __future__ import annotations

import random
from itertools import product

import pytest

from docqa.core import BBox, Prediction, QARecord
from docqa.errors import UsageError, ValidationError
from docqa.metrics import (
    IOU_THRESHOLDS,
    AnlsConfig,
    anls_score,
    iou,
    levenshtein_distance,
    map_at_iou,
    normalized_similarity,
    score_run,
)


def dp_distance_oracle(a: str, b: str) -> int:
    """Full-matrix dynamic programming, kept independent of the package."""
    m, n = len(a), len(b)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        table[i][0] = i
    for j in range(n + 1):
        table[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            table[i][j] = min(
                table[i - 1][j] + 1, table[i][j - 1] + 1, table[i - 1][j - 1] + cost
            )
    return table[m][n]


def bfs_distance_oracle(source: str, targets: set[str], alphabet: str) -> dict[str, int]:
    """Exhaustive edit-sequence search from one string to every target.

    Explores the universe of strings no longer than the longest target (an
    optimal edit sequence never needs to overshoot that length).
    """
    max_len = max(len(t) for t in targets)
    dist = {source: 0}
    frontier = [source]
    found = {t: 0 for t in targets if t == source}
    while frontier and len(found) < len(targets):
        nxt = []
        for s in frontier:
            d = dist[s]
            neighbors = set()
            for i in range(len(s)):
                neighbors.add(s[:i] + s[i + 1 :])  # deletion
                for c in alphabet:
                    if c != s[i]:
                        neighbors.add(s[:i] + c + s[i + 1 :])  # substitution
            if len(s) < max_len:
                for i in range(len(s) + 1):
                    for c in alphabet:
                        neighbors.add(s[:i] + c + s[i:])  # insertion
            for n in neighbors:
                if n not in dist:
                    dist[n] = d + 1
                    nxt.append(n)
                    if n in targets and n not in found:
                        found[n] = d + 1
        frontier = nxt
    return {t: dist[t] for t in targets}


def rand_box(rng: random.Random, size: int = 100) -> BBox:
    x1 = rng.randint(0, size - 1)
    y1 = rng.randint(0, size - 1)
    return BBox(x1, y1, rng.randint(x1 + 1, size), rng.randint(y1 + 1, size))


def raster_iou_oracle(a: BBox, b: BBox, size: int = 100) -> float:
    hits_a = {(x, y) for x in range(a.x1, a.x2) for y in range(a.y1, a.y2)}
    hits_b = {(x, y) for x in range(b.x1, b.x2) for y in range(b.y1, b.y2)}
    union = hits_a | hits_b
    if not union:
        return 0.0
    return len(hits_a & hits_b) / len(union)


class TestLevenshtein:
    def test_empty(self):
        assert levenshtein_distance("", "") == 0

    def test_known_values(self):
        assert levenshtein_distance("cat", "bat") == 1
        assert levenshtein_distance("kitten", "sitting") == 3

    def test_exhaustive_short_strings(self):
        alphabet = "ab"
        universe = [
            "".join(p) for n in range(5) for p in product(alphabet, repeat=n)
        ]
        targets = set(universe)
        for a in universe:
            oracle = bfs_distance_oracle(a, targets, alphabet)
            for b in universe:
                assert levenshtein_distance(a, b) == oracle[b], (a, b)

    def test_symmetry_and_triangle_inequality(self):
        rng = random.Random(12)
        alphabet = "abcdefgh"
        strings = [
            "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
            for _ in range(60)
        ]
        for _ in range(300):
            a, b, c = rng.choice(strings), rng.choice(strings), rng.choice(strings)
            ab = levenshtein_distance(a, b)
            assert ab == levenshtein_distance(b, a)
            assert ab <= levenshtein_distance(a, c) + levenshtein_distance(c, b)


class TestSimilarityAndAnls:
    def test_identical(self):
        assert normalized_similarity("cat", "cat") == 1.0

    def test_both_empty_is_perfect(self):
        assert normalized_similarity("", "") == 1.0

    def test_known_fraction(self):
        assert normalized_similarity("cat", "bat") == pytest.approx(2 / 3)

    def test_distance_equals_max_length(self):
        assert normalized_similarity("abc", "") == 0.0

    def test_case_fold_exact_match(self):
        assert anls_score("science & technology", ["SCIENCE & TECHNOLOGY"]) == 1.0

    def test_above_threshold_kept(self):
        assert anls_score("cat", ["bat"]) == pytest.approx(2 / 3)

    def test_below_threshold_zeroed(self):
        assert anls_score("xyzq", ["cat"]) == 0.0

    def test_empty_golds_rejected(self):
        with pytest.raises(UsageError):
            anls_score("x", [])

    def test_whitespace_collapse(self):
        assert anls_score("  a   b ", ["A B"]) == 1.0

    def test_case_invariance_property(self):
        rng = random.Random(5)
        for _ in range(200):
            s = "".join(rng.choice("aAbB xyZ") for _ in range(rng.randint(0, 10)))
            g = "".join(rng.choice("aAbB xyZ") for _ in range(rng.randint(1, 10)))
            assert anls_score(s, [g]) == anls_score(s.upper(), [g.lower()])

    def test_max_over_golds(self):
        assert anls_score("cat", ["dog", "cat", "car"]) == 1.0


class TestIou:
    def test_identical(self):
        assert iou(BBox(3, 4, 10, 12), BBox(3, 4, 10, 12)) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0.0

    def test_known_third(self):
        assert iou(BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)) == pytest.approx(1 / 3)

    def test_zero_area_pairs(self):
        z = BBox(5, 5, 5, 5)
        assert iou(z, z) == 0.0
        assert iou(z, BBox(0, 0, 10, 10)) == 0.0

    def test_symmetric_and_bounded(self):
        rng = random.Random(9)
        for _ in range(200):
            a, b = rand_box(rng), rand_box(rng)
            v = iou(a, b)
            assert v == iou(b, a)
            assert 0.0 <= v <= 1.0


class TestMapAtIou:
    def test_all_perfect(self):
        pairs = [(BBox(0, 0, 5, 5), BBox(0, 0, 5, 5))] * 4
        per_t, mean = map_at_iou(pairs)
        assert mean == 1.0
        assert all(v == 1.0 for v in per_t.values())

    def test_single_pair_at_060(self):
        # [0,0,8,8] vs [2,0,10,8]: intersection 48, union 80 -> exactly 0.6
        pred, gold = BBox(0, 0, 8, 8), BBox(2, 0, 10, 8)
        assert iou(pred, gold) == pytest.approx(0.6)
        per_t, mean = map_at_iou([(pred, gold)])
        assert [per_t[t] for t in IOU_THRESHOLDS] == [1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
        assert mean == pytest.approx(0.30)

    def test_missing_prediction_is_a_miss(self):
        per_t, mean = map_at_iou([(None, BBox(0, 0, 5, 5))])
        assert mean == 0.0

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            map_at_iou([])

    def test_monotone_thresholds(self):
        rng = random.Random(31)
        for _ in range(100):
            pairs = [
                (rand_box(rng) if rng.random() > 0.1 else None, rand_box(rng))
                for _ in range(rng.randint(1, 12))
            ]
            per_t, mean = map_at_iou(pairs)
            values = [per_t[t] for t in IOU_THRESHOLDS]
            assert all(x >= y for x, y in zip(values, values[1:]))
            assert values[-1] <= mean <= values[0]


def make_gold(qid, box=None, answers=("gold",)):
    return QARecord("doc", qid, f"question {qid}", tuple(answers), gold_box=box)


class TestScoreRun:
    def test_perfect_by_construction(self):
        gold = [make_gold(f"q{i}", BBox(0, 0, 10, 10)) for i in range(5)]
        preds = [Prediction(f"q{i}", "gold", BBox(0, 0, 10, 10)) for i in range(5)]
        report = score_run(preds, gold)
        assert report.aggregate_anls == 1.0
        assert report.map_iou == 1.0

    def test_all_empty_answers(self):
        gold = [make_gold(f"q{i}") for i in range(4)]
        preds = [Prediction(f"q{i}", "") for i in range(4)]
        assert score_run(preds, gold).aggregate_anls == 0.0

    def test_unknown_qid_listed(self):
        gold = [make_gold("q0")]
        with pytest.raises(ValidationError, match="ghost"):
            score_run([Prediction("ghost", "x")], gold)

    def test_duplicate_predictions_rejected(self):
        gold = [make_gold("q0")]
        with pytest.raises(ValidationError, match="q0"):
            score_run([Prediction("q0", "a"), Prediction("q0", "b")], gold)

    def test_missing_prediction_scores_zero(self):
        gold = [make_gold("q0", BBox(0, 0, 4, 4)), make_gold("q1")]
        report = score_run([Prediction("q1", "gold")], gold)
        by_qid = {q.question_id: q for q in report.per_question}
        assert by_qid["q0"].anls == 0.0
        assert by_qid["q0"].iou == 0.0
        assert by_qid["q1"].anls == 1.0

    def test_no_gold_box_excluded_from_map(self):
        gold = [make_gold("q0"), make_gold("q1", BBox(0, 0, 8, 8))]
        preds = [
            Prediction("q0", "gold"),
            Prediction("q1", "gold", BBox(0, 0, 8, 8)),
        ]
        report = score_run(preds, gold)
        assert report.counts.with_gold_box == 1
        assert report.map_iou == 1.0

    def test_mixed_fixture_matches_hand_recomputation(self):
        # Six questions recomputed cell by cell with the per-question oracles.
        g = [
            make_gold("a", BBox(0, 0, 8, 8), answers=("total",)),
            make_gold("b", None, answers=("11,000",)),
            make_gold("c", BBox(10, 10, 20, 20), answers=("jan 12, 1999",)),
            make_gold("d", BBox(0, 0, 4, 4), answers=("x", "why")),
            make_gold("e", BBox(5, 5, 15, 15), answers=("value",)),
            make_gold("f", None, answers=("zed",)),
        ]
        p = [
            Prediction("a", "total", BBox(0, 0, 8, 8)),         # anls 1, iou 1
            Prediction("b", "11,000"),                           # anls 1, no gold box
            Prediction("c", "jan 12 1999", BBox(12, 10, 22, 20)),  # iou 8*10/(12*10)
            Prediction("d", "why"),                              # anls 1, iou 0 (missing box)
            # anls: sim("valu","value") = 1 - 1/5; iou 0 (disjoint)
            Prediction("e", "valu", BBox(50, 50, 60, 60)),
        ]  # f has no prediction at all -> anls 0
        report = score_run(p, g)
        by_qid = {q.question_id: q for q in report.per_question}
        anls_c = anls_score("jan 12 1999", ["jan 12, 1999"])
        assert by_qid["c"].anls == pytest.approx(anls_c)
        assert by_qid["c"].iou == pytest.approx(80 / 120)
        assert by_qid["e"].anls == pytest.approx(0.8)
        expected_anls = (1 + 1 + anls_c + 1 + 0.8 + 0) / 6
        assert report.aggregate_anls == pytest.approx(expected_anls)
        # boxed questions: a (iou 1), c (2/3), d (0), e (0)
        ious = [1.0, 80 / 120, 0.0, 0.0]
        expected_per_t = {
            t: sum(1 for v in ious if round(v, 6) >= t / 100) / 4
            for t in IOU_THRESHOLDS
        }
        assert report.per_threshold_accuracy == expected_per_t
        assert report.map_iou == pytest.approx(
            sum(expected_per_t.values()) / len(IOU_THRESHOLDS)
        )
        assert report.counts.total == 6
        assert report.counts.with_gold_box == 4
        assert report.counts.with_predicted_box == 3

    def test_text_gated_mode(self):
        gold = [make_gold("q0", BBox(0, 0, 8, 8), answers=("right",))]
        preds = [Prediction("q0", "wrong answer entirely", BBox(0, 0, 8, 8))]
        assert score_run(preds, gold).map_iou == 1.0
        gated = score_run(preds, gold, text_gated=True)
        assert gated.map_iou == 0.0
        assert gated.iou_gating == "text_gated"

    def test_report_invariants_on_random_runs(self):
        rng = random.Random(71)
        for _ in range(30):
            n = rng.randint(1, 15)
            gold = [
                make_gold(
                    f"q{i}",
                    rand_box(rng) if rng.random() < 0.7 else None,
                    answers=("abc",),
                )
                for i in range(n)
            ]
            preds = [
                Prediction(
                    f"q{i}",
                    rng.choice(["abc", "abd", "zzz", ""]),
                    rand_box(rng) if rng.random() < 0.8 else None,
                )
                for i in range(n)
                if rng.random() < 0.9
            ]
            report = score_run(preds, gold)
            assert report.aggregate_anls == pytest.approx(
                sum(q.anls for q in report.per_question) / n
            )
            assert report.map_iou == pytest.approx(
                sum(report.per_threshold_accuracy.values()) / 10
            )
            values = [report.per_threshold_accuracy[t] for t in IOU_THRESHOLDS]
            assert all(x >= y for x, y in zip(values, values[1:]))


class TestAnlsConfig:
    def test_threshold_validated(self):
        with pytest.raises(UsageError):
            AnlsConfig(threshold=1.5)

    def test_raw_similarity_mode(self):
        cfg = AnlsConfig(threshold=0.0)
        assert anls_score("xyzq", ["cat"], cfg) == pytest.approx(
            normalized_similarity("xyzq", "cat")
        )
