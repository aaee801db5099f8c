import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grader_audit.data import (
    DatasetKind,
    FactorTable,
    GraderType,
    PairwiseRecord,
    dataset_from_pairwise_records,
    load_pairwise,
    load_scores,
    pair_label,
    standardize_length_diff,
)
from grader_audit.errors import (
    DegenerateLengths,
    InconsistentGraderType,
    InvalidValue,
    MissingColumn,
    NegativeTokenCount,
    ScoreOutOfRange,
    SelfComparison,
)

SCORES_HEADER = "grader,grader_type,llm,item,score\n"
PAIRWISE_HEADER = "grader,llm_first,llm_second,item,tokens_first,tokens_second,chose_first\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadScores:
    def test_k_defaults_to_max_observed(self, tmp_path):
        rows = "".join(
            f"flo,human,llm_a,item_{i},{1 + (i * 7) % 10}\n" for i in range(100)
        )
        ds = load_scores(write(tmp_path, "s.csv", SCORES_HEADER + rows))
        assert ds.n_categories == 10
        assert ds.n_records == 100

    def test_inconsistent_grader_type(self, tmp_path):
        text = SCORES_HEADER + "g1,human,llm_a,i1,5\n" + "g1,autograder,llm_a,i2,6\n"
        with pytest.raises(InconsistentGraderType):
            load_scores(write(tmp_path, "s.csv", text))

    def test_score_above_k(self, tmp_path):
        text = SCORES_HEADER + "g1,human,llm_a,i1,11\n"
        with pytest.raises(ScoreOutOfRange):
            load_scores(write(tmp_path, "s.csv", text), k_categories=10)

    def test_score_below_one(self, tmp_path):
        text = SCORES_HEADER + "g1,human,llm_a,i1,0\n"
        with pytest.raises(ScoreOutOfRange):
            load_scores(write(tmp_path, "s.csv", text))

    def test_missing_column(self, tmp_path):
        text = "grader,llm,item,score\ng1,llm_a,i1,5\n"
        with pytest.raises(MissingColumn):
            load_scores(write(tmp_path, "s.csv", text))

    def test_grader_type_case_insensitive(self, tmp_path):
        text = SCORES_HEADER + "g1,Human,llm_a,i1,5\ng2,AUTOGRADER,llm_a,i1,6\n"
        ds = load_scores(write(tmp_path, "s.csv", text))
        assert ds.grader_types["g1"] is GraderType.HUMAN
        assert ds.grader_types["g2"] is GraderType.AUTOGRADER

    def test_empty_item_becomes_none(self, tmp_path):
        text = SCORES_HEADER + "g1,human,llm_a,,5\ng2,human,llm_a,,6\n"
        ds = load_scores(write(tmp_path, "s.csv", text))
        assert ds.records[0].item is None
        assert "item" not in ds.factors

    def test_factor_order_is_first_appearance(self, tmp_path):
        text = SCORES_HEADER + (
            "zeta,human,llm_b,i1,5\n"
            "alpha,autograder,llm_a,i1,6\n"
            "zeta,human,llm_a,i2,4\n"
        )
        ds = load_scores(write(tmp_path, "s.csv", text))
        assert ds.factor("grader").levels == ("zeta", "alpha")
        assert ds.factor("llm").levels == ("llm_b", "llm_a")

    def test_round_trip(self, tmp_path):
        text = SCORES_HEADER + (
            "flo,human,llm_a,i1,3\n"
            "bot,autograder,llm_b,,7\n"
            "flo,human,llm_b,i2,10\n"
        )
        ds = load_scores(write(tmp_path, "s.csv", text))
        out = tmp_path / "round.csv"
        ds.write_csv(out)
        ds2 = load_scores(out)
        assert ds2.records == ds.records
        assert {k: v.levels for k, v in ds2.factors.items()} == {
            k: v.levels for k, v in ds.factors.items()
        }
        assert ds2.fingerprint() == ds.fingerprint()


class TestLoadPairwise:
    def test_pair_factor_levels(self, tmp_path):
        text = PAIRWISE_HEADER + (
            "g,b,a,i1,10,20,1\n"
            "g,a,c,i2,10,20,0\n"
            "g,c,b,i3,10,20,1\n"
        )
        ds = load_pairwise(write(tmp_path, "p.csv", text))
        assert ds.factor("pair").levels == ("a_vs_b", "a_vs_c", "b_vs_c")
        assert ds.factor("llm").levels == ("b", "a", "c")

    def test_self_comparison(self, tmp_path):
        text = PAIRWISE_HEADER + "g,a,a,i1,10,20,1\n"
        with pytest.raises(SelfComparison):
            load_pairwise(write(tmp_path, "p.csv", text))

    def test_negative_tokens(self, tmp_path):
        text = PAIRWISE_HEADER + "g,a,b,i1,-5,20,1\n"
        with pytest.raises(NegativeTokenCount):
            load_pairwise(write(tmp_path, "p.csv", text))

    def test_bad_choice_value(self, tmp_path):
        text = PAIRWISE_HEADER + "g,a,b,i1,5,20,2\n"
        with pytest.raises(InvalidValue):
            load_pairwise(write(tmp_path, "p.csv", text))

    def test_round_trip(self, tmp_path):
        text = PAIRWISE_HEADER + (
            "g1,b,a,i1,10,20,1\n"
            "g2,a,c,,30,20,0\n"
        )
        ds = load_pairwise(write(tmp_path, "p.csv", text))
        out = tmp_path / "round.csv"
        ds.write_csv(out)
        ds2 = load_pairwise(out)
        assert ds2.records == ds.records
        assert ds2.fingerprint() == ds.fingerprint()


def _pairwise_with_diffs(diffs):
    records = [
        PairwiseRecord(
            grader="g",
            llm_first="a",
            llm_second="b",
            item=None,
            tokens_first=max(d, 0),
            tokens_second=max(-d, 0),
            chose_first=True,
        )
        for d in diffs
    ]
    return dataset_from_pairwise_records(records)


class TestStandardizeLengthDiff:
    def test_hand_value_pm10(self):
        # diffs [10, -10]: centered already; sample SD (n-1) = sqrt(200)
        ds = _pairwise_with_diffs([10, -10])
        out = standardize_length_diff(ds)
        expected = 0.7071067811865475244
        assert out == pytest.approx([expected, -expected], abs=1e-15)

    def test_all_equal_raises(self):
        ds = _pairwise_with_diffs([0, 0, 0])
        with pytest.raises(DegenerateLengths):
            standardize_length_diff(ds)

    def test_orientation_preserved(self):
        ds = _pairwise_with_diffs([30, 10, -10])
        out = standardize_length_diff(ds)
        assert out[0] > out[1] > out[2]

    @given(
        st.lists(st.integers(min_value=0, max_value=5000), min_size=2, max_size=40).filter(
            lambda v: len(set(v)) > 1
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_moments(self, diffs):
        ds = _pairwise_with_diffs(diffs)
        out = standardize_length_diff(ds)
        assert abs(out.mean()) < 1e-10
        assert abs(out.std(ddof=1) - 1.0) < 1e-10


def test_pair_label_lexicographic():
    assert pair_label("beta", "alpha") == "alpha_vs_beta"
    assert pair_label("alpha", "beta") == "alpha_vs_beta"


def test_factor_table_rejects_duplicates():
    with pytest.raises(InvalidValue):
        FactorTable("f", ("a", "a"))
