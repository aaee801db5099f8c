import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grader_audit.design import (
    CodingScheme,
    Likelihood,
    ModelSpec,
    ParameterLayout,
    ParameterVector,
    Term,
    dummy_code,
    effect_code,
    index_code,
    linear_predictor,
    preset,
    PRESET_NAMES,
)
from grader_audit.errors import (
    IndexOutOfRange,
    ShapeMismatch,
    SingleLevelFactor,
    UnknownParameter,
)
from grader_audit.simulate import default_scenario, simulate


class TestEffectCode:
    def test_two_level_signs(self):
        assert effect_code(2, 0) == pytest.approx([1.0])
        assert effect_code(2, 1) == pytest.approx([-1.0])

    def test_three_level_last_is_all_minus_one(self):
        assert effect_code(3, 2) == pytest.approx([-1.0, -1.0])

    def test_single_level_raises(self):
        with pytest.raises(SingleLevelFactor):
            effect_code(1, 0)

    @given(st.integers(min_value=2, max_value=12))
    @settings(max_examples=20, deadline=None)
    def test_per_level_effects_sum_to_zero(self, n_levels):
        coefs = np.arange(1, n_levels, dtype=float)
        effects = [float(effect_code(n_levels, j) @ coefs) for j in range(n_levels)]
        assert sum(effects) == pytest.approx(0.0, abs=1e-12)


class TestIndexCode:
    def test_corner(self):
        assert index_code(0, 0, (2, 2)) == 0
        assert index_code(1, 0, (2, 2)) == 2

    def test_bijection(self):
        seen = {index_code(a, b, (2, 2)) for a in range(2) for b in range(2)}
        assert seen == {0, 1, 2, 3}

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            index_code(2, 0, (2, 2))


def test_dummy_code_reference_level():
    assert dummy_code(3, 0) == pytest.approx([0.0, 0.0])
    assert dummy_code(3, 2) == pytest.approx([0.0, 1.0])


def _fit_context(preset_name, scenario, seed=3):
    ds, _ = simulate(default_scenario(scenario, seed=seed))
    spec = preset(preset_name)
    layout = ParameterLayout(spec, ds)
    return spec, ds, layout


class TestLinearPredictor:
    def test_q1_1_hand_value(self):
        spec, ds, layout = _fit_context("q1_1", "q1_1")
        values = np.zeros(layout.size)
        values[layout.param_index("intercept")] = 0.5
        # autograder record: effect weight is -1 when the autograder is level 1
        grader_levels = layout.factors["grader"].levels
        values[layout.param_index(f"grader[{grader_levels[0]}]")] = -0.3
        params = ParameterVector(layout, values)
        rec_auto = next(r for r in ds.records if r.grader == "autograder_a")
        rec_human = next(r for r in ds.records if r.grader == "florence")
        phi_auto = linear_predictor(spec, rec_auto, params)
        phi_human = linear_predictor(spec, rec_human, params)
        # florence is level 0 (appears first), so the autograder carries -1
        assert phi_human == pytest.approx(0.5 - 0.3)
        assert phi_auto == pytest.approx(0.5 + 0.3)

    def test_zero_effects_give_intercept_everywhere(self):
        for preset_name, scenario in [
            ("q1_1", "q1_1"),
            ("q1_2", "q1_2"),
            ("q2", "q2"),
            ("q3_hier", "q3"),
            ("q4", "q4"),
        ]:
            spec, ds, layout = _fit_context(preset_name, scenario)
            values = np.zeros(layout.size)
            values[layout.param_index("intercept")] = 0.7
            params = ParameterVector(layout, values)
            for rec in ds.records[::37]:
                assert linear_predictor(spec, rec, params) == pytest.approx(0.7)

    def test_q2_nests_q1_2(self):
        spec2, ds, layout2 = _fit_context("q2", "q2")
        spec12 = preset("q1_2")
        layout12 = ParameterLayout(spec12, ds)
        rng = np.random.default_rng(0)
        v12 = np.zeros(layout12.size)
        v2 = np.zeros(layout2.size)
        for name in ("intercept", "grader[florence]", "grader[autograder_a]", "llm[llm_a]"):
            x = rng.normal()
            v12[layout12.param_index(name)] = x
            v2[layout2.param_index(name)] = x
        p12 = ParameterVector(layout12, v12)
        p2 = ParameterVector(layout2, v2)
        for rec in ds.records[::23]:
            assert linear_predictor(spec2, rec, p2) == pytest.approx(
                linear_predictor(spec12, rec, p12), abs=1e-12
            )

    def test_two_level_swap_negates_contribution(self):
        spec, ds, layout = _fit_context("q1_1", "q1_1")
        values = np.zeros(layout.size)
        values[layout.param_index("intercept")] = 1.1
        values[layout.param_index("grader[florence]")] = 0.4
        params = ParameterVector(layout, values)
        recs = {r.grader: r for r in ds.records}
        phis = {
            g: linear_predictor(spec, r, params) - 1.1 for g, r in recs.items()
        }
        assert phis["florence"] == pytest.approx(-phis["autograder_a"])


class TestPresets:
    def test_q1_1_shape(self):
        spec = preset("q1_1")
        assert spec.likelihood is Likelihood.ORDERED_LOGISTIC
        assert [t.name for t in spec.terms] == ["grader"]
        assert spec.terms[0].coding is CodingScheme.EFFECT

    def test_q1_1_null_is_intercept_only(self):
        assert preset("q1_1_null").terms == ()

    def test_q5_structure(self):
        spec = preset("q5")
        assert spec.likelihood is Likelihood.BERNOULLI_LOGIT
        names = [t.name for t in spec.terms]
        assert names == ["pair", "grader", "length_bias"]
        slope = spec.terms[2]
        assert slope.continuous_covariate == "length_diff"
        assert slope.hierarchical == "pooled"

    def test_unknown_preset(self):
        with pytest.raises(UnknownParameter):
            preset("q9")

    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_json_round_trip(self, name):
        spec = preset(name)
        again = ModelSpec.from_json(spec.to_json())
        assert again == spec


class TestLayout:
    def test_q4_block_sizes(self):
        spec, ds, layout = _fit_context("q4", "q4")
        assert layout.block("grader").size == 5  # 6 graders, effect coded
        assert layout.block("item").size == 3
        assert layout.block("grader_x_item").size == 24
        assert layout.block("cutpoints").size == 9

    def test_q3_hier_blocks(self):
        spec, ds, layout = _fit_context("q3_hier", "q3")
        assert layout.block("grader").size == 6
        assert layout.block("grader_mu").labels == (
            "grader_mu[human]",
            "grader_mu[autograder]",
        )
        assert layout.block("grader_sigma").size == 2

    def test_duplicate_term_names_rejected(self):
        from grader_audit.errors import InvalidValue

        with pytest.raises(InvalidValue):
            ModelSpec(
                Likelihood.ORDERED_LOGISTIC,
                (
                    Term("grader", ("grader",), CodingScheme.EFFECT),
                    Term("grader", ("grader",), CodingScheme.INDEX),
                ),
            )

    def test_fixed_cutpoints_must_match_k(self):
        ds, _ = simulate(default_scenario("q1_1", seed=3))
        spec = ModelSpec(
            Likelihood.ORDERED_LOGISTIC,
            (Term("grader", ("grader",), CodingScheme.EFFECT),),
            fixed_cutpoints=(0.0, 1.0),
        )
        with pytest.raises(ShapeMismatch):
            ParameterLayout(spec, ds)
