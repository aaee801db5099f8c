"""Synthetic datasets with known ground truth for every supported scenario.

Each named scenario fixes a deterministic truth (signs and orderings chosen to
match the qualitative findings each analysis is meant to surface) and samples
outcomes from the corresponding generative model. The returned truth record
includes per-preset recovery targets: named parameter contrasts with their
true values, expressed over free-parameter names so they can be evaluated
directly against posterior draws.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import (
    GradeRecord,
    GraderType,
    PairwiseRecord,
    dataset_from_grade_records,
    dataset_from_pairwise_records,
    pair_label,
)
from .analysis import combine_weights, effect_level_weights, scale_weights
from .errors import InvalidTruthShape, UnknownParameter
from .inference import rng_stream
from .likelihoods import sample_bernoulli_logit, sample_ordered_logistic

SCENARIOS = ("q1_1", "q1_2", "q2", "q3", "q4", "q5")

# ladder used by all score scenarios: first threshold -4.0, equal gaps sized to
# the prior-mean raw increment plus the 0.3 separation shift
DEFAULT_CUTPOINTS = tuple(-4.0 + 0.9344 * j for j in range(9))
DEFAULT_K = 10


@dataclass(frozen=True)
class ScenarioConfig:
    question: str
    true_params: dict
    counts: dict
    seed: int = 0


@dataclass(frozen=True)
class RecoveryTarget:
    """A named contrast with its true value (and optional expected CI sign)."""

    name: str
    weights: dict[str, float]
    value: float
    direction: str | None = None  # "positive" | "negative" | None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "weights": self.weights,
            "value": self.value,
            "direction": self.direction,
        }


_effect_weights = effect_level_weights
_sum_weights = combine_weights
_scale_weights = scale_weights


def _grader_type_contrast(levels, types) -> dict[str, float]:
    """Mean autograder effect minus mean human effect over per-level effects."""
    autos = [g for g in levels if types[g] is GraderType.AUTOGRADER]
    humans = [g for g in levels if types[g] is GraderType.HUMAN]
    parts = [
        _scale_weights(_effect_weights("grader", levels, g), 1.0 / len(autos))
        for g in autos
    ] + [
        _scale_weights(_effect_weights("grader", levels, g), -1.0 / len(humans))
        for g in humans
    ]
    return _sum_weights(*parts)


def default_scenario(name: str, seed: int = 0) -> ScenarioConfig:
    key = name.lower()
    if key == "q1_1":
        return ScenarioConfig(
            question=key,
            true_params={
                "intercept": 0.0,
                "grader_effects": {"florence": 0.6, "autograder_a": -0.6},
                "cutpoints": list(DEFAULT_CUTPOINTS),
            },
            counts={"n_responses": 100},
            seed=seed,
        )
    if key == "q1_2":
        return ScenarioConfig(
            question=key,
            true_params={
                "intercept": 0.0,
                "grader_effects": {"florence": 0.6, "autograder_a": -0.6},
                "llm_effects": {"llm_a": 0.5, "llm_b": -0.5},
                "cutpoints": list(DEFAULT_CUTPOINTS),
            },
            counts={"n_items": 50},
            seed=seed,
        )
    if key == "q2":
        return ScenarioConfig(
            question=key,
            true_params={
                "intercept": 0.0,
                "grader_effects": {
                    "florence": 0.3,
                    "autograder_a": -0.15,
                    "autograder_b": -0.15,
                },
                "llm_effects": {"llm_a": 0.5, "llm_b": -0.5},
                "interaction": {
                    "florence": {"llm_a": 0.0, "llm_b": 0.0},
                    "autograder_a": {"llm_a": 0.4, "llm_b": -0.4},
                    "autograder_b": {"llm_a": -0.4, "llm_b": 0.4},
                },
                "cutpoints": list(DEFAULT_CUTPOINTS),
            },
            counts={"n_items": 50},
            seed=seed,
        )
    if key == "q3":
        return ScenarioConfig(
            question=key,
            true_params={
                "intercept": 0.0,
                "grader_effects": {
                    "human_x": 1.3,
                    "human_y": 1.0,
                    "human_z": 0.7,
                    "autograder_a": -0.7,
                    "autograder_b": -1.0,
                    "autograder_c": -1.3,
                },
                "type_means": {"human": 1.0, "autograder": -1.0},
                "type_sd": 0.3,
                "llm_effects": {"llm_a": 0.5, "llm_b": -0.5},
                "cutpoints": list(DEFAULT_CUTPOINTS),
            },
            counts={"n_items": 50},
            seed=seed,
        )
    if key == "q4":
        return ScenarioConfig(
            question=key,
            true_params={
                "intercept": 0.0,
                "grader_effects": {
                    "human_x": 0.9,
                    "human_y": 0.6,
                    "human_z": 0.3,
                    "autograder_a": -0.3,
                    "autograder_b": -0.6,
                    "autograder_c": -0.9,
                },
                "llm_effects": {"llm_a": 0.25, "llm_b": -0.25},
                "item_effects": {
                    "item_1": 0.8,
                    "item_2": 0.3,
                    "item_3": -0.3,
                    "item_4": -0.8,
                },
                "grader_item_interaction": 0.0,
                "cutpoints": list(DEFAULT_CUTPOINTS),
            },
            counts={"n_items": 4, "n_repeats": 25},
            seed=seed,
        )
    if key == "q5":
        return ScenarioConfig(
            question=key,
            true_params={
                "intercept": 0.6,
                "pair_effects": {
                    "llm_a_vs_llm_b": -0.1,
                    "llm_a_vs_llm_c": 0.3,
                    "llm_b_vs_llm_c": -0.2,
                },
                "grader_effects": {"florence": 0.1, "autograder_a": -0.1},
                "length_slopes": {"florence": 0.3, "autograder_a": 0.9},
                "length_mu": 0.6,
                "length_sigma": 0.3,
                "token_log_means": {"llm_a": 5.55, "llm_b": 5.30, "llm_c": 5.05},
                "token_log_sd": 0.35,
            },
            counts={"n_reps": 100},
            seed=seed,
        )
    raise UnknownParameter(
        f"unknown scenario {name!r}; valid: {', '.join(SCENARIOS)}"
    )


def _check_cutpoints(truth) -> np.ndarray:
    cut = np.asarray(truth["cutpoints"], dtype=np.float64)
    if cut.ndim != 1 or cut.size < 1 or np.any(np.diff(cut) <= 0):
        raise InvalidTruthShape("true cutpoints must be strictly increasing")
    return cut


def _grader_meta(grader: str) -> GraderType:
    return GraderType.HUMAN if grader.startswith(("human", "florence")) else GraderType.AUTOGRADER


def simulate_scores(cfg: ScenarioConfig):
    """Simulated Scores dataset plus the exact truth record used."""
    builders = {
        "q1_1": _build_q1_1,
        "q1_2": _build_q1_2,
        "q2": _build_q2,
        "q3": _build_q3,
        "q4": _build_q4,
    }
    key = cfg.question.lower()
    if key not in builders:
        raise InvalidTruthShape(f"{cfg.question!r} is not a score scenario")
    rng = rng_stream(cfg.seed, 0)
    cells, targets = builders[key](cfg)
    cut = _check_cutpoints(cfg.true_params)
    records = []
    phis = np.array([phi for phi, _ in cells])
    scores = sample_ordered_logistic(phis, cut, rng)
    for score, (_, meta) in zip(scores, cells):
        grader, llm, item = meta
        records.append(
            GradeRecord(
                grader=grader,
                grader_type=_grader_meta(grader),
                llm=llm,
                item=item,
                score=int(score),
            )
        )
    ds = dataset_from_grade_records(records, DEFAULT_K)
    truth = {
        "question": key,
        "seed": cfg.seed,
        "counts": dict(cfg.counts),
        "params": cfg.true_params,
        "recovery_targets": {
            preset: [t.to_dict() for t in tl] for preset, tl in targets.items()
        },
    }
    return ds, truth


def _build_q1_1(cfg: ScenarioConfig):
    p = cfg.true_params
    n = int(cfg.counts.get("n_responses", 100))
    if n < 1:
        raise InvalidTruthShape("counts must be >= 1")
    graders = tuple(p["grader_effects"])
    cells = []
    for i in range(n):
        item = f"item_{i + 1:03d}"
        for g in graders:
            phi = p["intercept"] + p["grader_effects"][g]
            cells.append((phi, (g, "llm_a", item)))
    tgt = RecoveryTarget(
        name="autograder_minus_human",
        weights=_grader_type_contrast(graders, {g: _grader_meta(g) for g in graders}),
        value=p["grader_effects"]["autograder_a"] - p["grader_effects"]["florence"],
        direction="negative",
    )
    return cells, {"q1_1": [tgt]}


def _llm_contrast(levels) -> dict[str, float]:
    return _sum_weights(
        _effect_weights("llm", levels, levels[0]),
        _scale_weights(_effect_weights("llm", levels, levels[1]), -1.0),
    )


def _build_q1_2(cfg: ScenarioConfig):
    p = cfg.true_params
    n_items = int(cfg.counts.get("n_items", 50))
    graders = tuple(p["grader_effects"])
    llms = tuple(p["llm_effects"])
    cells = []
    for i in range(n_items):
        item = f"item_{i + 1:03d}"
        for llm in llms:
            for g in graders:
                phi = p["intercept"] + p["grader_effects"][g] + p["llm_effects"][llm]
                cells.append((phi, (g, llm, item)))
    types = {g: _grader_meta(g) for g in graders}
    targets = [
        RecoveryTarget(
            "autograder_minus_human",
            _grader_type_contrast(graders, types),
            p["grader_effects"]["autograder_a"] - p["grader_effects"]["florence"],
            direction="negative",
        ),
        RecoveryTarget(
            "llm_a_minus_llm_b",
            _llm_contrast(llms),
            p["llm_effects"]["llm_a"] - p["llm_effects"]["llm_b"],
            direction="positive",
        ),
    ]
    return cells, {"q1_2": targets}


def _build_q2(cfg: ScenarioConfig):
    p = cfg.true_params
    n_items = int(cfg.counts.get("n_items", 50))
    graders = tuple(p["grader_effects"])
    llms = tuple(p["llm_effects"])
    inter = p["interaction"]
    cells = []
    for i in range(n_items):
        item = f"item_{i + 1:03d}"
        for llm in llms:
            for g in graders:
                phi = (
                    p["intercept"]
                    + p["grader_effects"][g]
                    + p["llm_effects"][llm]
                    + inter[g][llm]
                )
                cells.append((phi, (g, llm, item)))

    def cell_diff(g):
        # phi(g, llm_a) - phi(g, llm_b): identified combination
        return (
            _sum_weights(
                _llm_contrast(llms),
                {f"grader_x_llm[{g},{llms[0]}]": 1.0, f"grader_x_llm[{g},{llms[1]}]": -1.0},
            ),
            p["llm_effects"][llms[0]] - p["llm_effects"][llms[1]] + inter[g][llms[0]] - inter[g][llms[1]],
        )

    targets = []
    for g in graders:
        w, v = cell_diff(g)
        targets.append(RecoveryTarget(f"llm_gap_for_{g}", w, v))
    w_a, v_a = cell_diff("autograder_a")
    w_b, v_b = cell_diff("autograder_b")
    targets.append(
        RecoveryTarget(
            "self_bias_double_difference",
            _sum_weights(w_a, _scale_weights(w_b, -1.0)),
            v_a - v_b,
        )
    )
    return cells, {"q2": targets}


def _build_q3(cfg: ScenarioConfig):
    p = cfg.true_params
    n_items = int(cfg.counts.get("n_items", 50))
    graders = tuple(p["grader_effects"])
    llms = tuple(p["llm_effects"])
    cells = []
    for i in range(n_items):
        item = f"item_{i + 1:03d}"
        for llm in llms:
            for g in graders:
                phi = p["intercept"] + p["grader_effects"][g] + p["llm_effects"][llm]
                cells.append((phi, (g, llm, item)))
    types = {g: _grader_meta(g) for g in graders}
    flat_targets = [
        RecoveryTarget(
            "llm_a_minus_llm_b",
            _llm_contrast(llms),
            p["llm_effects"]["llm_a"] - p["llm_effects"]["llm_b"],
            direction="positive",
        )
    ]
    for g in graders:
        flat_targets.append(
            RecoveryTarget(
                f"grader_effect_{g}",
                _effect_weights("grader", graders, g),
                p["grader_effects"][g],
            )
        )
    hier_targets = [
        RecoveryTarget(
            "mu_human_minus_autograder",
            {"grader_mu[human]": 1.0, "grader_mu[autograder]": -1.0},
            p["type_means"]["human"] - p["type_means"]["autograder"],
            direction="positive",
        ),
        RecoveryTarget(
            "llm_a_minus_llm_b",
            _llm_contrast(llms),
            p["llm_effects"]["llm_a"] - p["llm_effects"]["llm_b"],
            direction="positive",
        ),
        RecoveryTarget(
            "human_x_minus_human_z",
            {"grader[human_x]": 1.0, "grader[human_z]": -1.0},
            p["grader_effects"]["human_x"] - p["grader_effects"]["human_z"],
        ),
    ]
    return cells, {"q3_flat": flat_targets, "q3_hier": hier_targets}


def _build_q4(cfg: ScenarioConfig):
    p = cfg.true_params
    n_items = int(cfg.counts.get("n_items", 4))
    n_repeats = int(cfg.counts.get("n_repeats", 25))
    graders = tuple(p["grader_effects"])
    llms = tuple(p["llm_effects"])
    items = tuple(p["item_effects"])
    if len(items) != n_items:
        raise InvalidTruthShape("item_effects must match the n_items count")
    inter = p.get("grader_item_interaction", 0.0)

    def interaction(g, item):
        if isinstance(inter, dict):
            return inter.get(g, {}).get(item, 0.0)
        return float(inter)

    cells = []
    for item in items:
        for llm in llms:
            for _ in range(n_repeats):
                for g in graders:
                    phi = (
                        p["intercept"]
                        + p["grader_effects"][g]
                        + p["llm_effects"][llm]
                        + p["item_effects"][item]
                        + interaction(g, item)
                    )
                    cells.append((phi, (g, llm, item)))
    targets = [
        RecoveryTarget(
            "llm_a_minus_llm_b",
            _llm_contrast(llms),
            p["llm_effects"][llms[0]] - p["llm_effects"][llms[1]],
        )
    ]
    for item in items:
        targets.append(
            RecoveryTarget(
                f"item_effect_{item}",
                _effect_weights("item", items, item),
                p["item_effects"][item],
            )
        )
    for g in graders:
        targets.append(
            RecoveryTarget(
                f"grader_effect_{g}",
                _effect_weights("grader", graders, g),
                p["grader_effects"][g],
            )
        )
    targets.append(
        RecoveryTarget(
            "interaction_double_difference",
            {
                f"grader_x_item[{graders[0]},{items[0]}]": 1.0,
                f"grader_x_item[{graders[0]},{items[-1]}]": -1.0,
                f"grader_x_item[{graders[-1]},{items[0]}]": -1.0,
                f"grader_x_item[{graders[-1]},{items[-1]}]": 1.0,
            },
            0.0,
        )
    )
    return cells, {"q4": targets}


def simulate_pairwise(cfg: ScenarioConfig):
    """Simulated Pairwise dataset plus the exact truth record used."""
    if cfg.question.lower() != "q5":
        raise InvalidTruthShape(f"{cfg.question!r} is not a pairwise scenario")
    p = cfg.true_params
    n_reps = int(cfg.counts.get("n_reps", 100))
    if n_reps < 1:
        raise InvalidTruthShape("counts must be >= 1")
    graders = tuple(p["grader_effects"])
    llms = tuple(p["token_log_means"])
    if len(llms) < 2:
        raise InvalidTruthShape("pairwise scenarios need >= 2 LLMs")
    pairs = [
        (a, b) for i, a in enumerate(llms) for b in llms[i + 1 :]
    ]
    rng = rng_stream(cfg.seed, 0)

    rows = []  # (grader, first, second, tokens_first, tokens_second, item)
    for a, b in pairs:
        for g in graders:
            for rep in range(n_reps):
                item = f"prompt_{a}_{b}_{rep + 1:03d}"
                ta = max(1, int(round(rng.lognormal(p["token_log_means"][a], p["token_log_sd"]))))
                tb = max(1, int(round(rng.lognormal(p["token_log_means"][b], p["token_log_sd"]))))
                rows.append((g, a, b, ta, tb, item))

    diffs = np.array([r[3] - r[4] for r in rows], dtype=np.float64)
    centered = diffs - diffs.mean()
    sd = centered.std(ddof=1)
    if sd == 0:
        raise InvalidTruthShape("degenerate token lengths in scenario")
    x = centered / sd

    etas = np.array(
        [
            p["intercept"]
            + p["pair_effects"][pair_label(r[1], r[2])]
            + p["grader_effects"][r[0]]
            + p["length_slopes"][r[0]] * x[i]
            for i, r in enumerate(rows)
        ]
    )
    choices = sample_bernoulli_logit(etas, rng)
    records = [
        PairwiseRecord(
            grader=r[0],
            llm_first=r[1],
            llm_second=r[2],
            item=r[5],
            tokens_first=r[3],
            tokens_second=r[4],
            chose_first=bool(c),
        )
        for r, c in zip(rows, choices)
    ]
    ds = dataset_from_pairwise_records(records)

    pair_levels = tuple(pair_label(a, b) for a, b in pairs)
    targets = []
    for g in graders:
        targets.append(
            RecoveryTarget(
                f"length_bias_{g}",
                {f"length_bias[{g}]": 1.0},
                p["length_slopes"][g],
                direction="positive" if p["length_slopes"][g] > 0 else "negative",
            )
        )
    for lbl in pair_levels:
        targets.append(
            RecoveryTarget(
                f"pref_{lbl}",
                _sum_weights({"intercept": 1.0}, _effect_weights("pair", pair_levels, lbl)),
                p["intercept"] + p["pair_effects"][lbl],
            )
        )
    truth = {
        "question": "q5",
        "seed": cfg.seed,
        "counts": dict(cfg.counts),
        "params": cfg.true_params,
        "recovery_targets": {
            "q5": [t.to_dict() for t in targets],
            "q5_no_length": [t.to_dict() for t in targets if "length_bias" not in t.name],
        },
    }
    return ds, truth


def simulate(cfg: ScenarioConfig):
    """Dispatch on scenario kind; returns (dataset, truth record)."""
    if cfg.question.lower() == "q5":
        return simulate_pairwise(cfg)
    return simulate_scores(cfg)


def truth_json(truth: dict) -> str:
    return json.dumps(truth, indent=2, sort_keys=True)
