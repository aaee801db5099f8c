"""Posterior summaries, contrasts, agreement, calibration, and transitivity.

Everything here consumes immutable posterior draws; replicate simulation is
seeded and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import Dataset, DatasetKind
from .design import Likelihood, ModelSpec, ParameterLayout, term_weights
from .likelihoods import _stable_sigmoid, sample_ordered_logistic
from .errors import (
    EmptySamples,
    MissingItemColumn,
    NoVariation,
    NotOrderedModel,
    ShapeMismatch,
    TooFewDraws,
    TooFewModels,
    TooFewRatings,
    UnknownParameter,
)
from .inference import PosteriorDraws, rng_stream

ROPE_LOW = -0.18
ROPE_HIGH = 0.18


# -- summaries -----------------------------------------------------------------


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "sd": self.sd,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
        }


def summarize_samples(samples: np.ndarray) -> Summary:
    """Mean, SD, and equal-tailed 95% interval of one sample vector."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 4:
        raise TooFewDraws("need at least 4 draws to summarize")
    lo, hi = np.percentile(samples, [2.5, 97.5])
    return Summary(
        mean=float(samples.mean()),
        sd=float(samples.std(ddof=1)),
        ci_low=float(lo),
        ci_high=float(hi),
    )


def summarize(draws: PosteriorDraws, block: str) -> dict[str, Summary]:
    """Per-parameter summaries for one named block."""
    b = draws.layout.block(block)
    pooled = draws.pooled()
    out = {}
    for j, label in enumerate(b.labels):
        out[label] = summarize_samples(pooled[:, b.offset + j])
    return out


# -- contrasts -------------------------------------------------------------------


@dataclass(frozen=True)
class ContrastSpec:
    """Weighted sum of named parameters, evaluated per draw."""

    name: str
    weights: dict[str, float]


@dataclass
class ContrastResult:
    name: str
    samples: np.ndarray
    summary: Summary
    fraction_positive: float
    fraction_negative: float

    def to_dict(self) -> dict:
        d = self.summary.to_dict()
        d.update(
            {
                "name": self.name,
                "fraction_positive": self.fraction_positive,
                "fraction_negative": self.fraction_negative,
            }
        )
        return d


def contrast(draws: PosteriorDraws, cs: ContrastSpec) -> ContrastResult:
    pooled = draws.pooled()
    samples = np.zeros(pooled.shape[0])
    for name, weight in cs.weights.items():
        idx = draws.layout.param_index(name)  # raises UnknownParameter
        samples = samples + weight * pooled[:, idx]
    return ContrastResult(
        name=cs.name,
        samples=samples,
        summary=summarize_samples(samples),
        fraction_positive=float(np.mean(samples > 0)),
        fraction_negative=float(np.mean(samples < 0)),
    )


def effect_level_weights(term_name: str, levels, level: str) -> dict[str, float]:
    """Free-parameter weights for one level's effect under sum-to-zero coding."""
    levels = tuple(levels)
    idx = levels.index(level)
    if idx < len(levels) - 1:
        return {f"{term_name}[{levels[idx]}]": 1.0}
    return {f"{term_name}[{lvl}]": -1.0 for lvl in levels[:-1]}


def combine_weights(*parts: dict[str, float]) -> dict[str, float]:
    out: dict[str, float] = {}
    for part in parts:
        for k, v in part.items():
            out[k] = out.get(k, 0.0) + v
    return {k: v for k, v in out.items() if v != 0.0}


def scale_weights(weights: dict[str, float], c: float) -> dict[str, float]:
    return {k: v * c for k, v in weights.items()}


# -- ROPE ---------------------------------------------------------------------------


class RopeVerdict(str, Enum):
    PRACTICALLY_EQUIVALENT = "practically_equivalent"
    NOT_EQUIVALENT = "not_equivalent"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class RopeResult:
    fraction_inside: float
    verdict: RopeVerdict
    low: float
    high: float

    def to_dict(self) -> dict:
        return {
            "fraction_inside": self.fraction_inside,
            "verdict": self.verdict.value,
            "low": self.low,
            "high": self.high,
        }


def rope_check(samples, low: float = ROPE_LOW, high: float = ROPE_HIGH) -> RopeResult:
    """Classify an effect sample against a region of practical equivalence.

    The verdict compares the 95% equal-tailed interval with [low, high]:
    inside entirely, outside entirely, or neither (undecided).
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise EmptySamples("rope_check needs a non-empty sample")
    if not low < high:
        raise ShapeMismatch("rope bounds must satisfy low < high")
    ci_low, ci_high = np.percentile(samples, [2.5, 97.5])
    fraction = float(np.mean((samples >= low) & (samples <= high)))
    if low <= ci_low and ci_high <= high:
        verdict = RopeVerdict.PRACTICALLY_EQUIVALENT
    elif ci_high < low or ci_low > high:
        verdict = RopeVerdict.NOT_EQUIVALENT
    else:
        verdict = RopeVerdict.UNDECIDED
    return RopeResult(fraction_inside=fraction, verdict=verdict, low=low, high=high)


# -- posterior prediction --------------------------------------------------------------


_sigmoid = _stable_sigmoid

PREDICT_FULL = "full"
PREDICT_REMOVE_GRADER_MAIN = "remove_grader_main"


def _design_for_rows(
    spec: ModelSpec,
    layout: ParameterLayout,
    rows,
    covariates: dict[str, np.ndarray] | None = None,
    drop_grader_main: bool = False,
):
    x = np.zeros((len(rows), layout.size))
    x[:, layout.block("intercept").offset] = 1.0
    for term in spec.terms:
        is_grader_main = (
            term.factors == ("grader",) and term.continuous_covariate is None
        )
        if drop_grader_main and is_grader_main:
            continue
        block = layout.block(term.name)
        cov = None
        if term.continuous_covariate:
            if not covariates or term.continuous_covariate not in covariates:
                raise ShapeMismatch(
                    f"term {term.name!r} needs covariate {term.continuous_covariate!r}"
                )
            cov = np.asarray(covariates[term.continuous_covariate], dtype=np.float64)
        for i, record in enumerate(rows):
            w = term_weights(term, record, layout)
            if cov is not None:
                w = w * cov[i]
            x[i, block.slice] = w
    return x


sample_scores_from_phi = sample_ordered_logistic


def posterior_predict(
    spec: ModelSpec,
    draws: PosteriorDraws,
    rows,
    mode: str = PREDICT_FULL,
    seed: int = 0,
    covariates: dict[str, np.ndarray] | None = None,
    draw_indices=None,
) -> np.ndarray:
    """Simulate outcomes for design rows under posterior draws.

    ``mode="remove_grader_main"`` subtracts every grader main-effect term from
    the latent predictor before categorization (slope and interaction terms
    are untouched). Deterministic for a given seed.
    """
    if mode not in (PREDICT_FULL, PREDICT_REMOVE_GRADER_MAIN):
        raise ShapeMismatch(f"unknown prediction mode {mode!r}")
    layout = draws.layout
    x = _design_for_rows(
        spec,
        layout,
        rows,
        covariates,
        drop_grader_main=(mode == PREDICT_REMOVE_GRADER_MAIN),
    )
    pooled = draws.pooled()
    if draw_indices is None:
        draw_indices = np.arange(pooled.shape[0])
    rng = rng_stream(seed, 7)
    out = np.empty((len(draw_indices), len(rows)), dtype=np.int64)
    cut_block = layout.cutpoint_block
    for row_i, s in enumerate(draw_indices):
        c = pooled[s]
        phi = x @ c
        if spec.likelihood is Likelihood.ORDERED_LOGISTIC:
            cut = (
                np.asarray(spec.fixed_cutpoints, dtype=np.float64)
                if cut_block is None
                else c[cut_block.slice]
            )
            out[row_i] = sample_scores_from_phi(phi, cut, rng)
        else:
            out[row_i] = (rng.random(phi.shape) < _sigmoid(phi)).astype(np.int64)
    return out


# -- Krippendorff's alpha -----------------------------------------------------------------


class AlphaMetric(str, Enum):
    ORDINAL = "ordinal"
    INTERVAL = "interval"


def _coincidence(table: np.ndarray):
    """Coincidence matrix over pairable values within units.

    Returns (o, values) where o[c, k] accumulates ordered within-unit pairs
    weighted by 1/(m_u - 1).
    """
    valid = ~np.isnan(table)
    pairable = valid.sum(axis=1) >= 2
    if not np.any(pairable):
        raise TooFewRatings("no unit has two or more ratings")
    sub = table[pairable]
    values = np.unique(sub[~np.isnan(sub)])
    v_index = {v: i for i, v in enumerate(values)}
    nv = values.size
    o = np.zeros((nv, nv))
    for row in sub:
        ratings = row[~np.isnan(row)]
        m_u = ratings.size
        if m_u < 2:
            continue
        counts = np.zeros(nv)
        for r in ratings:
            counts[v_index[r]] += 1.0
        o += (np.outer(counts, counts) - np.diag(counts)) / (m_u - 1.0)
    return o, values


def _delta_sq(values: np.ndarray, marginals: np.ndarray, metric: AlphaMetric) -> np.ndarray:
    if metric is AlphaMetric.INTERVAL:
        return (values[:, None] - values[None, :]) ** 2
    # ordinal: squared difference of cumulative marginal positions
    cum = np.cumsum(marginals)
    nv = values.size
    d = np.zeros((nv, nv))
    for c in range(nv):
        for k in range(c + 1, nv):
            span = cum[k] - cum[c] + marginals[c]
            d[c, k] = d[k, c] = (span - (marginals[c] + marginals[k]) / 2.0) ** 2
    return d


def krippendorff_alpha(table, metric: AlphaMetric = AlphaMetric.ORDINAL) -> float:
    """Chance-corrected inter-rater agreement from an items x raters table.

    Missing ratings are NaN; units with fewer than two ratings are excluded.
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[1] < 2:
        raise TooFewRatings("need an items x raters table with >= 2 raters")
    o, values = _coincidence(table)
    if values.size < 2:
        raise NoVariation("all pairable ratings share a single value")
    marginals = o.sum(axis=1)
    n = marginals.sum()
    d2 = _delta_sq(values, marginals, metric)
    d_o = float(np.sum(o * d2)) / n
    d_e = float(marginals @ d2 @ marginals) / (n * (n - 1.0))
    if d_e == 0.0:
        raise NoVariation("expected disagreement is zero")
    return 1.0 - d_o / d_e


# -- agreement with uncertainty ---------------------------------------------------------------


@dataclass
class AgreementReport:
    metric: AlphaMetric
    alpha_observed: float
    alpha_posterior: np.ndarray
    alpha_counterfactual: np.ndarray

    def to_dict(self) -> dict:
        full = summarize_samples(self.alpha_posterior)
        counter = summarize_samples(self.alpha_counterfactual)
        return {
            "metric": self.metric.value,
            "alpha_observed": self.alpha_observed,
            "alpha_posterior": full.to_dict(),
            "alpha_counterfactual": counter.to_dict(),
        }


def rating_table(ds: Dataset):
    """Units x graders score table.

    A unit is one scored response, keyed by (item, llm, occurrence index); the
    j-th record a grader produces for a given (item, llm) cell is matched with
    the j-th record of every other grader for that cell.
    """
    if ds.kind is not DatasetKind.SCORES:
        raise ShapeMismatch("rating tables require a scores dataset")
    if "item" not in ds.factors:
        raise MissingItemColumn("agreement analysis needs item identifiers")
    graders = ds.factor("grader").levels
    g_index = {g: i for i, g in enumerate(graders)}
    unit_index: dict[tuple, int] = {}
    occurrence: dict[tuple, int] = {}
    cells = []  # (unit_row, grader_col, record)
    for r in ds.records:
        occ_key = (r.grader, r.item, r.llm)
        j = occurrence.get(occ_key, 0)
        occurrence[occ_key] = j + 1
        unit_key = (r.item, r.llm, j)
        row = unit_index.setdefault(unit_key, len(unit_index))
        cells.append((row, g_index[r.grader], r))
    table = np.full((len(unit_index), len(graders)), np.nan)
    for row, col, r in cells:
        table[row, col] = r.score
    return table, cells, graders


def alpha_posterior(
    spec: ModelSpec,
    draws: PosteriorDraws,
    ds: Dataset,
    metric: AlphaMetric = AlphaMetric.ORDINAL,
    n_replicates: int = 500,
    seed: int = 0,
) -> AgreementReport:
    """Distribution over agreement values from posterior score simulations.

    For each selected draw a full replicate table is simulated (same cells as
    observed) and alpha recomputed, once with the full predictor and once with
    grader main effects removed (the counterfactual where graders share a
    common baseline).
    """
    if draws.layout.cutpoint_block is None and spec.fixed_cutpoints is None:
        raise NotOrderedModel("agreement simulation needs an ordinal model")
    table, cells, graders = rating_table(ds)
    alpha_obs = krippendorff_alpha(table, metric)
    rows = [r for (_, _, r) in cells]
    pooled = draws.pooled()
    m = min(n_replicates, pooled.shape[0])
    idx = np.unique(np.linspace(0, pooled.shape[0] - 1, m).round().astype(int))

    samples = {}
    for stream, mode in ((11, PREDICT_FULL), (13, PREDICT_REMOVE_GRADER_MAIN)):
        x = _design_for_rows(
            spec,
            draws.layout,
            rows,
            drop_grader_main=(mode == PREDICT_REMOVE_GRADER_MAIN),
        )
        rng = rng_stream(seed, stream)
        cut_block = draws.layout.cutpoint_block
        vals = np.empty(idx.size)
        for rep, s in enumerate(idx):
            c = pooled[s]
            phi = x @ c
            cut = (
                np.asarray(spec.fixed_cutpoints, dtype=np.float64)
                if cut_block is None
                else c[cut_block.slice]
            )
            scores = sample_scores_from_phi(phi, cut, rng)
            rep_table = np.full(table.shape, np.nan)
            for (row, col, _), sc in zip(cells, scores):
                rep_table[row, col] = sc
            vals[rep] = krippendorff_alpha(rep_table, metric)
        samples[mode] = vals
    return AgreementReport(
        metric=metric,
        alpha_observed=alpha_obs,
        alpha_posterior=samples[PREDICT_FULL],
        alpha_counterfactual=samples[PREDICT_REMOVE_GRADER_MAIN],
    )


# -- cutpoint calibration -----------------------------------------------------------------------


NARROW_BELOW = 1.0
WIDE_FROM = 1.4


@dataclass(frozen=True)
class CalibrationEntry:
    label: str
    latent_value: float
    interval_size: float | None
    classification: str | None

    def to_dict(self) -> dict:
        return {
            "cutpoint": self.label,
            "latent_value": self.latent_value,
            "interval_size": self.interval_size,
            "classification": self.classification,
        }


@dataclass
class CalibrationReport:
    entries: list[CalibrationEntry]

    def interval_sizes(self) -> list[float]:
        return [e.interval_size for e in self.entries if e.interval_size is not None]

    def classifications(self) -> list[str]:
        return [e.classification for e in self.entries if e.classification is not None]

    def to_dict(self) -> dict:
        return {"cutpoints": [e.to_dict() for e in self.entries]}


def classify_interval(size: float) -> str:
    if size < NARROW_BELOW:
        return "narrow"
    if size < WIDE_FROM:
        return "moderate"
    return "wide"


def calibration_from_values(values) -> CalibrationReport:
    """Interval sizes and width classes for a vector of threshold locations."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise ShapeMismatch("need at least two threshold values")
    if np.any(np.diff(values) <= 0):
        raise ShapeMismatch("threshold values must be strictly increasing")
    entries = [CalibrationEntry("c1", float(values[0]), None, None)]
    for j in range(1, values.size):
        size = float(values[j] - values[j - 1])
        entries.append(
            CalibrationEntry(f"c{j + 1}", float(values[j]), size, classify_interval(size))
        )
    return CalibrationReport(entries)


def cutpoint_report(draws: PosteriorDraws) -> CalibrationReport:
    """Posterior-mean threshold calibration for an ordinal model."""
    block = draws.layout.cutpoint_block
    if block is None:
        raise NotOrderedModel("model has no sampled cutpoints")
    means = draws.pooled()[:, block.slice].mean(axis=0)
    return calibration_from_values(means)


# -- transitivity -----------------------------------------------------------------------------


@dataclass
class PairPreference:
    pair: str
    first: str
    second: str
    prob_first: Summary


@dataclass
class TransitivityReport:
    pairs: list[PairPreference]
    cycle_in_means: bool
    cycle_fraction: float

    def to_dict(self) -> dict:
        return {
            "pairs": [
                {
                    "pair": p.pair,
                    "first": p.first,
                    "second": p.second,
                    "prob_first": p.prob_first.to_dict(),
                }
                for p in self.pairs
            ],
            "cycle_in_means": self.cycle_in_means,
            "cycle_fraction": self.cycle_fraction,
        }


def _tournament_has_cycle(prob: np.ndarray) -> bool:
    """Cycle test for a majority tournament given P(i beats j) off-diagonal."""
    n = prob.shape[0]
    wins = (prob > 0.5).astype(int)
    out_degrees = sorted(int(wins[i].sum()) for i in range(n))
    return out_degrees != list(range(n))


def transitivity_check(draws: PosteriorDraws) -> TransitivityReport:
    """Pairwise preference probabilities and cycle flags for a choice model.

    Each pair's probability is P(lexicographically-first member preferred),
    evaluated at zero length difference with the grader effect averaged over
    grader levels (mean of per-grader probabilities).
    """
    layout = draws.layout
    if "pair" not in layout.factors or "llm" not in layout.factors:
        raise ShapeMismatch("transitivity needs a fitted pairwise model")
    llms = layout.factors["llm"].levels
    if len(llms) < 3:
        raise TooFewModels("transitivity needs at least 3 LLMs")
    pair_fac = layout.factors["pair"]
    members = {}
    for label in pair_fac.levels:
        first, second = label.split("_vs_")
        members[label] = (first, second)
    expected = {tuple(sorted((a, b))) for i, a in enumerate(llms) for b in llms[i + 1 :]}
    present = {tuple(sorted(m)) for m in members.values()}
    if expected - present:
        raise ShapeMismatch(f"pairs missing from data: {sorted(expected - present)}")

    spec = draws.spec
    graders = layout.factors["grader"].levels
    pooled = draws.pooled()
    s = pooled.shape[0]

    # design rows: one per (pair, grader), zero covariates
    class _Row:
        def __init__(self, grader, first, second):
            self.grader = grader
            self.llm_first = first
            self.llm_second = second
            self.item = None

    prob_samples = {}
    for label, (first, second) in members.items():
        rows = [_Row(g, first, second) for g in graders]
        covs = {
            t.continuous_covariate: np.zeros(len(rows))
            for t in spec.terms
            if t.continuous_covariate
        }
        x = _design_for_rows(spec, layout, rows, covariates=covs)
        eta = pooled @ x.T  # (s, graders)
        prob_samples[label] = _sigmoid(eta).mean(axis=1)

    llm_index = {m: i for i, m in enumerate(llms)}
    n = len(llms)

    def prob_matrix(at):
        mat = np.full((n, n), 0.5)
        for label, (first, second) in members.items():
            p = at(prob_samples[label])
            i, j = llm_index[first], llm_index[second]
            mat[i, j] = p
            mat[j, i] = 1.0 - p
        return mat

    mean_cycle = _tournament_has_cycle(prob_matrix(lambda v: float(v.mean())))
    cycles = 0
    for d in range(s):
        if _tournament_has_cycle(prob_matrix(lambda v: float(v[d]))):
            cycles += 1
    pairs = [
        PairPreference(
            pair=label,
            first=members[label][0],
            second=members[label][1],
            prob_first=summarize_samples(prob_samples[label]),
        )
        for label in pair_fac.levels
    ]
    return TransitivityReport(
        pairs=pairs,
        cycle_in_means=mean_cycle,
        cycle_fraction=cycles / s,
    )
