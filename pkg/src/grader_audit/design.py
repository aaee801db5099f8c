"""Declarative model specifications and their parameter layout.

A ModelSpec names the likelihood family and a list of terms over dataset
factors. Blocks of free parameters materialize only when a spec is laid out
against a concrete dataset (factor sizes come from the data).

Coding schemes:

* effect  - sum-to-zero contrasts, L-1 free parameters per factor;
* index   - one free parameter per level (or per level combination);
* dummy   - reference-level coding, L-1 free parameters, level 0 dropped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .data import Dataset, DatasetKind, FactorTable, GradeRecord, PairwiseRecord, pair_label
from .errors import (
    IndexOutOfRange,
    InvalidValue,
    ShapeMismatch,
    SingleLevelFactor,
    UnknownLevel,
    UnknownParameter,
)

LENGTH_DIFF = "length_diff"
POOLED = "pooled"


class Likelihood(str, Enum):
    ORDERED_LOGISTIC = "ordered_logistic"
    BERNOULLI_LOGIT = "bernoulli_logit"


class CodingScheme(str, Enum):
    EFFECT = "effect"
    INDEX = "index"
    DUMMY = "dummy"


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    sd: float


@dataclass(frozen=True)
class ScalePrior:
    kind: str  # "half_cauchy" | "half_normal"
    scale: float

    def __post_init__(self):
        if self.kind not in ("half_cauchy", "half_normal"):
            raise InvalidValue(f"unknown scale prior kind {self.kind!r}")


@dataclass(frozen=True)
class HierarchicalPriors:
    mean: NormalPrior
    scale: ScalePrior


@dataclass(frozen=True)
class Term:
    """One additive component of the linear predictor."""

    name: str
    factors: tuple[str, ...]
    coding: CodingScheme
    continuous_covariate: str | None = None
    hierarchical: str | None = None
    coef_prior: NormalPrior = NormalPrior(0.0, 1.0)
    hyper_priors: HierarchicalPriors | None = None

    def __post_init__(self):
        if len(self.factors) not in (1, 2):
            raise InvalidValue(f"term {self.name!r} must reference 1 or 2 factors")
        if len(self.factors) == 2 and self.coding is CodingScheme.EFFECT:
            raise InvalidValue(
                f"term {self.name!r}: interactions use index or dummy coding"
            )
        if self.continuous_covariate and len(self.factors) != 1:
            raise InvalidValue(f"slope term {self.name!r} must reference 1 factor")
        if self.hierarchical and self.coding is not CodingScheme.INDEX:
            raise InvalidValue(
                f"hierarchical term {self.name!r} requires index coding (one parameter per level)"
            )
        if self.hierarchical and self.hyper_priors is None:
            raise InvalidValue(f"hierarchical term {self.name!r} needs hyper priors")


@dataclass(frozen=True)
class CutpointConfig:
    """Priors and transform constants for score thresholds."""

    first: NormalPrior = NormalPrior(-4.0, 0.2)
    log_gap: NormalPrior = NormalPrior(-0.5, 0.3)  # LogNormal on raw gap increments
    gap_shift: float = 0.3


@dataclass(frozen=True)
class ModelSpec:
    likelihood: Likelihood
    terms: tuple[Term, ...]
    n_categories: int | None = None
    intercept_prior: NormalPrior = NormalPrior(0.0, 1.0)
    cutpoints: CutpointConfig = field(default_factory=CutpointConfig)
    fixed_cutpoints: tuple[float, ...] | None = None
    name: str = "custom"

    def __post_init__(self):
        names = [t.name for t in self.terms]
        if len(set(names)) != len(names):
            raise InvalidValue("term names must be unique")
        if self.fixed_cutpoints is not None:
            fc = np.asarray(self.fixed_cutpoints, dtype=float)
            if fc.size >= 2 and np.any(np.diff(fc) <= 0):
                raise InvalidValue("fixed cutpoints must be strictly increasing")

    # -- JSON round trip ------------------------------------------------------

    def to_json(self) -> str:
        def term_dict(t: Term) -> dict:
            d = {
                "name": t.name,
                "factors": list(t.factors),
                "coding": t.coding.value,
                "coef_prior": [t.coef_prior.mean, t.coef_prior.sd],
            }
            if t.continuous_covariate:
                d["continuous_covariate"] = t.continuous_covariate
            if t.hierarchical:
                d["hierarchical"] = t.hierarchical
                d["hyper_mean_prior"] = [t.hyper_priors.mean.mean, t.hyper_priors.mean.sd]
                d["hyper_scale_prior"] = [t.hyper_priors.scale.kind, t.hyper_priors.scale.scale]
            return d

        payload = {
            "name": self.name,
            "likelihood": self.likelihood.value,
            "terms": [term_dict(t) for t in self.terms],
            "n_categories": self.n_categories,
            "intercept_prior": [self.intercept_prior.mean, self.intercept_prior.sd],
            "cutpoints": {
                "first": [self.cutpoints.first.mean, self.cutpoints.first.sd],
                "log_gap": [self.cutpoints.log_gap.mean, self.cutpoints.log_gap.sd],
                "gap_shift": self.cutpoints.gap_shift,
            },
            "fixed_cutpoints": list(self.fixed_cutpoints) if self.fixed_cutpoints else None,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        payload = json.loads(text)
        terms = []
        for d in payload["terms"]:
            hyper = None
            if d.get("hierarchical"):
                hm = d["hyper_mean_prior"]
                hs = d["hyper_scale_prior"]
                hyper = HierarchicalPriors(
                    mean=NormalPrior(hm[0], hm[1]), scale=ScalePrior(hs[0], hs[1])
                )
            cp = d.get("coef_prior", [0.0, 1.0])
            terms.append(
                Term(
                    name=d["name"],
                    factors=tuple(d["factors"]),
                    coding=CodingScheme(d["coding"]),
                    continuous_covariate=d.get("continuous_covariate"),
                    hierarchical=d.get("hierarchical"),
                    coef_prior=NormalPrior(cp[0], cp[1]),
                    hyper_priors=hyper,
                )
            )
        cut = payload.get("cutpoints", {})
        cfg = CutpointConfig(
            first=NormalPrior(*cut.get("first", (-4.0, 0.2))),
            log_gap=NormalPrior(*cut.get("log_gap", (-0.5, 0.3))),
            gap_shift=cut.get("gap_shift", 0.3),
        )
        ip = payload.get("intercept_prior", [0.0, 1.0])
        fixed = payload.get("fixed_cutpoints")
        return cls(
            likelihood=Likelihood(payload["likelihood"]),
            terms=tuple(terms),
            n_categories=payload.get("n_categories"),
            intercept_prior=NormalPrior(ip[0], ip[1]),
            cutpoints=cfg,
            fixed_cutpoints=tuple(fixed) if fixed else None,
            name=payload.get("name", "custom"),
        )


# -- coding -------------------------------------------------------------------


def effect_code(n_levels: int, level: int) -> np.ndarray:
    """Sum-to-zero contrast row for one level over L-1 free parameters.

    For two levels the weights are +1 (level 0) and -1 (level 1); in general
    level j < L-1 maps to an indicator row and the last level to all -1.
    """
    if n_levels < 2:
        raise SingleLevelFactor(f"effect coding needs >= 2 levels, got {n_levels}")
    if not 0 <= level < n_levels:
        raise IndexOutOfRange(f"level {level} outside 0..{n_levels - 1}")
    row = np.zeros(n_levels - 1)
    if level < n_levels - 1:
        row[level] = 1.0
    else:
        row[:] = -1.0
    return row


def dummy_code(n_levels: int, level: int) -> np.ndarray:
    """Reference-level contrast row (level 0 is the reference)."""
    if n_levels < 2:
        raise SingleLevelFactor(f"dummy coding needs >= 2 levels, got {n_levels}")
    if not 0 <= level < n_levels:
        raise IndexOutOfRange(f"level {level} outside 0..{n_levels - 1}")
    row = np.zeros(n_levels - 1)
    if level > 0:
        row[level - 1] = 1.0
    return row


def index_code(a: int, b: int, dims: tuple[int, int]) -> int:
    """Flat index of a level combination over an (LA, LB) grid."""
    la, lb = dims
    if not (0 <= a < la and 0 <= b < lb):
        raise IndexOutOfRange(f"indices ({a}, {b}) outside grid {dims}")
    return a * lb + b


# -- parameter layout ---------------------------------------------------------

BLOCK_INTERCEPT = "intercept"
BLOCK_COEF = "coef"  # effect / dummy / index / slope blocks (linear in phi)
BLOCK_HYPER_MEAN = "hyper_mean"
BLOCK_HYPER_SCALE = "hyper_scale"
BLOCK_CUTPOINTS = "cutpoints"


@dataclass(frozen=True)
class Block:
    name: str
    kind: str
    offset: int
    size: int
    labels: tuple[str, ...]
    term: Term | None = None
    # index of each member level's group, for hierarchical coefficient blocks
    member_group: tuple[int, ...] | None = None
    group_labels: tuple[str, ...] | None = None

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)


class ParameterLayout:
    """Maps named parameter blocks onto one flat vector.

    The unconstrained and constrained vectors share offsets; only scale and
    cutpoint blocks change meaning between the two spaces.
    """

    def __init__(self, spec: ModelSpec, ds: Dataset):
        self.spec = spec
        self.factors: dict[str, FactorTable] = dict(ds.factors)
        self.kind = ds.kind
        self.n_categories = None
        if spec.likelihood is Likelihood.ORDERED_LOGISTIC:
            k = spec.n_categories or ds.n_categories
            if k is None:
                raise ShapeMismatch("ordered-logistic spec needs a category count")
            if ds.n_categories is not None and spec.n_categories is not None:
                if ds.n_categories != spec.n_categories:
                    raise ShapeMismatch(
                        f"spec K={spec.n_categories} but dataset K={ds.n_categories}"
                    )
            self.n_categories = k

        blocks: list[Block] = []
        offset = 0

        def add(name, kind, size, labels, term=None, member_group=None, group_labels=None):
            nonlocal offset
            blocks.append(
                Block(
                    name=name,
                    kind=kind,
                    offset=offset,
                    size=size,
                    labels=tuple(labels),
                    term=term,
                    member_group=member_group,
                    group_labels=group_labels,
                )
            )
            offset += size

        add("intercept", BLOCK_INTERCEPT, 1, ("intercept",))

        for term in spec.terms:
            for f in term.factors:
                if f not in self.factors:
                    raise UnknownLevel(f"term {term.name!r}: dataset has no factor {f!r}")
            if len(term.factors) == 2:
                fa, fb = (self.factors[f] for f in term.factors)
                labels = [
                    f"{term.name}[{a},{b}]" for a in fa.levels for b in fb.levels
                ]
                add(term.name, BLOCK_COEF, fa.n_levels * fb.n_levels, labels, term)
                continue
            fac = self.factors[term.factors[0]]
            if term.coding is CodingScheme.EFFECT:
                if fac.n_levels < 2:
                    raise SingleLevelFactor(
                        f"factor {fac.name!r} has a single level; effect coding undefined"
                    )
                labels = [f"{term.name}[{lvl}]" for lvl in fac.levels[:-1]]
                add(term.name, BLOCK_COEF, fac.n_levels - 1, labels, term)
            elif term.coding is CodingScheme.DUMMY:
                if fac.n_levels < 2:
                    raise SingleLevelFactor(
                        f"factor {fac.name!r} has a single level; dummy coding undefined"
                    )
                labels = [f"{term.name}[{lvl}]" for lvl in fac.levels[1:]]
                add(term.name, BLOCK_COEF, fac.n_levels - 1, labels, term)
            else:  # index coding: one parameter per level
                labels = [f"{term.name}[{lvl}]" for lvl in fac.levels]
                member_group = None
                group_labels = None
                if term.hierarchical:
                    member_group, group_labels = self._resolve_groups(term, fac, ds)
                add(
                    term.name,
                    BLOCK_COEF,
                    fac.n_levels,
                    labels,
                    term,
                    member_group,
                    group_labels,
                )
                if term.hierarchical:
                    if len(group_labels) == 1 and group_labels[0] == POOLED:
                        mean_labels = [f"{term.name}_mu"]
                        scale_labels = [f"{term.name}_sigma"]
                    else:
                        mean_labels = [f"{term.name}_mu[{g}]" for g in group_labels]
                        scale_labels = [f"{term.name}_sigma[{g}]" for g in group_labels]
                    add(f"{term.name}_mu", BLOCK_HYPER_MEAN, len(group_labels), mean_labels, term)
                    add(
                        f"{term.name}_sigma",
                        BLOCK_HYPER_SCALE,
                        len(group_labels),
                        scale_labels,
                        term,
                    )

        if self.n_categories is not None and spec.fixed_cutpoints is None:
            k = self.n_categories
            add(
                "cutpoints",
                BLOCK_CUTPOINTS,
                k - 1,
                [f"cutpoint[{j}]" for j in range(1, k)],
            )
        if spec.fixed_cutpoints is not None and self.n_categories is not None:
            if len(spec.fixed_cutpoints) != self.n_categories - 1:
                raise ShapeMismatch(
                    f"fixed cutpoints length {len(spec.fixed_cutpoints)} != K-1 = {self.n_categories - 1}"
                )

        self.blocks = tuple(blocks)
        self.size = offset
        self._by_name = {b.name: b for b in blocks}
        self.param_names: tuple[str, ...] = tuple(
            lbl for b in blocks for lbl in b.labels
        )
        self._param_index = {n: i for i, n in enumerate(self.param_names)}

    def _resolve_groups(self, term: Term, fac: FactorTable, ds: Dataset):
        if term.hierarchical == POOLED:
            return tuple(0 for _ in fac.levels), (POOLED,)
        if term.hierarchical == "grader_type":
            if ds.grader_types is None:
                raise ShapeMismatch(
                    f"term {term.name!r} groups by grader_type but the dataset has none"
                )
            group_labels: list[str] = []
            member_group = []
            for lvl in fac.levels:
                gt = ds.grader_types[lvl].value
                if gt not in group_labels:
                    group_labels.append(gt)
                member_group.append(group_labels.index(gt))
            return tuple(member_group), tuple(group_labels)
        raise UnknownLevel(
            f"term {term.name!r}: unsupported grouping {term.hierarchical!r}"
        )

    def block(self, name: str) -> Block:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownParameter(f"no parameter block {name!r}") from None

    def has_block(self, name: str) -> bool:
        return name in self._by_name

    def param_index(self, name: str) -> int:
        try:
            return self._param_index[name]
        except KeyError:
            raise UnknownParameter(f"no parameter named {name!r}") from None

    @property
    def coef_blocks(self) -> tuple[Block, ...]:
        return tuple(b for b in self.blocks if b.kind in (BLOCK_INTERCEPT, BLOCK_COEF))

    @property
    def scale_blocks(self) -> tuple[Block, ...]:
        return tuple(b for b in self.blocks if b.kind == BLOCK_HYPER_SCALE)

    @property
    def cutpoint_block(self) -> Block | None:
        return self._by_name.get("cutpoints")


class ParameterVector:
    """Named view over one flat constrained parameter vector."""

    def __init__(self, layout: ParameterLayout, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (layout.size,):
            raise ShapeMismatch(
                f"expected vector of length {layout.size}, got shape {values.shape}"
            )
        self.layout = layout
        self.values = values

    def __getitem__(self, block_name: str) -> np.ndarray:
        return self.values[self.layout.block(block_name).slice]

    def by_param(self, name: str) -> float:
        return float(self.values[self.layout.param_index(name)])

    def to_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.layout.param_names, self.values)}


# -- linear predictor ---------------------------------------------------------


def _record_factor_level(record, factor_name: str, layout: ParameterLayout) -> int:
    fac = layout.factors[factor_name]
    if isinstance(record, GradeRecord):
        value = {"grader": record.grader, "llm": record.llm, "item": record.item}.get(
            factor_name
        )
    else:
        value = {
            "grader": record.grader,
            "pair": pair_label(record.llm_first, record.llm_second),
            "item": record.item,
        }.get(factor_name)
    if value is None:
        raise UnknownLevel(f"record has no value for factor {factor_name!r}")
    return fac.code(value)


def term_weights(term: Term, record, layout: ParameterLayout) -> np.ndarray:
    """Per-parameter weights of one term's contribution for one record.

    The covariate weight for slope terms is excluded; multiply externally.
    """
    if len(term.factors) == 2:
        fa = layout.factors[term.factors[0]]
        fb = layout.factors[term.factors[1]]
        a = _record_factor_level(record, term.factors[0], layout)
        b = _record_factor_level(record, term.factors[1], layout)
        w = np.zeros(fa.n_levels * fb.n_levels)
        w[index_code(a, b, (fa.n_levels, fb.n_levels))] = 1.0
        return w
    fac = layout.factors[term.factors[0]]
    level = _record_factor_level(record, term.factors[0], layout)
    if term.coding is CodingScheme.EFFECT:
        return effect_code(fac.n_levels, level)
    if term.coding is CodingScheme.DUMMY:
        return dummy_code(fac.n_levels, level)
    w = np.zeros(fac.n_levels)
    w[level] = 1.0
    return w


def linear_predictor(
    spec: ModelSpec,
    record,
    params: ParameterVector,
    covariates: dict[str, float] | None = None,
) -> float:
    """Latent-scale predictor for one record under one parameter vector.

    ``covariates`` supplies named continuous values (e.g. the standardized
    token-length difference) for slope terms.
    """
    layout = params.layout
    phi = float(params["intercept"][0])
    for term in spec.terms:
        w = term_weights(term, record, layout)
        contribution = float(w @ params[term.name])
        if term.continuous_covariate:
            if not covariates or term.continuous_covariate not in covariates:
                raise ShapeMismatch(
                    f"term {term.name!r} needs covariate {term.continuous_covariate!r}"
                )
            contribution *= covariates[term.continuous_covariate]
        phi += contribution
    return phi


# -- presets ------------------------------------------------------------------

PRESET_NAMES = (
    "q1_1",
    "q1_1_null",
    "q1_2",
    "q2",
    "q3_flat",
    "q3_hier",
    "q4",
    "q5",
    "q5_no_length",
)

_GRADER_TYPE_HYPER = HierarchicalPriors(
    mean=NormalPrior(0.0, 3.0), scale=ScalePrior("half_cauchy", 1.0)
)
_LENGTH_HYPER = HierarchicalPriors(
    mean=NormalPrior(0.0, 0.5), scale=ScalePrior("half_normal", 1.0)
)


def preset(name: str) -> ModelSpec:
    """Ready-made model specification for each supported analysis question."""
    key = name.lower()
    grader_eff = Term("grader", ("grader",), CodingScheme.EFFECT)
    llm_eff = Term("llm", ("llm",), CodingScheme.EFFECT)
    if key == "q1_1":
        return ModelSpec(Likelihood.ORDERED_LOGISTIC, (grader_eff,), name=key)
    if key == "q1_1_null":
        return ModelSpec(Likelihood.ORDERED_LOGISTIC, (), name=key)
    if key in ("q1_2", "q3_flat"):
        return ModelSpec(Likelihood.ORDERED_LOGISTIC, (grader_eff, llm_eff), name=key)
    if key == "q2":
        return ModelSpec(
            Likelihood.ORDERED_LOGISTIC,
            (
                grader_eff,
                llm_eff,
                Term("grader_x_llm", ("grader", "llm"), CodingScheme.INDEX),
            ),
            name=key,
        )
    if key == "q3_hier":
        return ModelSpec(
            Likelihood.ORDERED_LOGISTIC,
            (
                Term(
                    "grader",
                    ("grader",),
                    CodingScheme.INDEX,
                    hierarchical="grader_type",
                    hyper_priors=_GRADER_TYPE_HYPER,
                ),
                llm_eff,
            ),
            name=key,
        )
    if key == "q4":
        return ModelSpec(
            Likelihood.ORDERED_LOGISTIC,
            (
                grader_eff,
                llm_eff,
                Term("item", ("item",), CodingScheme.EFFECT),
                Term("grader_x_item", ("grader", "item"), CodingScheme.INDEX),
            ),
            name=key,
        )
    if key == "q5":
        return ModelSpec(
            Likelihood.BERNOULLI_LOGIT,
            (
                Term("pair", ("pair",), CodingScheme.EFFECT),
                grader_eff,
                Term(
                    "length_bias",
                    ("grader",),
                    CodingScheme.INDEX,
                    continuous_covariate=LENGTH_DIFF,
                    hierarchical=POOLED,
                    hyper_priors=_LENGTH_HYPER,
                ),
            ),
            name=key,
        )
    if key == "q5_no_length":
        return ModelSpec(
            Likelihood.BERNOULLI_LOGIT,
            (Term("pair", ("pair",), CodingScheme.EFFECT), grader_eff),
            name=key,
        )
    raise UnknownParameter(f"unknown preset {name!r}; valid: {', '.join(PRESET_NAMES)}")
