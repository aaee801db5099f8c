"""Log-density kernels, priors, transforms, and the joint posterior gradient.

The unconstrained parameterization used for sampling:

* coefficients and hyper-means map to themselves;
* hyper-scales map through ``sigma = exp(s)`` (log-Jacobian ``s``);
* score thresholds map through ``c_1 = z_1``,
  ``c_j = c_{j-1} + exp(z_j) + gap_shift`` (log-Jacobian ``sum z_j, j >= 2``),
  which guarantees strictly increasing thresholds with gaps of at least
  ``gap_shift``. The log-normal prior applies to the raw increments
  ``exp(z_j)``.

Gradients are derived by hand per block and checked against central finite
differences in the test suite.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .data import Dataset, DatasetKind, raw_length_diffs
from .design import (
    BLOCK_COEF,
    BLOCK_CUTPOINTS,
    BLOCK_HYPER_MEAN,
    BLOCK_HYPER_SCALE,
    BLOCK_INTERCEPT,
    LENGTH_DIFF,
    CodingScheme,
    Likelihood,
    ModelSpec,
    ParameterLayout,
    ParameterVector,
    Term,
    term_weights,
)
from .errors import (
    DegenerateLengths,
    InvalidScore,
    InvalidValue,
    NonFiniteDensity,
    NonPositiveScale,
    ShapeMismatch,
)

LOG_2PI = math.log(2.0 * math.pi)


# -- scalar density helpers -----------------------------------------------------


def normal_logpdf(x, mean, sd):
    x = np.asarray(x, dtype=np.float64)
    z = (x - mean) / sd
    return float(x.size * (-0.5 * LOG_2PI - math.log(sd)) - 0.5 * np.sum(z * z))


def half_cauchy_logpdf(x, scale):
    if x <= 0:
        raise NonPositiveScale(f"half-Cauchy support is positive, got {x}")
    return math.log(2.0) - math.log(math.pi) - math.log(scale) - math.log1p((x / scale) ** 2)


def half_normal_logpdf(x, scale):
    if x <= 0:
        raise NonPositiveScale(f"half-normal support is positive, got {x}")
    return (
        math.log(2.0) - 0.5 * LOG_2PI - math.log(scale) - 0.5 * (x / scale) ** 2
    )


def lognormal_logpdf(x, mean, sd):
    if x <= 0:
        return -math.inf
    lx = math.log(x)
    return -lx - math.log(sd) - 0.5 * LOG_2PI - 0.5 * ((lx - mean) / sd) ** 2


# -- public log-pmf operations ---------------------------------------------------


def _validate_cutpoints(cut) -> np.ndarray:
    cut = np.asarray(cut, dtype=np.float64)
    if cut.ndim != 1 or cut.size < 1:
        raise ShapeMismatch("cutpoints must be a non-empty 1-D vector")
    if np.any(np.diff(cut) <= 0):
        raise InvalidValue("cutpoints must be strictly increasing")
    return cut


def ordered_logistic_logpmf(score: int, phi: float, cut) -> float:
    """Log probability of one score under a cumulative-logit model.

    ``cut`` has K-1 strictly increasing entries; valid scores are 1..K.
    """
    cut = _validate_cutpoints(cut)
    k_max = cut.size + 1
    if not 1 <= score <= k_max:
        raise InvalidScore(f"score {score} outside 1..{k_max}")
    row = kernels.ordered_logistic_rows(
        np.array([score], dtype=np.int64), np.array([phi], dtype=np.float64), cut
    )
    return float(row[0])


def bernoulli_logit_logpmf(y: int, eta: float) -> float:
    """Log probability of a binary outcome with logit ``eta``."""
    if y not in (0, 1):
        raise InvalidScore(f"binary outcome must be 0 or 1, got {y}")
    row = kernels.bernoulli_logit_rows(
        np.array([y], dtype=np.int64), np.array([eta], dtype=np.float64)
    )
    return float(row[0])


def ordered_logistic_pmf(phi: float, cut) -> np.ndarray:
    """Full probability vector over 1..K for one latent value."""
    cut = _validate_cutpoints(cut)
    k = cut.size + 1
    scores = np.arange(1, k + 1, dtype=np.int64)
    rows = kernels.ordered_logistic_rows(scores, np.full(k, phi), cut)
    return np.exp(rows)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-ax)), np.exp(-ax) / (1.0 + np.exp(-ax)))


def sample_ordered_logistic(phi: np.ndarray, cut: np.ndarray, rng) -> np.ndarray:
    """Inverse-CDF draw of one score per latent value in ``phi``."""
    phi = np.asarray(phi, dtype=np.float64)
    u = rng.random(phi.shape)
    cdf = _stable_sigmoid(cut[None, :] - phi[:, None])  # P(score <= j)
    return (1 + np.sum(u[:, None] > cdf, axis=1)).astype(np.int64)


def sample_bernoulli_logit(eta: np.ndarray, rng) -> np.ndarray:
    """One Bernoulli draw per logit in ``eta``."""
    eta = np.asarray(eta, dtype=np.float64)
    return (rng.random(eta.shape) < _stable_sigmoid(eta)).astype(np.int64)


# -- cutpoint transform -----------------------------------------------------------


def cutpoints_from_unconstrained(z, gap_shift: float = 0.3):
    """Map unconstrained threshold coordinates to increasing cutpoints.

    Returns ``(cutpoints, log_jacobian)``.
    """
    z = np.asarray(z, dtype=np.float64)
    c = np.empty_like(z)
    c[0] = z[0]
    if z.size > 1:
        gaps = np.exp(z[1:]) + gap_shift
        c[1:] = z[0] + np.cumsum(gaps)
    log_jac = float(z[1:].sum())
    return c, log_jac


def cutpoints_to_unconstrained(cut, gap_shift: float = 0.3) -> np.ndarray:
    cut = np.asarray(cut, dtype=np.float64)
    z = np.empty_like(cut)
    z[0] = cut[0]
    if cut.size > 1:
        raw = np.diff(cut) - gap_shift
        if np.any(raw <= 0):
            raise InvalidValue(
                f"cutpoint gaps must exceed the shift constant {gap_shift}"
            )
        z[1:] = np.log(raw)
    return z


# -- prior over the constrained vector --------------------------------------------


def _scale_prior_value_grad(sigma: float, prior) -> tuple[float, float]:
    if prior.kind == "half_cauchy":
        val = half_cauchy_logpdf(sigma, prior.scale)
        grad = -2.0 * sigma / (prior.scale**2 + sigma**2)
    else:
        val = half_normal_logpdf(sigma, prior.scale)
        grad = -sigma / prior.scale**2
    return val, grad


class _PriorPlan:
    """Precompiled index arrays for fast prior evaluation over one layout."""

    def __init__(self, layout: ParameterLayout):
        spec = layout.spec
        plain_idx: list[int] = []
        plain_mean: list[float] = []
        plain_inv_var: list[float] = []
        self.plain_const = 0.0

        def add_plain(block, prior):
            nonlocal plain_idx, plain_mean, plain_inv_var
            for i in range(block.size):
                plain_idx.append(block.offset + i)
                plain_mean.append(prior.mean)
                plain_inv_var.append(1.0 / prior.sd**2)
            self.plain_const += block.size * (-0.5 * LOG_2PI - math.log(prior.sd))

        self.hier: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self.scales: list[tuple[np.ndarray, object]] = []
        self.cut = None

        hyper_blocks: dict[str, dict[str, object]] = {}
        for block in layout.blocks:
            if block.kind == BLOCK_HYPER_MEAN:
                hyper_blocks.setdefault(block.term.name, {})["mu"] = block
            elif block.kind == BLOCK_HYPER_SCALE:
                hyper_blocks.setdefault(block.term.name, {})["sigma"] = block

        for block in layout.blocks:
            if block.kind == BLOCK_INTERCEPT:
                add_plain(block, spec.intercept_prior)
            elif block.kind == BLOCK_COEF:
                if block.term.hierarchical:
                    mu_block = hyper_blocks[block.term.name]["mu"]
                    sig_block = hyper_blocks[block.term.name]["sigma"]
                    g = np.asarray(block.member_group, dtype=np.int64)
                    mem = np.arange(block.offset, block.offset + block.size)
                    self.hier.append((mem, mu_block.offset + g, sig_block.offset + g))
                else:
                    add_plain(block, block.term.coef_prior)
            elif block.kind == BLOCK_HYPER_MEAN:
                add_plain(block, block.term.hyper_priors.mean)
            elif block.kind == BLOCK_HYPER_SCALE:
                idx = np.arange(block.offset, block.offset + block.size)
                self.scales.append((idx, block.term.hyper_priors.scale))
            elif block.kind == BLOCK_CUTPOINTS:
                self.cut = (block.offset, block.size, spec.cutpoints)

        self.plain_idx = np.asarray(plain_idx, dtype=np.int64)
        self.plain_mean = np.asarray(plain_mean)
        self.plain_inv_var = np.asarray(plain_inv_var)
        self.dim = layout.size

    def value_grad(self, c: np.ndarray) -> tuple[float, np.ndarray]:
        """Log prior and gradient in constrained space.

        Non-positive scales or gaps yield -inf / non-finite entries rather than
        raising, so the sampler can treat them as zero-density points.
        """
        grad = np.zeros(self.dim)
        diff = c[self.plain_idx] - self.plain_mean
        val = self.plain_const - 0.5 * float(np.dot(diff * diff, self.plain_inv_var))
        grad[self.plain_idx] = -diff * self.plain_inv_var

        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for mem, mu_i, sig_i in self.hier:
                x = c[mem]
                m = c[mu_i]
                s = c[sig_i]
                if np.any(s <= 0):
                    return -math.inf, grad
                r = (x - m) / (s * s)
                val += float(np.sum(-0.5 * LOG_2PI - np.log(s) - 0.5 * (x - m) * r))
                grad[mem] += -r
                np.add.at(grad, mu_i, r)
                np.add.at(grad, sig_i, -1.0 / s + (x - m) * r / s)
            for idx, prior in self.scales:
                sigma = c[idx]
                if np.any(sigma <= 0):
                    return -math.inf, grad
                if prior.kind == "half_cauchy":
                    val += float(
                        idx.size * (math.log(2.0) - math.log(math.pi) - math.log(prior.scale))
                        - np.sum(np.log1p((sigma / prior.scale) ** 2))
                    )
                    grad[idx] += -2.0 * sigma / (prior.scale**2 + sigma**2)
                else:
                    val += float(
                        idx.size * (math.log(2.0) - 0.5 * LOG_2PI - math.log(prior.scale))
                        - 0.5 * np.sum((sigma / prior.scale) ** 2)
                    )
                    grad[idx] += -sigma / prior.scale**2
            if self.cut is not None:
                offset, size, cfg = self.cut
                x = c[offset : offset + size]
                first = cfg.first
                val += -0.5 * LOG_2PI - math.log(first.sd) - 0.5 * ((x[0] - first.mean) / first.sd) ** 2
                grad[offset] += -(x[0] - first.mean) / first.sd**2
                if size > 1:
                    raw = np.diff(x) - cfg.gap_shift
                    if np.any(raw <= 0):
                        return -math.inf, grad
                    m, s = cfg.log_gap.mean, cfg.log_gap.sd
                    lr = np.log(raw)
                    val += float(
                        np.sum(-lr - math.log(s) - 0.5 * LOG_2PI - 0.5 * ((lr - m) / s) ** 2)
                    )
                    dr = -1.0 / raw - (lr - m) / (s**2 * raw)
                    grad[offset + 1 : offset + size] += dr
                    grad[offset : offset + size - 1] -= dr
        return val, grad


def _prior_value_grad(c: np.ndarray, layout: ParameterLayout) -> tuple[float, np.ndarray]:
    return _PriorPlan(layout).value_grad(c)


def prior_logpdf(params: ParameterVector, spec: ModelSpec | None = None) -> float:
    """Sum of log prior densities over all parameter blocks (constrained space)."""
    layout = params.layout
    if spec is not None and spec is not layout.spec and spec != layout.spec:
        raise ShapeMismatch("parameter vector was laid out for a different spec")
    for block in layout.scale_blocks:
        if np.any(params.values[block.slice] <= 0):
            raise NonPositiveScale(f"block {block.name!r} has non-positive scale")
    cut_block = layout.cutpoint_block
    if cut_block is not None:
        _validate_cutpoints(params.values[cut_block.slice])
    val, _ = _prior_value_grad(params.values, layout)
    return val


# -- compiled model ----------------------------------------------------------------


def oriented_covariates(ds: Dataset) -> dict[str, np.ndarray]:
    """Continuous covariates in canonical pair orientation.

    Pairwise token-length differences are flipped to the lexicographic pair
    orientation before centering/scaling, so the slope covariate means
    "canonical-first minus canonical-second".
    """
    if ds.kind is not DatasetKind.PAIRWISE:
        return {}
    flips = np.array(
        [1.0 if r.llm_first <= r.llm_second else -1.0 for r in ds.records]
    )
    diffs = raw_length_diffs(ds) * flips
    if diffs.size < 2 or np.all(diffs == diffs[0]):
        raise DegenerateLengths("all token-length differences are identical")
    centered = diffs - diffs.mean()
    sd = centered.std(ddof=1)
    return {LENGTH_DIFF: centered / sd}


class CompiledModel:
    """Model spec bound to a dataset: design matrix, outcomes, densities."""

    def __init__(self, spec: ModelSpec, ds: Dataset):
        self.spec = spec
        self.dataset = ds
        self.layout = ParameterLayout(spec, ds)
        if spec.likelihood is Likelihood.BERNOULLI_LOGIT and ds.kind is not DatasetKind.PAIRWISE:
            raise ShapeMismatch("binary-choice likelihood needs a pairwise dataset")
        if spec.likelihood is Likelihood.ORDERED_LOGISTIC and ds.kind is not DatasetKind.SCORES:
            raise ShapeMismatch("ordered-logistic likelihood needs a scores dataset")
        needs_length = any(t.continuous_covariate == LENGTH_DIFF for t in spec.terms)
        self.covariates = oriented_covariates(ds) if (needs_length and ds.n_records) else {}
        self._prior_plan = _PriorPlan(self.layout)
        self._build()

    # design ------------------------------------------------------------------

    def _build(self):
        layout = self.layout
        n = self.dataset.n_records
        x = np.zeros((n, layout.size))
        x[:, layout.block("intercept").offset] = 1.0
        for term in self.spec.terms:
            block = layout.block(term.name)
            cov = None
            if term.continuous_covariate:
                cov = self.covariates.get(term.continuous_covariate)
                if cov is None and n:
                    raise ShapeMismatch(
                        f"term {term.name!r} needs covariate {term.continuous_covariate!r}"
                    )
            for i, record in enumerate(self.dataset.records):
                w = term_weights(term, record, layout)
                if cov is not None:
                    w = w * cov[i]
                x[i, block.slice] = w
        self.design = x
        if self.spec.likelihood is Likelihood.ORDERED_LOGISTIC:
            self.outcomes = np.array(
                [r.score for r in self.dataset.records], dtype=np.int64
            )
        else:
            flips = [r.llm_first > r.llm_second for r in self.dataset.records]
            self.outcomes = np.array(
                [
                    int(r.chose_first) ^ int(f)
                    for r, f in zip(self.dataset.records, flips)
                ],
                dtype=np.int64,
            )
        if self.spec.fixed_cutpoints is not None:
            self.fixed_cut = np.asarray(self.spec.fixed_cutpoints, dtype=np.float64)
        else:
            self.fixed_cut = None

    @property
    def dim(self) -> int:
        return self.layout.size

    # transforms ----------------------------------------------------------------

    def constrain_array(self, u: np.ndarray) -> np.ndarray:
        c = np.array(u, dtype=np.float64, copy=True)
        for block in self.layout.scale_blocks:
            c[block.slice] = np.exp(u[block.slice])
        cut_block = self.layout.cutpoint_block
        if cut_block is not None:
            cut, _ = cutpoints_from_unconstrained(
                u[cut_block.slice], self.spec.cutpoints.gap_shift
            )
            c[cut_block.slice] = cut
        return c

    def constrain(self, u: np.ndarray) -> ParameterVector:
        return ParameterVector(self.layout, self.constrain_array(np.asarray(u, float)))

    def unconstrain_array(self, c: np.ndarray) -> np.ndarray:
        u = np.array(c, dtype=np.float64, copy=True)
        for block in self.layout.scale_blocks:
            sigma = c[block.slice]
            if np.any(sigma <= 0):
                raise NonPositiveScale(f"block {block.name!r} has non-positive scale")
            u[block.slice] = np.log(sigma)
        cut_block = self.layout.cutpoint_block
        if cut_block is not None:
            u[cut_block.slice] = cutpoints_to_unconstrained(
                c[cut_block.slice], self.spec.cutpoints.gap_shift
            )
        return u

    def log_jacobian(self, u: np.ndarray) -> float:
        val = 0.0
        for block in self.layout.scale_blocks:
            val += float(np.sum(u[block.slice]))
        cut_block = self.layout.cutpoint_block
        if cut_block is not None and cut_block.size > 1:
            val += float(np.sum(u[cut_block.offset + 1 : cut_block.offset + cut_block.size]))
        return val

    # densities -------------------------------------------------------------------

    def _likelihood_value_grad(self, c: np.ndarray):
        phi = self.design @ c
        if self.spec.likelihood is Likelihood.ORDERED_LOGISTIC:
            cut_block = self.layout.cutpoint_block
            cut = self.fixed_cut if cut_block is None else c[cut_block.slice]
            ll, dphi, dcut = kernels.ordered_logistic_ll_grad(self.outcomes, phi, cut)
            grad_c = self.design.T @ dphi
            if cut_block is not None:
                grad_c[cut_block.slice] += dcut
            return ll, grad_c
        ll, deta = kernels.bernoulli_logit_ll_grad(self.outcomes, phi)
        return ll, self.design.T @ deta

    def value_grad(self, u: np.ndarray, on_nonfinite: str = "neginf"):
        """Joint log density (likelihood + prior + Jacobian) and its gradient in
        unconstrained coordinates."""
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.dim,):
            raise ShapeMismatch(f"expected vector of length {self.dim}, got {u.shape}")
        zeros = np.zeros(self.dim)
        c = self.constrain_array(u)
        if not np.all(np.isfinite(c)):
            return self._nonfinite("constrain transform", on_nonfinite, zeros)
        if self.dataset.n_records:
            ll, grad_c_lik = self._likelihood_value_grad(c)
        else:
            ll, grad_c_lik = 0.0, zeros.copy()
        if not (np.isfinite(ll) and np.all(np.isfinite(grad_c_lik))):
            return self._nonfinite("likelihood", on_nonfinite, zeros)
        pv, grad_c_prior = self._prior_plan.value_grad(c)
        if not np.isfinite(pv):
            return self._nonfinite("prior", on_nonfinite, zeros)
        grad_c = grad_c_lik + grad_c_prior
        grad_u = grad_c.copy()
        for block in self.layout.scale_blocks:
            grad_u[block.slice] = grad_c[block.slice] * c[block.slice] + 1.0
        cut_block = self.layout.cutpoint_block
        if cut_block is not None:
            sl = cut_block.slice
            rev = np.cumsum(grad_c[sl][::-1])[::-1]
            gu = np.empty(cut_block.size)
            gu[0] = rev[0]
            if cut_block.size > 1:
                gu[1:] = np.exp(u[sl][1:]) * rev[1:] + 1.0
            grad_u[sl] = gu
        value = ll + pv + self.log_jacobian(u)
        if not (np.isfinite(value) and np.all(np.isfinite(grad_u))):
            return self._nonfinite("gradient assembly", on_nonfinite, zeros)
        return value, grad_u

    @staticmethod
    def _nonfinite(where: str, mode: str, zeros: np.ndarray):
        if mode == "raise":
            raise NonFiniteDensity(f"non-finite intermediate in {where}")
        return -math.inf, zeros

    # initialization -----------------------------------------------------------------

    def initialize(self, rng: np.random.Generator | None = None, jitter: bool = True):
        """Starting point: jittered coefficients, unit scales, prior-mean thresholds."""
        u = np.zeros(self.dim)
        for block in self.layout.blocks:
            if block.kind in (BLOCK_INTERCEPT, BLOCK_COEF, BLOCK_HYPER_MEAN):
                if jitter:
                    if rng is None:
                        raise ShapeMismatch("jittered initialization needs an rng")
                    u[block.slice] = rng.uniform(-2.0, 2.0, size=block.size)
            elif block.kind == BLOCK_CUTPOINTS:
                z = np.full(block.size, self.spec.cutpoints.log_gap.mean)
                z[0] = self.spec.cutpoints.first.mean
                u[block.slice] = z
        return u

    # pointwise log-likelihood ----------------------------------------------------------

    def pointwise_loglik(self, constrained: np.ndarray) -> np.ndarray:
        """Matrix of log p(y_i | theta_s): one row per draw, one column per record."""
        constrained = np.atleast_2d(np.asarray(constrained, dtype=np.float64))
        if constrained.shape[1] != self.dim:
            raise ShapeMismatch(
                f"draws have {constrained.shape[1]} parameters, expected {self.dim}"
            )
        s = constrained.shape[0]
        n = self.dataset.n_records
        out = np.empty((s, n))
        cut_block = self.layout.cutpoint_block
        for i in range(s):
            c = constrained[i]
            phi = self.design @ c
            if self.spec.likelihood is Likelihood.ORDERED_LOGISTIC:
                cut = self.fixed_cut if cut_block is None else c[cut_block.slice]
                out[i] = kernels.ordered_logistic_rows(self.outcomes, phi, cut)
            else:
                out[i] = kernels.bernoulli_logit_rows(self.outcomes, phi)
        return out


def compile_model(spec: ModelSpec, ds: Dataset) -> CompiledModel:
    return CompiledModel(spec, ds)


def joint_log_density(spec: ModelSpec, ds: Dataset, u) -> tuple[float, np.ndarray]:
    """Joint log density and exact gradient at one unconstrained point.

    Raises :class:`NonFiniteDensity` naming the first non-finite stage.
    """
    model = compile_model(spec, ds)
    return model.value_grad(np.asarray(u, dtype=np.float64), on_nonfinite="raise")
