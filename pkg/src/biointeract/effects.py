"""Interaction contrast, RERI and additivity/multiplicativity verdicts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .glm import ConvergenceFailure, FitResult, ModelSpec, cell_design, fit, predict_cells
from .tabular import CELL_KEYS, ExposureTable
from .variance import WaldResult, contrast, wald

SCHEMA_VERSION = "1.0"
DEFAULT_SCALE = 100000.0

# (x, z) -> position of that cell in CELL_KEYS
_CELL_INDEX = {k: i for i, k in enumerate(CELL_KEYS)}
# ContrastSpec coefficient order, written the way the IC is usually read
CONTRAST_ORDER = ((1, 1), (1, 0), (0, 1), (0, 0))

FALLBACK_LADDER = (
    ("binomial_identity", ModelSpec("identity", "binomial"), "model"),
    ("poisson_robust", ModelSpec("identity", "poisson"), "robust"),
    ("ols_robust", ModelSpec("identity", estimation="ols"), "robust"),
)


class EffectError(ValueError):
    pass


@dataclass(frozen=True)
class ContrastSpec:
    """Coefficients on (p11, p10, p01, p00)."""

    coefficients: tuple[float, float, float, float] = (1.0, -1.0, -1.0, 1.0)

    def __post_init__(self):
        if len(self.coefficients) != 4:
            raise ValueError("a cell contrast needs exactly four coefficients")

    def on_coefficients(self, interaction: bool = True) -> np.ndarray:
        """The same contrast expressed on the regression coefficients."""
        c = np.zeros(4)
        for coef, key in zip(self.coefficients, CONTRAST_ORDER):
            c[_CELL_INDEX[key]] = coef
        return cell_design(interaction).T @ c


# --- plug-in arithmetic on cell risks -------------------------------------------------


def _risks(source) -> dict[tuple[int, int], float]:
    if isinstance(source, ExposureTable):
        return source.risks()
    return {k: float(source[k]) for k in CELL_KEYS}


def interaction_contrast(source) -> float:
    p = _risks(source)
    return p[1, 1] - p[1, 0] - p[0, 1] + p[0, 0]


def homogeneity_forms(source) -> dict[str, float]:
    """The additivity identity rearranged three ways; each is zero under additivity.

    ``joint_minus_sum``: (p11 - p00) - [(p10 - p00) + (p01 - p00)]
    ``x_effect_heterogeneity``: (p11 - p01) - (p10 - p00)
    ``z_effect_heterogeneity``: (p11 - p10) - (p01 - p00)
    """
    p = _risks(source)
    return {
        "joint_minus_sum": (p[1, 1] - p[0, 0]) - ((p[1, 0] - p[0, 0]) + (p[0, 1] - p[0, 0])),
        "x_effect_heterogeneity": (p[1, 1] - p[0, 1]) - (p[1, 0] - p[0, 0]),
        "z_effect_heterogeneity": (p[1, 1] - p[1, 0]) - (p[0, 1] - p[0, 0]),
    }


def is_additive(source, tol: float = 1e-12) -> bool:
    return all(abs(v) <= tol for v in homogeneity_forms(source).values())


def relative_risks(source) -> dict[tuple[int, int], float]:
    p = _risks(source)
    if p[0, 0] <= 0:
        raise EffectError("reference risk zero")
    return {k: p[k] / p[0, 0] for k in CELL_KEYS}


def odds_ratios(source) -> dict[tuple[int, int], float]:
    p = _risks(source)
    odds = {k: p[k] / (1 - p[k]) for k in CELL_KEYS}
    if odds[0, 0] <= 0:
        raise EffectError("reference odds zero")
    return {k: odds[k] / odds[0, 0] for k in CELL_KEYS}


def is_multiplicative(source, tol: float = 1e-12) -> bool:
    rr = relative_risks(source)
    return abs(rr[1, 1] - rr[1, 0] * rr[0, 1]) <= tol * max(1.0, abs(rr[1, 1]))


def reri_from_table(table: ExposureTable) -> float:
    """Plug-in RERI from raw cell proportions."""
    rr = relative_risks(table)
    return rr[1, 1] - rr[0, 1] - rr[1, 0] + 1.0


# --- model-based inference ----------------------------------------------------------


def _require_link(result: FitResult, links, what: str) -> None:
    if result.spec.link not in links:
        raise EffectError(f"{what} requires a {' or '.join(links)} link fit, got {result.spec.link}")


def compute_ic(result: FitResult, flavor: str = "model", level: float = 0.95) -> WaldResult:
    """Interaction contrast from an identity-link fit (it is the product-term coefficient)."""
    _require_link(result, ("identity",), "the interaction contrast")
    if not result.interaction:
        raise EffectError("the interaction contrast needs the product term in the model")
    return contrast(result, [0.0, 0.0, 0.0, 1.0], flavor, level)


def cell_contrast(result: FitResult, spec: ContrastSpec = ContrastSpec(), flavor: str = "model",
                  level: float = 0.95) -> WaldResult:
    """A linear contrast of predicted cell means (identity link only)."""
    _require_link(result, ("identity",), "a cell-risk contrast")
    return contrast(result, spec.on_coefficients(result.interaction), flavor, level)


@dataclass(frozen=True)
class ReriResult:
    estimate: float
    se: float
    wald: WaldResult
    source_model: str
    approximation: bool

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "se": self.se,
            "wald": self.wald.to_dict(),
            "source_model": self.source_model,
            "ratio_type": "odds_ratio" if self.approximation else "relative_risk",
            "approximation": self.approximation,
        }


def reri_value(beta) -> float:
    b1, b2, b3 = beta[1], beta[2], beta[3]
    return math.exp(b1 + b2 + b3) - math.exp(b1) - math.exp(b2) + 1.0


def reri_gradient(beta) -> np.ndarray:
    """Gradient of the RERI with respect to (b0, b1, b2, b3); the b0 entry is zero."""
    b1, b2, b3 = beta[1], beta[2], beta[3]
    joint = math.exp(b1 + b2 + b3)
    return np.array([0.0, joint - math.exp(b1), joint - math.exp(b2), joint])


def compute_reri(result: FitResult, flavor: str = "model", level: float = 0.95,
                 allow_odds_ratio: bool = False) -> ReriResult:
    """RERI from a log- or logit-link fit with a delta-method Wald interval.

    Logit fits give odds ratios, which only approximate relative risks when the
    outcome is rare; pass ``allow_odds_ratio=True`` to accept that.
    """
    _require_link(result, ("log", "logit"), "the RERI")
    if not result.converged:
        raise ConvergenceFailure("max_iterations", result.beta, result.deviance)
    approximation = result.spec.link == "logit"
    if approximation and not allow_odds_ratio:
        raise EffectError("logit-sourced RERI uses odds ratios; set allow_odds_ratio=True")
    est = reri_value(result.beta)
    g = reri_gradient(result.beta)
    var = float(g @ result.cov(flavor) @ g)
    w = wald(est, var, level)
    return ReriResult(est, w.se, w, result.spec.name, approximation)


@dataclass(frozen=True)
class MultiplicativityTest:
    model: str
    wald: WaldResult
    ratio_of_ratios: float

    def to_dict(self) -> dict:
        return {"model": self.model, "ratio_of_ratios": self.ratio_of_ratios, "wald": self.wald.to_dict()}


def multiplicativity_test(result: FitResult, flavor: str = "model", level: float = 0.95) -> MultiplicativityTest:
    """Wald test of the product term on the log or logit scale."""
    _require_link(result, ("log", "logit"), "a multiplicativity test")
    w = contrast(result, [0.0, 0.0, 0.0, 1.0], flavor, level)
    return MultiplicativityTest(result.spec.name, w, math.exp(result.beta[3]))


# --- the full report ------------------------------------------------------------------


def fit_identity(table: ExposureTable, fallback: bool = False, max_iterations: int = 100,
                 log=None) -> tuple[FitResult, str, str]:
    """Identity-link fit, optionally walking the fallback ladder.

    Returns ``(fit, strategy, covariance_flavor)``. Without ``fallback`` only
    the binomial fit is tried and its failure propagates.
    """
    ladder = FALLBACK_LADDER if fallback else FALLBACK_LADDER[:1]
    last: ConvergenceFailure | None = None
    for strategy, spec, flavor in ladder:
        spec = ModelSpec(spec.link, spec.distribution, spec.estimation, max_iterations=max_iterations)
        try:
            return fit(table, spec), strategy, flavor
        except ConvergenceFailure as exc:
            last = exc
            if log is not None:
                log(f"{strategy} failed: {exc.reason}")
    assert last is not None
    raise last


@dataclass(frozen=True)
class EffectReport:
    cell_risks: dict[tuple[int, int], WaldResult]
    risk_differences: dict[str, WaldResult]
    ic: WaldResult
    reri: ReriResult | None
    reri_plugin: float | None
    multiplicativity: dict[str, MultiplicativityTest | None]
    strategy: str
    covariance: str
    scale: float = DEFAULT_SCALE
    level: float = 0.95
    failures: dict[str, str] = field(default_factory=dict)
    labels: tuple[str, str, str] = ("x", "z", "y")

    @property
    def multiplicativity_p(self) -> dict[str, float | None]:
        return {k: (None if v is None else v.wald.p_two_sided) for k, v in self.multiplicativity.items()}

    def to_dict(self) -> dict:
        s = self.scale
        return {
            "schema_version": SCHEMA_VERSION,
            "scale": s,
            "scale_note": f"risks, risk differences and IC are multiplied by {s:g}; z and p are scale-free",
            "level": self.level,
            "labels": {"x": self.labels[0], "z": self.labels[1], "y": self.labels[2]},
            "strategy": self.strategy,
            "covariance": self.covariance,
            "cell_risks": {f"p{x}{z}": w.to_dict(s) for (x, z), w in self.cell_risks.items()},
            "risk_differences": {k: w.to_dict(s) for k, w in self.risk_differences.items()},
            "ic": self.ic.to_dict(s),
            "reri": None if self.reri is None else self.reri.to_dict(),
            "reri_plugin": self.reri_plugin,
            "multiplicativity": {k: (None if v is None else v.to_dict()) for k, v in self.multiplicativity.items()},
            "failures": dict(self.failures),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def effect_report(table: ExposureTable, *, level: float = 0.95, scale: float = DEFAULT_SCALE,
                  flavor: str | None = None, reri_source: str = "log", fallback: bool = False,
                  max_iterations: int = 100, log=None) -> EffectReport:
    """Fit all three links and assemble cell risks, IC, RERI and product-term tests.

    ``flavor`` overrides the covariance used for identity-scale inference; by
    default it is model-based for the binomial fit and robust for fallbacks.
    """
    ident, strategy, default_flavor = fit_identity(table, fallback, max_iterations, log)
    flavor = flavor or default_flavor
    C = cell_design(ident.interaction)
    cells = {k: contrast(ident, C[i], flavor, level) for i, k in enumerate(CELL_KEYS)}
    rds = {
        "x_effect_z0": contrast(ident, [0, 1, 0, 0], flavor, level),
        "z_effect_x0": contrast(ident, [0, 0, 1, 0], flavor, level),
    }
    ic = compute_ic(ident, flavor, level)

    fits: dict[str, FitResult] = {}
    failures: dict[str, str] = {}
    for link in ("log", "logit"):
        try:
            fits[link] = fit(table, ModelSpec(link, max_iterations=max_iterations))
        except ConvergenceFailure as exc:
            failures[f"binomial-{link}"] = exc.reason
    mult = {f"binomial-{l}": (multiplicativity_test(fits[l], "model", level) if l in fits else None)
            for l in ("log", "logit")}

    reri = None
    if reri_source in fits:
        reri = compute_reri(fits[reri_source], "model", level, allow_odds_ratio=reri_source == "logit")
    try:
        plugin = reri_from_table(table)
    except EffectError:
        plugin = None

    return EffectReport(cells, rds, ic, reri, plugin, mult, strategy, flavor, scale, level,
                        failures, tuple(table.labels))


@dataclass(frozen=True)
class Verdict:
    departure_from_additivity: bool
    departure_from_multiplicativity: dict[str, bool | None]
    alpha: float

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "departure_from_additivity": self.departure_from_additivity,
            "departure_from_multiplicativity": dict(self.departure_from_multiplicativity),
        }


def additivity_verdict(report: EffectReport, alpha: float = 0.05) -> Verdict:
    mult = {k: (None if p is None else p < alpha) for k, p in report.multiplicativity_p.items()}
    return Verdict(report.ic.p_two_sided < alpha, mult, alpha)


def render_table(report: EffectReport) -> str:
    """Plain-text rows: cell risks, the two risk differences, the product term and IC."""
    s = report.scale
    rows = [(f"p{x}{z}", report.cell_risks[(x, z)]) for x, z in CONTRAST_ORDER]
    rows += [
        ("beta1", report.risk_differences["x_effect_z0"]),
        ("beta2", report.risk_differences["z_effect_x0"]),
        ("beta3", report.ic),
        ("IC", report.ic),
    ]
    pct = f"{report.level * 100:g}%"
    out = [f"{'term':<6} {'estimate':>10} {f'per {s:g}':>12} {pct + ' lower':>12} {pct + ' upper':>12} {'p':>12}"]
    for name, w in rows:
        d = w.scaled(s)
        out.append(f"{name:<6} {w.estimate:>10.6f} {d.estimate:>12.3f} {d.ci_low:>12.3f} {d.ci_high:>12.3f}"
                   f" {w.p_two_sided:>12.8f}")
    if report.reri is not None:
        r = report.reri
        out.append(f"RERI ({r.source_model}) {r.estimate:.3f}  delta-method {pct} CI "
                   f"({r.wald.ci_low:.3f}, {r.wald.ci_high:.3f})")
    for model, p in report.multiplicativity_p.items():
        out.append(f"product term, {model}: p = {'n/a' if p is None else f'{p:.4f}'}")
    return "\n".join(out)
