"""Binomial and Poisson GLMs on the saturated two-factor design.

The linear predictor is always ``b0 + b1*X + b2*Z + b3*X*Z`` (the product term
can be dropped for nested-model checks). Fits run on grouped event/trial rows,
so an aggregated :class:`~biointeract.tabular.ExposureTable` and its expanded
individual records go through exactly the same code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from . import _families as fam
from .tabular import CELL_KEYS, ExposureTable, IndividualRecord

ESTIMATIONS = ("mle_irls", "ols")
FAILURE_REASONS = ("max_iterations", "singular_weights", "boundary_stall", "separation")


class SingularDesignError(ValueError):
    """The design matrix is rank deficient (some exposure pattern is empty)."""


class ConvergenceFailure(RuntimeError):
    """IRLS did not reach an interior maximum.

    ``reason`` is one of ``max_iterations``, ``singular_weights``,
    ``boundary_stall`` or ``separation``.
    """

    def __init__(self, reason: str, last_beta=None, last_deviance: float = float("nan"), detail: str = ""):
        if reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {reason!r}")
        self.reason = reason
        self.last_beta = None if last_beta is None else np.asarray(last_beta, dtype=float)
        self.last_deviance = float(last_deviance)
        msg = f"fit failed: {reason}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)

    def to_dict(self) -> dict:
        return {
            "error": "convergence_failure",
            "reason": self.reason,
            "message": str(self),
            "last_beta": None if self.last_beta is None else self.last_beta.tolist(),
            "last_deviance": self.last_deviance,
        }


@dataclass(frozen=True)
class ModelSpec:
    link: str = "identity"
    distribution: str = "binomial"
    estimation: str = "mle_irls"
    max_iterations: int = 100
    tolerance: float = 1e-10
    step_halving_max: int = 30

    def __post_init__(self):
        if self.link not in fam.LINKS:
            raise ValueError(f"unknown link {self.link!r}")
        if self.distribution not in fam.DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.estimation not in ESTIMATIONS:
            raise ValueError(f"unknown estimation {self.estimation!r}")
        if self.estimation == "ols" and self.link != "identity":
            raise ValueError("ols estimation requires the identity link")
        if self.link == "logit" and self.distribution != "binomial" and self.estimation != "ols":
            raise ValueError("logit link requires the binomial distribution")
        if self.max_iterations < 1 or self.step_halving_max < 1:
            raise ValueError("max_iterations and step_halving_max must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    @property
    def name(self) -> str:
        if self.estimation == "ols":
            return "ols-identity"
        return f"{self.distribution}-{self.link}"


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Grouped rows: covariates ``[1, X, Z, XZ]`` with events out of trials."""

    X: np.ndarray
    events: np.ndarray
    trials: np.ndarray
    interaction: bool = True

    @property
    def n_obs(self) -> float:
        return float(self.trials.sum())

    def collapsed(self) -> "DesignMatrix":
        """One row per covariate pattern; the likelihood and both covariances are unchanged."""
        Xp, ev, tr, _ = self.patterns()
        return DesignMatrix(Xp, ev, tr, self.interaction)

    def patterns(self):
        """Collapse rows sharing a covariate pattern.

        Returns ``(X_pattern, events, trials, inverse)``.
        """
        Xp, inverse = np.unique(self.X, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        ev = np.bincount(inverse, weights=self.events, minlength=len(Xp))
        tr = np.bincount(inverse, weights=self.trials, minlength=len(Xp))
        return Xp, ev, tr, inverse


def _cell_row(x: int, z: int, interaction: bool) -> list[float]:
    row = [1.0, float(x), float(z)]
    if interaction:
        row.append(float(x * z))
    return row


def cell_design(interaction: bool = True) -> np.ndarray:
    """Design rows for the four cells in canonical order (00, 10, 01, 11)."""
    return np.array([_cell_row(x, z, interaction) for x, z in CELL_KEYS])


Data = Union[ExposureTable, Sequence[IndividualRecord], DesignMatrix]


def design_matrix(data: Data, interaction: bool = True) -> DesignMatrix:
    if isinstance(data, DesignMatrix):
        if data.interaction == interaction:
            return data
        X = data.X if interaction else data.X[:, :3]
        if interaction and data.X.shape[1] == 3:
            X = np.column_stack([data.X, data.X[:, 1] * data.X[:, 2]])
        return DesignMatrix(X, data.events, data.trials, interaction)
    if isinstance(data, ExposureTable):
        X = cell_design(interaction)
        events = np.array([data[k].events for k in CELL_KEYS], dtype=float)
        trials = np.array([data[k].total for k in CELL_KEYS], dtype=float)
        return DesignMatrix(X, events, trials, interaction)
    records = list(data)
    if not records:
        raise SingularDesignError("no records")
    arr = np.array([(r.x, r.z, r.y, r.weight) for r in records], dtype=float)
    x, z, y, w = arr.T
    cols = [np.ones_like(x), x, z] + ([x * z] if interaction else [])
    return DesignMatrix(np.column_stack(cols), y * w, w, interaction)


@dataclass(frozen=True, eq=False)
class FitResult:
    spec: ModelSpec
    beta: np.ndarray
    cov_model: np.ndarray
    cov_robust: np.ndarray
    converged: bool
    iterations: int
    deviance: float
    boundary_flag: bool = False
    interaction: bool = True
    deviance_history: tuple[float, ...] = field(default=(), repr=False)
    beta_history: tuple[np.ndarray, ...] = field(default=(), repr=False)

    def cov(self, flavor: str = "model") -> np.ndarray:
        if flavor in ("model", "model_based"):
            return self.cov_model
        if flavor in ("robust", "robust_independence"):
            return self.cov_robust
        raise ValueError(f"unknown covariance flavor {flavor!r}")

    def se(self, flavor: str = "model") -> np.ndarray:
        return np.sqrt(np.diag(self.cov(flavor)))

    def to_dict(self) -> dict:
        return {
            "model": self.spec.name,
            "link": self.spec.link,
            "distribution": None if self.spec.estimation == "ols" else self.spec.distribution,
            "estimation": self.spec.estimation,
            "beta": self.beta.tolist(),
            "cov_model": self.cov_model.tolist(),
            "cov_robust": self.cov_robust.tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "deviance": self.deviance,
            "boundary_flag": self.boundary_flag,
        }


def _start_values(dm: DesignMatrix, spec: ModelSpec) -> np.ndarray:
    Xp, ev, tr, _ = dm.patterns()
    p = ev / tr
    half = 0.5 / tr
    if spec.link == "logit":
        # Haldane-corrected empirical logits, start only
        p = (ev + 0.5) / (tr + 1.0)
    elif spec.distribution == "binomial":
        p = np.clip(p, half, 1.0 - half)
    else:
        p = np.maximum(p, half)
    eta = fam.linkfun(spec.link, p)
    sw = np.sqrt(tr)
    beta, *_ = np.linalg.lstsq(Xp * sw[:, None], eta * sw, rcond=None)
    if not fam.feasible(spec.distribution, fam.linkinv(spec.link, dm.X @ beta)):
        # non-saturated designs can project outside the feasible region
        pbar = np.clip(dm.events.sum() / dm.n_obs, 0.5 / dm.n_obs, 1 - 0.5 / dm.n_obs)
        beta = np.zeros(dm.X.shape[1])
        beta[0] = fam.linkfun(spec.link, pbar)
    return beta


def _check_design(dm: DesignMatrix, spec: ModelSpec) -> None:
    Xp, ev, tr, _ = dm.patterns()
    if len(Xp) < dm.X.shape[1] or np.linalg.matrix_rank(Xp) < dm.X.shape[1]:
        raise SingularDesignError("design is rank deficient: an exposure cell has no individuals")
    if spec.estimation == "mle_irls" and spec.link == "log":
        zero = ev == 0
        if np.any(zero):
            cells = [(int(r[1]), int(r[2])) for r in Xp[zero]]
            raise ConvergenceFailure(
                "separation", detail=f"zero events in cell(s) {cells}; log-link MLE diverges"
            )


def _fit_ols(dm: DesignMatrix, spec: ModelSpec) -> FitResult:
    from .variance import ols_covariances

    w = dm.trials
    XtWX = dm.X.T @ (dm.X * w[:, None])
    beta = np.linalg.solve(XtWX, dm.X.T @ dm.events)
    cov_model, cov_robust = ols_covariances(beta, dm)
    mu = dm.X @ beta
    rss = float(np.sum(dm.events * (1 - mu) ** 2 + (dm.trials - dm.events) * mu**2))
    return FitResult(spec, beta, cov_model, cov_robust, True, 1, rss,
                     boundary_flag=bool(np.any((mu < 0) | (mu > 1))),
                     interaction=dm.interaction, deviance_history=(rss,))


def _total_deviance(dm: DesignMatrix, spec: ModelSpec, beta) -> float:
    mu = fam.linkinv(spec.link, dm.X @ beta)
    return float(np.sum(fam.unit_deviance(spec.distribution, dm.events, dm.trials, mu)))


def _fisher_target(dm: DesignMatrix, spec: ModelSpec, beta: np.ndarray, dev: float) -> np.ndarray:
    """Weighted least-squares solution on the working response at ``beta``."""
    link, dist = spec.link, spec.distribution
    X, n = dm.X, dm.trials
    eta = X @ beta
    mu = fam.linkinv(link, eta)
    d = fam.mu_eta(link, eta)
    W = n * d**2 / fam.variance(dist, mu)
    z = eta + (dm.events / n - mu) / d
    XtW = X.T * W
    try:
        target = np.linalg.solve(XtW @ X, XtW @ z)
    except np.linalg.LinAlgError:
        raise ConvergenceFailure("singular_weights", beta, dev) from None
    if not np.all(np.isfinite(target)):
        raise ConvergenceFailure("singular_weights", beta, dev)
    return target


def fit(data: Data, spec: ModelSpec | None = None, *, interaction: bool = True) -> FitResult:
    """Fit the two-factor model by IRLS (or OLS for ``estimation='ols'``).

    Raises :class:`ConvergenceFailure` when no interior maximum is reached and
    :class:`SingularDesignError` when an exposure cell is empty.
    """
    from .variance import model_covariance, robust_covariance

    spec = spec or ModelSpec()
    # tables and their expanded records reduce to identical arrays here
    dm = design_matrix(data, interaction).collapsed()
    _check_design(dm, spec)
    if spec.estimation == "ols":
        return _fit_ols(dm, spec)

    link, dist = spec.link, spec.distribution
    X, y, n = dm.X, dm.events, dm.trials
    beta = _start_values(dm, spec)
    dev = _total_deviance(dm, spec, beta)
    history = [dev]
    iterates = [beta]
    boundary = False
    converged = False
    iteration = 0

    for iteration in range(1, spec.max_iterations + 1):
        step = _fisher_target(dm, spec, beta, dev) - beta
        accepted = None
        any_feasible = False
        for h in range(spec.step_halving_max + 1):
            cand = beta + step / 2.0**h
            if not fam.feasible(dist, fam.linkinv(link, X @ cand)):
                boundary = True
                continue
            any_feasible = True
            dev_c = _total_deviance(dm, spec, cand)
            if dev_c <= dev + 1e-12 * (abs(dev) + 1.0):
                accepted = (cand, dev_c)
                break
        if accepted is None:
            if not any_feasible:
                raise ConvergenceFailure("boundary_stall", beta, dev)
            # feasible points exist but none improves: already at the optimum
            converged = True
            break

        beta_new, dev_new = accepted
        change = abs(dev_new - dev) / (abs(dev_new) + 0.1)
        beta, dev = beta_new, dev_new
        history.append(dev)
        iterates.append(beta)
        if change < spec.tolerance:
            converged = True
            break

    if not converged:
        raise ConvergenceFailure("max_iterations", beta, dev,
                                 detail=f"{spec.max_iterations} iterations")

    # The deviance-change rule can stop one quadratic step short of the
    # optimum; a final full step, kept only if feasible and not worse, costs
    # nothing and brings saturated fits to machine precision.
    polish = _fisher_target(dm, spec, beta, dev)
    if fam.feasible(dist, fam.linkinv(link, X @ polish)):
        dev_p = _total_deviance(dm, spec, polish)
        if np.isfinite(dev_p) and dev_p <= dev + 1e-12 * (abs(dev) + 1.0):
            beta, dev = polish, dev_p

    mu = fam.linkinv(link, X @ beta)
    if dist == "binomial" and np.any((mu <= 1e-10) | (mu >= 1 - 1e-10)):
        boundary = True
    elif dist == "poisson" and np.any(mu <= 1e-10):
        boundary = True

    cov_m = model_covariance(beta, dm, spec)
    cov_r = robust_covariance(beta, dm, spec)
    return FitResult(spec, beta, cov_m, cov_r, True, iteration, dev,
                     boundary_flag=boundary, interaction=interaction,
                     deviance_history=tuple(history), beta_history=tuple(iterates))


@dataclass(frozen=True)
class CellPredictions:
    """Per-cell means in canonical order (00, 10, 01, 11)."""

    link: np.ndarray
    response: np.ndarray

    def as_dict(self, scale: str = "response") -> dict[tuple[int, int], float]:
        values = self.response if scale == "response" else self.link
        return {k: float(v) for k, v in zip(CELL_KEYS, values)}


def predict_cells(result: FitResult) -> CellPredictions:
    C = cell_design(result.interaction)
    eta = C @ result.beta
    return CellPredictions(eta, fam.linkinv(result.spec.link, eta))


def deviance(result: FitResult, data: Data) -> float:
    """Scaled deviance of ``result`` on ``data`` (residual sum of squares for OLS)."""
    dm = design_matrix(data, result.interaction)
    if result.spec.estimation == "ols":
        mu = dm.X @ result.beta
        return float(np.sum(dm.events * (1 - mu) ** 2 + (dm.trials - dm.events) * mu**2))
    return _total_deviance(dm, result.spec, result.beta)


def score(result: FitResult, data: Data) -> np.ndarray:
    """Gradient of the log-likelihood (or of -RSS/2 for OLS) at ``result.beta``."""
    dm = design_matrix(data, result.interaction)
    eta = dm.X @ result.beta
    if result.spec.estimation == "ols":
        return dm.X.T @ (dm.events - dm.trials * eta)
    mu = fam.linkinv(result.spec.link, eta)
    factor = fam.loglik_score_weight(result.spec.link, result.spec.distribution, eta)
    return dm.X.T @ ((dm.events - dm.trials * mu) * factor)
