"""Model-based and sandwich covariances, Wald tests and Wald intervals.

Both covariance flavours use the expected information as the bread. The meat
is accumulated per individual, so grouped event/trial rows give exactly the
same matrix as their expanded 0/1 records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from . import _families as fam
from .glm import Data, DesignMatrix, FitResult, ModelSpec, design_matrix


class CovarianceError(np.linalg.LinAlgError):
    """Information matrix is singular."""


@dataclass(frozen=True)
class WaldResult:
    estimate: float
    se: float
    z: float
    p_two_sided: float
    ci_low: float
    ci_high: float
    level: float = 0.95
    degenerate: bool = False

    @property
    def chi2(self) -> float:
        """Wald chi-square on one degree of freedom."""
        return self.z**2

    def scaled(self, factor: float) -> "WaldResult":
        """Rescale estimate, SE and interval for display; z and p are untouched."""
        return replace(
            self,
            estimate=self.estimate * factor,
            se=self.se * abs(factor),
            ci_low=min(self.ci_low * factor, self.ci_high * factor),
            ci_high=max(self.ci_low * factor, self.ci_high * factor),
        )

    def to_dict(self, factor: float = 1.0) -> dict:
        w = self.scaled(factor) if factor != 1.0 else self
        return {
            "estimate": w.estimate,
            "se": w.se,
            "z": w.z,
            "chi2": w.chi2,
            "p": w.p_two_sided,
            "ci_low": w.ci_low,
            "ci_high": w.ci_high,
            "level": w.level,
            "degenerate": w.degenerate,
        }


def critical_value(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    return float(norm.ppf(0.5 + level / 2.0))


def wald(estimate: float, variance: float, level: float = 0.95) -> WaldResult:
    """Normal-reference Wald test of ``estimate = 0`` with a symmetric interval."""
    if variance < 0:
        if variance > -1e-300:
            variance = 0.0
        else:
            raise ValueError(f"negative variance {variance}")
    estimate = float(estimate)
    se = math.sqrt(variance)
    crit = critical_value(level)
    if se == 0.0:
        if estimate == 0.0:
            return WaldResult(0.0, 0.0, 0.0, 1.0, 0.0, 0.0, level, degenerate=True)
        z = math.copysign(math.inf, estimate)
        return WaldResult(estimate, 0.0, z, 0.0, estimate, estimate, level, degenerate=True)
    z = estimate / se
    p = float(2.0 * norm.sf(abs(z)))
    return WaldResult(estimate, se, z, p, estimate - crit * se, estimate + crit * se, level)


def contrast(result: FitResult, coefficients, flavor: str = "model", level: float = 0.95) -> WaldResult:
    """Wald inference for ``c @ beta`` on the link scale."""
    c = np.asarray(coefficients, dtype=float)
    cov = result.cov(flavor)
    return wald(float(c @ result.beta), float(c @ cov @ c), level)


def _unpack(fit_or_beta, data, spec):
    if isinstance(fit_or_beta, FitResult):
        spec = spec or fit_or_beta.spec
        dm = design_matrix(data, fit_or_beta.interaction)
        return np.asarray(fit_or_beta.beta, dtype=float), dm, spec
    if spec is None:
        raise TypeError("spec is required when passing raw coefficients")
    beta = np.asarray(fit_or_beta, dtype=float)
    dm = data if isinstance(data, DesignMatrix) else design_matrix(data, len(beta) == 4)
    return beta, dm, spec


def _pattern_label(dm: DesignMatrix, rows) -> list[tuple[int, int]]:
    return sorted({(int(r[1]), int(r[2])) for r in dm.X[rows]})


def _safe_inverse(A: np.ndarray, dm: DesignMatrix, weights: np.ndarray) -> np.ndarray:
    bad = ~np.isfinite(weights) | (weights <= 0)
    if np.any(bad & (dm.trials > 0)):
        raise CovarianceError(f"singular information: zero weight in cell(s) {_pattern_label(dm, bad)}")
    try:
        inv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        Xp, ev, tr, inv_idx = dm.patterns()
        wp = np.bincount(inv_idx, weights=weights, minlength=len(Xp))
        worst = Xp[np.argmin(wp)]
        raise CovarianceError(
            f"singular information near cell ({int(worst[1])}, {int(worst[2])})"
        ) from None
    return (inv + inv.T) / 2.0


def _bread(beta, dm: DesignMatrix, spec: ModelSpec):
    eta = dm.X @ beta
    mu = fam.linkinv(spec.link, eta)
    d = fam.mu_eta(spec.link, eta)
    V = fam.variance(spec.distribution, mu)
    w = dm.trials * d**2 / V
    A = dm.X.T @ (dm.X * w[:, None])
    return A, w, mu, d, V


def _squared_residual_sum(dm: DesignMatrix, mu: np.ndarray) -> np.ndarray:
    """Sum over the individuals in each row of (y_ij - mu_i)^2."""
    return dm.events * (1.0 - mu) ** 2 + (dm.trials - dm.events) * mu**2


def model_covariance(fit_or_beta, data: Data, spec: ModelSpec | None = None) -> np.ndarray:
    """Inverse expected Fisher information at the coefficients."""
    beta, dm, spec = _unpack(fit_or_beta, data, spec)
    if spec.estimation == "ols":
        return ols_covariances(beta, dm)[0]
    A, w, *_ = _bread(beta, dm, spec)
    return _safe_inverse(A, dm, w)


def robust_covariance(fit_or_beta, data: Data, spec: ModelSpec | None = None) -> np.ndarray:
    """Independence-working-model sandwich ``A^-1 B A^-1`` with no small-sample factor."""
    beta, dm, spec = _unpack(fit_or_beta, data, spec)
    if spec.estimation == "ols":
        return ols_covariances(beta, dm)[1]
    A, w, mu, d, V = _bread(beta, dm, spec)
    Ainv = _safe_inverse(A, dm, w)
    meat_w = (d / V) ** 2 * _squared_residual_sum(dm, mu)
    B = dm.X.T @ (dm.X * meat_w[:, None])
    S = Ainv @ B @ Ainv
    return (S + S.T) / 2.0


def ols_covariances(beta, dm: DesignMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Classical ``s^2 (X'X)^-1`` and the sandwich covariance for least squares."""
    mu = dm.X @ beta
    A = dm.X.T @ (dm.X * dm.trials[:, None])
    Ainv = _safe_inverse(A, dm, dm.trials)
    r2 = _squared_residual_sum(dm, mu)
    dof = dm.n_obs - dm.X.shape[1]
    sigma2 = r2.sum() / dof if dof > 0 else float("nan")
    B = dm.X.T @ (dm.X * r2[:, None])
    S = Ainv @ B @ Ainv
    return sigma2 * Ainv, (S + S.T) / 2.0
