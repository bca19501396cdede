"""Link functions and variance functions for the binomial/Poisson fits."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, logit, xlogy

# fitted means are kept inside [EPS, 1 - EPS] (binomial) or >= EPS (poisson)
EPS = 1e-12

LINKS = ("identity", "log", "logit")
DISTRIBUTIONS = ("binomial", "poisson")


def linkfun(link: str, mu):
    if link == "identity":
        return np.asarray(mu, dtype=float)
    if link == "log":
        return np.log(mu)
    return logit(mu)


def linkinv(link: str, eta):
    if link == "identity":
        return np.asarray(eta, dtype=float)
    if link == "log":
        return np.exp(eta)
    return expit(eta)


def mu_eta(link: str, eta):
    """Derivative of the mean with respect to the linear predictor."""
    if link == "identity":
        return np.ones_like(eta, dtype=float)
    if link == "log":
        return np.exp(eta)
    p = expit(eta)
    return p * (1.0 - p)


def variance(distribution: str, mu):
    if distribution == "binomial":
        return mu * (1.0 - mu)
    return np.asarray(mu, dtype=float)


def feasible(distribution: str, mu) -> bool:
    if not np.all(np.isfinite(mu)):
        return False
    if distribution == "binomial":
        return bool(np.all((mu >= EPS) & (mu <= 1.0 - EPS)))
    return bool(np.all(mu >= EPS))


def unit_deviance(distribution: str, events, trials, mu):
    """Per-row deviance contributions, with 0*log(0) taken as 0."""
    fitted = trials * mu
    with np.errstate(divide="ignore", invalid="ignore"):
        if distribution == "binomial":
            fails = trials - events
            return 2.0 * (xlogy(events, events / fitted) + xlogy(fails, fails / (trials - fitted)))
        return 2.0 * (xlogy(events, events / fitted) - (events - fitted))


def loglik_score_weight(link: str, distribution: str, eta):
    """Factor d(mu)/d(eta) / V(mu) multiplying (y - n*mu) in the score."""
    mu = linkinv(link, eta)
    return mu_eta(link, eta) / variance(distribution, mu)
