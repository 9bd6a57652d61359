"""
Closed-Form and Classical Baselines

Reference procedures the EFI chain is compared against: least squares,
exact fiducial distributions of the linear model, the acceptance-rejection
generalized fiducial sampler, classical bivariate-normal fiducial
distributions, two-sample interval procedures, mediation tests, nonlinear
least squares and logistic maximum likelihood.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import statsmodels.api as sm
from scipy import stats
from scipy.linalg import solve_triangular
from scipy.optimize import least_squares

from efi.core.errors import ConfigError, DataError, DomainError
from efi.core.rng import make_generator
from efi.services.models import (
    GAUSS2_START,
    Dataset,
    ModelFamily,
    gauss2_curve,
    gauss2_jacobian,
    split_groups,
)

logger = logging.getLogger(__name__)

GFI_DEFAULT_EPS = 1.0
GFI_DEFAULT_PROPOSALS = 1_000_000
GFI_CHUNK = 2000
BEHRENS_MC_DRAWS = 20_000
BIVARIATE_RHO_DRAWS = 10_000

Interval = Tuple[float, float]


def _tail(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    return 0.5 * (1.0 - level)


# ── Closed-form confidence distributions ───────────────────────────────────


class ClosedFormCd(ABC):
    kind: str

    @abstractmethod
    def interval(self, level: float, index: int = 0) -> Interval: ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray: ...

    @property
    @abstractmethod
    def center(self) -> np.ndarray: ...


class GaussianCd(ClosedFormCd):
    kind = "gaussian"

    def __init__(self, mean: np.ndarray, cov: np.ndarray) -> None:
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        _check_pd(self.cov)

    @property
    def center(self) -> np.ndarray:
        return self.mean

    def interval(self, level: float, index: int = 0) -> Interval:
        half = stats.norm.ppf(1.0 - _tail(level)) * np.sqrt(self.cov[index, index])
        return float(self.mean[index] - half), float(self.mean[index] + half)

    def sample(self, rng, size):
        return rng.multivariate_normal(self.mean, self.cov, size=size)


class ScaledInvChi2Cd(ClosedFormCd):
    """X = A / chi2_df."""

    kind = "scaled_inv_chi2"

    def __init__(self, df: float, scale: float) -> None:
        if df < 1:
            raise DomainError(f"degrees of freedom must be >= 1, got {df}")
        if scale <= 0:
            raise DomainError("inverse chi-squared scale must be positive")
        self.df = float(df)
        self.scale = float(scale)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.scale / max(self.df - 2.0, 1.0)])

    def interval(self, level: float, index: int = 0) -> Interval:
        a = _tail(level)
        return (
            float(self.scale / stats.chi2.ppf(1.0 - a, self.df)),
            float(self.scale / stats.chi2.ppf(a, self.df)),
        )

    def sample(self, rng, size):
        return (self.scale / rng.chisquare(self.df, size=size))[:, None]


class MultivariateTCd(ClosedFormCd):
    kind = "multivariate_t"

    def __init__(self, center: np.ndarray, scale: np.ndarray, df: float) -> None:
        if df < 1:
            raise DomainError(f"degrees of freedom must be >= 1, got {df}")
        self._center = np.atleast_1d(np.asarray(center, dtype=float))
        self.scale = np.atleast_2d(np.asarray(scale, dtype=float))
        _check_pd(self.scale)
        self.df = float(df)

    @property
    def center(self) -> np.ndarray:
        return self._center

    def interval(self, level: float, index: int = 0) -> Interval:
        half = stats.t.ppf(1.0 - _tail(level), self.df) * np.sqrt(self.scale[index, index])
        return float(self._center[index] - half), float(self._center[index] + half)

    def sample(self, rng, size):
        dist = stats.multivariate_t(loc=self._center, shape=self.scale, df=self.df)
        return np.atleast_2d(dist.rvs(size=size, random_state=rng)).reshape(size, -1)


class MonteCarloCd(ClosedFormCd):
    kind = "monte_carlo"

    def __init__(self, samples: np.ndarray) -> None:
        samples = np.asarray(samples, dtype=float)
        self.samples = samples[:, None] if samples.ndim == 1 else samples
        if self.samples.shape[0] < 2:
            raise DomainError("Monte Carlo distribution needs at least 2 draws")

    @property
    def center(self) -> np.ndarray:
        return np.median(self.samples, axis=0)

    def interval(self, level: float, index: int = 0) -> Interval:
        a = _tail(level)
        lo, hi = np.quantile(self.samples[:, index], [a, 1.0 - a], method="linear")
        return float(lo), float(hi)

    def sample(self, rng, size):
        return self.samples[rng.integers(0, self.samples.shape[0], size=size)]


def _check_pd(matrix: np.ndarray) -> None:
    try:
        np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise DomainError("scale matrix is not positive definite") from exc


# ── Linear model ───────────────────────────────────────────────────────────


@dataclass
class OlsFit:
    beta: np.ndarray
    sigma2_mle: float
    rss: float
    cov_unscaled: np.ndarray


def _design(Y: np.ndarray, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(Y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    X = X.reshape(y.shape[0], -1)
    gram = X.T @ X
    if X.shape[1] == 0 or np.linalg.matrix_rank(gram) < X.shape[1]:
        raise DomainError("design matrix is rank deficient")
    return y, X


def ols_fit(Y: np.ndarray, X: np.ndarray) -> OlsFit:
    y, X = _design(Y, X)
    cov_unscaled = np.linalg.inv(X.T @ X)
    beta = cov_unscaled @ (X.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    return OlsFit(beta=beta, sigma2_mle=rss / y.shape[0], rss=rss, cov_unscaled=cov_unscaled)


def ols_intervals(
    Y: np.ndarray, X: np.ndarray, level: float, sigma: Optional[float] = None
) -> Dict[str, Interval]:
    """Classical least-squares intervals: z with known sigma, t_{n-p} otherwise."""
    y, Xd = _design(Y, X)
    fit = ols_fit(y, Xd)
    n, p = Xd.shape
    se_unit = np.sqrt(np.diag(fit.cov_unscaled))
    a = _tail(level)
    out: Dict[str, Interval] = {}
    if sigma is not None:
        half = stats.norm.ppf(1.0 - a) * sigma * se_unit
    else:
        if n <= p:
            raise DomainError("need n > p for an unknown-sigma fit")
        s2 = fit.rss / (n - p)
        half = stats.t.ppf(1.0 - a, n - p) * np.sqrt(s2) * se_unit
        out["sigma_sq"] = (
            float(fit.rss / stats.chi2.ppf(1.0 - a, n - p)),
            float(fit.rss / stats.chi2.ppf(a, n - p)),
        )
    for j, (b, h) in enumerate(zip(fit.beta, half)):
        out[f"beta{j}"] = (float(b - h), float(b + h))
    return out


def efd_linear(
    Y: np.ndarray, X: np.ndarray, sigma_known: Optional[float] = None, unbias: bool = False
) -> Dict[str, ClosedFormCd]:
    """
    Exact fiducial distributions of the linear model, one per parameter.

    Known sigma: beta ~ N(beta_hat, sigma^2 (X'X)^{-1}). Unknown sigma:
    sigma^2 ~ A / chi2_{n-p+1} with A = RSS, and beta is multivariate t with
    scale A/(n-p+1) (X'X)^{-1} and n-p+1 degrees of freedom. The joint
    distribution is stored under "beta".
    """
    y, Xd = _design(Y, X)
    n, p = Xd.shape
    if n <= p:
        raise DomainError(f"need n > p (got n={n}, p={p})")
    fit = ols_fit(y, Xd)
    out: Dict[str, ClosedFormCd] = {}
    if sigma_known is not None:
        joint: ClosedFormCd = GaussianCd(fit.beta, sigma_known**2 * fit.cov_unscaled)
    else:
        nu = n - p + 1
        A = fit.rss
        if unbias:
            A *= (n - p - 3) / (n - p - 1)
        out["sigma_sq"] = ScaledInvChi2Cd(nu, A)
        joint = MultivariateTCd(fit.beta, A / nu * fit.cov_unscaled, nu)
    out["beta"] = joint
    for j in range(p):
        if isinstance(joint, GaussianCd):
            out[f"beta{j}"] = GaussianCd(joint.mean[j], joint.cov[j, j])
        else:
            assert isinstance(joint, MultivariateTCd)
            out[f"beta{j}"] = MultivariateTCd(joint.center[j], joint.scale[j, j], joint.df)
    return out


@dataclass
class GfiResult:
    accepted: np.ndarray
    acceptance_rate: float
    proposals: int


def _norm(resid: np.ndarray, norm: str) -> np.ndarray:
    if norm == "l2":
        return np.sqrt(np.sum(resid * resid, axis=0))
    if norm == "rms":
        return np.sqrt(np.mean(resid * resid, axis=0))
    if norm == "linf":
        return np.max(np.abs(resid), axis=0)
    raise DomainError(f"unknown norm '{norm}'")


def gfi_accept_reject(
    Y: np.ndarray,
    X: np.ndarray,
    sigma: float,
    eps: float = GFI_DEFAULT_EPS,
    norm: str = "l2",
    n_proposals: int = GFI_DEFAULT_PROPOSALS,
    seed: int = 0,
) -> GfiResult:
    """Propose Z ~ N(0, I), fit theta by least squares of Y - sigma Z, accept
    when the fitted residual norm is at most eps."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    y, Xd = _design(Y, X)
    n, p = Xd.shape
    Q, R = np.linalg.qr(Xd)
    rng = make_generator(seed)
    kept = []
    done = 0
    while done < n_proposals:
        size = min(GFI_CHUNK, n_proposals - done)
        V = y[:, None] - sigma * rng.standard_normal((n, size))
        coef = Q.T @ V
        resid = V - Q @ coef
        mask = _norm(resid, norm) <= eps
        if mask.any():
            kept.append(solve_triangular(R, coef[:, mask]).T)
        done += size
    accepted = np.vstack(kept) if kept else np.zeros((0, p))
    rate = accepted.shape[0] / n_proposals if n_proposals else 0.0
    logger.debug("gfi accept-reject: n=%d eps=%g accepted %d/%d", n, eps, len(accepted), done)
    return GfiResult(accepted=accepted, acceptance_rate=rate, proposals=n_proposals)


# ── Bivariate normal ───────────────────────────────────────────────────────


def bivariate_fiducial_closed_form(
    Y: np.ndarray, n_mc: int = BIVARIATE_RHO_DRAWS, seed: int = 0
) -> Dict[str, ClosedFormCd]:
    """
    Classical fiducial distributions: means from t(n-2), variances from
    (n-1) s_k^2 / chi2_{n-2}, and the correlation from its chi-squared
    stochastic representation with a standard-normal numerator.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    if n < 4:
        raise DomainError("bivariate fiducial distributions need n >= 4")
    mean = Y.mean(axis=0)
    s = Y.std(axis=0, ddof=1)
    if np.any(s <= 0):
        raise DomainError("degenerate sample variance")
    r = float(np.corrcoef(Y[:, 0], Y[:, 1])[0, 1])
    out: Dict[str, ClosedFormCd] = {}
    for k in range(2):
        out[f"mu{k + 1}"] = MultivariateTCd(mean[k], s[k] ** 2 / n, n - 2)
        out[f"sigma{k + 1}_sq"] = ScaledInvChi2Cd(n - 2, (n - 1) * s[k] ** 2)
    out["rho"] = MonteCarloCd(bivariate_rho_draws(r, n, n_mc, make_generator(seed)))
    return out


def bivariate_rho_draws(r: float, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """psi(-N / sqrt(chi2_{n-1}) + sqrt(chi2_{n-2} / chi2_{n-1}) r / sqrt(1 - r^2))."""
    if not -1.0 < r < 1.0:
        raise DomainError("sample correlation must lie strictly inside (-1, 1)")
    normal = rng.standard_normal(size)
    c_nm1 = rng.chisquare(n - 1, size)
    c_nm2 = rng.chisquare(n - 2, size)
    x = -normal / np.sqrt(c_nm1) + np.sqrt(c_nm2 / c_nm1) * r / np.sqrt(1.0 - r * r)
    return x / np.sqrt(1.0 + x * x)


# ── Two-sample intervals ───────────────────────────────────────────────────


@dataclass
class TwoSampleResult:
    ci: Interval
    reject: bool
    df: Optional[float] = None


def welch_df(g1: np.ndarray, g2: np.ndarray) -> float:
    v1 = np.var(g1, ddof=1) / g1.size
    v2 = np.var(g2, ddof=1) / g2.size
    return float((v1 + v2) ** 2 / (v1**2 / (g1.size - 1) + v2**2 / (g2.size - 1)))


def two_sample_tests(
    group1: np.ndarray,
    group2: np.ndarray,
    level: float = 0.95,
    n_mc: int = BEHRENS_MC_DRAWS,
    seed: int = 0,
) -> Dict[str, TwoSampleResult]:
    g1 = np.asarray(group1, dtype=float).reshape(-1)
    g2 = np.asarray(group2, dtype=float).reshape(-1)
    if g1.size < 2 or g2.size < 2:
        raise DomainError("each group needs at least 2 observations")
    s1, s2 = np.std(g1, ddof=1), np.std(g2, ddof=1)
    if s1 <= 0 or s2 <= 0:
        raise DomainError("zero sample variance")
    a = _tail(level)
    diff = float(g1.mean() - g2.mean())
    se = float(np.sqrt(s1**2 / g1.size + s2**2 / g2.size))

    def result(half: float, df: Optional[float]) -> TwoSampleResult:
        ci = (diff - half, diff + half)
        return TwoSampleResult(ci=ci, reject=not ci[0] <= 0.0 <= ci[1], df=df)

    df_w = welch_df(g1, g2)
    df_hs = float(min(g1.size, g2.size) - 1)
    out = {
        "welch": result(stats.t.ppf(1.0 - a, df_w) * se, df_w),
        "hsu_scheffe": result(stats.t.ppf(1.0 - a, df_hs) * se, df_hs),
    }

    rng = make_generator(seed)
    t1 = rng.standard_t(g1.size - 1, n_mc)
    t2 = rng.standard_t(g2.size - 1, n_mc)
    behrens = diff - s1 / np.sqrt(g1.size) * t1 + s2 / np.sqrt(g2.size) * t2
    lo, hi = np.quantile(behrens, [a, 1.0 - a], method="linear")
    out["behrens_fisher_mc"] = TwoSampleResult(
        ci=(float(lo), float(hi)), reject=not lo <= 0.0 <= hi
    )
    return out


# ── Mediation tests ────────────────────────────────────────────────────────


@dataclass
class MediationTestResult:
    statistic: float
    p_value: float
    reject: bool


def mediation_paths(dataset: Dataset) -> Dict[str, float]:
    """OLS fits of M ~ T + X and Y ~ T + M + X (no intercept)."""
    y, m = dataset.Y[:, 0], dataset.Y[:, 1]
    t, xs = dataset.X[:, 0], dataset.X[:, 1:]
    try:
        fit_m = sm.OLS(m, np.column_stack([t, xs])).fit()
        fit_y = sm.OLS(y, np.column_stack([t, m, xs])).fit()
    except np.linalg.LinAlgError as exc:
        raise DomainError("singular mediation design") from exc
    return {
        "gamma": float(fit_m.params[0]),
        "se_gamma": float(fit_m.bse[0]),
        "p_gamma": float(fit_m.pvalues[0]),
        "beta": float(fit_y.params[1]),
        "se_beta": float(fit_y.bse[1]),
        "p_beta": float(fit_y.pvalues[1]),
    }


def mediation_tests(dataset: Dataset, alpha: float = 0.05) -> Dict[str, MediationTestResult]:
    paths = mediation_paths(dataset)
    b, g = paths["beta"], paths["gamma"]
    denom = np.sqrt(b**2 * paths["se_gamma"] ** 2 + g**2 * paths["se_beta"] ** 2)
    z = float(b * g / denom) if denom > 0 else 0.0
    p_sobel = float(2.0 * stats.norm.sf(abs(z)))
    p_max = max(paths["p_beta"], paths["p_gamma"])
    return {
        "sobel": MediationTestResult(statistic=z, p_value=p_sobel, reject=p_sobel < alpha),
        "maxp": MediationTestResult(statistic=p_max, p_value=p_max, reject=p_max < alpha),
    }


# ── Nonlinear least squares / logistic MLE ─────────────────────────────────


@dataclass
class NlsResult:
    params: np.ndarray
    cov: np.ndarray
    sigma_hat: float
    intervals: Dict[str, Interval] = field(default_factory=dict)


def nls_fit(
    dataset: Dataset, start: Optional[np.ndarray] = None, level: float = 0.95
) -> NlsResult:
    """Gauss2 least squares with Wald intervals from s^2 (J'J)^{-1}."""
    x = dataset.X[:, 0]
    y = dataset.Y[:, 0]
    x0 = GAUSS2_START if start is None else np.asarray(start, dtype=float)

    fit = least_squares(
        lambda b: gauss2_curve(x, b) - y,
        x0,
        jac=lambda b: gauss2_jacobian(x, np.broadcast_to(b, (x.size, b.size))),
        method="lm",
        xtol=1e-12,
        ftol=1e-12,
    )
    if not fit.success:
        raise DataError(f"nonlinear least squares did not converge: {fit.message}")
    n, p = x.size, x0.size
    s2 = float(fit.fun @ fit.fun) / (n - p)
    cov = s2 * np.linalg.inv(fit.jac.T @ fit.jac)
    half = stats.t.ppf(1.0 - _tail(level), n - p) * np.sqrt(np.diag(cov))
    intervals = {
        f"b{j + 1}": (float(b - h), float(b + h)) for j, (b, h) in enumerate(zip(fit.x, half))
    }
    return NlsResult(params=fit.x, cov=cov, sigma_hat=float(np.sqrt(s2)), intervals=intervals)


def logistic_mle(dataset: Dataset, level: float = 0.95) -> Dict[str, Interval]:
    y = dataset.Y[:, 0]
    try:
        fit = sm.Logit(y, dataset.X).fit(disp=0)
    except np.linalg.LinAlgError as exc:
        raise DomainError("singular logistic design") from exc
    bounds = np.asarray(fit.conf_int(alpha=1.0 - level))
    return {f"theta{j}": (float(lo), float(hi)) for j, (lo, hi) in enumerate(bounds)}


# ── Dispatch ───────────────────────────────────────────────────────────────


@dataclass
class MethodResult:
    """Intervals per reported quantity and, for tests, the reject decision."""

    intervals: Dict[str, Interval] = field(default_factory=dict)
    estimates: Dict[str, float] = field(default_factory=dict)
    reject: Optional[bool] = None


SUPPORTED: Dict[str, Tuple[str, ...]] = {
    "linear_known_sigma": ("ols", "efd", "gfi_ar"),
    "linear_unknown_sigma": ("ols", "efd"),
    "behrens_fisher": ("welch", "hsu_scheffe", "behrens_fisher_mc"),
    "bivariate_normal": ("bivariate_fiducial",),
    "mediation": ("sobel", "maxp"),
    "gauss2": ("nls",),
    "logistic_binary": ("logistic_mle",),
}


def run_baseline(
    method: str, family: ModelFamily, dataset: Dataset, level: float = 0.95, seed: int = 0
) -> MethodResult:
    if method not in SUPPORTED.get(family.name, ()):
        raise ConfigError(
            f"method '{method}' is not available for family '{family.name}'",
            [f"methods: supported for {family.name} are {list(SUPPORTED.get(family.name, ()))}"],
        )
    family.check_dataset(dataset)
    y, X = dataset.Y, dataset.X

    if method == "ols":
        sigma = getattr(family, "sigma", None) if family.name == "linear_known_sigma" else None
        return MethodResult(intervals=ols_intervals(y, X, level, sigma))
    if method == "efd":
        sigma = getattr(family, "sigma", None) if family.name == "linear_known_sigma" else None
        cds = efd_linear(y, X, sigma)
        intervals = {name: cd.interval(level) for name, cd in cds.items() if name != "beta"}
        estimates = {name: float(cd.center[0]) for name, cd in cds.items() if name != "beta"}
        return MethodResult(intervals=intervals, estimates=estimates)
    if method == "gfi_ar":
        result = gfi_accept_reject(y, X, getattr(family, "sigma"), seed=seed)
        if result.accepted.shape[0] < 2:
            raise DataError(
                f"acceptance-rejection kept {result.accepted.shape[0]} of "
                f"{result.proposals} proposals"
            )
        a = _tail(level)
        q = np.quantile(result.accepted, [a, 1.0 - a], axis=0, method="linear")
        return MethodResult(
            intervals={f"beta{j}": (float(q[0, j]), float(q[1, j])) for j in range(X.shape[1])}
        )
    if method in ("welch", "hsu_scheffe", "behrens_fisher_mc"):
        g1, g2 = split_groups(dataset)
        res = two_sample_tests(g1.Y[:, 0], g2.Y[:, 0], level, seed=seed)[method]
        return MethodResult(intervals={"mu_diff": res.ci}, reject=res.reject)
    if method == "bivariate_fiducial":
        cds = bivariate_fiducial_closed_form(y, seed=seed)
        intervals = {name: cd.interval(level) for name, cd in cds.items()}
        for k in (1, 2):
            lo, hi = intervals[f"sigma{k}_sq"]
            intervals[f"sigma{k}"] = (float(np.sqrt(lo)), float(np.sqrt(hi)))
        return MethodResult(intervals=intervals)
    if method in ("sobel", "maxp"):
        res_m = mediation_tests(dataset, alpha=1.0 - level)[method]
        return MethodResult(estimates={"statistic": res_m.statistic}, reject=res_m.reject)
    if method == "nls":
        nls = nls_fit(dataset, level=level)
        return MethodResult(
            intervals=nls.intervals,
            estimates={f"b{j + 1}": float(b) for j, b in enumerate(nls.params)},
        )
    return MethodResult(intervals=logistic_mle(dataset, level))
