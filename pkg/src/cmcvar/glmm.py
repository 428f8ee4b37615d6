"""Logistic mixed model with a single per-author random intercept.

The marginal likelihood integrates the random intercept out per cluster,
either by a Laplace approximation at the per-cluster mode (the default
fitting criterion) or by adaptive Gauss-Hermite quadrature centered and
scaled at that mode (for verification; Laplace is biased for tiny clusters).
sigma is optimized on the log scale; sigma = 0 degenerates exactly to the
plain logistic log-likelihood.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.special import expit
from scipy.stats import chi2 as chi2_dist
from scipy.stats import norm as norm_dist

from .balance import ContrastData
from .rcs import rcs_matrix, validate_knots

# optimizer and inner-solver tolerances
INNER_TOL = 1e-12
INNER_MAX_ITER = 50
OUTER_GTOL = 1e-4
OUTER_MAX_ITER = 500
SEPARATION_BOUND = 30.0
LOG_SIGMA_BOUNDS = (-9.0, 4.0)

MAIN_TERMS = ("age_spline", "region", "gender")
INTERACTION_TERMS = ("age_spline:region", "age_spline:gender", "gender:region")


class GlmmError(RuntimeError):
    pass


class SeparationError(GlmmError):
    """Complete or quasi-complete separation: coefficients diverge."""


class ConvergenceError(GlmmError):
    pass


@dataclass(frozen=True)
class GlmmData:
    y: np.ndarray
    X: np.ndarray
    clusters: np.ndarray
    cluster_ids: tuple
    column_names: tuple
    term_map: dict

    @property
    def n_obs(self) -> int:
        return self.y.size

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_ids)


@dataclass(frozen=True)
class FittedGlmm:
    beta: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    sigma: float
    sigma_se: float
    loglik: float
    converged: bool
    iterations: int
    term_map: dict
    column_names: tuple
    n_obs: int
    n_clusters: int
    method: str


@dataclass(frozen=True)
class LrTestResult:
    chi2: float
    df: int
    p: float


def make_data(
    y: Sequence[int],
    X: np.ndarray,
    cluster_keys: Sequence,
    column_names: Sequence[str],
    term_map: Optional[dict] = None,
) -> GlmmData:
    """Assemble a design from raw arrays; clusters are coded by sorted key."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise GlmmError("X must be (n_obs, n_cols)")
    ids = tuple(sorted(set(cluster_keys)))
    index = {k: i for i, k in enumerate(ids)}
    clusters = np.array([index[k] for k in cluster_keys], dtype=np.intp)
    if term_map is None:
        term_map = {name: (i,) for i, name in enumerate(column_names)}
    return GlmmData(
        y=y,
        X=X,
        clusters=clusters,
        cluster_ids=ids,
        column_names=tuple(column_names),
        term_map=dict(term_map),
    )


def design_matrix(
    data: ContrastData,
    knots,
    terms: Sequence[str] = MAIN_TERMS,
    region_ref: str = "brabant",
    gender_ref: str = "f",
) -> GlmmData:
    """Treatment-coded design: intercept, age spline, region and gender
    indicators against their reference levels, plus requested elementwise
    interaction products."""
    knots = validate_knots(knots)
    records = data.records
    y = np.array([1.0 if r.nonstandard else 0.0 for r in records])
    ages = np.array([float(r.age) for r in records])

    blocks: dict[str, tuple[np.ndarray, list[str]]] = {}
    spline = rcs_matrix(ages, knots)
    blocks["age_spline"] = (spline, [f"age_s{i+1}" for i in range(spline.shape[1])])

    regions = sorted({r.region for r in records} - {region_ref})
    if any(r.region == region_ref for r in records):
        levels = regions
    else:
        raise GlmmError(f"region reference level {region_ref!r} absent from data")
    reg_cols = np.column_stack(
        [[1.0 if r.region == lev else 0.0 for r in records] for lev in levels]
    ) if levels else np.empty((len(records), 0))
    blocks["region"] = (reg_cols, [f"region[{lev}]" for lev in levels])

    genders = sorted({r.gender for r in records} - {gender_ref})
    if not any(r.gender == gender_ref for r in records):
        raise GlmmError(f"gender reference level {gender_ref!r} absent from data")
    gen_cols = np.column_stack(
        [[1.0 if r.gender == lev else 0.0 for r in records] for lev in genders]
    ) if genders else np.empty((len(records), 0))
    blocks["gender"] = (gen_cols, [f"gender[{lev}]" for lev in genders])

    cols = [np.ones((len(records), 1))]
    names = ["(intercept)"]
    term_map: dict[str, tuple] = {"(intercept)": (0,)}
    order = [t for t in MAIN_TERMS if t in terms] + [
        t for t in INTERACTION_TERMS if t in terms
    ]
    unknown = set(terms) - set(MAIN_TERMS) - set(INTERACTION_TERMS)
    if unknown:
        raise GlmmError(f"unknown terms {sorted(unknown)}")
    for term in order:
        if ":" in term:
            a, b = term.split(":")
            mat_a, names_a = blocks[a]
            mat_b, names_b = blocks[b]
            mat = np.column_stack(
                [mat_a[:, i] * mat_b[:, j] for i in range(mat_a.shape[1]) for j in range(mat_b.shape[1])]
            ) if mat_a.shape[1] and mat_b.shape[1] else np.empty((len(records), 0))
            colnames = [f"{na}:{nb}" for na in names_a for nb in names_b]
        else:
            mat, colnames = blocks[term]
        start = sum(c.shape[1] for c in cols)
        term_map[term] = tuple(range(start, start + mat.shape[1]))
        cols.append(mat)
        names.extend(colnames)
    X = np.hstack(cols)
    return make_data(y, X, [r.author_id for r in records], names, term_map)


def _bernoulli_loglik_per_cluster(y, z, clusters, m):
    return np.bincount(clusters, weights=y * z - np.logaddexp(0.0, z), minlength=m)


def _cluster_modes(y, eta, clusters, m, sigma2, b0=None):
    """Per-cluster posterior modes of the random intercept, safeguarded Newton.

    Returns (b_hat, per-cluster curvature H = sum p(1-p) + 1/sigma2).
    The per-cluster objective is strictly concave, so the full Newton step
    with halving on objective decrease always converges.
    """
    b = np.zeros(m) if b0 is None else np.array(b0, dtype=float)

    def objective(bv):
        z = eta + bv[clusters]
        return _bernoulli_loglik_per_cluster(y, z, clusters, m) - bv * bv / (2.0 * sigma2)

    f = objective(b)
    for _ in range(INNER_MAX_ITER):
        z = eta + b[clusters]
        p = expit(z)
        g = np.bincount(clusters, weights=y - p, minlength=m) - b / sigma2
        if np.max(np.abs(g)) < INNER_TOL:
            break
        W = np.bincount(clusters, weights=p * (1.0 - p), minlength=m)
        step = g / (W + 1.0 / sigma2)
        shrink = np.ones(m)
        for _ in range(40):
            f_new = objective(b + shrink * step)
            bad = f_new < f - 1e-13
            if not bad.any():
                break
            shrink = np.where(bad, shrink * 0.5, shrink)
        accept = f_new >= f - 1e-13
        b = np.where(accept, b + shrink * step, b)
        f = np.where(accept, f_new, f)
    z = eta + b[clusters]
    p = expit(z)
    W = np.bincount(clusters, weights=p * (1.0 - p), minlength=m)
    return b, W + 1.0 / sigma2


def _plain_loglik(y, eta):
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def marginal_loglik(data: GlmmData, beta, sigma: float, method="laplace") -> float:
    """Marginal log-likelihood: per cluster, the Bernoulli likelihood
    integrated against Normal(0, sigma^2) on the random intercept.

    ``method`` is "laplace" or ("agq", n) with n Gauss-Hermite nodes centered
    and scaled at the Laplace mode.
    """
    beta = np.asarray(beta, dtype=float)
    eta = data.X @ beta
    y, clusters, m = data.y, data.clusters, data.n_clusters
    if sigma < 0:
        raise GlmmError("sigma must be >= 0")
    if sigma == 0.0:
        return _plain_loglik(y, eta)
    sigma2 = sigma * sigma
    b, H = _cluster_modes(y, eta, clusters, m, sigma2)
    if method == "laplace":
        ll_mode = _bernoulli_loglik_per_cluster(y, eta + b[clusters], clusters, m)
        log_lik = ll_mode - b * b / (2.0 * sigma2) - 0.5 * np.log(sigma2 * H)
        return float(np.sum(log_lik))
    if isinstance(method, tuple) and len(method) == 2 and method[0] == "agq":
        n_nodes = int(method[1])
        nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
        s = 1.0 / np.sqrt(H)
        log_terms = np.empty((m, n_nodes))
        for k in range(n_nodes):
            bk = b + np.sqrt(2.0) * s * nodes[k]
            ll = _bernoulli_loglik_per_cluster(y, eta + bk[clusters], clusters, m)
            log_h = ll - bk * bk / (2.0 * sigma2) - 0.5 * np.log(2.0 * np.pi * sigma2)
            log_terms[:, k] = np.log(weights[k]) + nodes[k] ** 2 + log_h
        peak = log_terms.max(axis=1)
        log_int = peak + np.log(np.sum(np.exp(log_terms - peak[:, None]), axis=1))
        return float(np.sum(log_int + np.log(np.sqrt(2.0) * s)))
    raise GlmmError(f"unknown method {method!r}")


def marginal_loglik_grad(data: GlmmData, beta, sigma: float) -> np.ndarray:
    """Analytic gradient of the Laplace marginal log-likelihood with respect
    to (beta, log sigma), accounting for the implicit dependence of the
    per-cluster mode on the parameters."""
    beta = np.asarray(beta, dtype=float)
    if sigma <= 0:
        raise GlmmError("analytic gradient requires sigma > 0")
    eta = data.X @ beta
    y, clusters, m = data.y, data.clusters, data.n_clusters
    sigma2 = sigma * sigma
    b, H = _cluster_modes(y, eta, clusters, m, sigma2)
    z = eta + b[clusters]
    p = expit(z)
    w = p * (1.0 - p)
    u = w * (1.0 - 2.0 * p)  # d/db of p(1-p)
    U = np.bincount(clusters, weights=u, minlength=m)
    r = y - p

    # beta gradient, with per-observation correction weights gathered
    # through the cluster index (see the per-cluster Laplace expression)
    Hc = H[clusters]
    Uc = U[clusters]
    c = r - 0.5 * u / Hc + 0.5 * Uc * w / (Hc * Hc)
    grad_beta = data.X.T @ c

    # d/d sigma^2, then chain to log sigma
    d_s2 = (
        b * b / (2.0 * sigma2 * sigma2)
        - 0.5 * (H - 1.0 / sigma2) / (sigma2 * H)
        - 0.5 * U * b / (sigma2 * sigma2 * H * H)
    )
    grad_logsigma = 2.0 * sigma2 * float(np.sum(d_s2))
    return np.concatenate([grad_beta, [grad_logsigma]])


def _logistic_start(y, X):
    """Plain-logistic coefficients by iteratively reweighted least squares,
    used only as the starting point for the mixed fit."""
    beta = np.zeros(X.shape[1])
    for _ in range(100):
        eta = X @ beta
        p = expit(eta)
        w = np.maximum(p * (1.0 - p), 1e-10)
        zvar = eta + (y - p) / w
        wx = X * w[:, None]
        beta_new, *_ = np.linalg.lstsq(wx.T @ X, wx.T @ zvar, rcond=None)
        if np.max(np.abs(X @ beta_new)) > SEPARATION_BOUND:
            raise SeparationError("separation detected in logistic start")
        if np.max(np.abs(beta_new - beta)) < 1e-10:
            return beta_new
        beta = beta_new
    return beta


def fit_glmm(
    data: GlmmData,
    start: Optional[np.ndarray] = None,
    method="laplace",
    max_iter: int = OUTER_MAX_ITER,
) -> FittedGlmm:
    """Maximize the marginal log-likelihood over (beta, log sigma).

    Quasi-Newton (L-BFGS-B) with the analytic Laplace gradient (finite
    differences for adaptive quadrature); standard errors come from the
    inverse negative Hessian of the marginal log-likelihood at the optimum.
    """
    y = data.y
    if data.n_clusters < 2:
        raise GlmmError("need at least 2 clusters")
    if y.min() == y.max():
        raise SeparationError("degenerate response: all observations identical")
    p_dim = data.X.shape[1]
    if start is None:
        theta0 = np.concatenate([_logistic_start(y, data.X), [0.0]])
    else:
        theta0 = np.asarray(start, dtype=float)
        if theta0.size != p_dim + 1:
            raise GlmmError("start must have length n_cols + 1 (beta, log sigma)")

    use_grad = method == "laplace"

    def objective(theta):
        beta, logsigma = theta[:-1], theta[-1]
        # separation shows up as the linear predictor running away, pinning
        # fitted probabilities at 0/1; trial points beyond the bound get a
        # steep penalty so the line search retreats, and the bound is
        # re-checked on the accepted optimum below
        excess = np.max(np.abs(data.X @ beta)) - SEPARATION_BOUND
        if excess > 0:
            return 1e8 * (1.0 + excess)
        return -marginal_loglik(data, beta, np.exp(logsigma), method=method)

    def gradient(theta):
        return -marginal_loglik_grad(data, theta[:-1], np.exp(theta[-1]))

    bounds = [(None, None)] * p_dim + [LOG_SIGMA_BOUNDS]
    res = optimize.minimize(
        objective,
        theta0,
        jac=gradient if use_grad else None,
        method="L-BFGS-B",
        bounds=bounds,
        # loose stopping rules here: the Newton polish below finishes the
        # job from the quasi-Newton ballpark at a fraction of the cost
        options={"maxiter": max_iter, "ftol": 1e-9, "gtol": OUTER_GTOL, "maxcor": 30},
    )
    stalled = not res.success and "ABNORMAL" in str(res.message).upper()
    if stalled and not use_grad:
        raise ConvergenceError(f"optimizer failed: {res.message}")
    theta = res.x
    hess = None
    if use_grad:
        # a stalled line search near the optimum is rescued by the polish;
        # a genuinely unconverged fit still shows a large gradient afterwards
        theta, hess = _newton_polish(objective, gradient, theta, bounds)
        if stalled:
            free = gradient(theta)[:-1] if theta[-1] <= LOG_SIGMA_BOUNDS[0] else gradient(theta)
            if np.max(np.abs(free)) > 1e-3 * max(1.0, abs(objective(theta))):
                raise ConvergenceError(f"optimizer failed: {res.message}")
    beta, sigma = theta[:-1], float(np.exp(theta[-1]))
    if np.max(np.abs(data.X @ beta)) > SEPARATION_BOUND * 0.99:
        raise SeparationError("separation detected: linear predictor diverging")
    loglik = -objective(theta)

    if hess is None:
        hess = _hessian(objective, gradient if use_grad else None, theta)
    try:
        cov_full = np.linalg.inv(hess)
    except np.linalg.LinAlgError as exc:
        raise GlmmError("singular Hessian at the optimum") from exc
    diag = np.diag(cov_full)
    if np.any(diag[:p_dim] <= 0):
        raise GlmmError("Hessian not positive definite at the optimum")
    se = np.sqrt(diag[:p_dim])
    sigma_se = sigma * np.sqrt(max(diag[-1], 0.0))  # delta method from log sigma
    return FittedGlmm(
        beta=beta,
        se=se,
        cov=cov_full[:p_dim, :p_dim],
        sigma=sigma,
        sigma_se=sigma_se,
        loglik=loglik,
        converged=bool(res.success) or stalled,
        iterations=int(res.nit),
        term_map=dict(data.term_map),
        column_names=data.column_names,
        n_obs=data.n_obs,
        n_clusters=data.n_clusters,
        method="laplace" if method == "laplace" else f"agq({method[1]})",
    )


def _newton_polish(objective, gradient, theta, bounds, max_steps=5):
    """Refine the quasi-Newton solution with damped Newton steps so the
    optimum is located well below the optimizer's stopping tolerance.

    Returns the refined point plus, when still valid there, the Hessian from
    the last iteration, which the caller reuses for the covariance matrix.
    """
    theta = theta.copy()
    f_cur = objective(theta)
    hess = None
    for _ in range(max_steps):
        g = gradient(theta)
        hess = _hessian(objective, gradient, theta)
        try:
            step = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            break
        scale = np.max(np.abs(step)) / max(1.0, np.max(np.abs(theta)))
        if scale < 1e-12:
            break
        damp = 1.0
        improved = False
        for _ in range(8):
            trial = theta - damp * step
            lo, hi = bounds[-1]
            trial[-1] = np.clip(trial[-1], lo, hi)
            f_trial = objective(trial)
            if f_trial <= f_cur:
                theta, f_cur, improved = trial, f_trial, True
                break
            damp *= 0.5
        if not improved:
            break
        hess = None  # theta moved, so the last Hessian is stale
    return theta, hess


def _hessian(objective, gradient, theta, step=1e-5):
    """Central finite differences of the gradient (or of the objective when
    no gradient is available)."""
    k = theta.size
    hess = np.zeros((k, k))
    if gradient is not None:
        for i in range(k):
            h = step * max(1.0, abs(theta[i]))
            ei = np.zeros(k)
            ei[i] = h
            hess[:, i] = (gradient(theta + ei) - gradient(theta - ei)) / (2.0 * h)
    else:
        f0 = objective(theta)
        hstep = 1e-4
        hs = [hstep * max(1.0, abs(t)) for t in theta]
        for i in range(k):
            ei = np.zeros(k)
            ei[i] = hs[i]
            for j in range(i, k):
                ej = np.zeros(k)
                ej[j] = hs[j]
                if i == j:
                    hess[i, i] = (objective(theta + ei) - 2 * f0 + objective(theta - ei)) / hs[i] ** 2
                else:
                    hess[i, j] = hess[j, i] = (
                        objective(theta + ei + ej)
                        - objective(theta + ei - ej)
                        - objective(theta - ei + ej)
                        + objective(theta - ei - ej)
                    ) / (4.0 * hs[i] * hs[j])
    return 0.5 * (hess + hess.T)


def predict_probability(model: FittedGlmm, covariates) -> float:
    """Fitted probability at random intercept 0 (population-median author)."""
    x = np.asarray(covariates, dtype=float)
    if x.shape != model.beta.shape:
        raise GlmmError(
            f"covariate length {x.size} does not match {model.beta.size} coefficients"
        )
    return float(expit(x @ model.beta))


def wald_test(model: FittedGlmm, coefficient: str) -> tuple[float, float]:
    """Wald z and two-sided normal p for one named coefficient."""
    try:
        idx = model.column_names.index(coefficient)
    except ValueError as exc:
        raise GlmmError(f"unknown coefficient {coefficient!r}") from exc
    z = model.beta[idx] / model.se[idx]
    return float(z), float(2.0 * norm_dist.sf(abs(z)))


def lr_test(full: FittedGlmm, reduced: FittedGlmm) -> LrTestResult:
    """Likelihood-ratio chi-square between nested fits on the same dataset."""
    if not set(reduced.term_map) <= set(full.term_map):
        raise GlmmError("models are not nested (reduced terms not a subset)")
    if full.n_obs != reduced.n_obs:
        raise GlmmError("models were fitted on different datasets")
    df = full.beta.size - reduced.beta.size
    if df <= 0:
        raise GlmmError("full model has no extra parameters")
    chi2 = 2.0 * (full.loglik - reduced.loglik)
    if chi2 < 0:
        warnings.warn(
            f"negative LR statistic {chi2:.3g} clamped to 0 (optimizer noise)",
            RuntimeWarning,
        )
        chi2 = 0.0
    return LrTestResult(chi2=chi2, df=df, p=float(chi2_dist.sf(chi2, df)))


def format_model(model: FittedGlmm) -> str:
    """Self-describing text serialization of a fitted model."""
    lines = [
        f"method\t{model.method}",
        f"n_obs\t{model.n_obs}",
        f"n_clusters\t{model.n_clusters}",
        f"loglik\t{model.loglik:.6f}",
        f"sigma\t{model.sigma:.6f}",
        f"sigma_se\t{model.sigma_se:.6f}",
        f"converged\t{int(model.converged)}",
        f"iterations\t{model.iterations}",
        f"terms\t{','.join(model.term_map)}",
        "coefficient\testimate\tse\tz\tp",
    ]
    for name, b, s in zip(model.column_names, model.beta, model.se):
        z = b / s
        p = 2.0 * norm_dist.sf(abs(z))
        lines.append(f"{name}\t{b:.6f}\t{s:.6f}\t{z:.4f}\t{p:.6g}")
    return "\n".join(lines) + "\n"
