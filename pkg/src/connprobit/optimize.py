"""Maximum likelihood fitting by quasi-Newton search."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .data import Dataset
from .likelihood import evaluate, loglik_only, threshold_curvature
from .spec import Design, ModelSpec, ParamVector
from .stats import norm_quantile

logger = logging.getLogger(__name__)

OK = "ok"
NEAR_SINGULAR = "near_singular_hessian"
BOUNDARY = "boundary_like"


class FitError(RuntimeError):
    pass


class RankDeficiencyError(FitError):
    def __init__(self, message, columns):
        self.columns = list(columns)
        super().__init__(f"{message}: {', '.join(self.columns)}")


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 500
    grad_tol: float = 1e-6
    step_tol: float = 1e-9
    box: float = 10.0
    stages: tuple = ("homoscedastic", "full")
    fe_block_min: int = 60      # alternate blocks when there are more fixed effects than this
    hessian: bool = True        # finite-difference Hessian at the optimum
    hessian_step: float = 1e-5
    newton_polish: int = 8
    separation_bound: float = 1e3

    def replace(self, **kw):
        return replace(self, **kw)


@dataclass(eq=False)
class FitResult:
    spec: ModelSpec
    params_hat: ParamVector
    loglik: float
    iterations: int
    converged: bool
    gradient_norm: float
    condition_flag: str
    n_obs: int
    n_clusters: int
    gradient: np.ndarray
    hessian: np.ndarray | None = None
    covariance: np.ndarray | None = None
    message: str = ""
    history: list = field(default_factory=list)
    dropped_exams: int = 0
    design: Design | None = None

    @property
    def n_params(self):
        return self.params_hat.layout.size

    @property
    def names(self):
        return self.params_hat.layout.names

    @property
    def std_errors(self):
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def grad_tolerance(loglik, n, grad_tol):
    """Sup-norm bound on the total-loglik gradient that counts as converged."""
    return grad_tol * max(1.0, abs(loglik)) / max(n, 1)


def numerical_hessian(grad, x, rel_step=1e-5):
    """Central differences of an analytic gradient, symmetrized."""
    x = np.asarray(x, dtype=float)
    k = len(x)
    H = np.empty((k, k))
    for j in range(k):
        h = rel_step * max(1.0, abs(x[j]))
        e = np.zeros(k)
        e[j] = h
        H[:, j] = (grad(x + e) - grad(x - e)) / (2.0 * h)
    return 0.5 * (H + H.T)


# -- rank checks ---------------------------------------------------------------

def _dependent_columns(A, names, rtol=1e-9):
    if A.shape[1] == 0:
        return []
    scale = np.sqrt((A ** 2).sum(axis=0))
    zero = [names[j] for j in np.flatnonzero(scale == 0)]
    keep = np.flatnonzero(scale > 0)
    if keep.size == 0:
        return zero
    B = A[:, keep] / scale[keep]
    _, R, piv = linalg.qr(B, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rtol * d[0])) if d.size else 0
    return zero + [names[keep[j]] for j in piv[rank:]]


def check_rank(design: Design):
    """Raise :class:`RankDeficiencyError` naming columns that are not identified.

    The mean design (with thresholds) must have full rank on unconnected
    candidates; bias and variance designs must have full column rank.
    """
    L = design.layout
    unconnected = np.all(design.G == 0, axis=1) & np.all(
        design.V[:, len(L.block_names("delta_base")):] == 0, axis=1)
    X = design.X[unconnected]
    names = list(L.block_names("beta"))
    if design.fixed_effects:
        # absorb exam effects by demeaning within exam
        codes = design.exam_col[unconnected]
        k = len(L.block_names("threshold"))
        cnt = np.bincount(codes, minlength=k).astype(float)
        if X.shape[1]:
            means = np.vstack([np.bincount(codes, weights=X[:, j], minlength=k)
                               for j in range(X.shape[1])]).T / np.maximum(cnt, 1)[:, None]
            X = X - means[codes]
        A = X
    else:
        A = np.hstack([X, design.T[unconnected]])
        names += list(L.block_names("threshold"))
    bad = _dependent_columns(A, names)
    if bad:
        raise RankDeficiencyError("mean design is rank deficient on unconnected candidates", bad)
    bad = _dependent_columns(design.G, list(L.block_names("gamma")))
    if bad:
        raise RankDeficiencyError("bias design is rank deficient", bad)
    vnames = list(L.block_names("delta_base")) + list(L.block_names("delta_info"))
    bad = _dependent_columns(design.V, vnames)
    if bad:
        raise RankDeficiencyError("variance design is rank deficient", bad)


# -- search --------------------------------------------------------------------

class _Objective:
    """Negative mean log-likelihood over a subset of free parameters."""

    def __init__(self, design: Design, base, free):
        self.design = design
        self.base = np.array(base, dtype=float)
        self.free = np.asarray(free)
        self.n = design.n
        self.evals = 0

    def full(self, x):
        theta = self.base.copy()
        theta[self.free] = x
        return theta

    def __call__(self, x):
        self.evals += 1
        lv = evaluate(self.design, self.full(x))
        return -lv.loglik / self.n, -lv.gradient[self.free] / self.n, lv


def _bfgs(obj: _Objective, x0, lower, upper, opts: FitOptions, history, max_iter=None):
    """Projected BFGS with backtracking. Returns (x, iterations, stalled)."""
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    f, g, lv = obj(x)
    history.append(lv.loglik)
    k = len(x)
    H = np.eye(k)
    first = True
    eps_f = 8 * np.finfo(float).eps
    it = 0
    max_iter = opts.max_iter if max_iter is None else max_iter
    stalled = False
    while it < max_iter:
        if np.max(np.abs(g), initial=0.0) * obj.n < grad_tolerance(lv.loglik, obj.n, opts.grad_tol):
            break
        it += 1
        # freeze coordinates held at a bound with the gradient pushing outward
        at_lo = (x <= lower) & (g > 0)
        at_hi = (x >= upper) & (g < 0)
        active = at_lo | at_hi
        p = -H @ g
        p[active] = 0.0
        if g @ p >= 0:
            H = np.eye(k)
            p = -g.copy()
            p[active] = 0.0
        step_max = 1.0
        if first:
            step_max = min(1.0, 1.0 / max(np.max(np.abs(p)), 1e-300))
        alpha = step_max
        accepted = False
        for _ in range(60):
            x_new = np.clip(x + alpha * p, lower, upper)
            s = x_new - x
            f_new, g_new, lv_new = obj(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * (g @ s) + eps_f * abs(f):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            stalled = True
            break
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first:
                H = np.eye(k) * (sy / (y @ y))
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy))
            first = False
        x, f, g, lv = x_new, f_new, g_new, lv_new
        history.append(lv.loglik)
        if np.max(np.abs(s) / np.maximum(1.0, np.abs(x))) < opts.step_tol:
            stalled = True
            break
    return x, it, stalled


def _newton_thresholds(design: Design, theta, sl, iters=25, tol=1e-10):
    """Coordinate-wise Newton on fixed-effect thresholds (their Hessian is diagonal)."""
    theta = theta.copy()
    ll = loglik_only(design, theta)
    for _ in range(iters):
        lv = evaluate(design, theta)
        g = lv.gradient[sl]
        if np.max(np.abs(g), initial=0.0) < tol * max(1.0, abs(ll)):
            break
        h = threshold_curvature(design, theta)
        step = -g / np.where(h < -1e-12, h, -1e-12)
        step = np.clip(step, -2.0, 2.0)
        alpha = 1.0
        for _ in range(30):
            trial = theta.copy()
            trial[sl] += alpha * step
            ll_new = loglik_only(design, trial)
            if ll_new >= ll - 1e-12 * abs(ll):
                theta, ll = trial, ll_new
                break
            alpha *= 0.5
        else:
            break
    return theta


def _default_start(design: Design, ds: Dataset):
    L = design.layout
    theta = np.zeros(L.size)
    sl = L.slice("threshold")
    if design.fixed_effects:
        cnt = np.bincount(ds.exam, minlength=ds.n_exams)
        rate = np.bincount(ds.exam, weights=ds.y, minlength=ds.n_exams) / np.maximum(cnt, 1)
        per_exam = -norm_quantile(np.clip(rate, 0.02, 0.98))
        a = np.zeros(sl.stop - sl.start)
        a[design.exam_col] = per_exam[ds.exam]
        theta[sl] = a
    else:
        rate = np.clip(ds.y.mean(), 0.02, 0.98)
        theta[sl.start] = -norm_quantile(rate)  # "a:const"
    return theta


def _search(design: Design, theta, free, lower, upper, opts, history):
    """Run BFGS on ``free``; alternate with threshold Newton steps for large FE fits."""
    L = design.layout
    sl = L.slice("threshold")
    fe_idx = np.arange(sl.start, sl.stop)
    alternate = design.fixed_effects and len(fe_idx) > opts.fe_block_min
    iters = 0
    if not alternate:
        obj = _Objective(design, theta, free)
        x, iters, _ = _bfgs(obj, theta[free], lower[free], upper[free], opts, history)
        return obj.full(x), iters
    rest = np.setdiff1d(free, fe_idx)
    fe_free = np.intersect1d(free, fe_idx)
    for _ in range(opts.max_iter):
        if fe_free.size:
            theta = _newton_thresholds(design, theta, fe_free)
        obj = _Objective(design, theta, rest)
        x, it, _ = _bfgs(obj, theta[rest], lower[rest], upper[rest], opts, history,
                         max_iter=50)
        theta = obj.full(x)
        iters += it + 1
        lv = evaluate(design, theta)
        gmax = np.max(np.abs(lv.gradient[free]))
        if gmax < grad_tolerance(lv.loglik, design.n, opts.grad_tol) or iters >= opts.max_iter:
            break
        if it == 0 and gmax < 1e3 * grad_tolerance(lv.loglik, design.n, opts.grad_tol):
            break
    return theta, iters


def fit(spec: ModelSpec, ds: Dataset, init: ParamVector | None = None,
        options: FitOptions | None = None) -> FitResult:
    """Maximize the log-likelihood of ``spec`` on ``ds``.

    Without ``init`` the search is staged: the mean blocks are fitted with
    every variance parameter at zero, then all parameters are freed.
    Non-convergence is reported through ``converged`` rather than raised.
    """
    opts = options or FitOptions()
    dropped = 0
    if spec.threshold.variant == "fixed_effects":
        before = ds.n_exams
        ds = ds.drop_degenerate_exams()
        dropped = before - ds.n_exams
    if ds.n_candidates == 0 or ds.y.min() == ds.y.max():
        raise FitError("outcome has no variation")
    design = spec.compile(ds, init.layout if init is not None and
                          spec.threshold.variant != "fixed_effects" else None)
    check_rank(design)
    L = design.layout
    k = L.size
    lower = np.full(k, -np.inf)
    upper = np.full(k, np.inf)
    for b in ("delta_base", "delta_info"):
        s = L.slice(b)
        lower[s] = -opts.box
        upper[s] = opts.box
    var_idx = np.r_[np.arange(*L.slice("delta_base").indices(k)),
                    np.arange(*L.slice("delta_info").indices(k))]
    mean_idx = np.setdiff1d(np.arange(k), var_idx)

    if init is not None:
        theta = np.clip(init.embed(L).values if init.layout != L else init.values, lower, upper)
        stages = ("full",)
    else:
        theta = _default_start(design, ds)
        stages = opts.stages if var_idx.size else ("full",)
    ll_init = loglik_only(design, theta)
    history: list = []
    iterations = 0
    for stage in stages:
        free = mean_idx if stage == "homoscedastic" else np.arange(k)
        theta, it = _search(design, theta, free, lower, upper, opts, history)
        iterations += it

    lv = evaluate(design, theta)
    tol = grad_tolerance(lv.loglik, design.n, opts.grad_tol)
    free_mask = ~(((theta <= lower) & (lv.gradient < 0)) | ((theta >= upper) & (lv.gradient > 0)))

    def grad_fn(t):
        return evaluate(design, t).gradient

    H = None
    if opts.hessian or np.max(np.abs(lv.gradient[free_mask])) >= tol:
        H = numerical_hessian(grad_fn, theta, opts.hessian_step)
    # Newton polish: the quasi-Newton search can stall once loglik changes
    # drop below floating-point resolution while the gradient is still above tol
    for _ in range(opts.newton_polish):
        g = lv.gradient
        if np.max(np.abs(g[free_mask]), initial=0.0) < tol or H is None:
            break
        idx = np.flatnonzero(free_mask)
        try:
            step = np.zeros(k)
            step[idx] = -linalg.solve(H[np.ix_(idx, idx)], g[idx], assume_a="sym")
        except (linalg.LinAlgError, ValueError):
            break
        trial = np.clip(theta + step, lower, upper)
        lv_t = evaluate(design, trial)
        if not lv_t.loglik >= lv.loglik - 1e-10 * max(1.0, abs(lv.loglik)):
            break
        theta, lv = trial, lv_t
        history.append(lv.loglik)
        iterations += 1
        H = numerical_hessian(grad_fn, theta, opts.hessian_step)

    gnorm = float(np.max(np.abs(lv.gradient[free_mask]), initial=0.0))
    converged = gnorm < grad_tolerance(lv.loglik, design.n, opts.grad_tol) and \
        lv.loglik >= ll_init - 1e-9 * max(1.0, abs(ll_init))

    flag = OK
    msg = ""
    m_idx, ls_idx = design.index(theta)
    if np.any(np.isclose(np.abs(theta[var_idx]), opts.box, rtol=0, atol=1e-8)):
        flag, msg = BOUNDARY, "variance parameter at the search box"
    elif lv.loglik > -1e-8 * max(1, design.n) or np.max(np.abs(theta)) > opts.separation_bound:
        flag, msg = BOUNDARY, "outcomes (quasi-)separated: parameters diverge"
    elif H is not None:
        ev = np.linalg.eigvalsh(-H)
        if ev[0] <= 1e-10 * max(ev[-1], 1e-300):
            flag, msg = NEAR_SINGULAR, "information matrix near singular"
    if not converged and not msg:
        msg = "gradient tolerance not reached"

    return FitResult(
        spec=spec, params_hat=ParamVector(L, theta), loglik=lv.loglik,
        iterations=iterations, converged=bool(converged), gradient_norm=gnorm,
        condition_flag=flag, n_obs=design.n, n_clusters=design.n_clusters,
        gradient=lv.gradient, hessian=H, message=msg, history=history,
        dropped_exams=dropped, design=design,
    )
