"""
Fair model stacking.

Finds ensemble weights ``w`` for base-model scores ``H`` (n x k) by minimizing

    loss(H w, y) + lam**2 * sum_c (b_c . w)**2 + alpha/2 * ||w||**2

where ``b_c`` holds the per-model score biases for contrast ``c``.  Score bias
is linear in the scores, so the ensemble's bias is exactly ``b_c . w`` and
the penalty is a convex quadratic.  Sweeping ``lam`` traces the ensemble's
fairness-accuracy frontier; ``lam = 0`` is an ordinary (ridge) stack.

Squared loss is solved directly from the normal equations

    (H'H + lam**2 * sum_c b_c b_c' + alpha/2 * I) w = H'y

and logistic loss by damped Newton with Armijo backtracking.
"""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from fairfrontier import frontier
from fairfrontier.errors import ValidationError
from fairfrontier.metrics import (
    EvaluationSet,
    classification_accuracy,
    decision_fairness,
    regression_accuracy,
    score_bias,
    score_bias_matrix,
    threshold_decisions,
)

log = logging.getLogger(__name__)

NEWTON_GTOL = 1e-10
NEWTON_MAX_ITER = 100
NEWTON_MAX_HALVINGS = 50
ARMIJO_C = 1e-4
HESSIAN_JITTER = 1e-12


def default_lambda_grid(count=20, lo=1.0, hi=1e6):
    return tuple(np.logspace(np.log10(lo), np.log10(hi), count).tolist())


def default_alpha_grid(count=6, lo=1e2, hi=1e7):
    return tuple(np.logspace(np.log10(lo), np.log10(hi), count).tolist())


@dataclass(frozen=True)
class StackingProblem:
    """Base scores, targets and per-contrast bias vectors for one fitting split.

    ``bias_vectors`` has one row per contrast.  ``eval`` is the split the
    biases were measured on; cross-validation re-measures them per fold.
    """

    H: np.ndarray
    y: np.ndarray
    contrasts: tuple
    bias_vectors: np.ndarray
    loss_kind: str = "squared"
    model_ids: tuple = ()
    eval: EvaluationSet | None = None
    constant_index: int | None = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        y = np.asarray(self.y, dtype=float)
        B = np.atleast_2d(np.asarray(self.bias_vectors, dtype=float))
        if H.ndim != 2 or H.shape[0] != len(y):
            raise ValidationError("score matrix rows must match the number of targets")
        n, k = H.shape
        if B.shape != (len(self.contrasts), k):
            raise ValidationError(f"need one length-{k} bias vector per contrast")
        for name, arr in (("score matrix", H), ("targets", y), ("bias vectors", B)):
            bad = ~np.isfinite(arr)
            if bad.any():
                idx = tuple(int(i) for i in np.argwhere(bad)[0])
                raise ValidationError(f"non-finite entry in {name} at {idx}")
        if self.loss_kind not in ("squared", "logistic"):
            raise ValidationError(f"unknown loss {self.loss_kind!r}; use squared or logistic")
        if self.loss_kind == "logistic" and not np.isin(y, (0.0, 1.0)).all():
            raise ValidationError("logistic loss needs 0/1 targets")
        if n < k:
            warnings.warn(f"fewer rows ({n}) than base models ({k}); consider alpha > 0")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "bias_vectors", B)
        object.__setattr__(self, "contrasts", tuple(self.contrasts))
        ids = tuple(self.model_ids) or tuple(f"m{i}" for i in range(k))
        object.__setattr__(self, "model_ids", ids)

    @property
    def k(self):
        return self.H.shape[1]

    def check_bias(self, atol=1e-12):
        """Re-measure the bias vectors from ``H`` and compare with the stored ones."""
        if self.eval is None:
            raise ValidationError("problem has no evaluation split to re-measure against")
        for c, b in zip(self.contrasts, self.bias_vectors):
            fresh = score_bias_matrix(self.H, c, self.eval)
            if np.max(np.abs(fresh - b)) > atol:
                raise ValidationError(f"stored bias vector for {c.attribute} is stale")
        return True


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty grids.  ``lambda_grid`` is sorted ascending (least fair first)."""

    lambda_grid: tuple = field(default_factory=default_lambda_grid)
    ridge_alpha: float | str = "cv"
    alpha_grid: tuple = field(default_factory=default_alpha_grid)
    cv_folds: int = 5
    rng_seed: int = 0
    workers: int | None = None

    def __post_init__(self):
        lams = tuple(sorted(float(v) for v in self.lambda_grid))
        alphas = tuple(float(v) for v in self.alpha_grid)
        if not lams:
            raise ValidationError("lambda_grid is empty")
        for name, vals in (("lambda_grid", lams), ("alpha_grid", alphas)):
            if any(not np.isfinite(v) or v < 0 for v in vals):
                raise ValidationError(f"{name} values must be finite and >= 0")
        if self.ridge_alpha != "cv":
            a = float(self.ridge_alpha)
            if not np.isfinite(a) or a < 0:
                raise ValidationError("ridge_alpha must be finite and >= 0, or 'cv'")
            object.__setattr__(self, "ridge_alpha", a)
        elif not alphas:
            raise ValidationError("ridge_alpha='cv' needs a non-empty alpha_grid")
        if int(self.cv_folds) < 2:
            raise ValidationError("cv_folds must be >= 2")
        object.__setattr__(self, "lambda_grid", lams)
        object.__setattr__(self, "alpha_grid", alphas)
        object.__setattr__(self, "cv_folds", int(self.cv_folds))


@dataclass(frozen=True)
class EnsembleSolution:
    weights: np.ndarray
    lam: float
    alpha: float
    achieved_bias: tuple
    train_loss: float
    objective: float
    converged: bool = True
    newton_iters: int = 0
    loss_kind: str = "squared"
    start_objective: float | None = None

    def scores(self, H):
        """Raw linear ensemble scores ``H w``."""
        return np.asarray(H, dtype=float) @ self.weights

    def probabilities(self, H):
        """Scores on the probability scale (logistic link for logistic fits)."""
        eta = self.scores(H)
        if self.loss_kind == "logistic":
            return 0.5 * (1.0 + np.tanh(0.5 * eta))
        return eta


def build_problem(eval, base_scores, contrasts, loss_kind="squared",
                  append_constant=False, model_ids=None):
    """Measure per-model score biases and package a :class:`StackingProblem`.

    With ``append_constant`` a column equal to ``mean(y)`` is added (unless an
    identical constant column is already present) so a perfectly fair member
    always exists.
    """
    H = np.asarray(base_scores, dtype=float)
    if H.ndim != 2 or H.shape[0] != len(eval):
        raise ValidationError("base score matrix must be n x k with n matching the split")
    bad = ~np.isfinite(H)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(f"non-finite base score at row {r}, column {c}")
    ids = list(model_ids) if model_ids is not None else [f"m{i}" for i in range(H.shape[1])]
    constant_index = None
    if append_constant:
        c = float(np.mean(eval.true_labels))
        hits = np.flatnonzero(np.all(H == c, axis=0))
        if hits.size:
            constant_index = int(hits[0])
        else:
            H = np.column_stack([H, np.full(len(eval), c)])
            ids.append("constant")
            constant_index = H.shape[1] - 1
    contrasts = tuple(contrasts)
    if not contrasts:
        raise ValidationError("at least one contrast is required")
    B = np.vstack([score_bias_matrix(H, c, eval) for c in contrasts])
    if constant_index is not None:
        B[:, constant_index] = 0.0
    return StackingProblem(H, eval.true_labels, contrasts, B, loss_kind, tuple(ids),
                           eval, constant_index)


def objective(p, w, lam, alpha):
    """Penalized objective value and its loss term."""
    eta = p.H @ w
    if p.loss_kind == "squared":
        loss = float(np.sum((eta - p.y) ** 2))
    else:
        m = (2.0 * p.y - 1.0) * eta
        loss = float(np.sum(np.logaddexp(0.0, -m)))
    bw = p.bias_vectors @ w
    return loss + lam**2 * float(bw @ bw) + 0.5 * alpha * float(w @ w), loss


def _solution(p, w, lam, alpha, **kw):
    obj, loss = objective(p, w, lam, alpha)
    return EnsembleSolution(
        weights=w, lam=float(lam), alpha=float(alpha),
        achieved_bias=tuple((p.bias_vectors @ w).tolist()),
        train_loss=loss, objective=obj, loss_kind=p.loss_kind, **kw,
    )


def normal_equations(p, lam, alpha):
    B = p.bias_vectors
    A = p.H.T @ p.H + lam**2 * (B.T @ B) + 0.5 * alpha * np.eye(p.k)
    return A, p.H.T @ p.y


def solve_squared(p, lam, alpha, w0=None):
    """Squared-loss stack by a Cholesky solve of the normal equations.

    One step of iterative refinement keeps the residual small when ``lam`` is
    large.  ``w0`` is accepted for interface symmetry with Newton and only
    used to report the starting objective.
    """
    if p.loss_kind != "squared":
        raise ValidationError("solve_squared needs loss_kind='squared'")
    A, rhs = normal_equations(p, lam, alpha)
    if alpha == 0 and np.linalg.cond(A) > 1e14:
        raise ValidationError(
            "normal equations are singular (rank-deficient base scores); use alpha > 0"
        )
    try:
        cf = scipy.linalg.cho_factor(A)
        w = scipy.linalg.cho_solve(cf, rhs)
        w = w + scipy.linalg.cho_solve(cf, rhs - A @ w)
    except np.linalg.LinAlgError:
        if alpha == 0:
            raise ValidationError(
                "normal equations are not positive definite; use alpha > 0"
            ) from None
        w = scipy.linalg.solve(A, rhs, assume_a="sym")
    start = None if w0 is None else objective(p, np.asarray(w0, dtype=float), lam, alpha)[0]
    return _solution(p, w, lam, alpha, start_objective=start)


def _logistic_derivatives(p, w, lam, alpha):
    B = p.bias_vectors
    s = 2.0 * p.y - 1.0
    m = s * (p.H @ w)
    # sigma(-m) and sigma(m) without overflow
    sig_neg = np.exp(-np.logaddexp(0.0, m))
    sig_pos = np.exp(-np.logaddexp(0.0, -m))
    g = -p.H.T @ (s * sig_neg) + 2.0 * lam**2 * (B.T @ (B @ w)) + alpha * w
    hess = (p.H.T * (sig_pos * sig_neg)) @ p.H + 2.0 * lam**2 * (B.T @ B)
    hess[np.diag_indices_from(hess)] += alpha
    return g, hess


def gradient(p, w, lam, alpha):
    """Gradient of :func:`objective` in ``w``."""
    if p.loss_kind == "logistic":
        return _logistic_derivatives(p, w, lam, alpha)[0]
    B = p.bias_vectors
    return 2.0 * p.H.T @ (p.H @ w - p.y) + 2.0 * lam**2 * (B.T @ (B @ w)) + alpha * w


def _newton_direction(hess, g):
    jitter = 0.0
    for _ in range(20):
        try:
            cf = scipy.linalg.cho_factor(hess + jitter * np.eye(len(g)))
            return -scipy.linalg.cho_solve(cf, g)
        except np.linalg.LinAlgError:
            jitter = HESSIAN_JITTER if jitter == 0.0 else 10.0 * jitter
    return -g


def solve_newton(p, lam, alpha, w0=None):
    """Logistic-loss stack by damped Newton with Armijo backtracking.

    Converged when the gradient max-norm reaches 1e-10, or when the Newton
    decrement has fallen to the rounding level of the objective (large
    penalties make the absolute gradient target unreachable in floating
    point).  A failed line search ends the run with ``converged=False``.
    """
    if p.loss_kind != "logistic":
        raise ValidationError("solve_newton needs loss_kind='logistic'")
    w = np.zeros(p.k) if w0 is None else np.array(w0, dtype=float)
    f, _ = objective(p, w, lam, alpha)
    start = f
    converged = False
    it = 0
    for it in range(1, NEWTON_MAX_ITER + 1):
        g, hess = _logistic_derivatives(p, w, lam, alpha)
        if np.max(np.abs(g)) <= NEWTON_GTOL:
            converged, it = True, it - 1
            break
        d = _newton_direction(hess, g)
        slope = float(g @ d)
        if -slope <= 64 * np.finfo(float).eps * max(1.0, abs(f)):
            converged, it = True, it - 1
            break
        t = 1.0
        for _ in range(NEWTON_MAX_HALVINGS):
            f_new, _ = objective(p, w + t * d, lam, alpha)
            if f_new <= f + ARMIJO_C * t * slope:
                break
            t *= 0.5
        else:
            log.warning("line search failed at lam=%g after %d iterations "
                        "(gradient max-norm %.3g)", lam, it, np.max(np.abs(g)))
            break
        w = w + t * d
        f = f_new
    else:
        g = gradient(p, w, lam, alpha)
        converged = bool(np.max(np.abs(g)) <= NEWTON_GTOL)
    return _solution(p, w, lam, alpha, converged=converged, newton_iters=it,
                     start_objective=start)


def solve(p, lam, alpha, w0=None):
    if p.loss_kind == "squared":
        return solve_squared(p, lam, alpha, w0)
    return solve_newton(p, lam, alpha, w0)


def lambda_path(p, cfg, alpha=None):
    """One solution per grid value, ascending in ``lam``, each warm-started from the last.

    ``alpha`` overrides ``cfg.ridge_alpha``; a 'cv' config must be resolved
    with :func:`cv_select_alpha` first.
    """
    if alpha is None:
        if cfg.ridge_alpha == "cv":
            raise ValidationError("ridge_alpha is 'cv'; pass the alpha chosen by cv_select_alpha")
        alpha = cfg.ridge_alpha
    path = []
    w = np.zeros(p.k)
    for lam in cfg.lambda_grid:
        sol = solve(p, lam, alpha, w0=w)
        if not sol.converged:
            log.warning("lam=%g did not converge; continuing along the path", lam)
        path.append(sol)
        w = sol.weights
    return path


def evaluate_scores(scores, eval, contrast, task="classification", axis=None,
                    threshold=0.5):
    """(fairness, accuracy) of one score vector on a split.

    ``axis='decision'`` thresholds the scores and uses decision fairness with
    0/1 accuracy.  ``axis='score'`` uses ``1 - |score bias|`` (clamped to
    [0, 1]) with ``exp(-MSE)`` accuracy; it is the only axis for regression.
    Constant scores are perfectly fair by definition.
    """
    scores = np.asarray(scores, dtype=float)
    if axis is None:
        axis = "decision" if task == "classification" else "score"
    if task == "regression" and axis != "score":
        raise ValidationError("regression tasks only support score fairness")
    if axis == "score":
        if np.ptp(scores) == 0:
            fair = 1.0
        else:
            fair = min(1.0, max(0.0, 1.0 - abs(score_bias(scores, contrast, eval))))
        return fair, regression_accuracy(scores, eval.true_labels)
    if axis != "decision":
        raise ValidationError(f"unknown fairness axis {axis!r}; use decision or score")
    pred = threshold_decisions(scores, threshold)
    return (decision_fairness(pred, contrast, eval),
            classification_accuracy(pred, eval.true_labels))


def path_to_records(path, H_eval, eval, contrast, task="classification", axis=None,
                    threshold=0.5):
    """Evaluate each path solution on a held-out split as a :class:`ModelRecord`.

    Decision-axis evaluation thresholds probabilities (logistic fits go
    through the link); score-axis evaluation uses the raw linear scores.
    """
    records = []
    for sol in path:
        use_axis = axis or ("decision" if task == "classification" else "score")
        scores = sol.probabilities(H_eval) if use_axis == "decision" else sol.scores(H_eval)
        fair, acc = evaluate_scores(scores, eval, contrast, task, use_axis, threshold)
        records.append(frontier.ModelRecord(f"fs:λ={sol.lam!r}", fair, acc))
    return records


def constant_record(value, eval, task="classification", axis=None, threshold=0.5,
                    id="constant"):
    """Record for the model that predicts ``value`` everywhere."""
    scores = np.full(len(eval), float(value))
    if axis is None:
        axis = "decision" if task == "classification" else "score"
    if axis == "decision":
        acc = classification_accuracy(threshold_decisions(scores, threshold), eval.true_labels)
    else:
        acc = regression_accuracy(scores, eval.true_labels)
    return frontier.ModelRecord(id, 1.0, acc)


def cv_fold_rows(n, folds, seed):
    """Seeded shuffle of ``range(n)`` cut into ``folds`` contiguous blocks."""
    if n < folds:
        raise ValidationError(f"cannot make {folds} folds from {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def _fold_fauc(p, cfg, alpha, train, test, weight, task, axis, threshold):
    ev = p.eval
    sub = build_problem(ev.subset(train), p.H[train], p.contrasts, p.loss_kind,
                        model_ids=p.model_ids)
    path = lambda_path(sub, cfg, alpha)
    held = ev.subset(test)
    recs = path_to_records(path, p.H[test], held, p.contrasts[0], task, axis, threshold)
    recs.append(constant_record(np.mean(ev.true_labels[train]), held, task, axis, threshold))
    return frontier.fauc(frontier.pareto_filter(recs), weight)


def cv_select_alpha(p, cfg, weight, task="classification", axis=None, threshold=0.5):
    """Ridge strength maximizing the mean held-out FAUC over ``cfg.cv_folds`` folds.

    Each fold refits the whole lambda path on the remaining rows.  Folds whose
    train or held-out part lacks a contrast group are skipped with a warning.
    Ties go to the larger alpha.
    """
    if p.eval is None:
        raise ValidationError("cross-validation needs the problem's evaluation split")
    candidates = sorted(set(cfg.alpha_grid))
    if len(candidates) == 1:
        return candidates[0]
    n = len(p.y)
    folds = cv_fold_rows(n, cfg.cv_folds, cfg.rng_seed)
    tasks = []
    for alpha in candidates:
        for i, test in enumerate(folds):
            train = np.setdiff1d(np.arange(n), test, assume_unique=True)
            tasks.append((alpha, i, train, test))

    def run(t):
        alpha, i, train, test = t
        try:
            return _fold_fauc(p, cfg, alpha, train, test, weight, task, axis, threshold)
        except ValidationError as e:
            if "empty" not in str(e):
                raise
            warnings.warn(f"CV fold {i} skipped: {e}")
            return None

    workers = cfg.workers or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(run, tasks))
    else:
        scores = [run(t) for t in tasks]

    best_alpha, best = None, -np.inf
    for alpha in candidates:
        vals = [s for (a, *_), s in zip(tasks, scores) if a == alpha and s is not None]
        if not vals:
            continue
        mean = float(np.mean(vals))
        log.info("alpha=%g mean held-out fauc=%.6f over %d folds", alpha, mean, len(vals))
        if mean >= best:
            best_alpha, best = alpha, mean
    if best_alpha is None:
        raise ValidationError("every CV fold was skipped (empty contrast groups)")
    return best_alpha


@dataclass(frozen=True)
class AuditReport:
    """Score and decision bias along a path, with decision-bias inversions.

    An inversion is a step to larger ``lam`` where the decision bias grows.
    """

    lambdas: np.ndarray
    score_bias: np.ndarray
    decision_bias: np.ndarray
    inversions: int
    max_inversion: float

    def rows(self):
        return list(zip(self.lambdas.tolist(), self.score_bias.tolist(),
                        self.decision_bias.tolist()))


def monotonicity_audit(path, H_eval, eval, contrast, threshold=0.5):
    """Check that decision bias shrinks as the score-bias penalty grows.

    Purely diagnostic: finite samples can break monotonicity slightly, so
    inversions are counted and measured, never raised.
    """
    path = sorted(path, key=lambda s: s.lam)
    lams, sb, db = [], [], []
    for sol in path:
        scores = sol.scores(H_eval)
        pred = threshold_decisions(sol.probabilities(H_eval), threshold)
        lams.append(sol.lam)
        sb.append(abs(score_bias(scores, contrast, eval)))
        db.append(1.0 - decision_fairness(pred, contrast, eval))
    db = np.array(db)
    steps = np.diff(db)
    ups = steps[steps > 0]
    return AuditReport(np.array(lams), np.array(sb), db, int(ups.size),
                       float(ups.max()) if ups.size else 0.0)
