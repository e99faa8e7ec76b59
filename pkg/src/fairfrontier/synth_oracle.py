"""
Seeded synthetic data and brute-force reference computations.

The oracles here deliberately avoid the production code paths they are used
to check: Pareto sets by pairwise scan, integrals by Riemann sums, stacking
weights by plain gradient descent or IRLS.
"""

from dataclasses import dataclass

import numpy as np

from fairfrontier.errors import ValidationError
from fairfrontier.metrics import EvaluationSet, GroupAssignment

_REJECTION_CAP = 100


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for :func:`generate`.

    ``offsets`` overrides the random per-model group offsets (length ``k``).
    """

    n: int = 2000
    k: int = 5
    group_fraction: float = 0.5
    group_mean_shift: float = 0.5
    model_noise: float = 1.0
    bias_spread: float = 0.2
    seed: int = 0
    task: str = "classification"
    offsets: tuple | None = None

    def __post_init__(self):
        if self.n < 10 or self.k < 1:
            raise ValidationError("synthetic config needs n >= 10 and k >= 1")
        if not 0.0 < self.group_fraction < 1.0:
            raise ValidationError("group_fraction must lie in (0, 1)")
        if self.model_noise < 0 or self.bias_spread < 0:
            raise ValidationError("model_noise and bias_spread must be >= 0")
        if self.task not in ("classification", "regression"):
            raise ValidationError(f"unknown task {self.task!r}")
        if self.offsets is not None and len(self.offsets) != self.k:
            raise ValidationError("offsets must have length k")

    @property
    def score_scale(self):
        # keeps classification scores roughly on the probability scale around 0.5
        return 0.25 if self.task == "classification" else 1.0


def generate(cfg):
    """Draw ``(EvaluationSet, H, true_biases)``.

    A standard-normal latent ``u`` drives the target; the protected attribute
    ``z`` is Bernoulli(``group_fraction``).  Model ``j`` scores
    ``center + scale * (u_c + noise) + offset_j * z`` where ``u_c`` is ``u``
    demeaned within each group, so the only systematic group gap in column
    ``j`` is ``offset_j``.  Group covariances of the columns are equal.
    """
    rng = np.random.default_rng(cfg.seed)
    n, k = cfg.n, cfg.k
    for _ in range(_REJECTION_CAP):
        z = (rng.random(n) < cfg.group_fraction).astype(np.int8)
        if 0 < z.sum() < n:
            break
    else:
        raise ValidationError("could not draw two non-empty groups; adjust group_fraction")

    u = rng.standard_normal(n)
    eps = rng.standard_normal(n)
    if cfg.task == "classification":
        y = (u + cfg.group_mean_shift * z + eps > 0).astype(float)
        center = 0.5
    else:
        y = u + cfg.group_mean_shift * z
        center = 0.0

    u_c = u.copy()
    for g in (0, 1):
        u_c[z == g] -= u[z == g].mean()

    if cfg.offsets is not None:
        offsets = np.asarray(cfg.offsets, dtype=float)
    else:
        offsets = cfg.bias_spread * rng.standard_normal(k)
    noise = cfg.model_noise * rng.standard_normal((n, k))
    H = center + cfg.score_scale * (u_c[:, None] + noise) + offsets[None, :] * z[:, None]
    ev = EvaluationSet(y, {"group": GroupAssignment(z, "group")})
    return ev, H, offsets


def split_rows(n, seed, fractions=(0.5, 0.25, 0.25)):
    """Seeded shuffle cut into contiguous blocks: train / ensemble / test."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_ens = int(round(fractions[1] * n))
    return perm[:n_train], perm[n_train : n_train + n_ens], perm[n_train + n_ens :]


def pareto_oracle(models):
    """Non-dominated records by exhaustive pairwise comparison.

    Among exact (fairness, accuracy) duplicates the record that comes first
    in a stable descending-fairness order, i.e. the earliest in input order,
    survives.  Returned in input order.
    """
    models = list(models)
    keep = []
    for i, m in enumerate(models):
        dominated = False
        for j, o in enumerate(models):
            if j == i:
                continue
            ge = o.fairness >= m.fairness and o.accuracy >= m.accuracy
            strict = o.fairness > m.fairness or o.accuracy > m.accuracy
            if ge and strict:
                dominated = True
                break
            if j < i and o.fairness == m.fairness and o.accuracy == m.accuracy:
                dominated = True
                break
        if not dominated:
            keep.append(m)
    return keep


def _weight_density(w, x):
    if w.kind == "uniform":
        return np.ones_like(x)
    ind = (x > w.beta).astype(float)
    if w.kind == "step":
        return ind
    if w.kind == "power":
        return x**w.alpha * ind
    raise ValidationError("point-mass weight has no density")


def riemann_fauc(evaluate, w, grid_points=1_000_000):
    """Right-endpoint Riemann sum of ``int evaluate(f) w(f) df / int w(f) df``.

    ``evaluate`` maps an array of fairness levels to accuracies.
    """
    if grid_points < 1000:
        raise ValidationError("grid_points must be >= 1000")
    x = np.arange(1, grid_points + 1, dtype=float) / grid_points
    wx = _weight_density(w, x)
    return float(np.sum(np.asarray(evaluate(x)) * wx) / np.sum(wx))


def riemann_error_bound(w, span, grid_points=1_000_000):
    """Worst-case gap between :func:`riemann_fauc` and the exact integral.

    For a monotone integrand with range ``span`` and a weight bounded by 1,
    a right-endpoint sum misses each integral by at most ``h`` times the
    integrand's total variation; the weight's own variation enters twice,
    once through the numerator and once through the normalizer.
    """
    h = 1.0 / grid_points
    tv_w = 0.0 if w.kind == "uniform" else 1.0
    z = float(np.sum(_weight_density(w, np.arange(1, grid_points + 1) / grid_points))) * h
    return h * (span + 2.0 * tv_w) / z + 1e-12  # plus summation roundoff


def step_curve_evaluator(points):
    """Evaluator for ``f -> max{acc : (fair, acc) in points, fair >= f}`` by direct scan."""
    fair = np.array([p[0] for p in points], dtype=float)
    acc = np.array([p[1] for p in points], dtype=float)

    def evaluate(f):
        f = np.asarray(f, dtype=float)
        out = np.full(f.shape, -np.inf)
        for fi, ai in zip(fair, acc):
            out = np.where(f <= fi, np.maximum(out, ai), out)
        return out

    return evaluate


def linear_curve_evaluator(vertices):
    """Evaluator for a polyline through ``vertices`` (sorted by fairness)."""
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]

    def evaluate(f):
        f = np.asarray(f, dtype=float)
        out = np.empty(f.shape)
        for i in range(len(xs) - 1):
            x0, x1, y0, y1 = xs[i], xs[i + 1], ys[i], ys[i + 1]
            sel = (f >= x0) & (f <= x1)
            out[sel] = y0 + (f[sel] - x0) * (y1 - y0) / (x1 - x0)
        return out

    return evaluate


def _objective_and_grad(p, w, lam, alpha):
    H, y = p.H, p.y
    B = np.atleast_2d(p.bias_vectors)
    eta = H @ w
    bw = B @ w
    if p.loss_kind == "squared":
        r = eta - y
        f = r @ r
        g = 2.0 * H.T @ r
    else:
        s = 2.0 * y - 1.0
        m = s * eta
        f = np.sum(np.logaddexp(0.0, -m))
        g = -H.T @ (s * np.exp(-np.logaddexp(0.0, m)))
    f += lam**2 * (bw @ bw) + 0.5 * alpha * (w @ w)
    g = g + 2.0 * lam**2 * (B.T @ bw) + alpha * w
    return f, g


def descent_stack_oracle(p, lam, alpha, iters=1_000_000, step=None, tol=1e-12):
    """Plain gradient descent on the penalized stacking objective.

    Uses step ``1/L`` with ``L`` an upper bound on the Hessian norm unless a
    step is given; stops early once the gradient's max-norm is below ``tol``.
    Raises if the objective increases (step too large).
    """
    H = p.H
    B = np.atleast_2d(p.bias_vectors)
    h_norm2 = np.linalg.norm(H, 2) ** 2
    curv = 2.0 * h_norm2 if p.loss_kind == "squared" else 0.25 * h_norm2
    L = curv + 2.0 * lam**2 * np.sum(B * B) + alpha
    if step is None:
        step = 1.0 / L
    w = np.zeros(H.shape[1])
    f_prev, g = _objective_and_grad(p, w, lam, alpha)
    for it in range(iters):
        if np.max(np.abs(g)) <= tol:
            break
        w = w - step * g
        f, g = _objective_and_grad(p, w, lam, alpha)
        if f > f_prev + 1e-12 * (1.0 + abs(f_prev)):
            raise ValidationError(
                f"gradient descent diverged at iteration {it}: step {step:g} too large"
            )
        f_prev = f
    return w


def irls_logistic_oracle(H, y, alpha, iters=200, tol=1e-13):
    """Ridge-penalized logistic regression via iteratively reweighted least squares.

    Minimizes ``sum log(1 + exp(-(2y-1) H w)) + alpha/2 ||w||^2``.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    k = H.shape[1]
    w = np.zeros(k)
    for _ in range(iters):
        eta = H @ w
        p = 1.0 / (1.0 + np.exp(-eta))
        W = np.clip(p * (1.0 - p), 1e-300, None)
        z = eta + (y - p) / W
        A = H.T @ (W[:, None] * H) + alpha * np.eye(k)
        w_new = np.linalg.solve(A, H.T @ (W * z))
        if np.max(np.abs(w_new - w)) <= tol * (1.0 + np.max(np.abs(w))):
            return w_new
        w = w_new
    return w


def ols_oracle(H, y):
    """Least-squares stack via QR factorization."""
    Q, R = np.linalg.qr(np.asarray(H, dtype=float))
    return np.linalg.solve(R, Q.T @ np.asarray(y, dtype=float))
