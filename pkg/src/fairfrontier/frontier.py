"""
Pareto frontiers of (fairness, accuracy) pairs.

A TAF curve is the left-continuous step function ``f -> max accuracy among
models with fairness >= f``.  Its upper concave envelope (TAFI) is the
frontier reachable by randomizing between Pareto-optimal models.  FAUC and
FAUCI are the weight-normalized areas under the two curves; all integrals are
evaluated in closed form against the supported weight family.
"""

from dataclasses import dataclass

import numpy as np

from fairfrontier.errors import ValidationError

# Relative tolerance for treating three hull vertices as collinear.  Only
# affects which redundant vertices are kept; the envelope moves by at most
# this relative amount.
_COLLINEAR_RTOL = 1e-12


@dataclass(frozen=True)
class ModelRecord:
    id: str
    fairness: float
    accuracy: float

    def __post_init__(self):
        for name in ("fairness", "accuracy"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:  # also rejects NaN
                raise ValidationError(f"model {self.id!r}: {name}={v!r} outside [0, 1]")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class TafCurve:
    """Pareto-optimal points, fairness strictly decreasing, accuracy strictly increasing."""

    fairness: np.ndarray
    accuracy: np.ndarray
    source_ids: tuple = ()

    def __post_init__(self):
        f = np.asarray(self.fairness, dtype=float)
        a = np.asarray(self.accuracy, dtype=float)
        if f.ndim != 1 or f.shape != a.shape or len(f) == 0:
            raise ValidationError("TAF curve needs matching, non-empty point arrays")
        if f[0] != 1.0:
            raise ValidationError("TAF curve must start at a perfectly fair model (fairness 1)")
        if np.any(np.diff(f) >= 0) or np.any(np.diff(a) <= 0):
            raise ValidationError(
                "TAF points must be strictly decreasing in fairness and increasing in accuracy"
            )
        f.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "fairness", f)
        object.__setattr__(self, "accuracy", a)
        object.__setattr__(self, "source_ids", tuple(self.source_ids))

    @property
    def points(self):
        return list(zip(self.fairness.tolist(), self.accuracy.tolist()))

    def __len__(self):
        return len(self.fairness)


@dataclass(frozen=True)
class TafiCurve:
    """Vertices of the upper concave envelope, sorted by increasing fairness."""

    fairness: np.ndarray
    accuracy: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.fairness, dtype=float)
        a = np.asarray(self.accuracy, dtype=float)
        if f.ndim != 1 or f.shape != a.shape or len(f) < 2:
            raise ValidationError("TAFI curve needs at least two vertices")
        if f[0] != 0.0 or f[-1] != 1.0 or np.any(np.diff(f) <= 0):
            raise ValidationError("TAFI vertices must increase strictly from 0 to 1")
        f.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "fairness", f)
        object.__setattr__(self, "accuracy", a)

    @property
    def vertices(self):
        return list(zip(self.fairness.tolist(), self.accuracy.tolist()))


@dataclass(frozen=True)
class WeightFunction:
    """A member of the weight family ``w(x) = x**alpha * 1{x > beta}``.

    ``kind`` is one of ``uniform``, ``step``, ``power``, ``point_mass_zero``.
    Uniform and step are the ``alpha = 0`` members; ``point_mass_zero`` is the
    Dirac mass at fairness 0 (pure accuracy preference).
    """

    kind: str = "uniform"
    alpha: float = 0.0
    beta: float = 0.0

    KINDS = ("uniform", "step", "power", "point_mass_zero")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError(f"unknown weight kind {self.kind!r}; expected {self.KINDS}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"weight beta={self.beta!r} outside [0, 1]")
        if self.kind == "power" and not self.alpha >= 1.0:
            raise ValidationError(f"power weight needs alpha >= 1, got {self.alpha!r}")
        if self.kind in ("uniform", "point_mass_zero") and (self.alpha or self.beta):
            raise ValidationError(f"{self.kind} weight takes no parameters")
        if self.kind == "step" and self.alpha:
            raise ValidationError("step weight takes no alpha")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def step(cls, beta):
        return cls("step", beta=beta)

    @classmethod
    def power(cls, alpha, beta=0.0):
        return cls("power", alpha=alpha, beta=beta)

    @classmethod
    def point_mass_zero(cls):
        return cls("point_mass_zero")

    @property
    def name(self):
        if self.kind == "step":
            return f"step({self.beta:g})"
        if self.kind == "power":
            return f"power({self.alpha:g},{self.beta:g})"
        return self.kind

    @property
    def exponent(self):
        return self.alpha if self.kind == "power" else 0.0


def pareto_filter(models):
    """Pareto-optimal subset of ``models`` as a :class:`TafCurve`.

    Stable-sorts by decreasing fairness and sweeps once, keeping a record only
    if it beats every accuracy seen so far.  A kept record replaces its
    predecessor when both share a fairness level; exact duplicates keep the
    first in sorted order.
    """
    models = list(models)
    if not models:
        raise ValidationError("no models")
    fair = np.array([m.fairness for m in models])
    if not (fair == 1.0).any():
        raise ValidationError(
            "no perfectly fair model (fairness == 1); append the constant model"
        )
    order = np.argsort(-fair, kind="stable")
    kept = [models[order[0]]]
    for i in order[1:]:
        m = models[i]
        if m.accuracy > kept[-1].accuracy:
            if m.fairness == kept[-1].fairness:
                kept.pop()
            kept.append(m)
    return TafCurve(
        [m.fairness for m in kept], [m.accuracy for m in kept], [m.id for m in kept]
    )


def _check_level(f):
    f = np.asarray(f, dtype=float)
    if np.any(~((f >= 0.0) & (f <= 1.0))):
        raise ValidationError("fairness level outside [0, 1]")
    return f


def taf_eval(curve, f):
    """Best accuracy among models with fairness >= f (vectorized over ``f``)."""
    f = _check_level(f)
    # points with fairness >= f form a prefix of the curve; take its last element
    asc = curve.fairness[::-1]
    n_below = np.searchsorted(asc, f, side="left")
    idx = len(asc) - 1 - n_below
    out = curve.accuracy[idx]
    return float(out) if out.ndim == 0 else out


def build_tafi(curve):
    """Upper concave envelope of the TAF points plus the left end (0, max accuracy)."""
    pts = [(0.0, float(curve.accuracy[-1]))]
    pts += list(zip(curve.fairness[::-1].tolist(), curve.accuracy[::-1].tolist()))
    if pts[1][0] == 0.0:
        pts.pop(0)

    hull = []
    for p in pts:
        while len(hull) >= 2:
            (ox, oy), (ax, ay) = hull[-2], hull[-1]
            ux, uy, vx, vy = ax - ox, ay - oy, p[0] - ox, p[1] - oy
            cross = ux * vy - uy * vx
            if cross < -_COLLINEAR_RTOL * np.hypot(ux, uy) * np.hypot(vx, vy):
                break
            hull.pop()
        hull.append(p)
    f, a = zip(*hull)
    return TafiCurve(f, a)


def tafi_eval(tafi, f):
    """Piecewise-linear interpolation of the envelope."""
    f = _check_level(f)
    out = np.interp(f, tafi.fairness, tafi.accuracy)
    return float(out) if np.ndim(out) == 0 else out


def _moment(w, lo, hi, order):
    """Closed-form ``int_lo^hi x**order * w(x) dx`` for the non-atomic weights."""
    p = w.exponent + order + 1.0
    a = max(lo, w.beta)
    b = max(hi, w.beta)
    if b <= a:
        return 0.0
    return (b**p - a**p) / p


def weight_mass(w, lo, hi):
    """Integral of ``w`` over ``[lo, hi]``."""
    if w.kind == "point_mass_zero":
        raise ValidationError("point-mass weight has no density; use fauc/fauci directly")
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValidationError(f"bad interval [{lo}, {hi}]")
    return _moment(w, lo, hi, 0)


def _normalizer(w):
    z = weight_mass(w, 0.0, 1.0)
    if z <= 0.0:
        raise ValidationError(f"weight {w.name} has zero total mass")
    return z


def fauc(curve, w):
    """Weighted, normalized area under the TAF step function."""
    if w.kind == "point_mass_zero":
        return taf_eval(curve, 0.0)
    z = _normalizer(w)
    f, a = curve.fairness, curve.accuracy
    # piece i covers (f[i+1], f[i]]; the last covers [0, f[-1]]
    lows = np.append(f[1:], 0.0)
    total = sum(float(acc) * _moment(w, lo, hi, 0) for acc, lo, hi in zip(a, lows, f))
    return float(total / z)


def fauci(tafi, w):
    """Weighted, normalized area under the TAFI envelope."""
    if w.kind == "point_mass_zero":
        return tafi_eval(tafi, 0.0)
    z = _normalizer(w)
    total = 0.0
    f, a = tafi.fairness, tafi.accuracy
    for x0, x1, y0, y1 in zip(f[:-1], f[1:], a[:-1], a[1:]):
        slope = (y1 - y0) / (x1 - x0)
        intercept = y0 - slope * x0
        total += intercept * _moment(w, x0, x1, 0) + slope * _moment(w, x0, x1, 1)
    return float(total / z)
