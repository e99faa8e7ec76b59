"""
Accuracy, decision-fairness and score-bias measures.

Decision fairness works on thresholded labels; score bias works on raw
(possibly unbounded) scores and is linear in the scores, which is what makes
it usable as a penalty inside the stacking problem.
"""

from dataclasses import dataclass, field

import numpy as np

from fairfrontier.errors import ValidationError

DEMOGRAPHIC_PARITY = "demographic_parity"
EQUALITY_OF_OPPORTUNITY = "equality_of_opportunity"

_KIND_ALIASES = {
    "dp": DEMOGRAPHIC_PARITY,
    DEMOGRAPHIC_PARITY: DEMOGRAPHIC_PARITY,
    "eo": EQUALITY_OF_OPPORTUNITY,
    EQUALITY_OF_OPPORTUNITY: EQUALITY_OF_OPPORTUNITY,
}


@dataclass(frozen=True)
class GroupAssignment:
    """Binary membership indicator for one protected attribute."""

    labels: np.ndarray
    name: str = "attr"

    def __post_init__(self):
        labels = np.asarray(self.labels)
        bad = ~np.isin(labels, (0, 1))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"attribute {self.name!r}: value {labels[i]!r} at index {i} is not 0/1"
            )
        object.__setattr__(self, "labels", labels.astype(np.int8))

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class ContrastSpec:
    """Which two groups a bias is measured between.

    ``attribute`` names a :class:`GroupAssignment` inside an
    :class:`EvaluationSet`, so one contrast can be resolved against any split.
    """

    kind: str
    attribute: str

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", _KIND_ALIASES[self.kind])
        except KeyError:
            raise ValidationError(
                f"unknown contrast kind {self.kind!r}; expected one of "
                f"{sorted(_KIND_ALIASES)}"
            ) from None

    @property
    def short(self):
        return "dp" if self.kind == DEMOGRAPHIC_PARITY else "eo"


@dataclass(frozen=True)
class EvaluationSet:
    """Targets and protected attributes for one data split, plus optional scores."""

    true_labels: np.ndarray
    groups: dict = field(default_factory=dict)
    scores: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.true_labels, dtype=float)
        if y.ndim != 1 or len(y) < 2:
            raise ValidationError("evaluation set needs at least 2 observations")
        groups = {}
        for name, g in dict(self.groups).items():
            if not isinstance(g, GroupAssignment):
                g = GroupAssignment(np.asarray(g), name)
            if len(g) != len(y):
                raise ValidationError(
                    f"attribute {name!r} has {len(g)} entries, expected {len(y)}"
                )
            groups[name] = g
        object.__setattr__(self, "true_labels", y)
        object.__setattr__(self, "groups", groups)
        if self.scores is not None:
            s = np.asarray(self.scores, dtype=float)
            if s.shape != y.shape:
                raise ValidationError("scores and labels differ in length")
            object.__setattr__(self, "scores", s)

    def __len__(self):
        return len(self.true_labels)

    def group(self, name):
        try:
            return self.groups[name]
        except KeyError:
            raise ValidationError(
                f"unknown protected attribute {name!r}; have {sorted(self.groups)}"
            ) from None

    def subset(self, rows):
        """Restrict to the given row indices (used for CV folds)."""
        rows = np.asarray(rows)
        return EvaluationSet(
            self.true_labels[rows],
            {k: GroupAssignment(g.labels[rows], k) for k, g in self.groups.items()},
            None if self.scores is None else self.scores[rows],
        )


def _check_lengths(a, b, what="inputs"):
    if len(a) != len(b):
        raise ValidationError(f"length mismatch between {what}: {len(a)} vs {len(b)}")


def threshold_decisions(scores, threshold=0.5):
    """Binary decisions ``scores > threshold``; a score equal to the threshold maps to 0."""
    scores = np.asarray(scores, dtype=float)
    bad = ~np.isfinite(scores)
    if bad.any():
        raise ValidationError(f"non-finite score at index {int(np.flatnonzero(bad)[0])}")
    return (scores > threshold).astype(np.int8)


def classification_accuracy(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    _check_lengths(pred, truth, "predictions and labels")
    if len(pred) == 0:
        raise ValidationError("accuracy of an empty prediction vector")
    return float(np.mean(pred == truth))


def brier_loss(scores, truth):
    """Mean squared error between scores and targets (no 1/2 factor)."""
    scores, truth = np.asarray(scores, dtype=float), np.asarray(truth, dtype=float)
    _check_lengths(scores, truth, "scores and labels")
    return float(np.mean((scores - truth) ** 2))


def regression_accuracy(scores, truth):
    """``exp(-MSE)``, a loss rescaled into (0, 1]."""
    return float(np.exp(-brier_loss(scores, truth)))


def _group_mean(values, mask, label):
    if not mask.any():
        raise ValidationError(f"empty group: {label}")
    return float(np.mean(values[mask]))


def dp_fairness(pred, group):
    """``1 - |P(pred=1 | A=1) - P(pred=1 | A=0)|``."""
    pred = np.asarray(pred, dtype=float)
    _check_lengths(pred, group.labels, "predictions and group labels")
    a = group.labels
    gap = _group_mean(pred, a == 1, f"{group.name}=1") - _group_mean(
        pred, a == 0, f"{group.name}=0"
    )
    return 1.0 - abs(gap)


def eo_fairness(pred, truth, group):
    """``1 - |TPR(A=1) - TPR(A=0)|``; needs positives in both groups."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth)
    _check_lengths(pred, truth, "predictions and labels")
    _check_lengths(pred, group.labels, "predictions and group labels")
    a = group.labels
    pos = truth == 1
    gap = _group_mean(pred, pos & (a == 1), f"{group.name}=1, y=1") - _group_mean(
        pred, pos & (a == 0), f"{group.name}=0, y=1"
    )
    return 1.0 - abs(gap)


def contrast_masks(contrast, eval):
    """Boolean masks (G1, G2) for a contrast; G1 is attribute=1, G2 is attribute=0.

    For equality of opportunity both groups are restricted to positive labels.
    """
    a = eval.group(contrast.attribute).labels
    g1, g2 = a == 1, a == 0
    if contrast.kind == EQUALITY_OF_OPPORTUNITY:
        y = eval.true_labels
        if not np.isin(y, (0, 1)).all():
            raise ValidationError(
                "equality of opportunity needs binary labels; got continuous targets"
            )
        g1, g2 = g1 & (y == 1), g2 & (y == 1)
    for mask, which in ((g1, 1), (g2, 0)):
        if not mask.any():
            raise ValidationError(
                f"empty contrast group: {contrast.attribute}={which} ({contrast.short})"
            )
    return g1, g2


def score_bias(scores, contrast, eval):
    """Signed difference of mean scores between the two contrast groups.

    Linear in ``scores``; not clipped, so stacked scores may give values
    outside [-1, 1].
    """
    scores = np.asarray(scores, dtype=float)
    _check_lengths(scores, eval.true_labels, "scores and evaluation set")
    g1, g2 = contrast_masks(contrast, eval)
    if np.ptp(scores) == 0:
        return 0.0  # exact for constants; float group means can differ by an ulp
    return float(scores[g1].mean() - scores[g2].mean())


def score_bias_matrix(H, contrast, eval):
    """Column-wise :func:`score_bias` of an n x k score matrix."""
    H = np.asarray(H, dtype=float)
    _check_lengths(H, eval.true_labels, "score matrix rows and evaluation set")
    g1, g2 = contrast_masks(contrast, eval)
    b = H[g1].mean(axis=0) - H[g2].mean(axis=0)
    b[np.ptp(H, axis=0) == 0] = 0.0
    return b


def ensemble_score_bias(weights, per_model_bias):
    """Score bias of a linear stack, from the per-model biases alone."""
    w = np.asarray(weights, dtype=float)
    b = np.asarray(per_model_bias, dtype=float)
    _check_lengths(w, b, "weights and biases")
    return float(w @ b)


def decision_fairness(pred, contrast, eval):
    """Dispatch to :func:`dp_fairness` or :func:`eo_fairness` by contrast kind."""
    group = eval.group(contrast.attribute)
    if contrast.kind == DEMOGRAPHIC_PARITY:
        return dp_fairness(pred, group)
    contrast_masks(contrast, eval)  # label check with a clear message
    return eo_fairness(pred, eval.true_labels, group)
