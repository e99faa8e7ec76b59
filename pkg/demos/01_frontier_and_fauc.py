"""Pareto frontier, TAF/TAFI curves and weighted FAUC scores for a handful of models."""

import numpy as np

from fairfrontier import (
    ModelRecord,
    WeightFunction,
    build_tafi,
    fauc,
    fauci,
    pareto_filter,
    taf_eval,
    tafi_eval,
)

# Six fitted models scored on (fairness, accuracy).  The constant model is the
# perfectly fair anchor every frontier needs.
models = [
    ModelRecord("constant", 1.00, 0.52),
    ModelRecord("logreg_fair", 0.95, 0.68),
    ModelRecord("tree", 0.78, 0.74),
    ModelRecord("boost", 0.62, 0.81),
    ModelRecord("knn", 0.70, 0.66),   # dominated by the tree
    ModelRecord("logreg", 0.80, 0.70),
]

curve = pareto_filter(models)
print("Pareto-optimal models:", curve.source_ids)
for f, a in curve.points:
    print(f"  fairness {f:.2f}  accuracy {a:.2f}")

# TAF is a step function: best accuracy among models at least this fair.
grid = np.linspace(0, 1, 11)
print("\nf      TAF    TAFI")
tafi = build_tafi(curve)
for f, t, ti in zip(grid, taf_eval(curve, grid), tafi_eval(tafi, grid)):
    print(f"{f:.1f}  {t:.3f}  {ti:.3f}")

# Mixing two Pareto models at random realizes any point on the TAFI segment
# between them, which is why TAFI never sits below TAF.
print("\nTAFI vertices:", [(round(f, 3), round(a, 3)) for f, a in tafi.vertices])

weights = [
    WeightFunction.uniform(),
    WeightFunction.step(0.8),        # only fairness above 0.8 counts
    WeightFunction.power(2, 0.5),    # increasingly reward fairer regions
    WeightFunction.point_mass_zero(),  # accuracy alone
]
print("\nweight          FAUC    FAUCI")
for w in weights:
    print(f"{w.name:<15} {fauc(curve, w):.4f}  {fauci(tafi, w):.4f}")
