"""Stack biased base models with a score-bias penalty and watch the frontier move outwards."""

import numpy as np

from fairfrontier import (
    ContrastSpec,
    ModelRecord,
    PenaltyConfig,
    WeightFunction,
    build_problem,
    cv_select_alpha,
    fauc,
    lambda_path,
    pareto_filter,
    path_to_records,
)
from fairfrontier.stacker import evaluate_scores
from fairfrontier.synth_oracle import SynthConfig, generate, split_rows

# Eight base models, each with its own group offset (the injected bias).
ev, H, offsets = generate(SynthConfig(n=6000, k=8, bias_spread=0.2, seed=1))
print("injected per-model offsets:", np.round(offsets, 3))

# Fit weights on one split and judge them on another.
_, fit_rows, test_rows = split_rows(len(ev), seed=1)
contrast = ContrastSpec("dp", "group")
problem = build_problem(ev.subset(fit_rows), H[fit_rows], [contrast], append_constant=True)
print("measured score biases:", np.round(problem.bias_vectors[0], 3))

cfg = PenaltyConfig(ridge_alpha="cv", alpha_grid=(1e-2, 1e0, 1e2), cv_folds=5)
step = WeightFunction.step(0.8)
alpha = cv_select_alpha(problem, cfg, step, axis="score")
print("cross-validated ridge alpha:", alpha)

path = lambda_path(problem, cfg, alpha)
print("\n lambda       |b.w|")
for sol in path[::4]:
    print(f"{sol.lam:9.3g}  {abs(sol.achieved_bias[0]):.2e}")

held = ev.subset(test_rows)
H_test = np.column_stack([H[test_rows], np.full(len(test_rows), problem.H[0, -1])])
base = [ModelRecord(m, *evaluate_scores(H_test[:, j], held, contrast, axis="score"))
        for j, m in enumerate(problem.model_ids)]
stacked = path_to_records(path, H_test, held, contrast, axis="score")

before = pareto_filter(base)
after = pareto_filter(base + stacked)
print(f"\nstep(0.8) FAUC, base models only : {fauc(before, step):.4f}")
print(f"step(0.8) FAUC, base + stack path: {fauc(after, step):.4f}")
print("frontier members after stacking:", after.source_ids)
