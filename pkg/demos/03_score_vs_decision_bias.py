"""Penalizing score bias also shrinks the bias of thresholded decisions."""

from fairfrontier import ContrastSpec, PenaltyConfig, build_problem, lambda_path, monotonicity_audit
from fairfrontier.synth_oracle import SynthConfig, generate

# Group-demeaned latent plus noise: both groups share one score covariance,
# the setting where decision bias should fall as the penalty grows.
ev, H, _ = generate(SynthConfig(n=10_000, k=10, bias_spread=0.2, seed=8))
contrast = ContrastSpec("dp", "group")
problem = build_problem(ev, H, [contrast], append_constant=True)
path = lambda_path(problem, PenaltyConfig(ridge_alpha=1.0))

report = monotonicity_audit(path, problem.H, ev, contrast)
print(" lambda     score bias  decision bias")
for lam, sb, db in report.rows():
    print(f"{lam:9.3g}  {sb:10.5f}  {db:12.5f}")
print(f"\ninversions: {report.inversions}, largest: {report.max_inversion:.4f}")
