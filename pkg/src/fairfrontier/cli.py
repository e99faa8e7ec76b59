"""
Command-line entry point.

    fairfrontier synth    --out DIR                 write a synthetic prediction matrix
    fairfrontier frontier METRICS.csv --out DIR     TAF/TAFI + FAUC report for fitted models
    fairfrontier stack    MATRIX.csv --out DIR      one stacked ensemble at a fixed lambda
    fairfrontier path     MATRIX.csv --out DIR      full lambda path + frontier over base and path
    fairfrontier audit    MATRIX.csv --out DIR      score vs decision bias along the path
    fairfrontier plot     A.csv [B.csv ...] --out DIR

Runs are configured by a flat ``key = value`` file (``--config``) plus
repeatable ``--set key=value`` overrides.  Exit codes: 0 success, 2 invalid
input, 1 internal error.  Diagnostics go to stderr as ``level= code= msg=``
lines.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from fairfrontier import __version__, dataio, frontier, stacker, synth_oracle
from fairfrontier.errors import ValidationError
from fairfrontier.metrics import ContrastSpec

log = logging.getLogger("fairfrontier")

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2
ORACLE_TOL = 1e-6


class OracleMismatch(RuntimeError):
    pass


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true/false")


def _choice(*allowed):
    def parse(text):
        t = text.strip()
        if t not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return t
    return parse


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _names(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _optional_int(text):
    return None if text.strip().lower() in ("", "none") else int(text)


def _alpha(text):
    t = text.strip().lower()
    return "cv" if t == "cv" else float(t)


def parse_weight(text):
    """``uniform`` | ``step:BETA`` | ``power:ALPHA:BETA`` | ``point_mass_zero``."""
    kind, *args = text.strip().split(":")
    vals = [float(a) for a in args]
    if kind == "uniform" and not vals:
        return frontier.WeightFunction.uniform()
    if kind == "point_mass_zero" and not vals:
        return frontier.WeightFunction.point_mass_zero()
    if kind == "step" and len(vals) == 1:
        return frontier.WeightFunction.step(vals[0])
    if kind == "power" and len(vals) in (1, 2):
        return frontier.WeightFunction.power(*vals)
    raise ValueError(f"bad weight {text!r}")


def _weights(text):
    return tuple(parse_weight(t) for t in text.split(",") if t.strip())


@dataclass
class RunConfig:
    task: str = "classification"
    fairness_metric: str = "dp"
    fairness_axis: str = "auto"
    loss: str = "squared"
    contrast_attributes: tuple = ()
    weights: tuple = (frontier.WeightFunction.step(0.8), frontier.WeightFunction.uniform())
    lambda_grid: tuple = ()
    lambda_count: int = 20
    lambda_lo: float = 1.0
    lambda_hi: float = 1e6
    stack_lambda: float = 0.0
    alpha: object = "cv"
    alpha_count: int = 6
    alpha_lo: float = 1e2
    alpha_hi: float = 1e7
    cv_folds: int = 5
    seed: int = 0
    threshold: float = 0.5
    append_constant_model: bool = True
    constant_accuracy: float = 0.0
    round_decimals: object = None
    workers: object = None
    n: int = 2000
    k: int = 5
    group_fraction: float = 0.5
    group_mean_shift: float = 0.5
    model_noise: float = 1.0
    bias_spread: float = 0.2

    PARSERS = {
        "task": _choice("classification", "regression"),
        "fairness_metric": _choice("dp", "eo"),
        "fairness_axis": _choice("auto", "decision", "score"),
        "loss": _choice("squared", "logistic"),
        "contrast_attributes": _names,
        "weights": _weights,
        "lambda_grid": _floats,
        "lambda_count": int,
        "lambda_lo": float,
        "lambda_hi": float,
        "stack_lambda": float,
        "alpha": _alpha,
        "alpha_count": int,
        "alpha_lo": float,
        "alpha_hi": float,
        "cv_folds": int,
        "seed": int,
        "threshold": float,
        "append_constant_model": _bool,
        "constant_accuracy": float,
        "round_decimals": _optional_int,
        "workers": _optional_int,
        "n": int,
        "k": int,
        "group_fraction": float,
        "group_mean_shift": float,
        "model_noise": float,
        "bias_spread": float,
    }

    def set(self, key, text):
        if key not in self.PARSERS:
            raise ValidationError(f"unknown config key {key!r}; allowed: {sorted(self.PARSERS)}")
        try:
            setattr(self, key, self.PARSERS[key](text))
        except ValueError as e:
            raise ValidationError(f"config key {key!r}: {e}") from None

    @property
    def axis(self):
        if self.fairness_axis != "auto":
            return self.fairness_axis
        return "decision" if self.task == "classification" else "score"

    def lambdas(self):
        if self.lambda_grid:
            return self.lambda_grid
        return stacker.default_lambda_grid(self.lambda_count, self.lambda_lo, self.lambda_hi)

    def penalty(self, lambdas=None):
        return stacker.PenaltyConfig(
            lambda_grid=self.lambdas() if lambdas is None else lambdas,
            ridge_alpha=self.alpha,
            alpha_grid=stacker.default_alpha_grid(self.alpha_count, self.alpha_lo, self.alpha_hi),
            cv_folds=self.cv_folds,
            rng_seed=self.seed,
            workers=self.workers or os.cpu_count() or 1,
        )

    def as_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "weights":
                v = [w.name for w in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def load_config(path=None, overrides=()):
    cfg = RunConfig()
    if path:
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise ValidationError(f"cannot read config {path}: {e.strerror}") from None
        for lineno, line in enumerate(lines, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"config line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            cfg.set(key, value)
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"--set {item!r}: expected key=value")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    if cfg.task == "regression" and cfg.fairness_metric == "eo":
        raise ValidationError(
            "fairness_metric 'eo' is undefined for regression (continuous labels); use dp"
        )
    if cfg.task == "regression" and cfg.fairness_axis == "decision":
        raise ValidationError("regression tasks only support fairness_axis = score")
    return cfg


# -- shared helpers ----------------------------------------------------------

def _round(records, decimals):
    if decimals is None:
        return records
    return [frontier.ModelRecord(r.id, round(r.fairness, decimals), round(r.accuracy, decimals))
            for r in records]


def _frontier_scores(records, weights):
    curve = frontier.pareto_filter(records)
    tafi = frontier.build_tafi(curve)
    scores = [(w, frontier.fauc(curve, w), frontier.fauci(tafi, w)) for w in weights]
    return curve, tafi, scores


def _oracle_check(records, curve, tafi, scores):
    """Recompute the frontier and integrals with the brute-force oracles."""
    kept = synth_oracle.pareto_oracle(records)
    if sorted((r.fairness, r.accuracy) for r in kept) != sorted(curve.points):
        raise OracleMismatch("Pareto set differs from the pairwise-dominance oracle")
    step = synth_oracle.step_curve_evaluator(curve.points)
    lin = synth_oracle.linear_curve_evaluator(tafi.vertices)
    for w, fa, fi in scores:
        if w.kind == "point_mass_zero":
            ref_a, ref_i = float(step(np.array([0.0]))[0]), float(lin(np.array([0.0]))[0])
            tol = 0.0
        else:
            ref_a = synth_oracle.riemann_fauc(step, w)
            ref_i = synth_oracle.riemann_fauc(lin, w)
            span = float(curve.accuracy[-1] - curve.accuracy[0])
            tol = ORACLE_TOL + synth_oracle.riemann_error_bound(w, span)
        for label, got, ref in (("fauc", fa, ref_a), ("fauci", fi, ref_i)):
            if abs(got - ref) > tol:
                raise OracleMismatch(
                    f"{label} {w.name}: closed form {float(got)!r} vs Riemann oracle "
                    f"{ref!r} (tolerance {tol:.3g})"
                )
    log.info("oracle check passed (%d weights)", len(scores))


def _timestamp(args):
    return datetime.now(timezone.utc).isoformat() if args.timestamp else None


def _out_dir(args):
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f"cannot create output directory {out}: {e.strerror}") from None
    return out


def _inputs(args):
    paths = list(args.inputs)
    if args.config:
        paths.append(args.config)
    return paths


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args, cfg):
    out = _out_dir(args)
    sc = synth_oracle.SynthConfig(
        n=cfg.n, k=cfg.k, group_fraction=cfg.group_fraction,
        group_mean_shift=cfg.group_mean_shift, model_noise=cfg.model_noise,
        bias_spread=cfg.bias_spread, seed=cfg.seed, task=cfg.task,
    )
    ev, H, _ = synth_oracle.generate(sc)
    splits = dataio.assign_splits(len(ev), cfg.seed)
    path = out / "predictions.csv"
    dataio.write_prediction_matrix(
        path, [f"r{i}" for i in range(len(ev))], ev.true_labels,
        {name: g.labels for name, g in ev.groups.items()}, H,
        [f"m{j}" for j in range(H.shape[1])], splits,
    )
    log.info("wrote %s (%d rows, %d models)", path, len(ev), H.shape[1])
    return EXIT_OK


def cmd_frontier(args, cfg):
    if len(args.inputs) != 1:
        raise ValidationError("frontier takes exactly one model-metrics file")
    out = _out_dir(args)
    records = _round(dataio.parse_model_metrics(args.inputs[0]), cfg.round_decimals)
    if not any(r.fairness == 1.0 for r in records):
        if not cfg.append_constant_model:
            raise ValidationError(
                "no model with fairness 1; add the constant model or set "
                "append_constant_model = true"
            )
        records.append(frontier.ModelRecord("constant", 1.0, cfg.constant_accuracy))
    curve, tafi, scores = _frontier_scores(records, cfg.weights)
    if args.oracle:
        _oracle_check(records, curve, tafi, scores)
    settings = {"command": "frontier", "config": cfg.as_dict()}
    dataio.write_frontier_report(out, records, curve, tafi, scores, settings,
                                 _inputs(args), _timestamp(args))
    dataio.render_svg([("TAF", curve), ("TAFI", tafi)], out / "taf.svg")
    return EXIT_OK


def _load_matrix(args, cfg):
    if len(args.inputs) != 1:
        raise ValidationError(f"{args.command} takes exactly one prediction-matrix file")
    pm = dataio.parse_prediction_matrix(args.inputs[0], cfg.seed)
    attrs = cfg.contrast_attributes or pm.attributes
    for a in attrs:
        if a not in pm.attributes:
            raise ValidationError(f"config key 'contrast_attributes': unknown attribute {a!r}")
    if cfg.loss == "logistic" and cfg.task == "regression":
        raise ValidationError("logistic loss needs a classification task")
    contrasts = [ContrastSpec(cfg.fairness_metric, a) for a in attrs]
    return pm, contrasts


def _fit(pm, contrasts, cfg, lambdas=None):
    ens = pm.splits["ensemble"]
    p = stacker.build_problem(ens.eval, ens.H, contrasts, cfg.loss,
                              cfg.append_constant_model, pm.model_ids)
    pcfg = cfg.penalty(lambdas)
    alpha = pcfg.ridge_alpha
    if alpha == "cv":
        alpha = stacker.cv_select_alpha(p, pcfg, cfg.weights[0], cfg.task, cfg.axis,
                                        cfg.threshold)
        log.info("cross-validated alpha = %r", alpha)
    return p, stacker.lambda_path(p, pcfg, alpha), alpha


def _with_constant(p, H):
    """Append the problem's constant column to another split's scores."""
    if p.k == H.shape[1]:
        return H
    return np.column_stack([H, np.full(H.shape[0], p.H[0, -1])])


def _write_weights(path, p, solutions):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "alpha"] + list(p.model_ids)
               + [f"bias:{c.attribute}" for c in p.contrasts] + ["converged"])
    for s in solutions:
        w.writerow([dataio.fmt(s.lam), dataio.fmt(s.alpha)]
                   + [dataio.fmt(v) for v in s.weights]
                   + [dataio.fmt(b) for b in s.achieved_bias] + [int(s.converged)])
    dataio._write_text(path, buf.getvalue())


def _stack_common(args, cfg, lambdas=None):
    out = _out_dir(args)
    pm, contrasts = _load_matrix(args, cfg)
    p, path, alpha = _fit(pm, contrasts, cfg, lambdas)
    test = pm.splits["test"]
    H_test = _with_constant(p, test.H)
    primary = contrasts[0]
    base = _round(
        [frontier.ModelRecord(mid, *stacker.evaluate_scores(
            H_test[:, j], test.eval, primary, cfg.task, cfg.axis, cfg.threshold))
         for j, mid in enumerate(p.model_ids)],
        cfg.round_decimals,
    )
    ens = _round(stacker.path_to_records(path, H_test, test.eval, primary, cfg.task,
                                         cfg.axis, cfg.threshold), cfg.round_decimals)
    combined = base + ens
    if not any(r.fairness == 1.0 for r in base):
        raise ValidationError(
            "no perfectly fair base model; set append_constant_model = true"
        )
    base_curve, base_tafi, base_scores = _frontier_scores(base, cfg.weights)
    curve, tafi, scores = _frontier_scores(combined, cfg.weights)
    if args.oracle:
        _oracle_check(combined, curve, tafi, scores)

    _write_weights(out / "weights.csv", p, path)
    dataio.write_model_metrics(out / "model_metrics.csv", combined)
    settings = {
        "command": args.command,
        "config": cfg.as_dict(),
        "alpha": alpha,
        "lambda_grid": [s.lam for s in path],
        "base_only": [{"name": w.name, "fauc": fa, "fauci": fi} for w, fa, fi in base_scores],
    }
    dataio.write_frontier_report(out, combined, curve, tafi, scores, settings,
                                 _inputs(args), _timestamp(args))
    dataio.render_svg([("base TAF", base_curve), ("base + stack TAF", curve),
                       ("base + stack TAFI", tafi)], out / "taf.svg")
    return EXIT_OK


def cmd_path(args, cfg):
    return _stack_common(args, cfg)


def cmd_stack(args, cfg):
    return _stack_common(args, cfg, lambdas=(cfg.stack_lambda,))


def cmd_audit(args, cfg):
    if cfg.task != "classification":
        raise ValidationError("audit needs a classification task (decision bias)")
    out = _out_dir(args)
    pm, contrasts = _load_matrix(args, cfg)
    p, path, alpha = _fit(pm, contrasts, cfg)
    test = pm.splits["test"]
    H_test = _with_constant(p, test.H)
    summary = {"alpha": alpha, "contrasts": []}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["attribute", "lambda", "score_bias", "decision_bias"])
    for c in contrasts:
        rep = stacker.monotonicity_audit(path, H_test, test.eval, c, cfg.threshold)
        for lam, sb, db in rep.rows():
            w.writerow([c.attribute, dataio.fmt(lam), dataio.fmt(sb), dataio.fmt(db)])
        summary["contrasts"].append({"attribute": c.attribute, "inversions": rep.inversions,
                                     "max_inversion": rep.max_inversion})
        log.info("%s: %d inversions, max magnitude %.4g", c.attribute, rep.inversions,
                 rep.max_inversion)
    dataio._write_text(out / "audit.csv", buf.getvalue())
    dataio._write_text(out / "audit.json",
                       json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_plot(args, cfg):
    if not args.inputs:
        raise ValidationError("plot needs at least one metrics or taf_points file")
    out = _out_dir(args)
    curves = []
    for path in args.inputs:
        records = dataio.parse_model_metrics(path)
        if not any(r.fairness == 1.0 for r in records) and cfg.append_constant_model:
            records.append(frontier.ModelRecord("constant", 1.0, cfg.constant_accuracy))
        curve = frontier.pareto_filter(records)
        name = Path(path).stem
        curves += [(f"{name} TAF", curve), (f"{name} TAFI", frontier.build_tafi(curve))]
    dataio.render_svg(curves, out / "taf.svg")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "frontier": cmd_frontier,
    "stack": cmd_stack,
    "path": cmd_path,
    "audit": cmd_audit,
    "plot": cmd_plot,
}


class _LineFormatter(logging.Formatter):
    def format(self, record):
        code = getattr(record, "code", 0)
        msg = record.getMessage().replace('"', "'")
        return f'level={record.levelname.lower()} code={code} msg="{msg}"'


def build_parser():
    parser = argparse.ArgumentParser(prog="fairfrontier", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("inputs", nargs="*", help="input file(s)")
        sp.add_argument("--config", help="flat key = value run configuration")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (repeatable)")
        sp.add_argument("--out", required=True, help="output directory (created if absent)")
        sp.add_argument("--oracle", action="store_true",
                        help="re-check frontier and FAUC values with brute-force oracles")
        sp.add_argument("--timestamp", action="store_true",
                        help="record a timestamp in report.json (breaks byte-reproducibility)")
        sp.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_LineFormatter())
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.WARNING - 10 * min(args.verbose, 2))
    logging.captureWarnings(True)
    logging.getLogger("py.warnings").handlers[:] = [handler]
    try:
        cfg = load_config(args.config, args.overrides)
        return COMMANDS[args.command](args, cfg)
    except ValidationError as e:
        log.error(str(e), extra={"code": EXIT_INVALID})
        return EXIT_INVALID
    except OracleMismatch as e:
        log.error(f"oracle disagreement: {e}", extra={"code": EXIT_INTERNAL})
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001 - surface as a diagnostic line, exit 1
        log.error(f"internal error: {type(e).__name__}: {e}", extra={"code": EXIT_INTERNAL})
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
