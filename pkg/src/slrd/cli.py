"""Command-line interface.

Exit codes: 0 on success, 2 for unparseable input or contract violations,
3 for numerical failures.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import budget as budget_mod
from . import gram, hslf, report
from .altmin import decompose_layer, sequential_decompose
from .lowrank import numeric_rank
from .runconfig import load_config, pattern_from_spec, resolve
from .types import (
    CalibrationActivations,
    ContractError,
    DenseWeights,
    LowRankFactors,
    NumericError,
    SemiStructured,
    SparseComponent,
    Unstructured,
    mask_satisfies,
    objective_pair,
)


def _load_weights(path) -> DenseWeights:
    return DenseWeights(hslf.load_matrix(path))


def _build_hessian(activations_path, n_in: int, percdamp: float, convention: str):
    rows, cols = hslf.read_shape(activations_path)
    if cols != n_in:
        raise ContractError(f"activations width {cols} != weights n_in {n_in}")
    h = gram.accumulate_gram(hslf.load_matrix_blocks(activations_path), n_in)
    return gram.dampen(h, percdamp, convention)


def _ensure_parent(path) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _summary_row(result, pattern, rank, n_in, n_out, lam) -> dict:
    final = result.objective_trace[-1]
    return {
        "n_in": n_in,
        "n_out": n_out,
        "pattern": result.config_echo.get("pattern", ""),
        "rank": rank,
        "nonzeros": result.sparse.nonzeros,
        "effective_params": budget_mod.effective_params(pattern, rank, n_in, n_out),
        "mask_feasible": mask_satisfies(pattern, result.sparse.mask),
        "rank_feasible": numeric_rank(result.lowrank.product()) <= rank if rank > 0 else True,
        "final_objective_damped": final.objective_damped,
        "final_objective_raw": final.objective_raw,
        "lam": lam,
        "pruner": result.config_echo.get("pruner", ""),
        "lowrank": result.config_echo.get("lowrank_mode", ""),
        "scaled": result.config_echo.get("is_scaled", ""),
        "seed": result.config_echo.get("seed", ""),
    }


def _write_layer_artifacts(prefix, result, plot: bool, title: str) -> None:
    _ensure_parent(prefix + ".sparse.hslf")
    hslf.save_matrix(prefix + ".sparse.hslf", result.sparse.values)
    hslf.save_matrix(prefix + ".u.hslf", result.lowrank.u)
    hslf.save_matrix(prefix + ".v.hslf", result.lowrank.v)
    report.write_trace_csv(prefix + ".trace.csv", result.objective_trace)
    if plot:
        report.render_trace_figure(result.objective_trace, prefix + ".trace.png", title=title)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_decompose(args) -> int:
    cfg = load_config(args.config)
    weights = _load_weights(args.weights)
    run = resolve(cfg, weights.n_in, weights.n_out)
    hess = _build_hessian(args.activations, weights.n_in, cfg.percdamp, cfg.damp_convention)
    result = decompose_layer(hess, weights, run.pattern, run.rank, run.altmin)
    _write_layer_artifacts(args.out_prefix, result, not args.no_plot, title="decompose")
    row = _summary_row(result, run.pattern, run.rank, weights.n_in, weights.n_out, hess.lam)
    report.write_row_csv(args.out_prefix + ".summary.csv", row)
    report.rows_to_stdout([row], sys.stdout)
    return 0


def _cmd_eval(args) -> int:
    weights = _load_weights(args.weights)
    values = hslf.load_matrix(args.sparse)
    sparse = SparseComponent(values, values != 0.0)
    factors = LowRankFactors(hslf.load_matrix(args.u), hslf.load_matrix(args.v))
    hess = _build_hessian(args.activations, weights.n_in, args.percdamp, args.damp_convention)
    damped, raw = objective_pair(hess, weights, sparse, factors)
    row = {
        "objective_damped": damped,
        "objective_raw": raw,
        "nonzeros": sparse.nonzeros,
        "numeric_rank": numeric_rank(factors.product()) if factors.r > 0 else 0,
        "lam": hess.lam,
    }
    if args.pattern is not None:
        pattern = pattern_from_spec(args.pattern, args.granularity)
        row["mask_feasible"] = mask_satisfies(pattern, sparse.mask)
    report.rows_to_stdout([row], sys.stdout)
    return 0


def _cmd_budget(args) -> int:
    n_in, n_out = args.nin, args.nout
    if args.pattern == "k":
        if args.kappa is None or args.rho is None:
            raise ContractError("pattern k needs both --kappa and --rho")
        r, k = budget_mod.budget_for_rank_ratio(args.kappa, args.rho, n_in, n_out)
        pattern = Unstructured(k)
        row = {
            "pattern": "k",
            "rho": args.rho,
            "kappa": args.kappa,
            "rank": r,
            "keep_count": k,
            "effective_params": budget_mod.effective_params(pattern, r, n_in, n_out),
            "dense_params": n_in * n_out,
            "fits": budget_mod.fits_compression(pattern, r, n_in, n_out, args.rho),
        }
    else:
        kind_pattern = pattern_from_spec(args.pattern)
        if not isinstance(kind_pattern, SemiStructured):
            raise ContractError("budget --pattern must be <N>:<M> or the literal 'k'")
        if args.rho is None:
            raise ContractError("an <N>:<M> pattern needs --rho")
        if args.kappa is not None:
            raise ContractError("--kappa only applies to pattern k")
        r = budget_mod.rank_for_fixed_compression(
            args.rho, kind_pattern.n, kind_pattern.m, n_in, n_out
        )
        row = {
            "pattern": args.pattern,
            "rho": args.rho,
            "kappa": "",
            "rank": r,
            "keep_count": (n_in // kind_pattern.m) * kind_pattern.n * n_out,
            "effective_params": budget_mod.effective_params(kind_pattern, r, n_in, n_out),
            "dense_params": n_in * n_out,
            "fits": budget_mod.fits_compression(kind_pattern, r, n_in, n_out, args.rho),
        }
    report.rows_to_stdout([row], sys.stdout)
    return 0


def _cmd_pipeline(args) -> int:
    paths = [p for p in args.layers.split(",") if p]
    if not paths:
        raise ContractError("--layers needs a comma-separated list of matrix files")
    cfg = load_config(args.config)
    layers = [_load_weights(p) for p in paths]
    runs = [resolve(cfg, w.n_in, w.n_out) for w in layers]
    x0 = CalibrationActivations(hslf.load_matrix(args.activations))
    results = sequential_decompose(
        layers,
        x0,
        [r.pattern for r in runs],
        [r.rank for r in runs],
        runs[0].altmin,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    rows = []
    for idx, (res, run, w) in enumerate(zip(results, runs, layers)):
        prefix = os.path.join(args.out_dir, f"layer{idx}")
        _write_layer_artifacts(prefix, res, plot=False, title=f"layer {idx}")
        final = res.objective_trace[-1]
        rows.append(
            {
                "layer": idx,
                "n_in": w.n_in,
                "n_out": w.n_out,
                "rank": run.rank,
                "nonzeros": res.sparse.nonzeros,
                "effective_params": budget_mod.effective_params(run.pattern, run.rank, w.n_in, w.n_out),
                "mask_feasible": mask_satisfies(run.pattern, res.sparse.mask),
                "final_objective_damped": final.objective_damped,
                "final_objective_raw": final.objective_raw,
            }
        )
    report.write_rows_csv(os.path.join(args.out_dir, "pipeline.csv"), rows)
    if not args.no_plot:
        report.render_pipeline_figure(rows, os.path.join(args.out_dir, "pipeline.png"))
    report.rows_to_stdout(rows, sys.stdout)
    return 0


def _cmd_oracle(args) -> int:
    # debugging aid: exact sparse optimum on tiny layers
    from .oracle import exhaustive_sparse_oracle

    weights = _load_weights(args.weights)
    hess = _build_hessian(args.activations, weights.n_in, args.percdamp, args.damp_convention)
    pattern = pattern_from_spec(args.pattern, args.granularity)
    objective, component = exhaustive_sparse_oracle(weights.data, hess.h, pattern)
    report.rows_to_stdout(
        [{"objective_damped": objective, "nonzeros": component.nonzeros}], sys.stdout
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_hessian_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--percdamp", type=float, default=0.01, help="damping fraction (default 0.01)")
    p.add_argument(
        "--damp-convention",
        choices=("mean-diag", "trace"),
        default="mean-diag",
        help="damping scale: mean of the Gram diagonal, or its trace",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slrd",
        description="Sparse plus low-rank weight decomposition against calibration activations.",
    )
    sub = parser.add_subparsers(
        dest="command",
        required=True,
        metavar="{decompose,budget,eval,pipeline}",
    )

    p = sub.add_parser("decompose", help="decompose one weight matrix")
    p.add_argument("--weights", required=True, help="weight matrix (.hslf)")
    p.add_argument("--activations", required=True, help="calibration activations (.hslf)")
    p.add_argument("--config", required=True, help="run config file")
    p.add_argument("--out-prefix", required=True, help="prefix for output artifacts")
    p.add_argument("--no-plot", action="store_true", help="skip the trace figure")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("budget", help="rank/sparsity budgets for a compression target")
    p.add_argument("--pattern", required=True, help="<N>:<M>, or the literal k")
    p.add_argument("--rho", type=float, default=None, help="target compression ratio")
    p.add_argument("--kappa", type=float, default=None, help="budget fraction for the factors")
    p.add_argument("--nin", type=int, required=True)
    p.add_argument("--nout", type=int, required=True)
    p.set_defaults(func=_cmd_budget)

    p = sub.add_parser("eval", help="re-score stored decomposition components")
    p.add_argument("--weights", required=True)
    p.add_argument("--activations", required=True)
    p.add_argument("--sparse", required=True)
    p.add_argument("--u", required=True)
    p.add_argument("--v", required=True)
    p.add_argument("--pattern", default=None, help="verdict mask feasibility against this pattern")
    p.add_argument("--granularity", choices=("per-matrix", "per-column"), default="per-matrix")
    _add_hessian_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("pipeline", help="decompose a chain of layers sequentially")
    p.add_argument("--layers", required=True, help="comma-separated weight files, in order")
    p.add_argument("--activations", required=True, help="calibration inputs to the first layer")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("oracle")
    p.add_argument("--weights", required=True)
    p.add_argument("--activations", required=True)
    p.add_argument("--pattern", required=True)
    p.add_argument("--granularity", choices=("per-matrix", "per-column"), default="per-column")
    _add_hessian_flags(p)
    p.set_defaults(func=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
