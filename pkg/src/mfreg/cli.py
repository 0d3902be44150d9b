"""Batch command-line front-end.

Subcommands: fit, predict, simulate, table1, bands, diagnose-lambda. Outputs
are delimited files plus rendered figures; all writes go through a temp file
and an atomic rename. Exit codes: 0 success, 1 numerical failure, 2 input or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from dataclasses import replace

import numpy as np

from mfreg import plots
from mfreg.funcdata import (CurveSet, ParseError, ResponseVector, differentiate,
                            load_curves, save_curves)
from mfreg.fpca import build_design, lambda_diagnostic
from mfreg.inference import covariance_for_fit, pointwise_band
from mfreg.scad import ScadParams
from mfreg.simgen import (SimConfig, SimMetrics, TABLE_SCENARIOS,
                          generate_replicate, mixing_matrix, run_table)
from mfreg.solver import FitConfig, FitResult, fit_curves, predict, result_from_dict
from mfreg.tuning import DegenerateFitError, select_curves


class ConfigError(ValueError):
    pass


def _atomic_write(path, writer):
    """Write via a sibling temp file and rename into place."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".mfreg-")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, rows):
    _atomic_write(path, lambda fh: csv.writer(fh).writerows(rows))


def _write_json(path, obj):
    _atomic_write(path, lambda fh: json.dump(obj, fh, indent=1))


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got '{text}'")


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated number list, got '{text}'")


def _expand_derivatives(curves: list[CurveSet], orders: list[int]) -> list[CurveSet]:
    out = []
    for cs in curves:
        for order in orders:
            if order == 0:
                out.append(cs)
            else:
                out.append(differentiate(cs, order))
    return out


def _split_curves(curves, response, n_train):
    if not 1 <= n_train < response.n:
        raise ConfigError(f"--split {n_train} outside 1..{response.n - 1}")
    train = [CurveSet(cs.grid, cs.values[:n_train], cs.label) for cs in curves]
    valid = [CurveSet(cs.grid, cs.values[n_train:], cs.label) for cs in curves]
    return (train, ResponseVector(response.y[:n_train]),
            valid, ResponseVector(response.y[n_train:]))


def _band_rows(band):
    rows = [["t", "center", "lower", "upper"]]
    for t, c, lo, hi in zip(band.grid.points, band.center, band.lower, band.upper):
        rows.append([t, c, lo, hi])
    return rows


def cmd_fit(args) -> int:
    curves, response = load_curves(args.input, descriptor=args.descriptor)
    if args.derivatives:
        curves = _expand_derivatives(curves, _parse_int_list(args.derivatives))
    valid = None
    if args.split is not None:
        curves, response, valid_curves, valid_y = _split_curves(
            curves, response, args.split
        )
        valid = (valid_curves, valid_y)

    os.makedirs(args.output_dir, exist_ok=True)
    tuning_grid = None
    if args.K is not None and args.lam is not None:
        cfg = FitConfig(K=args.K, scad=ScadParams(args.lam, args.scad_a))
        result = fit_curves(curves, response, cfg)
        bestK = args.K
    elif args.K is not None or args.lam is not None:
        raise ConfigError("--K and --lambda must be given together (or neither)")
    else:
        K_values = _parse_int_list(args.k_grid)
        lam_values = (None if args.lambda_grid == "auto"
                      else _parse_float_list(args.lambda_grid))
        bestK, _, result, tuning_grid = select_curves(
            curves, response, K_values=K_values, lambda_values=lam_values,
            base_config=FitConfig(K=max(K_values), scad=ScadParams(0.0, args.scad_a)),
        )

    payload = result.to_dict()
    if result.active_set:
        Z, _, _, _ = build_design(curves, bestK)
        cov = covariance_for_fit(result, Z.scores)
        payload["covariance_blocks"] = {
            str(j + 1): cov.blocks[j].tolist() for j in result.active_set
        }
        for j in result.active_set:
            band = pointwise_band(result, cov, j, args.level)
            label = result.labels[j] if result.labels else f"x{j + 1}"
            safe = label.replace("'", "d")
            _write_csv(os.path.join(args.output_dir, f"band_{safe}.csv"),
                       _band_rows(band))
            plots.save_band_figure(
                band, os.path.join(args.output_dir, f"band_{safe}.png"), label
            )
    _write_json(os.path.join(args.output_dir, "fit.json"), payload)
    if tuning_grid is not None:
        _write_csv(os.path.join(args.output_dir, "tuning.csv"),
                   tuning_grid.to_rows())
    plots.save_coefficient_figure(
        result, os.path.join(args.output_dir, "coefficients.png")
    )

    active_labels = [result.labels[j] if result.labels else f"x{j + 1}"
                     for j in result.active_set]
    print(f"active set: {active_labels if active_labels else '(empty)'}")
    if valid is not None:
        yhat = predict(result, valid[0])
        mse = float(np.mean((valid[1].y - yhat.y) ** 2))
        print(f"holdout mse: {mse:.4f}")
    return 0


def cmd_predict(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        result = result_from_dict(json.load(fh))
    curves, _ = load_curves(args.input, descriptor=args.descriptor)
    if args.derivatives:
        curves = _expand_derivatives(curves, _parse_int_list(args.derivatives))
    yhat = predict(result, curves)
    rows = [["index", "prediction"]] + [[i, v] for i, v in enumerate(yhat.y)]
    _write_csv(args.output, rows)
    print(f"wrote {yhat.n} predictions to {args.output}")
    return 0


def cmd_simulate(args) -> int:
    cfg = SimConfig(rho=args.rho, sigma_label=args.sigma,
                    sigma_is_variance=(args.sigma_reading == "variance"),
                    seed=args.seed, n=args.n)
    curves, response, betas = generate_replicate(cfg, args.replicate)
    os.makedirs(os.path.dirname(os.path.abspath(args.output)), exist_ok=True)
    save_curves(args.output + ".tmp", curves, response)
    os.replace(args.output + ".tmp", args.output)
    root, _ = os.path.splitext(args.output)
    _write_json(root + "_truth.json",
                {"grid": curves[0].grid.points.tolist(),
                 "beta_curves": betas.tolist()})
    plots.save_curves_figure(curves[0], root + "_curves.png")
    print(f"wrote {response.n} subjects to {args.output}")
    return 0


def cmd_table1(args) -> int:
    scenarios = TABLE_SCENARIOS
    if args.scenarios:
        scenarios = []
        for part in args.scenarios.split(","):
            rho, sig = part.split(":")
            scenarios.append((float(rho), float(sig)))
    readings = {"variance": [True], "sd": [False],
                "both": [True, False]}[args.sigma_reading]
    base = SimConfig(seed=args.seed, replicates=args.replicates)
    rows = []
    for is_var in readings:
        rows.extend(run_table(replace(base, sigma_is_variance=is_var),
                              scenarios=scenarios))
    out_rows = [SimMetrics.header()] + [m.to_row() for m in rows]
    os.makedirs(os.path.dirname(os.path.abspath(args.output)), exist_ok=True)
    _write_csv(args.output, out_rows)
    root, _ = os.path.splitext(args.output)
    plots.save_metrics_figure(rows, root + ".png")
    for m in rows:
        print(f"rho={m.rho:g} sigma={m.sigma_label:g} ({'var' if m.sigma_is_variance else 'sd'}): "
              f"mse={m.mse:.3f} omse={m.omse:.3f} tp={m.tp:.2f} fp={m.fp:.2f} "
              f"cov1={m.cov1 if m.cov1 is None else round(m.cov1, 3)} "
              f"cov2={m.cov2 if m.cov2 is None else round(m.cov2, 3)}")
    return 0


def cmd_bands(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        payload = json.load(fh)
    result = result_from_dict(payload)
    if "covariance_blocks" not in payload:
        raise ConfigError("model file has no covariance blocks; rerun fit")
    j = args.predictor - 1
    if j not in result.active_set:
        raise ConfigError(f"predictor {args.predictor} is not in the active set")
    from mfreg.inference import CoefCovariance
    blocks = {int(k) - 1: np.asarray(v)
              for k, v in payload["covariance_blocks"].items()}
    dim = sum(b.shape[0] for b in blocks.values())
    cov = CoefCovariance(blocks, np.zeros((dim, dim)))
    band = pointwise_band(result, cov, j, args.level)
    root, _ = os.path.splitext(args.output)
    _write_csv(args.output, _band_rows(band))
    plots.save_band_figure(band, root + ".png",
                           f"predictor {args.predictor}")
    print(f"wrote band for predictor {args.predictor} to {args.output}")
    return 0


def cmd_diagnose_lambda(args) -> int:
    if args.alpha <= 0:
        raise ConfigError("--alpha must be positive")
    if args.mixing:
        rows = [
            _parse_float_list(part) for part in args.mixing.split(";")
        ]
        mixing = np.asarray(rows)
    else:
        mixing = mixing_matrix(args.rho)
    out_rows = [["K", "min_eigenvalue", "scaled"]]
    collapsed = True
    for K in range(1, args.k_max + 1):
        spectrum = np.arange(1, K + 1, dtype=float) ** (-args.alpha)
        _, min_eig = lambda_diagnostic(mixing, spectrum, K)
        scaled = min_eig * K**args.alpha
        out_rows.append([K, min_eig, scaled])
        print(f"K={K}: min_eig={min_eig:.6e} scaled={scaled:.6f}")
        collapsed = collapsed and scaled < 1e-8
    if collapsed:
        print("warning: scaled minimum eigenvalue collapses toward zero "
              "(mixing rows are scalar multiples?)")
    if args.output:
        _write_csv(args.output, out_rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfreg",
        description="Multiple functional regression with group-SCAD selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model from a CSV dataset")
    p_fit.add_argument("--input", required=True)
    p_fit.add_argument("--descriptor", default=None)
    p_fit.add_argument("--K", type=int, default=None)
    p_fit.add_argument("--lambda", dest="lam", type=float, default=None)
    p_fit.add_argument("--scad-a", type=float, default=3.7)
    p_fit.add_argument("--k-grid", default="1,2,3,4,5,6,7,8")
    p_fit.add_argument("--lambda-grid", default="auto")
    p_fit.add_argument("--derivatives", default=None,
                       help="comma list of derivative orders, e.g. 0,1,2,3")
    p_fit.add_argument("--split", type=int, default=None,
                       help="train on the first N subjects, validate the rest")
    p_fit.add_argument("--level", type=float, default=0.95)
    p_fit.add_argument("--output-dir", default="mfreg-out")
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="predict responses with a saved fit")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--input", required=True)
    p_pred.add_argument("--descriptor", default=None)
    p_pred.add_argument("--derivatives", default=None)
    p_pred.add_argument("--output", default="predictions.csv")
    p_pred.set_defaults(func=cmd_predict)

    p_sim = sub.add_parser("simulate", help="write one simulated dataset")
    p_sim.add_argument("--rho", type=float, default=0.0)
    p_sim.add_argument("--sigma", type=float, default=0.1)
    p_sim.add_argument("--sigma-reading", choices=["variance", "sd"],
                       default="variance")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--replicate", type=int, default=0)
    p_sim.add_argument("--output", default="sim.csv")
    p_sim.set_defaults(func=cmd_simulate)

    p_tab = sub.add_parser("table1", help="run the Monte Carlo benchmark table")
    p_tab.add_argument("--replicates", type=int, default=500)
    p_tab.add_argument("--seed", type=int, default=0)
    p_tab.add_argument("--scenarios", default=None,
                       help="comma list of rho:sigma pairs, e.g. 0.0:0.1,0.5:0.3")
    p_tab.add_argument("--sigma-reading", choices=["variance", "sd", "both"],
                       default="variance")
    p_tab.add_argument("--output", default="table1.csv")
    p_tab.set_defaults(func=cmd_table1)

    p_band = sub.add_parser("bands", help="emit a confidence band from a saved fit")
    p_band.add_argument("--model", required=True)
    p_band.add_argument("--predictor", type=int, required=True)
    p_band.add_argument("--level", type=float, default=0.95)
    p_band.add_argument("--output", default="band.csv")
    p_band.set_defaults(func=cmd_bands)

    p_diag = sub.add_parser("diagnose-lambda",
                            help="minimum-eigenvalue scaling diagnostic")
    p_diag.add_argument("--mixing", default=None,
                        help="semicolon-separated rows, e.g. '1,0.2;0.2,1'")
    p_diag.add_argument("--rho", type=float, default=0.0)
    p_diag.add_argument("--alpha", type=float, default=2.0)
    p_diag.add_argument("--k-max", type=int, default=8)
    p_diag.add_argument("--output", default=None)
    p_diag.set_defaults(func=cmd_diagnose_lambda)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ConfigError, FileNotFoundError, json.JSONDecodeError,
            ValueError) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return 2
    except (DegenerateFitError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
