"""Command-line pipeline: prepare -> explore -> report, plus analog validation.

Exit status: 0 success, 1 finished with warnings, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analog, benchmarks, cost, dataset, digital, explorer
from .svm import TrainConfig

log = logging.getLogger("flexsvm")

EXIT_OK, EXIT_DEGRADED, EXIT_ERROR = 0, 1, 2


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _label_arg(v: str):
    return int(v) if v.lstrip("-").isdigit() else v


def cmd_prepare(args) -> int:
    raw = dataset.load_csv(args.data, label_column=args.label, name=args.name)
    prep = dataset.prepare(raw, max_features=args.max_features, split=args.split, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = dataset.save_prepared(prep, out / "prepared.json")
    lines = [
        f"dataset: {prep.name}",
        f"rows: {len(raw.y)} (train {len(prep.y_train)}, test {len(prep.y_test)})",
        f"classes: {prep.num_classes} {list(prep.class_names)}",
        f"train counts: {dataset.class_counts(prep.y_train, prep.num_classes)}",
        f"test counts: {dataset.class_counts(prep.y_test, prep.num_classes)}",
        f"selected features ({prep.n_features}): {prep.selected_columns}",
        f"sha256: {digest}",
    ]
    (out / "prepared.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK


def device_from_args(args) -> analog.DeviceParams:
    return analog.DeviceParams(n=args.n, V_T=args.vt, I_in=args.i_in, noise_sigma=args.noise)


def report_dict(system: explorer.MixedSvmSystem, cost_report: cost.CostReport, cfg: TrainConfig) -> dict:
    m = system.metrics
    return {
        "dataset": system.dataset_ref,
        "mode": system.mode,
        "train_config": {"C": cfg.C, "tol": cfg.tol, "max_passes": cfg.max_passes, "seed": cfg.seed,
                         "gamma": cfg.gamma},
        "fixed_point": system.fixed_point.to_dict(),
        "kernel_map": system.assignment.to_dict(),
        "metrics": m,
        "cost": cost_report.to_dict(),
        "warnings": list(system.warnings),
    }


def table_text(report: dict) -> str:
    """Comparison-table style summary, derived only from the JSON report."""
    head = f"{'Dataset':<16}{'Kernel':<10}{'Acc (%)':>9}{'Area (mm2)':>13}{'Power (mW)':>13}{'RBF/lin':>9}"
    row = (f"{report['dataset']['name']:<16}{report['mode']:<10}"
           f"{100 * report['metrics']['accuracy']:>9.1f}"
           f"{report['cost']['total_area_mm2']:>13.4g}{report['cost']['total_power_mw']:>13.4g}"
           f"{report['kernel_map']['ratio']:>9}")
    lines = [head, row, "", "pair     kind    domain   A_lin(val)  A_rbf(val)  acc(real)  agree"]
    for acc, p in zip(report["kernel_map"]["per_pair_accuracy"], report["metrics"]["per_pair"]):
        fmt = lambda v: "   -   " if v is None else f"{v:7.3f}"
        lines.append(f"{str(tuple(p['pair'])):<9}{p['kind']:<8}{p['domain']:<9}{fmt(acc['linear']):>10}"
                     f"{fmt(acc['rbf']):>12}{p['realised_accuracy']:>11.3f}{p['agreement']:>7.3f}")
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def cmd_explore(args) -> int:
    prep = dataset.load_prepared(args.prepared)
    seed = prep.seed if args.seed is None else args.seed
    cfg = TrainConfig(C=args.C, tol=args.tol, max_passes=args.max_passes, seed=seed, gamma=args.gamma)
    fmt = digital.FixedPointFormat(args.input_bits, args.weight_bits)
    coeffs = cost.load_coefficients(args.coeffs)
    cal = analog.calibrate(device_from_args(args), rng=np.random.default_rng(seed))
    system = explorer.explore(prep, cfg, mode=args.kernel, fixed_point=fmt, calibration=cal)
    desc = system.describe()
    rep = cost.estimate(desc, coeffs)
    report = report_dict(system, rep, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(report, out / "report.json")
    _dump_json(system.to_dict(), out / "system.json")
    _dump_json(desc, out / "descriptor.json")
    (out / "encoder.csv").write_text(system.encoder.to_csv(), encoding="utf-8")
    (out / "cost.csv").write_text(cost.table_rows_csv([{
        "dataset": prep.name, "kernel": args.kernel,
        "accuracy_pct": round(100 * report["metrics"]["accuracy"], 2),
        "area_mm2": rep.total_area, "power_mw": rep.total_power,
        "rbf_linear_ratio": system.assignment.ratio}]), encoding="utf-8")
    text = table_text(report)
    (out / "table.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_DEGRADED if system.warnings else EXIT_OK


def cmd_validate_analog(args) -> int:
    params = device_from_args(args)
    rng = np.random.default_rng(args.seed)
    grid = analog.sweep_grid(params, args.points)
    dv, cur = analog.device_curve(params, grid, rng)
    kfit = analog.fit_gaussian(dv, cur)
    _, dev, ideal, p_nrmse, p_corr = analog.product_check(params, kfit, args.dims, args.points, rng)
    agrid = np.linspace(-6 * params.slope_voltage, 6 * params.slope_voltage, args.points)
    adv, aratio = analog.alpha_curve(params, agrid, rng)
    afit = analog.fit_alpha(adv, aratio)

    rows = [
        {"check": "kernel", "nrmse": kfit.nrmse, "corr": kfit.corr},
        {"check": f"product_D{args.dims}", "nrmse": p_nrmse, "corr": p_corr},
        {"check": "alpha", "nrmse": afit.nrmse, "corr": afit.corr},
    ]
    if params.noise_sigma == 0:
        # model-class self-test: a sampled Gaussian must be recovered exactly
        exact = kfit.A0 * np.exp(-kfit.gamma0 * (dv - kfit.mu) ** 2)
        st = analog.fit_gaussian(dv, exact)
        rows.append({"check": "self_test", "nrmse": st.nrmse, "corr": st.corr})
    result = {
        "device": params.to_dict(),
        "seed": args.seed,
        "dims": args.dims,
        "kernel_fit": kfit.to_dict(),
        "taylor_gamma": params.taylor_gamma,
        "alpha_fit": afit.to_dict(),
        "checks": rows,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(result, out / "validation.json")
    _write_csv(out / "kernel_curve.csv", ["dv", "device", "fit"], zip(dv, cur, kfit(dv)))
    _write_csv(out / "product_curve.csv", ["dv", "device", "ideal"], zip(dv, dev, ideal))
    _write_csv(out / "alpha_curve.csv", ["dv", "device", "fit"], zip(adv, aratio, afit(adv)))
    lines = [f"{'check':<12}{'nrmse':>12}{'corr':>10}"]
    lines += [f"{r['check']:<12}{r['nrmse']:>12.4g}{r['corr']:>10.5f}" for r in rows]
    text = "\n".join(lines) + "\n"
    (out / "validation.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_balance_scale(args) -> int:
    path = dataset.write_balance_scale(args.out)
    print(f"wrote {path} (625 rows)")
    return EXIT_OK


def cmd_encoder(args) -> int:
    table = digital.build_encoder(args.classes)
    Path(args.out).write_text(table.to_csv(), encoding="utf-8")
    print(f"wrote {args.out} ({len(table.table)} patterns)")
    return EXIT_OK


def cmd_calibrate_cost(args) -> int:
    refs = json.loads(Path(args.references).read_text(encoding="utf-8"))
    points = [cost.ReferencePoint.from_dict(r) for r in refs["references"]]
    res = cost.calibrate(points, note=refs.get("note", ""))
    Path(args.out).write_text(res.coefficients.to_json() + "\n", encoding="utf-8")
    for r in res.residuals:
        print(f"{r['label']:<22} area {r['area_mm2']:9.4g} (target {r['area_target']:<7g} {r['area_rel_err']:+.1%})"
              f"  power {r['power_mw']:9.4g} (target {r['power_target']:<7g} {r['power_rel_err']:+.1%})")
    return EXIT_OK


def cmd_build_references(args) -> int:
    points, missing, chosen = benchmarks.build_references(args.data_dir, seeds=range(args.seeds))
    note = f"fitted to {len(points)} reference rows; seeds " + ", ".join(f"{n} {s}" for n, s in chosen.items())
    if missing:
        note += f"; benchmarks without data: {', '.join(missing)}"
    _dump_json({"note": note, "references": [p.to_dict() for p in points], "missing": missing, "seeds": chosen},
               Path(args.out))
    print(f"wrote {args.out} ({len(points)} references)")
    for name in missing:
        print(f"warning: no data for {name}; put one of {list(benchmarks.BENCHMARKS[name].file_names)} "
              f"in --data-dir or ${benchmarks.DATA_DIR_ENV}")
    return EXIT_DEGRADED if missing else EXIT_OK


def _add_device(p: argparse.ArgumentParser) -> None:
    d = analog.DeviceParams()
    p.add_argument("--n", type=float, default=d.n, help="subthreshold slope factor")
    p.add_argument("--vt", type=float, default=d.V_T, help="thermal voltage (V)")
    p.add_argument("--i-in", type=float, default=d.I_in, help="kernel input current (A)")
    p.add_argument("--noise", type=float, default=0.0, help="relative noise on device sweeps")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flexsvm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="load, split, normalise and select features")
    p.add_argument("--data", required=True)
    p.add_argument("--label", type=_label_arg, default=-1, help="label column name or index")
    p.add_argument("--name", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-features", type=int, default=5)
    p.add_argument("--split", type=float, default=0.7, help="training fraction")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("explore", help="per-pair kernel selection and system evaluation")
    p.add_argument("--prepared", required=True)
    p.add_argument("--kernel", choices=explorer.KERNEL_MODES, default=explorer.MIXED)
    p.add_argument("--seed", type=int, default=None, help="defaults to the prepared artifact's seed")
    t = TrainConfig()
    p.add_argument("--C", type=float, default=t.C)
    p.add_argument("--tol", type=float, default=t.tol)
    p.add_argument("--max-passes", type=int, default=t.max_passes)
    p.add_argument("--gamma", type=float, default=None, help="RBF width; default is the scale heuristic")
    p.add_argument("--input-bits", type=int, default=4)
    p.add_argument("--weight-bits", type=int, default=8)
    p.add_argument("--coeffs", default=None, help=f"cost coefficients JSON (else ${cost.COEFFS_ENV} or defaults)")
    _add_device(p)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("validate-analog", help="fit device curves and report nrmse / correlation")
    _add_device(p)
    p.add_argument("--dims", type=int, default=3)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_validate_analog)

    p = sub.add_parser("balance-scale", help="write the Balance Scale CSV")
    p.add_argument("--out", default="balance-scale.csv")
    p.set_defaults(func=cmd_balance_scale)

    p = sub.add_parser("encoder", help="write the majority-vote encoder truth table")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--out", default="encoder.csv")
    p.set_defaults(func=cmd_encoder)

    p = sub.add_parser("calibrate-cost", help="fit cost coefficients to reference totals")
    p.add_argument("--references", required=True)
    p.add_argument("--out", default="cost_coefficients.json")
    p.set_defaults(func=cmd_calibrate_cost)

    p = sub.add_parser("build-references", help="explore the benchmarks and write cost reference points")
    p.add_argument("--data-dir", default=None, help=f"benchmark files (else ${benchmarks.DATA_DIR_ENV})")
    p.add_argument("--seeds", type=int, default=5, help="search seeds 0..N-1 for the published kernel map")
    p.add_argument("--out", default="references.json")
    p.set_defaults(func=cmd_build_references)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, dataset.DatasetError, cost.CostModelError, analog.FitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
