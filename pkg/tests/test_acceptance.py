"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (printed, and repeated in the
terminal summary). Seeds and Vertebral are read from ``$FLEXSVM_DATA_DIR``;
when a benchmark's file is absent, the criteria that need it are reported
as FAIL with the reason and the test is marked xfail instead of passing.
Checks on the data that is present still run at full strictness.
"""

import itertools
import time

import numpy as np
import pytest

from acceptance_log import record
from flexsvm import analog, benchmarks, cli, cost, dataset
from flexsvm.digital import build_encoder
from flexsvm.svm import LINEAR, RBF, KernelSpec, TrainConfig, decision_function, dual_objective, kkt_violation, \
    train_binary
from oracles import dual_qp_projected_gradient, majority_vote, rbf_gram

SEEDS = range(5)
ACC_TOL = 3.0
TARGET_ACC = {
    ("balance", "linear"): 92, ("balance", "mixed"): 92,
    ("seeds", "linear"): 92, ("seeds", "rbf"): 95, ("seeds", "mixed"): 95,
    ("vertebral", "linear"): 69, ("vertebral", "rbf"): 83, ("vertebral", "mixed"): 89,
}
TARGET_RATIO = {"balance": "1/2", "seeds": "1/2", "vertebral": "2/1"}


@pytest.fixture(scope="module")
def calibration():
    return analog.calibrate()


@pytest.fixture(scope="module")
def sweeps(calibration):
    """Every available benchmark explored in each mode for each seed."""
    out = {}
    for name in benchmarks.BENCHMARKS:
        try:
            raw = benchmarks.load_benchmark(name)
        except (FileNotFoundError, ValueError):
            continue
        runs = {mode: [] for mode in benchmarks.MODES}
        per_seed = []
        for seed in SEEDS:
            t0 = time.perf_counter()
            for mode in benchmarks.MODES:
                runs[mode].append(benchmarks.run(name, mode, seed, calibration=calibration, raw=raw))
            per_seed.append(time.perf_counter() - t0)
        out[name] = {"runs": runs, "seconds": max(per_seed)}
    return out


def absent(sweeps, needed=tuple(benchmarks.BENCHMARKS)):
    return [n for n in needed if n not in sweeps]


def finish(number, title, ok, detail, missing=()):
    if missing:
        detail += f"; not evaluable without {', '.join(missing)} data (set ${benchmarks.DATA_DIR_ENV})"
    record(number, title, ok and not missing, detail)
    assert ok, detail
    if missing:
        pytest.xfail(f"benchmark data absent: {', '.join(missing)}")


def median_acc(sweeps, name, mode):
    return float(np.median([100 * s.metrics["accuracy"] for _, s in sweeps[name]["runs"][mode]]))


def test_criterion_1_accuracy(sweeps):
    parts, ok = [], True
    for (name, mode), target in TARGET_ACC.items():
        if name not in sweeps:
            continue
        acc = median_acc(sweeps, name, mode)
        hit = abs(acc - target) <= ACC_TOL
        ok &= hit
        parts.append(f"{name}/{mode} {acc:.1f} vs {target}{'' if hit else ' (out)'}")
    for name, s in sweeps.items():
        ok &= s["seconds"] < 60
        parts.append(f"{name} {s['seconds']:.1f}s/run")
    finish(1, "accuracy", ok, ", ".join(parts), absent(sweeps))


def test_criterion_2_mixed_gain(sweeps):
    gains = {n: median_acc(sweeps, n, "mixed") - median_acc(sweeps, n, "linear") for n in sweeps}
    ok = True
    if "vertebral" in gains:
        ok &= gains["vertebral"] >= 10
    missing = absent(sweeps)
    if not missing:
        ok &= float(np.mean(list(gains.values()))) >= 4
    detail = ", ".join(f"{n} {g:+.1f} pts" for n, g in gains.items())
    finish(2, "mixed-over-linear gain", ok, detail, missing)


def test_criterion_3_kernel_map(sweeps):
    parts, ok = [], True
    for name, s in sweeps.items():
        hits = 0
        for seed, (_, system) in zip(SEEDS, s["runs"]["mixed"]):
            a = system.assignment
            if a.ratio == TARGET_RATIO[name]:
                hits += 1
                continue
            margins = ", ".join(f"{p}: {r - l:+.3f}" for p, (l, r) in zip(a.pairs, a.per_pair_accuracy))
            print(f"  {name} seed {seed}: ratio {a.ratio} != {TARGET_RATIO[name]}; A_rbf-A_lin {margins}")
        ok &= hits >= 3
        parts.append(f"{name} {TARGET_RATIO[name]} in {hits}/5 seeds")
    finish(3, "kernel map", ok, ", ".join(parts), absent(sweeps))


def test_criterion_4_analog_fidelity():
    params = analog.DeviceParams()
    rng = np.random.default_rng(0)
    kfit = analog.fit_gaussian(*analog.device_curve(params, analog.sweep_grid(params), rng))
    _, _, _, p_nrmse, _ = analog.product_check(params, kfit, 3, rng=rng)
    agrid = np.linspace(-6 * params.slope_voltage, 6 * params.slope_voltage, 201)
    afit = analog.fit_alpha(*analog.alpha_curve(params, agrid))
    ok = kfit.nrmse <= 0.03 and kfit.corr >= 0.99 and p_nrmse <= 0.02 and afit.nrmse <= 0.001
    finish(4, "analog fidelity", ok,
           f"kernel nrmse {kfit.nrmse:.4f} corr {kfit.corr:.4f}, D=3 product nrmse {p_nrmse:.4f}, "
           f"alpha nrmse {afit.nrmse:.2e}")


def _full_alpha(model, X):
    a = np.zeros(len(X))
    for sv, al in zip(model.support_vectors, model.dual_coeffs):
        a[np.flatnonzero((X == sv).all(1))[0]] = al
    return a


def test_criterion_5_solver_oracle(sweeps):
    rng = np.random.default_rng(2024)
    worst_gap, worst_kkt = 0.0, 0.0
    tol = TrainConfig().tol
    for k in range(50):
        m, D = int(rng.integers(4, 13)), int(rng.integers(1, 3))
        X = rng.uniform(0, 1, (m, D))
        y = np.where(rng.uniform(size=m) < 0.5, -1.0, 1.0)
        y[:2] = -1.0, 1.0
        C = float(rng.choice([0.5, 1.0, 10.0]))
        if k % 2:
            gamma = float(rng.uniform(0.5, 5.0))
            model = train_binary(X, y, KernelSpec(RBF, gamma), TrainConfig(C=C, seed=k))
            K = rbf_gram(X, X, gamma)
        else:
            model = train_binary(X, y, KernelSpec(LINEAR), TrainConfig(C=C, seed=k))
            K = X @ X.T
        a = _full_alpha(model, X)
        _, ref = dual_qp_projected_gradient(K, y, C)
        worst_gap = max(worst_gap, abs(dual_objective(a, y, K) - ref))
        worst_kkt = max(worst_kkt, kkt_violation(a, y, decision_function(model, X), C))
    # every pipeline model reports convergence only when its KKT violation is within tol
    unconverged = sum(not fm.converged
                      for s in sweeps.values() for runs in s["runs"].values() for _, sys_ in runs
                      for fm in sys_.float_models)
    ok = worst_gap <= 1e-4 and worst_kkt <= tol and unconverged == 0
    finish(5, "solver oracle", ok,
           f"50 datasets, worst objective gap {worst_gap:.2e}, worst KKT violation {worst_kkt:.2e}, "
           f"{unconverged} unconverged pipeline models")


def test_criterion_6_encoder():
    checked = 0
    for K in (2, 3, 4, 5):
        enc = build_encoder(K)
        for bits in itertools.product((0, 1), repeat=K * (K - 1) // 2):
            assert enc.lookup(bits) == majority_vote(bits, K), (K, bits)
            checked += 1
    finish(6, "encoder", True, f"{checked} patterns over K=2..5 match majority vote")


def test_criterion_7_realisation_agreement(sweeps):
    worst = {"analog": 1.0, "digital": 1.0}
    unexplained = 0
    for s in sweeps.values():
        for mode in ("linear", "mixed"):
            for _, system in s["runs"][mode]:
                for p in system.metrics["per_pair"]:
                    if p["kind"] == RBF and p["domain"] != "analog":
                        continue
                    worst[p["domain"]] = min(worst[p["domain"]], p["agreement"])
                    unexplained += p.get("unexplained_disagreements", 0)
    ok = worst["analog"] >= 0.99 and worst["digital"] >= 0.95 and unexplained == 0
    finish(7, "realisation agreement", ok,
           f"worst analog agreement {worst['analog']:.3f}, worst fixed-point agreement {worst['digital']:.3f}, "
           f"{unexplained} disagreements outside the error bound", absent(sweeps))


def test_criterion_8_cost_model(sweeps):
    coeffs = cost.load_coefficients()
    totals = benchmarks.reference_totals()
    parts, ok = [], True
    reps = {}
    for name, s in sweeps.items():
        # same rule as benchmarks.reference_seed: first seed with the published kernel map
        ratios = [sys_.assignment.ratio for _, sys_ in s["runs"]["mixed"]]
        k = ratios.index(TARGET_RATIO[name]) if TARGET_RATIO[name] in ratios else 0
        for mode in benchmarks.MODES:
            _, system = s["runs"][mode][k]
            rep = cost.estimate(system.describe(), coeffs)
            reps[(name, mode)] = rep
            row = benchmarks.reference_row(totals, name, mode)
            ea, ep = rep.total_area / row["area_mm2"] - 1, rep.total_power / row["power_mw"] - 1
            ok &= abs(ea) <= 0.25 and abs(ep) <= 0.25
            parts.append(f"{name}/{mode} {ea:+.0%}/{ep:+.0%}")
        eff = cost.rbf_efficiency(s["runs"]["mixed"][k][1].describe(), coeffs)
        if eff is not None:
            ok &= eff[0] >= 50 and eff[1] >= 10
            parts.append(f"{name} analog vs digital RBF {eff[0]:.0f}x/{eff[1]:.0f}x")
    missing = absent(sweeps)
    if not missing:
        head = totals["headline"]["mixed_vs_digital_rbf"]
        ga = np.mean([reps[(n, "rbf")].total_area / reps[(n, "mixed")].total_area for n in sweeps])
        gp = np.mean([reps[(n, "rbf")].total_power / reps[(n, "mixed")].total_power for n in sweeps])
        ok &= abs(ga / head["area"] - 1) <= 0.25 and abs(gp / head["power"] - 1) <= 0.25
        parts.append(f"headline {ga:.0f}x/{gp:.0f}x vs {head['area']}x/{head['power']}x")
    finish(8, "cost model", ok, "area/power error " + ", ".join(parts), missing)


def test_criterion_9_determinism(sweeps, tmp_path):
    identical = []
    for name in sweeps:
        try:
            path = benchmarks.find_file(name)
        except FileNotFoundError:
            path = dataset.write_balance_scale(tmp_path / f"{name}.csv")
        label = "class" if path.parent == tmp_path else str(benchmarks.BENCHMARKS[name].label_column)
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / name / run
            assert cli.main(["prepare", "--data", str(path), "--label", label, "--seed", "3",
                             "--out", str(out)]) == 0
            cli.main(["explore", "--prepared", str(out / "prepared.json"), "--out", str(out)])
            outputs.append([(out / f).read_bytes() for f in ("prepared.json", "report.json", "system.json")])
        identical.append(outputs[0] == outputs[1])
    ok = all(identical)
    finish(9, "determinism", ok, f"byte-identical reports for {sum(identical)}/{len(identical)} benchmarks")
