import json

import pytest
from hypothesis import given, settings, strategies as st

from flexsvm import benchmarks, cost
from flexsvm.cost import BLOCKS, CostCoefficients, CostModelError, ReferencePoint, calibrate, estimate


def lin(pair=(0, 1), D=4, zero=0, pow2=0):
    return {"pair": list(pair), "kind": "linear", "domain": "digital", "D": D,
            "zero": zero, "pow2": pow2, "general": D - zero - pow2}


def rbf(pair=(0, 1), D=4, m=10, domain="analog"):
    return {"pair": list(pair), "kind": "rbf", "domain": domain, "D": D, "m": m}


def desc(*classifiers, K=3):
    return {"num_classes": K, "input_bits": 4, "weight_bits": 8, "classifiers": list(classifiers)}


def unit_coeffs(value=1.0):
    return CostCoefficients({b: value for b in BLOCKS}, {b: 2 * value for b in BLOCKS})


classifier_st = st.one_of(
    st.builds(lambda D, z: lin(D=D, zero=min(z, D)), st.integers(1, 5), st.integers(0, 5)),
    st.builds(lambda D, m, d: rbf(D=D, m=m, domain=d), st.integers(1, 5), st.integers(1, 50),
              st.sampled_from(["analog", "digital"])),
)
coeff_st = st.builds(
    lambda a, p: CostCoefficients(dict(zip(BLOCKS, a)), dict(zip(BLOCKS, p))),
    st.lists(st.floats(0, 1), min_size=len(BLOCKS), max_size=len(BLOCKS)),
    st.lists(st.floats(0, 1), min_size=len(BLOCKS), max_size=len(BLOCKS)),
)


class TestEstimate:
    def test_empty_system(self):
        rep = estimate(desc(), unit_coeffs())
        assert rep.total_area == 0 and rep.total_power == 0
        assert rep.digital_share == 0 and rep.analog_share == 0

    def test_linear_counts(self):
        c = cost.system_counts(desc(lin(D=4, zero=1, pow2=1)))
        assert c["digital_mac"] == pytest.approx((2 + 0.1) * 32)
        assert c["digital_adder_tree"] == 4 * (4 + 8 + 2 + 1)
        assert c["encoder"] == 2 and c["adc"] == 16

    def test_analog_counts(self):
        c = cost.system_counts(desc(rbf(D=3, m=7)))
        assert (c["analog_kernel_stage"], c["analog_alpha_mult"], c["analog_rails_comparator"]) == (21, 7, 1)
        assert c["adc"] == 0

    def test_missing_coefficient(self):
        partial = CostCoefficients({"digital_mac": 1.0}, {"digital_mac": 1.0})
        with pytest.raises(CostModelError, match="digital_adder_tree"):
            estimate(desc(lin()), partial)

    def test_negative_coefficient_rejected(self):
        with pytest.raises(CostModelError):
            CostCoefficients({"adc": -1.0}, {})

    def test_shares(self):
        rep = estimate(desc(lin(), rbf(pair=(0, 2))), unit_coeffs())
        assert rep.digital_area_share + rep.analog_area_share == pytest.approx(1.0)
        assert rep.digital_power_share + rep.analog_power_share == pytest.approx(1.0)
        assert 0 < rep.analog_share < 1

    @settings(max_examples=60, deadline=None)
    @given(st.lists(classifier_st, max_size=5), classifier_st, coeff_st)
    def test_monotone_and_additive(self, cls, extra, coeffs):
        before = estimate(desc(*cls), coeffs)
        after = estimate(desc(*cls, extra), coeffs)
        assert after.total_area >= before.total_area - 1e-12
        assert after.total_power >= before.total_power - 1e-12
        for rep in (before, after):
            assert rep.total_area == sum(it["area_mm2"] for it in rep.breakdown)
            assert rep.total_power == sum(it["power_mw"] for it in rep.breakdown)


class TestCalibrate:
    def test_single_reference_exact(self):
        d = desc(lin(D=4))
        res = calibrate([ReferencePoint("one", d, 0.032, 0.004)], blocks=["digital_mac"])
        count = cost.system_counts(d)["digital_mac"]
        assert res.coefficients.area["digital_mac"] == pytest.approx(0.032 / count)
        assert res.coefficients.power["digital_mac"] == pytest.approx(0.004 / count)
        assert res.max_relative_error == pytest.approx(0.0, abs=1e-12)
        assert all(v == 0 for k, v in res.coefficients.area.items() if k != "digital_mac")

    def test_duplicates_ignored(self):
        refs = [ReferencePoint("a", desc(lin()), 0.02, 0.003),
                ReferencePoint("b", desc(lin(), rbf(pair=(0, 2), m=30)), 0.09, 0.07),
                ReferencePoint("c", desc(rbf(m=40, domain="digital")), 5.0, 0.9)]
        once = calibrate(refs).coefficients
        twice = calibrate(refs + [ReferencePoint("a2", refs[0].descriptor, 0.02, 0.003)] * 3).coefficients
        assert once.area == twice.area and once.power == twice.power

    def test_infeasible(self):
        with pytest.raises(CostModelError):
            calibrate([ReferencePoint("x", desc(lin()), 1.0, 1.0)], blocks=["analog_alpha_mult"])
        with pytest.raises(CostModelError):
            calibrate([])
        with pytest.raises(CostModelError):
            calibrate([ReferencePoint("x", desc(lin()), -1.0, 1.0)])

    def test_residuals_reported(self):
        refs = [ReferencePoint("a", desc(lin()), 0.02, 0.003), ReferencePoint("b", desc(lin(D=2)), 0.05, 0.001)]
        res = calibrate(refs, blocks=["digital_mac"])
        assert [r["label"] for r in res.residuals] == ["a", "b"]
        assert res.max_relative_error > 0.1


class TestCoefficientFiles:
    def test_shipped_defaults_load(self):
        c = cost.load_coefficients()
        assert set(c.area) == set(BLOCKS) and set(c.power) == set(BLOCKS)
        assert all(v >= 0 for v in list(c.area.values()) + list(c.power.values()))

    def test_precedence(self, tmp_path, monkeypatch):
        env_file, arg_file = tmp_path / "env.json", tmp_path / "arg.json"
        env_file.write_text(CostCoefficients({"adc": 1.0}, {}, note="env").to_json())
        arg_file.write_text(CostCoefficients({"adc": 2.0}, {}, note="arg").to_json())
        monkeypatch.setenv(cost.COEFFS_ENV, str(env_file))
        assert cost.load_coefficients().note == "env"
        assert cost.load_coefficients(arg_file).note == "arg"
        with pytest.raises(FileNotFoundError):
            cost.load_coefficients(tmp_path / "nope.json")

    def test_round_trip(self):
        c = unit_coeffs(0.5)
        assert CostCoefficients.from_dict(json.loads(c.to_json())) == c

    def test_table_csv(self):
        text = cost.table_rows_csv([{"dataset": "balance", "kernel": "mixed", "accuracy_pct": 92.0,
                                     "area_mm2": 0.062, "power_mw": 0.081, "rbf_linear_ratio": "1/2"}])
        assert text.splitlines() == ["dataset,kernel,accuracy_pct,area_mm2,power_mw,rbf_linear_ratio",
                                     "balance,mixed,92.0,0.062,0.081,1/2"]


@pytest.fixture(scope="module")
def reports():
    points, _, _ = benchmarks.build_references()
    coeffs = cost.load_coefficients()
    return {p.label: (p, estimate(p.descriptor, coeffs)) for p in points if p.label.startswith("balance/")}


class TestDefaultsOnBalance:
    """Examples that the shipped coefficients must reproduce on the Balance reference systems."""

    def test_linear_totals(self, reports):
        _, rep = reports["balance/linear"]
        assert rep.total_area == pytest.approx(0.024, rel=0.25)
        assert rep.total_power == pytest.approx(0.004, rel=0.25)

    def test_mixed_analog_power_share(self, reports):
        _, rep = reports["balance/mixed"]
        assert rep.analog_power_share == pytest.approx(0.99, abs=0.05)

    def test_rbf_efficiency(self, reports):
        p, _ = reports["balance/mixed"]
        area_ratio, power_ratio = cost.rbf_efficiency(p.descriptor, cost.load_coefficients())
        assert area_ratio >= 50 and power_ratio >= 10

    def test_no_analog_no_ratio(self):
        assert cost.rbf_efficiency(desc(lin()), unit_coeffs()) is None
