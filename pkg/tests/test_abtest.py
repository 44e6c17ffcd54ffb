import math

import numpy as np
import pytest
from scipy import integrate

from suggestlab import abtest
from suggestlab.errors import ContractError

WEEK = 7 * 86400.0
T0 = 1_700_000_000.0


def ev(case_id, group, chosen, t_sel, ts=T0, shown=None):
    return abtest.SelectionEvent(
        case_id=case_id, timestamp=ts, group=group,
        shown_template_ids=shown if shown is not None else ([1, 2, 3, 4, 5] if group == "treatment" else []),
        chosen_template_id=chosen, selection_time_sec=t_sel)


# ---------------------------------------------------------------------------
# group assignment
# ---------------------------------------------------------------------------

def test_assign_deterministic():
    for cid in ("case-1", "case-2", "x"):
        assert abtest.assign_group(cid, 0.02, "s1") == abtest.assign_group(cid, 0.02, "s1")


def test_assign_fraction_monte_carlo():
    n = 100_000
    holdout = sum(abtest.assign_group(f"case-{i}", 0.02, "salt") == "holdout" for i in range(n))
    assert abs(holdout / n - 0.02) < 0.003


def test_assign_small_fraction_mostly_treatment():
    n = 2000
    holdout = sum(abtest.assign_group(f"c{i}", 1e-9, "salt") == "holdout" for i in range(n))
    assert holdout == 0


def test_assign_independent_of_order():
    ids = [f"case-{i}" for i in range(500)]
    before = {c: abtest.assign_group(c, 0.3, "z") for c in ids}
    rng = np.random.default_rng(0)
    rng.shuffle(ids)
    after = {c: abtest.assign_group(c, 0.3, "z") for c in ids}
    assert before == after


def test_event_invariants():
    with pytest.raises(ContractError):
        ev("a", "holdout", 1, 5.0, shown=[1])
    with pytest.raises(ContractError):
        ev("a", "treatment", 1, 0.0)


# ---------------------------------------------------------------------------
# selection-time summaries
# ---------------------------------------------------------------------------

def test_summary_difference_shape():
    rng = np.random.default_rng(1)
    events = []
    for i in range(200):
        events.append(ev(f"t{i}", "treatment", 1, max(0.5, rng.normal(13.0, 2.0))))
        events.append(ev(f"h{i}", "holdout", 1, max(0.5, rng.normal(19.0, 2.0))))
    (s,) = abtest.selection_time_summary(events)
    assert s.treatment_mean == pytest.approx(13.0, abs=0.6)
    assert s.holdout_mean == pytest.approx(19.0, abs=0.6)
    assert s.difference == pytest.approx(6.0, abs=1.0)


def test_summary_identical_distributions():
    events = []
    for i in range(300):
        t = 10.0 + (i % 7)
        events.append(ev(f"t{i}", "treatment", 1, t))
        events.append(ev(f"h{i}", "holdout", 1, t))
    (s,) = abtest.selection_time_summary(events)
    assert s.difference == pytest.approx(0.0, abs=1e-9)


def test_summary_missing_group_omits_difference():
    events = [ev(f"t{i}", "treatment", 1, 12.0) for i in range(5)]
    (s,) = abtest.selection_time_summary(events)
    assert s.holdout_mean is None and s.difference is None
    assert s.treatment_mean == pytest.approx(12.0)


def test_summary_buckets_by_week():
    events = [ev("a", "treatment", 1, 10.0, ts=T0),
              ev("b", "treatment", 1, 20.0, ts=T0 + 3 * WEEK)]
    summaries = abtest.selection_time_summary(events)
    assert len(summaries) == 2
    assert summaries[0].bucket_start < summaries[1].bucket_start


# ---------------------------------------------------------------------------
# Mann-Kendall
# ---------------------------------------------------------------------------

def test_mk_strictly_increasing_small():
    r = abtest.mann_kendall([1, 2, 3, 4])
    assert r.S == 6
    assert r.var_S == pytest.approx(8.667, abs=1e-3)
    assert r.z == pytest.approx(1.698, abs=1e-3)
    assert r.p_value == pytest.approx(0.0896, abs=2e-3)
    assert r.direction == "increasing"


def test_mk_constant():
    r = abtest.mann_kendall([3.0, 3.0, 3.0, 3.0])
    assert r.S == 0 and r.direction == "none" and r.p_value == 1.0


def test_mk_reverse_antisymmetry():
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = rng.normal(size=rng.integers(3, 20))
        a = abtest.mann_kendall(x)
        b = abtest.mann_kendall(x[::-1])
        assert a.S == -b.S
        assert a.var_S == pytest.approx(b.var_S)


def test_mk_matches_pair_enumeration_oracle():
    rng = np.random.default_rng(3)
    for _ in range(300):
        n = int(rng.integers(3, 13))
        x = rng.integers(0, 5, size=n).astype(float)  # ties on purpose
        r = abtest.mann_kendall(x)
        s = sum(np.sign(x[j] - x[i]) for i in range(n) for j in range(i + 1, n))
        assert r.S == s
        # tie-corrected variance from the definition
        ties = [int(c) for c in np.unique(x, return_counts=True)[1]]
        var = (n * (n - 1) * (2 * n + 5) - sum(t * (t - 1) * (2 * t + 5) for t in ties)) / 18
        assert r.var_S == pytest.approx(var)
        if var > 0:
            z = (s - np.sign(s)) / math.sqrt(var) if s != 0 else 0.0
            assert r.z == pytest.approx(z)
            assert r.p_value == pytest.approx(math.erfc(abs(z) / math.sqrt(2)), abs=1e-9)


def test_mk_too_short():
    with pytest.raises(ContractError):
        abtest.mann_kendall([1.0, 2.0])


# ---------------------------------------------------------------------------
# Welch's t-test
# ---------------------------------------------------------------------------

def test_welch_identical_samples():
    a = [1.0, 2.0, 3.0, 4.0]
    r = abtest.welch_t_test(a, a)
    assert r.t_stat == 0.0 and r.p_value == pytest.approx(1.0)


def test_welch_clear_separation():
    rng = np.random.default_rng(4)
    a = rng.normal(0.0, 0.1, size=50)
    r = abtest.welch_t_test(a + 100.0, a)
    assert r.p_value < 1e-6


def test_welch_symmetry():
    rng = np.random.default_rng(5)
    a = rng.normal(0, 1, 30)
    b = rng.normal(0.5, 2, 40)
    r1 = abtest.welch_t_test(a, b)
    r2 = abtest.welch_t_test(b, a)
    assert r1.t_stat == pytest.approx(-r2.t_stat)
    assert r1.p_value == pytest.approx(r2.p_value)


def _t_pdf(x, dof):
    return math.exp(math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2)) \
        / math.sqrt(dof * math.pi) * (1 + x * x / dof) ** (-(dof + 1) / 2)


def test_welch_p_matches_integration_oracle():
    rng = np.random.default_rng(6)
    a = rng.normal(0.0, 1.0, size=50)
    b = rng.normal(0.4, 1.5, size=50)
    r = abtest.welch_t_test(a, b)
    tail, _ = integrate.quad(lambda x: _t_pdf(x, r.dof), abs(r.t_stat), np.inf)
    assert r.p_value == pytest.approx(2 * tail, abs=1e-6)


def test_welch_degenerate():
    with pytest.raises(ContractError):
        abtest.welch_t_test([1.0], [1.0, 2.0])
    with pytest.raises(ContractError):
        abtest.welch_t_test([2.0, 2.0], [3.0, 3.0])


# ---------------------------------------------------------------------------
# accuracy vs savings
# ---------------------------------------------------------------------------

def test_accuracy_vs_savings_single_template():
    events = [ev("h1", "holdout", 0, 20.0), ev("h2", "holdout", 0, 18.0),
              ev("t1", "treatment", 0, 9.0)]
    preds = [{"case_id": "h1", "timestamp": T0 - 1, "template_ids": [0, 1, 2, 3, 4]},
             {"case_id": "h2", "timestamp": T0 - 1, "template_ids": [5, 6, 7, 8, 9]}]
    rows = abtest.accuracy_vs_savings(events, preds, top_n_templates=10)
    assert len(rows) == 1
    r = rows[0]
    assert r.template_id == 0 and r.volume == 3
    assert r.accuracy == pytest.approx(0.5)
    assert r.mean_saving == pytest.approx(19.0 - 9.0)


def test_accuracy_vs_savings_skips_templates_without_holdout():
    events = [ev("t1", "treatment", 4, 9.0)]
    preds = []
    assert abtest.accuracy_vs_savings(events, preds, 5) == []


def test_accuracy_vs_savings_top_n_larger_than_catalog():
    cfg = abtest.SimulatorConfig(n_sessions=4000, n_templates=8, holdout_fraction=0.3, seed=1)
    events, preds = abtest.simulate_events(cfg)
    rows = abtest.accuracy_vs_savings(events, preds, top_n_templates=1000)
    assert 0 < len(rows) <= 8


def test_simulated_dependence_detected_as_increasing_trend():
    cfg = abtest.SimulatorConfig(n_sessions=20_000, n_templates=24, holdout_fraction=0.3, seed=7)
    events, preds = abtest.simulate_events(cfg)
    rows = abtest.accuracy_vs_savings(events, preds, top_n_templates=24)
    assert len(rows) >= 15
    ordered = sorted(rows, key=lambda r: r.accuracy)
    trend = abtest.mann_kendall([r.mean_saving for r in ordered])
    assert trend.direction == "increasing"
    assert trend.p_value < 0.05


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_event_log_roundtrip(tmp_path):
    cfg = abtest.SimulatorConfig(n_sessions=50, n_templates=4, holdout_fraction=0.3, seed=2)
    events, preds = abtest.simulate_events(cfg)
    ep, pp = tmp_path / "events.ndjson", tmp_path / "preds.ndjson"
    abtest.save_events(events, ep)
    abtest.save_predictions(preds, pp)
    loaded = abtest.load_events(ep)
    assert loaded == events
    loaded_p = abtest.load_predictions(pp)
    assert [p["case_id"] for p in loaded_p] == [p["case_id"] for p in preds]
    assert loaded_p[0]["timestamp"] == pytest.approx(preds[0]["timestamp"], abs=1e-5)


def test_summary_csv_and_plots(tmp_path):
    cfg = abtest.SimulatorConfig(n_sessions=3000, n_templates=8, holdout_fraction=0.3, seed=3)
    events, preds = abtest.simulate_events(cfg)
    summaries = abtest.selection_time_summary(events)
    rows = abtest.accuracy_vs_savings(events, preds, 8)
    abtest.write_summary_csv(summaries, tmp_path / "weekly.csv")
    abtest.write_savings_csv(rows, tmp_path / "savings.csv")
    written = abtest.plot_summaries(summaries, rows, tmp_path)
    assert (tmp_path / "weekly.csv").exists()
    assert any(p.name == "weekly_selection_time_difference.png" for p in written)


def test_simulator_deterministic():
    cfg = abtest.SimulatorConfig(n_sessions=200, n_templates=6, seed=9)
    e1, p1 = abtest.simulate_events(cfg)
    e2, p2 = abtest.simulate_events(cfg)
    assert e1 == e2 and p1 == p2
