"""Evaluation harness: out-of-sample scoring, sweeps, experiments, file I/O."""

import json
import math

import numpy as np
import pytest
from scipy import stats

from robustnv import (
    CostStructure,
    DemandKind,
    ExperimentConfig,
    InputError,
    Method,
    SampleSet,
    SweepSeries,
    draw_demand,
    generate_demand,
    load_demand_csv,
    misspec_quantity,
    oracle_check,
    out_of_sample_profit,
    price_threshold_scan,
    run_experiment,
    scarf_quantity,
    sweep,
    variance_threshold_scan,
    write_demand_csv,
)
from robustnv.evaluation import (
    config_digest,
    demand_csv_text,
    parse_sweep_csv,
    report_csv_text,
    report_json_text,
    sweep_csv_text,
    sweep_json_text,
)

COST = CostStructure(10, 3)


def stationary_config(seed, n_train=60, n_test=60, grid=(0.5, 2.0, 8.0, math.inf)):
    train = generate_demand("TRUNC_NORMAL", {"mu": 6.0, "sigma": 2.0}, n_train, seed)
    test = generate_demand("TRUNC_NORMAL", {"mu": 6.0, "sigma": 2.0}, n_test, seed + 10_000)
    return ExperimentConfig(
        train=train,
        cost=COST,
        alpha_grid=grid,
        methods=tuple(Method),
        seed=seed,
        test=test,
    )


# ---------------------------------------------------------------------------
# out-of-sample scoring
# ---------------------------------------------------------------------------


def test_out_of_sample_profit_examples():
    assert out_of_sample_profit(2.0, SampleSet((1.0, 3.0)), COST) == pytest.approx(9.0)
    assert out_of_sample_profit(0.0, SampleSet((1.0, 3.0)), COST) == 0.0
    with pytest.raises(InputError):
        out_of_sample_profit(-1.0, SampleSet((1.0, 3.0)), COST)


def test_out_of_sample_profit_linear_in_concatenation():
    rng = np.random.default_rng(2)
    a = tuple(float(v) for v in rng.uniform(1, 9, 8))
    b = tuple(float(v) for v in rng.uniform(1, 9, 12))
    q = 4.2
    combined = out_of_sample_profit(q, SampleSet(a + b), COST)
    parts = (
        len(a) * out_of_sample_profit(q, SampleSet(a), COST)
        + len(b) * out_of_sample_profit(q, SampleSet(b), COST)
    ) / (len(a) + len(b))
    assert combined == pytest.approx(parts, rel=1e-12)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def test_alpha_sweep_monotone_and_capped():
    train = SampleSet((2.0, 2.0, 6.0, 6.0))  # moments (4, 2)
    config = ExperimentConfig(
        train=train, cost=COST, alpha_grid=(1.0,), methods=(Method.MISSPEC,), seed=0
    )
    values = [float(a) for a in np.geomspace(0.01, 500.0, 60)] + [math.inf]
    series = sweep("alpha", config, values=values)
    cap = 4.872872
    for lo, hi in zip(series.quantities, series.quantities[1:]):
        assert hi >= lo - 1e-12
    assert all(q <= cap + 1e-6 for q in series.quantities)
    assert series.quantities[-1] == pytest.approx(4.872871560943969, abs=1e-9)
    # worst-case values come straight from the closed-form solve
    mid = len(values) // 2
    rep = misspec_quantity(values[mid], train.moments, COST)
    assert series.in_sample[mid] == pytest.approx(rep.value, rel=1e-12)
    assert all(math.isnan(x) for x in series.out_of_sample)  # no test data


def test_price_sweep_turn_matches_threshold_scan():
    train = SampleSet((1.5, 1.5, 6.5, 6.5))  # moments (4, 2.5)
    config = ExperimentConfig(
        train=train, cost=CostStructure(10, 3), alpha_grid=(4.0,), methods=(Method.MISSPEC,), seed=0
    )
    grid = [float(p) for p in np.linspace(4.0, 40.0, 721)]
    series = sweep("price", config, values=grid, alpha=4.0)
    scan = price_threshold_scan(4.0, train.moments, 3.0, grid)
    turn = series.values[int(np.argmax(series.quantities))]
    assert scan is not None
    assert abs(turn - scan) <= (grid[1] - grid[0]) + 1e-12


def test_sigma_sweep_turn_matches_threshold_scan():
    train = SampleSet((2.0, 2.0, 6.0, 6.0))
    config = ExperimentConfig(
        train=train, cost=COST, alpha_grid=(1.5,), methods=(Method.MISSPEC,), seed=0
    )
    hi = 4.0 * math.sqrt(0.7 / 0.3) * 0.999
    grid = [float(s) for s in np.linspace(0.05, hi, 601)]
    series = sweep("sigma", config, values=grid)  # sole grid entry supplies alpha
    scan = variance_threshold_scan(1.5, COST, 4.0, grid)
    turn = series.values[int(np.argmax(series.quantities))]
    assert scan is not None
    assert abs(turn - scan) <= (grid[1] - grid[0]) + 1e-12
    assert scan == pytest.approx(8.0 / math.sqrt(21.0), abs=0.02)


def test_sweep_out_of_sample_uses_point_price():
    config = stationary_config(3, grid=(2.0,))
    series = sweep("price", config, values=[6.0, 9.0, 12.0], alpha=2.0)
    # recompute one point by hand at that point's price
    cc = CostStructure(9.0, 3.0)
    rep = misspec_quantity(2.0, config.train.moments, cc)
    assert series.quantities[1] == pytest.approx(rep.quantity, rel=1e-12)
    assert series.out_of_sample[1] == pytest.approx(
        out_of_sample_profit(rep.quantity, config.test, cc), rel=1e-12
    )


def test_sweep_validation():
    config = stationary_config(1)
    with pytest.raises(InputError):
        sweep("kappa", config)
    with pytest.raises(InputError):
        sweep("price", config)  # four grid entries, no explicit alpha
    with pytest.raises(InputError):
        SweepSeries("alpha", (1.0, 2.0), (1.0,), (1.0, 2.0), (1.0, 2.0))


# ---------------------------------------------------------------------------
# experiment protocol
# ---------------------------------------------------------------------------


def test_run_experiment_shape_and_determinism():
    config = stationary_config(7)
    report = run_experiment(config)
    assert len(report.cells) == len(config.methods) * len(config.alpha_grid)
    assert report_json_text(report) == report_json_text(run_experiment(config))
    # constant methods do not react to the index; the solver one does
    by_method = {}
    for cell in report.cells:
        by_method.setdefault(cell.method, []).append(cell)
    for m in (Method.NOMINAL, Method.AMBIGUITY):
        qs = {c.quantity for c in by_method[m]}
        assert len(qs) == 1
    misspec_qs = [c.quantity for c in by_method[Method.MISSPEC]]
    assert misspec_qs == sorted(misspec_qs)
    assert by_method[Method.AMBIGUITY][0].worst_case == pytest.approx(
        scarf_quantity(config.train.moments, COST).value, rel=1e-12
    )
    assert by_method[Method.NOMINAL][0].worst_case is None
    # selections: all three present with test data
    sel = dict(report.selections)
    assert set(sel) == {"cv", "formula", "stress"}
    assert sel["cv"] in set(config.alpha_grid)


def test_run_experiment_without_test_data():
    config = stationary_config(9)
    config = ExperimentConfig(
        train=config.train,
        cost=config.cost,
        alpha_grid=config.alpha_grid,
        methods=(Method.MISSPEC, Method.TV),
        seed=config.seed,
        test=None,
    )
    report = run_experiment(config)
    assert all(c.out_of_sample is None for c in report.cells)
    sel = dict(report.selections)
    assert sel["formula"] is None and sel["stress"] is None
    assert sel["cv"] is not None


def test_config_digest_tracks_inputs():
    base = stationary_config(5)
    other = ExperimentConfig(
        train=base.train,
        cost=base.cost,
        alpha_grid=base.alpha_grid + (99.0,),
        methods=base.methods,
        seed=base.seed,
        test=base.test,
    )
    assert config_digest(base) != config_digest(other)
    assert config_digest(base) == config_digest(stationary_config(5))


def test_stationary_data_favors_the_nominal_method():
    # with no shift between train and test, the sample-quantile order should
    # win (up to sampling noise) against the robust alternatives
    wins = 0
    seeds = range(31)
    for seed in seeds:
        report = run_experiment(stationary_config(200 + seed, n_test=200))
        best = {}
        for cell in report.cells:
            cur = best.get(cell.method)
            if cur is None or cell.out_of_sample > cur:
                best[cell.method] = cell.out_of_sample
        nominal = best.pop(Method.NOMINAL)
        rival = max(best.values())
        if nominal >= rival - 0.02 * abs(rival):
            wins += 1
    assert wins > len(seeds) // 2, f"nominal led on only {wins}/31 seeds"


def test_downward_shift_lets_misspec_beat_ambiguity():
    hits = 0
    seeds = range(31)
    for seed in seeds:
        train = generate_demand("TRUNC_NORMAL", {"mu": 6.0, "sigma": 2.0}, 60, 600 + seed)
        shifted = SampleSet(tuple(0.65 * v for v in generate_demand(
            "TRUNC_NORMAL", {"mu": 6.0, "sigma": 2.0}, 120, 9_600 + seed
        ).values))
        config = ExperimentConfig(
            train=train,
            cost=COST,
            alpha_grid=tuple(float(a) for a in np.geomspace(0.05, 20.0, 10)),
            methods=(Method.AMBIGUITY, Method.MISSPEC),
            seed=seed,
            test=shifted,
        )
        report = run_experiment(config)
        amb = max(
            c.out_of_sample for c in report.cells if c.method is Method.AMBIGUITY
        )
        mis = max(
            c.out_of_sample for c in report.cells if c.method is Method.MISSPEC
        )
        if mis >= amb:
            hits += 1
    assert hits > len(seeds) // 2, f"misspec matched ambiguity on only {hits}/31 seeds"


# ---------------------------------------------------------------------------
# synthetic demand
# ---------------------------------------------------------------------------


def test_draw_demand_reproducible_and_nonnegative():
    a = draw_demand("TRUNC_NORMAL", {"mu": 4.0, "sigma": 2.0}, 50, seed=12)
    b = draw_demand("TRUNC_NORMAL", {"mu": 4.0, "sigma": 2.0}, 50, seed=12)
    c = draw_demand("TRUNC_NORMAL", {"mu": 4.0, "sigma": 2.0}, 50, seed=13)
    assert a == b
    assert a != c
    assert all(v >= 0.0 for v in a)
    single = draw_demand(DemandKind.LOGNORMAL, {"mu": 1.0, "sigma": 0.4}, 1, seed=0)
    assert len(single) == 1 and single[0] >= 0.0


def test_trunc_normal_mean_matches_formula():
    n = 100_000
    vals = np.asarray(draw_demand("TRUNC_NORMAL", {"mu": 4.0, "sigma": 2.0}, n, seed=99))
    a = (0.0 - 4.0) / 2.0
    target_mean = stats.truncnorm.mean(a, np.inf, loc=4.0, scale=2.0)
    target_std = stats.truncnorm.std(a, np.inf, loc=4.0, scale=2.0)
    assert abs(vals.mean() - target_mean) <= 3.0 * target_std / math.sqrt(n)


def test_regime_shift_concatenates_two_segments():
    vals = draw_demand(
        "REGIME_SHIFT",
        {"mu": 10.0, "sigma": 1.0, "mu2": 3.0, "sigma2": 1.0, "split": 0.5},
        400,
        seed=21,
    )
    head, tail = np.asarray(vals[:200]), np.asarray(vals[200:])
    assert head.mean() > tail.mean() + 4.0
    with pytest.raises(InputError):
        draw_demand("REGIME_SHIFT", {"mu": 10.0, "sigma": 1.0}, 10, seed=0)
    with pytest.raises(InputError):
        draw_demand("TRUNC_NORMAL", {"mu": 4.0, "sigma": 2.0}, 0, seed=0)
    with pytest.raises(ValueError):
        draw_demand("CAUCHY", {"mu": 4.0, "sigma": 2.0}, 5, seed=0)


def test_generate_demand_needs_two_draws():
    with pytest.raises(InputError):
        generate_demand("TRUNC_NORMAL", {"mu": 4.0, "sigma": 2.0}, 1, seed=0)
    s = generate_demand("TRUNC_NORMAL", {"mu": 4.0, "sigma": 2.0}, 2, seed=0)
    assert s.n == 2


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def test_demand_csv_round_trip(tmp_path):
    path = str(tmp_path / "demand.csv")
    values = (1.25, 0.0, 7.5, 3.125)
    write_demand_csv(path, values)
    text = open(path, encoding="utf-8").read()
    assert text.startswith("date,demand\n2020-01-01,1.250000\n2020-01-02,0.000000\n")
    loaded = load_demand_csv(path)
    assert loaded.values == pytest.approx(values, abs=1e-9)


@pytest.mark.parametrize(
    "body,fragment",
    [
        ("count,demand\n2020-01-01,4\n2020-01-02,5\n", "line 1"),
        ("date,demand\nnot-a-date,4\n2020-01-02,5\n", "line 2"),
        ("date,demand\n2020-01-01,4\n2020-01-02,\n", "line 3"),
        ("date,demand\n2020-01-01,4\n2020-01-02,abc\n", "line 3"),
        ("date,demand\n2020-01-01,4\n2020-01-02,-1\n", "line 3"),
        ("date,demand\n2020-01-01,4,9\n", "line 2"),
        ("date,demand\n2020-01-01,4\n", "at least 2"),
    ],
)
def test_demand_csv_schema_errors_carry_line_numbers(tmp_path, body, fragment):
    path = tmp_path / "bad.csv"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(InputError) as err:
        load_demand_csv(str(path))
    assert fragment in str(err.value)


def test_sweep_csv_round_trip_exact():
    config = stationary_config(17, grid=(0.5, 2.0, 8.0))
    series = sweep("alpha", config, values=[1 / 3, 2 / 7, 5.0, math.inf])
    text = sweep_csv_text(series)
    assert parse_sweep_csv(text) == series
    with pytest.raises(InputError):
        parse_sweep_csv("alpha,value\n")
    mixed = text.splitlines()
    mixed[2] = mixed[2].replace("alpha", "price", 1)
    with pytest.raises(InputError):
        parse_sweep_csv("\n".join(mixed) + "\n")


def test_report_emission_schema():
    config = stationary_config(23, grid=(0.5, math.inf))
    report = run_experiment(config)
    doc = json.loads(report_json_text(report))
    assert set(doc) == {"meta", "reserved_methods", "selections", "cells"}
    assert doc["meta"]["seed"] == 23
    assert len(doc["meta"]["config_sha256"]) == 64
    assert doc["meta"]["version"] == report.version
    assert doc["reserved_methods"] == ["DELAGE_YE"]
    infinite = [c for c in doc["cells"] if c["alpha"] == "inf"]
    assert infinite and all(isinstance(c["quantity"], float) for c in infinite)
    csv_text = report_csv_text(report)
    lines = csv_text.strip().splitlines()
    assert lines[0] == "method,alpha,quantity,in_sample,out_of_sample,worst_case"
    assert len(lines) == 1 + len(report.cells)
    # six-decimal fixed formatting in the CSV twin
    assert all(
        "." in field and len(field.split(".")[1]) == 6
        for field in lines[1].split(",")[2:5]
    )
    json_doc = sweep_json_text(sweep("alpha", config))
    assert json.loads(json_doc)["axis"] == "alpha"


def test_demand_csv_text_rejects_negative_and_empty():
    with pytest.raises(InputError):
        demand_csv_text([])
    with pytest.raises(InputError):
        demand_csv_text([1.0, -2.0])


# ---------------------------------------------------------------------------
# oracle batch
# ---------------------------------------------------------------------------


def test_oracle_check_small_batch_passes():
    summary = oracle_check(seed=101, instances=6, grid_points=101, q_points=51)
    assert summary["passed"] is True
    assert summary["max_quantity_gap_steps"] <= 1.0
    assert summary["max_value_gap_fraction_of_budget"] <= 1.0
    with pytest.raises(InputError):
        oracle_check(seed=0, instances=0)
    with pytest.raises(InputError):
        oracle_check(seed=0, instances=1, grid_points=500)
