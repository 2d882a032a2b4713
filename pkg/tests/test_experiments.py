import json
import math

import numpy as np
import pandas as pd
import pytest

from utils.config import load_job
from utils.errors import ConfigError, DegenerateFitError, DeltaNotInSpaceError, SchemaVersionError
from utils.experiments import (
    REPLICA_COLUMNS,
    ExperimentConfig,
    fit_log_slope,
    identity_check,
    rate_sweep,
    report_read,
    report_write,
    run_experiment,
    run_replicas,
    tail_sweep,
)

NORMAL = {"type": "gaussian_mixture", "dim": 1, "weights": [1.0], "means": [[0.0]], "variances": [1.0]}
DELTA = {"type": "discrete", "dim": 1, "weights": [1.0], "locations": [[0.0]]}
# ‖δ₀‖² - ‖N(0,1)‖² en H^{-1}, α = 1
SECOND_MOMENT_N01 = 1.0 / math.sqrt(2.0 * math.pi) - (math.sqrt(3.0) - 1.0) / (2.0 * math.sqrt(math.pi))


def make_config(**overrides):
    data = {
        "experiment": "rate_sweep",
        "model": NORMAL,
        "params": {"alpha": 1.5, "p": 2.0, "dim": 1, "eps": 0.0},
        "n_grid": [32, 128, 512],
        "replicas": 100,
        "base_seed": 1234,
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


def test_slope_of_exact_power_law():
    fit = fit_log_slope([(n, 3.0 * n ** -0.5) for n in (10, 100, 1000, 10000)])
    assert fit.slope == pytest.approx(-0.5)
    assert fit.intercept == pytest.approx(math.log(3.0))
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.ci95[0] <= fit.slope <= fit.ci95[1]


def test_slope_fit_needs_three_points():
    with pytest.raises(DegenerateFitError, match="at least 3 points"):
        fit_log_slope([(1, 1.0), (2, 0.5)])


def test_slope_fit_rejects_nonpositive_values():
    with pytest.raises(DegenerateFitError, match="log of nonpositive"):
        fit_log_slope([(1, 1.0), (2, 0.0), (4, 0.25)])


def test_slope_fit_rejects_repeated_abscissae():
    with pytest.raises(DegenerateFitError, match="degenerate abscissae"):
        fit_log_slope([(1, 1.0), (1, 0.9), (4, 0.25)])


def test_config_validation():
    with pytest.raises(ValueError):
        make_config(n_grid=[64, 32, 128])
    with pytest.raises(ValueError):
        make_config(schema_version=2)
    with pytest.raises(ValueError):
        make_config(unknown_field=1)


def test_replicas_do_not_depend_on_threads():
    config = make_config(n_grid=[16, 32], replicas=6, params={"alpha": 1.5, "p": 3.0, "dim": 1, "eps": 0.1},
                         quad={"t_points": 33, "x_rule": {"kind": "tensor_grid", "points_per_axis": 257}})
    serial = run_replicas(config)
    threaded = run_replicas(config.model_copy(update={"threads": 3}))
    assert [(r.n, r.replica, r.seed) for r in serial] == [(r.n, r.replica, r.seed) for r in threaded]
    assert [r.norm_value for r in serial] == [r.norm_value for r in threaded]


def test_rate_sweep_recovers_square_root_rate():
    result = rate_sweep(make_config())
    assert abs(result.summary["slope"] + 0.5) < 0.15
    assert result.summary["r_squared"] > 0.9
    assert len(result.records) == 300
    assert "identity" in result.summary
    assert list(result.curve.columns) == ["n", "value", "fitted", "moment_bound"]


def test_rate_sweep_needs_point_mass_in_space():
    config = make_config(params={"alpha": 0.4, "p": 2.0, "dim": 1, "eps": 0.0})
    with pytest.raises(DeltaNotInSpaceError):
        rate_sweep(config)


def test_rate_sweep_on_point_mass_is_degenerate():
    config = make_config(model=DELTA, replicas=30)
    with pytest.raises(DegenerateFitError, match="degenerate zero values"):
        rate_sweep(config)


def test_identity_check_on_point_mass():
    config = make_config(experiment="identity_check", model=DELTA, params={"alpha": 1.0, "p": 2.0, "dim": 1, "eps": 0.0},
                         n_grid=[50], replicas=30)
    result = identity_check(config)
    assert result.passed
    assert result.summary["rows"][0]["exact"] == pytest.approx(0.0, abs=1e-8)


def test_identity_check_on_standard_normal():
    config = make_config(experiment="identity_check", params={"alpha": 1.0, "p": 2.0, "dim": 1, "eps": 0.0},
                         n_grid=[50], replicas=400)
    result = run_experiment(config)
    row = result.summary["rows"][0]
    assert row["exact"] == pytest.approx(SECOND_MOMENT_N01 / 50, rel=1e-6)
    assert result.passed, result.failures


def test_identity_check_requires_p_two():
    config = make_config(experiment="identity_check", params={"alpha": 1.0, "p": 3.0, "dim": 1, "eps": 0.0},
                         n_grid=[50])
    with pytest.raises(ConfigError):
        identity_check(config)


def test_tail_sweep_needs_many_replicas():
    with pytest.raises(ConfigError, match="replicas"):
        tail_sweep(make_config(experiment="tail_sweep", replicas=100))


def test_tail_sweep_envelope_dominates():
    result = tail_sweep(make_config(experiment="tail_sweep", n_grid=[32, 128], replicas=500))
    per_n = result.summary["per_n"]
    assert [row["n"] for row in per_n] == [32, 128]
    assert all(row["dominated"] for row in per_n)
    assert result.summary["c_median"] > 0
    # la mediana de la norma cae como N^{-1/2}
    assert result.summary["median_ratios"][0] == pytest.approx(0.5, rel=0.2)


@pytest.fixture
def delta_identity_result():
    config = make_config(experiment="identity_check", model=DELTA, params={"alpha": 1.0, "p": 2.0, "dim": 1, "eps": 0.0},
                         n_grid=[50], replicas=30)
    return identity_check(config)


def test_report_round_trip(tmp_path, delta_identity_result):
    out = tmp_path / "run"
    written = report_write(delta_identity_result, out)
    payload = report_read(out)
    assert payload["schema_version"] == 1
    assert payload["experiment"] == "identity_check"
    assert payload["passed"] == written["passed"]
    assert payload["config"]["replicas"] == 30
    frame = pd.read_csv(out / "replicas.csv")
    assert list(frame.columns) == REPLICA_COLUMNS
    assert len(frame) == 30
    assert (out / "curve.csv").exists()


def test_report_write_respects_create_dirs(tmp_path, delta_identity_result):
    with pytest.raises(FileNotFoundError):
        report_write(delta_identity_result, tmp_path / "missing" / "deeper", create_dirs=False)


def test_report_read_rejects_unknown_version(tmp_path, delta_identity_result):
    report_write(delta_identity_result, tmp_path)
    target = tmp_path / "summary.json"
    payload = json.loads(target.read_text())
    payload["schema_version"] = 99
    target.write_text(json.dumps(payload))
    with pytest.raises(SchemaVersionError):
        report_read(target)


def test_rerun_from_summary_is_identical(tmp_path, delta_identity_result):
    report_write(delta_identity_result, tmp_path)
    job = load_job("identity-check", str(tmp_path / "summary.json"))
    again = identity_check(job)
    np.testing.assert_array_equal(again.to_frame()["norm_value"], delta_identity_result.to_frame()["norm_value"])
    np.testing.assert_array_equal(again.to_frame()["seed"], delta_identity_result.to_frame()["seed"])
