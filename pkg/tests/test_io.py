import json

import numpy as np
import pytest

from crowdsig import (
    EquicorrParams,
    ErrorPanel,
    MatchEstimate,
    MonteCarloConfig,
    model_plot,
    mse_closed_form,
    mse_monte_carlo,
    sample_moments,
    simulate_equicorrelated,
    squared_error_distribution,
)
from crowdsig import factor as factor_mod
from crowdsig import io as cio
from crowdsig.errors import SchemaError


def unbalanced_panel():
    # includes a period with no observations at all
    v = np.array([
        [1.0, np.nan, 2.0, -0.5],
        [np.nan, np.nan, 0.5, 1.5],
        [0.25, np.nan, np.nan, -1.0],
    ])
    return ErrorPanel([3, 7, 11], [40, 41, 42, 43], v, h=2)


class TestPanelRoundTrip:
    def test_exact_round_trip(self, tmp_path):
        p = unbalanced_panel()
        csv_path, meta_path = cio.write_panel(p, tmp_path / "p.csv", variable="X")
        back, meta = cio.read_panel(csv_path)
        assert np.array_equal(back.values, p.values, equal_nan=True)
        assert np.array_equal(back.periods, p.periods)
        assert np.array_equal(back.forecaster_ids, p.forecaster_ids)
        assert back.h == 2
        assert meta["variable"] == "X"

    def test_quarterly_labels(self, tmp_path):
        p = ErrorPanel([1], [7961, 7962], [[0.5, -0.25]], h=1)  # 1990Q2, 1990Q3
        csv_path, _ = cio.write_panel(p, tmp_path / "q.csv", period_format="quarterly")
        text = csv_path.read_text()
        assert "1990Q2" in text
        back, _ = cio.read_panel(csv_path)
        assert np.array_equal(back.periods, p.periods)

    def test_full_precision_floats(self, tmp_path):
        values = np.array([[1.0 / 3.0, np.pi, -2.0 ** 0.5]])
        p = ErrorPanel([1], [0, 1, 2], values)
        csv_path, _ = cio.write_panel(p, tmp_path / "f.csv")
        back, _ = cio.read_panel(csv_path)
        assert np.array_equal(back.values, values)

    def test_missing_sidecar(self, tmp_path):
        (tmp_path / "x.csv").write_text("period,forecaster_id,error\n0,1,0.5\n")
        with pytest.raises(SchemaError):
            cio.read_panel(tmp_path / "x.csv")

    def test_simulated_round_trip(self, tmp_path):
        p = simulate_equicorrelated(7, 23, 0.4, 2.0, seed=5)
        csv_path, _ = cio.write_panel(p, tmp_path / "s.csv")
        back, _ = cio.read_panel(csv_path)
        assert np.array_equal(back.values, p.values)


class TestPlotSerialization:
    def test_csv_columns(self, tmp_path):
        p = simulate_equicorrelated(5, 12, 0.3, 1.0, seed=1)
        mc = mse_monte_carlo(p, MonteCarloConfig(b=40, seed=2, k_max=5))
        path = cio.write_plot_csv(mc, tmp_path / "plot.csv")
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "k,value,min,max"
        assert len(lines) == 6
        first = lines[1].split(",")
        assert first[0] == "1"
        assert float(first[1]) == mc.values[0]
        assert float(first[2]) == mc.mins[0]

    def test_csv_blank_extremes_for_closed_form(self, tmp_path):
        plot = model_plot(EquicorrParams(0.3, 1.0), k_max=3)
        lines = cio.write_plot_csv(plot, tmp_path / "m.csv").read_text().strip().splitlines()
        assert lines[1].endswith(",,")

    def test_json_round_trip(self, tmp_path):
        p = simulate_equicorrelated(5, 12, 0.3, 1.0, seed=1)
        mc = mse_monte_carlo(p, MonteCarloConfig(b=40, seed=2, k_max=5))
        path = cio.write_plot_json(mc, tmp_path / "plot.json")
        back = cio.read_plot_json(path)
        assert np.array_equal(back.values, mc.values)
        assert np.array_equal(back.mins, mc.mins)
        assert np.array_equal(back.reps, mc.reps)
        assert back.kind == mc.kind and back.method == mc.method

    def test_json_metadata(self, tmp_path):
        plot = mse_closed_form(sample_moments(unbalanced_panel()), k_max=2)
        d = cio.plot_to_dict(plot)
        assert d["approximate"] is True
        assert d["method"] == "closed_form"


class TestDistributionSerialization:
    def test_csv_and_json(self, tmp_path):
        p = simulate_equicorrelated(6, 30, 0.4, 1.0, seed=3)
        dist = squared_error_distribution(p, MonteCarloConfig(b=60, seed=4, k_max=4))
        csv_path = cio.write_distribution_csv(dist, tmp_path / "d.csv")
        header = csv_path.read_text().splitlines()[0]
        assert header == "k,q1,median,q3,lo,hi,outliers"
        json_path = cio.write_distribution_json(dist, tmp_path / "d.json")
        d = json.loads(json_path.read_text())
        assert d["median"][0] == 1.0
        assert len(d["outliers"]) == 4


class TestEstimateSerialization:
    def test_json_schema(self, tmp_path):
        est = MatchEstimate(rho=0.5, sigma2=2.0, q=1e-9, method="closed_form",
                            valid=True, se_rho=0.03, se_sigma2=0.2)
        path = cio.write_estimate_json(est, tmp_path / "e.json", n_invalid_replicates=4)
        d = json.loads(path.read_text())
        assert d["rho"] == 0.5 and d["sigma2"] == 2.0
        assert d["se_rho"] == 0.03 and d["n_invalid_replicates"] == 4
        assert d["valid"] is True

    def test_table_layout(self, tmp_path):
        cols = {
            "h=1": MatchEstimate(0.801, 18.562, 5.99e-5, "numeric_profile", True,
                                 se_rho=0.036, se_sigma2=0.606),
            "h=2": MatchEstimate(0.843, 21.170, 3.95e-6, "numeric_profile", True),
        }
        path = cio.write_estimates_table_csv(cols, tmp_path / "t.csv")
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "parameter,h=1,h=2"
        rows = {ln.split(",")[0]: ln.split(",")[1:] for ln in lines[1:]}
        assert float(rows["sigma2"][0]) == 18.562
        assert float(rows["mse_ratio_k5"][0]) == pytest.approx(0.8408)
        assert float(rows["mse_ratio_k15"][1]) == pytest.approx((1 + 14 * 0.843) / 15)
        assert rows["se_rho"][1] == ""


class TestGridSerialization:
    def test_grid_csv(self, tmp_path):
        p = simulate_equicorrelated(4, 40, 0.5, 1.0, seed=6)
        grid = factor_mod.deviation_grid(sample_moments(p))
        path = cio.write_deviation_grid_csv(grid, tmp_path / "g.csv")
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "row_id,col_id,value,deviation_pct,bin"
        assert len(lines) == 17  # 4x4 cells + header
        assert lines[1].split(",")[4] in ("under10", "b10to20", "b20to30", "over30")


class TestCovarianceReader:
    def test_headerless(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("1.0,0.5\n0.5,2.0\n")
        assert np.array_equal(cio.read_covariance_csv(f), [[1.0, 0.5], [0.5, 2.0]])

    def test_with_header(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("a,b\n1.0,0.5\n0.5,2.0\n")
        assert np.array_equal(cio.read_covariance_csv(f), [[1.0, 0.5], [0.5, 2.0]])

    def test_with_header_and_row_labels(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("id,a,b\na,1.0,0.5\nb,0.5,2.0\n")
        assert np.array_equal(cio.read_covariance_csv(f), [[1.0, 0.5], [0.5, 2.0]])

    def test_non_square_rejected(self, tmp_path):
        f = tmp_path / "c.csv"
        f.write_text("1.0,0.5,0.2\n0.5,2.0,0.1\n")
        with pytest.raises(SchemaError):
            cio.read_covariance_csv(f)


def test_fmt_shortest_round_trip():
    for x in (1.0 / 3.0, 0.1, 1e-20, 123456.789):
        assert float(cio.fmt(x)) == x
    assert cio.fmt(3) == "3"
    assert cio.fmt(float("nan")) == ""
    assert cio.fmt("1990Q2") == "1990Q2"
