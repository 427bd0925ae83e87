import numpy as np
import pytest

from crowdsig import (
    EquicorrParams,
    MonteCarloConfig,
    model_plot,
    mse_monte_carlo,
    sample_moments,
    simulate_equicorrelated,
    squared_error_distribution,
)
from crowdsig.factor import deviation_grid
from crowdsig.svg import SvgStyle, render_svg


@pytest.fixture(scope="module")
def panel():
    return simulate_equicorrelated(6, 30, 0.5, 1.0, seed=1)


def test_signature_line_chart(panel):
    curves = [model_plot(EquicorrParams(r, 1.0), k_max=10, kind="mse_ratio")
              for r in (0.1, 0.5, 0.9)]
    doc = render_svg(curves, labels=["rho=0.1", "rho=0.5", "rho=0.9"],
                     style=SvgStyle(title="model curves", ylabel="MSE ratio"))
    assert doc.lstrip().startswith("<?xml")
    assert "</svg>" in doc
    for label in ("rho=0.1", "rho=0.5", "rho=0.9"):
        assert label in doc


def test_single_point_plot():
    plot = model_plot(EquicorrParams(0.5, 1.0), k_max=1, kind="mse")
    doc = render_svg(plot)
    assert "</svg>" in doc


def test_monte_carlo_band(panel):
    mc = mse_monte_carlo(panel, MonteCarloConfig(b=50, seed=2, k_max=6))
    doc = render_svg(mc)
    assert "</svg>" in doc


def test_distribution_boxplots(panel):
    dist = squared_error_distribution(panel, MonteCarloConfig(b=30, seed=3, k_max=5))
    doc = render_svg(dist)
    assert "</svg>" in doc


def test_grid_legend(panel):
    grid = deviation_grid(sample_moments(panel))
    doc = render_svg(grid)
    for band in ("&lt;10%", "10-20%", "20-30%", "&gt;30%"):
        assert band in doc


def test_deterministic_bytes(panel):
    plot = model_plot(EquicorrParams(0.4, 1.0), k_max=8, kind="mse_ratio")
    assert render_svg(plot) == render_svg(plot)


def test_unknown_type_rejected():
    with pytest.raises(TypeError):
        render_svg(np.arange(3))


def test_empty_rejected():
    with pytest.raises(ValueError):
        render_svg([])
