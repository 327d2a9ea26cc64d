import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geneo_dd import coeffs as cf


def test_inclusions_channels_values():
    a = cf.inclusions_channels(50.0)
    assert a(1.5 / 9, 0.99) == 1.0          # odd lattice column: background
    assert a(0.5, 0.99) == pytest.approx(1 + 0.9 * 49)   # inside the (4, 8) square
    assert a(0.4, 0.55) == 50.0
    # top row inclusion (y cell 8), away from the channels
    assert a(0.5 / 9, 8.5 / 9) == pytest.approx(1 + 0.9 * 49)
    assert a(0.5 / 9, 0.5 / 9) == pytest.approx(1 + 0.1 * 49)


def test_channel_two_overrides():
    a = cf.inclusions_channels(10.0)
    # inside channel 2 and inside the (x=4, y=0) inclusion square [4/9, 5/9] x [0, 1/9]
    x, y = 0.5, 0.1
    assert cf.in_convex_polygon(x, y, cf._CHANNEL_2)
    assert a(x, y) == 5.0


def test_polygon_boundary_counts_inside():
    assert cf.in_convex_polygon(0.16, 0.65, cf._CHANNEL_1)
    assert not cf.in_convex_polygon(0.15, 0.65, cf._CHANNEL_1)


def test_contrast_error():
    with pytest.raises(cf.CoefficientError):
        cf.inclusions_channels(1.0)


def test_piecewise_constant():
    a = cf.inclusions_channels(7.0)
    assert a(0.01, 0.01) == a(0.1, 0.1)
    assert a(0.8, 0.9) == a(0.85, 0.92)


FIELDS = [
    cf.convection_unidirectional_zero_div(3.0),
    cf.convection_unidirectional_nonzero_div(3.0),
    cf.convection_circulating(3.0),
    cf.convection_circulating_radial(3.0, 2),
    cf.convection_unidirectional_oscillating(3.0, 4),
]


@pytest.mark.parametrize("field", FIELDS, ids=lambda f: f.name)
def test_divergence_matches_finite_differences(field):
    rng = np.random.default_rng(7)
    x, y = rng.uniform(0.05, 0.95, (2, 100))
    e = 1e-4
    fd = ((field(x + e, y)[:, 0] - field(x - e, y)[:, 0]) + (field(x, y + e)[:, 1] - field(x, y - e)[:, 1])) / (2 * e)
    exact = field.divergence(x, y)
    scale = np.abs(field(x, y)).max()
    assert np.abs(fd - exact).max() < 1e-6 * max(scale, np.abs(exact).max()) * 10


def test_divergence_formulas():
    x, y = 0.3, 0.7
    assert cf.convection_unidirectional_zero_div(5.0).divergence(x, y) == 0.0
    assert cf.convection_circulating(5.0).divergence(x, y) == 0.0
    assert cf.convection_unidirectional_nonzero_div(2.0).divergence(x, y) == pytest.approx(
        20 * np.pi * np.cos(2 * np.pi * (2 * x + y)))


def test_non_finite_parameters():
    with pytest.raises(cf.CoefficientError):
        cf.convection_circulating(np.inf)
    with pytest.raises(cf.CoefficientError):
        cf.convection_unidirectional_oscillating(1.0, -1)


def test_split_examples():
    cp, cm = cf.split_reaction(-1000.0, "nonneg_part")
    assert cp(0.2, 0.3) == 0.0 and cm(0.2, 0.3) == -1000.0
    cp, cm = cf.split_reaction(0.0)
    assert cp(0.1, 0.1) == 0.0 and cm(0.1, 0.1) == 0.0
    cp, cm = cf.split_reaction(0.0, "timestep", dt=0.1, dt0=10.0)
    assert cp(0.5, 0.5) == pytest.approx(0.1)
    assert cm(0.5, 0.5) == pytest.approx(9.9)
    with pytest.raises(cf.CoefficientError):
        cf.split_reaction(0.0, "timestep", dt=-1.0, dt0=1.0)


@settings(max_examples=50, deadline=None)
@given(c=st.floats(-1e4, 1e4), mode=st.sampled_from(["nonneg_part", "all_minus"]))
def test_split_properties(c, mode):
    rule = cf.ScalarField(lambda x, y: c * np.sin(3 * x) + 0 * y)
    cp, cm = cf.split_reaction(rule, mode)
    x = np.linspace(0, 1, 11)
    y = np.zeros_like(x)
    if mode == "nonneg_part":
        assert np.all(cp(x, y) >= 0)
    assert np.array_equal(cp(x, y) + cm(x, y), rule(x, y))


def test_validate():
    pts = np.array([[0.5, 0.5], [0.1, 0.2]])
    ok = cf.ProblemCoefficients(cf.constant(1.0), cf.zero_vector(), cf.constant(0.0), cf.constant(-5.0))
    ok.validate(pts)
    with pytest.raises(cf.CoefficientError):
        cf.ProblemCoefficients(cf.constant(0.5), cf.zero_vector(), cf.constant(0.0), cf.constant(0.0)).validate(pts)
    with pytest.raises(cf.CoefficientError):
        cf.ProblemCoefficients(cf.constant(1.0), cf.zero_vector(), cf.constant(-1.0), cf.constant(0.0)).validate(pts)
