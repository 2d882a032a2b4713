import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, special

from utils.errors import DensityUndefinedError
from utils.kernels import heat_kernel
from utils.measures import (
    DiscreteAtoms,
    GaussianMixture,
    SmoothedDensity,
    UniformBox,
    ball_mass,
    derive_seed,
    dump_model,
    load_model,
    maximal_function,
    overlap_sq,
    sample,
    smoothed_density_eval,
    smoothed_model,
)

SCHEMA_PATH = Path(__file__).resolve().parent.parent / "schemas" / "measure_model.schema.json"


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        GaussianMixture(dim=1, weights=[0.5, 0.4], means=[[0.0], [1.0]], variances=[1.0, 1.0])


def test_negative_variance_rejected():
    with pytest.raises(ValueError):
        GaussianMixture(dim=1, weights=[1.0], means=[[0.0]], variances=[-1.0])


def test_box_needs_ordered_corners():
    with pytest.raises(ValueError):
        UniformBox(dim=1, lower=[1.0], upper=[0.0])


def test_model_json_round_trip(two_bumps):
    assert load_model(json.dumps(dump_model(two_bumps))) == two_bumps


def test_scalar_points_accepted_in_one_dimension():
    model = load_model({"type": "gaussian_mixture", "dim": 1, "weights": [1], "means": [0], "variances": [1]})
    assert model.means == [[0.0]]


def test_schema_file_matches_models():
    schema = json.loads(SCHEMA_PATH.read_text())
    classes = {"gaussian_mixture": GaussianMixture, "uniform_box": UniformBox, "discrete": DiscreteAtoms}
    for variant in schema["oneOf"]:
        cls = classes[variant["title"]]
        assert set(variant["properties"]) == set(cls.model_fields)


def test_sample_is_reproducible(normal_1d):
    a = sample(normal_1d, 100, 5).points
    b = sample(normal_1d, 100, 5).points
    c = sample(normal_1d, 100, 6).points
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_mean_matches_model(two_bumps):
    n = 100_000
    pts = sample(two_bumps, n, 1).points
    mean = 0.3 * -1.0 + 0.7 * 2.0
    var = 0.3 * (0.5 + 1.0) + 0.7 * (1.5 + 4.0) - mean ** 2
    assert abs(pts.mean() - mean) < 4.0 * math.sqrt(var / n)


def test_uniform_sample_ecdf(unit_box_1d):
    n = 100_000
    pts = np.sort(sample(unit_box_1d, n, 2).points[:, 0])
    ecdf = np.arange(1, n + 1) / n
    assert np.max(np.abs(ecdf - pts)) < 0.01


def test_discrete_sample_hits_only_atoms():
    model = DiscreteAtoms(dim=1, weights=[0.25, 0.75], locations=[[-1.0], [3.0]])
    pts = sample(model, 1000, 3).points
    assert set(np.unique(pts)) <= {-1.0, 3.0}


def test_derived_seeds_are_distinct():
    seeds = {derive_seed(123, n, r) for n in (32, 64, 128) for r in range(50)}
    assert len(seeds) == 150


def test_density_of_standard_normal(normal_1d):
    assert smoothed_density_eval(normal_1d, 0.0, 0.0) == pytest.approx(0.39894228, rel=1e-7)


def test_point_mass_smoothed_density(delta_1d):
    assert smoothed_density_eval(delta_1d, 1.0 / (4.0 * math.pi), 0.0) == pytest.approx(1.0, rel=1e-12)


def test_point_mass_has_no_density(delta_1d):
    with pytest.raises(DensityUndefinedError, match="density undefined"):
        smoothed_density_eval(delta_1d, 0.0, 0.0)


def test_smoothed_box_matches_numerical_convolution(unit_box_1d):
    expected, _ = integrate.quad(lambda y: heat_kernel(0.5 - y, 0.01, 1), 0.0, 1.0, epsabs=1e-13)
    value = smoothed_density_eval(unit_box_1d, 0.01, 0.5)
    assert value == pytest.approx(expected, rel=1e-6)
    assert value == pytest.approx(special.erf(2.5), rel=1e-12)


def test_smoothing_semigroup(two_bumps, delta_1d):
    xs = np.linspace(-3.0, 4.0, 15)
    np.testing.assert_allclose(smoothed_density_eval(smoothed_model(two_bumps, 0.3), 0.2, xs),
                               smoothed_density_eval(two_bumps, 0.5, xs), rtol=1e-12)
    np.testing.assert_allclose(smoothed_density_eval(smoothed_model(delta_1d, 0.3), 0.2, xs),
                               smoothed_density_eval(delta_1d, 0.5, xs), rtol=1e-10)
    composed = SmoothedDensity(two_bumps, 0.3).smoothed(0.2)
    np.testing.assert_allclose(composed(xs), smoothed_density_eval(two_bumps, 0.5, xs), rtol=1e-12)


@pytest.mark.parametrize("model", [
    GaussianMixture(dim=1, weights=[0.3, 0.7], means=[[-1.0], [2.0]], variances=[0.5, 1.5]),
    UniformBox(dim=2, lower=[0.0, 0.0], upper=[1.0, 1.0]),
    DiscreteAtoms(dim=2, weights=[0.5, 0.5], locations=[[0.0, 0.0], [1.0, -1.0]]),
])
def test_smoothed_density_integrates_to_one(model):
    d = model.dim
    axis = np.linspace(-8.0, 9.0, 341 if d == 2 else 3401)
    h = axis[1] - axis[0]
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    total = smoothed_density_eval(model, 0.01 if d == 2 else 0.05, nodes).sum() * h ** d
    assert total == pytest.approx(1.0, abs=1e-6)


def test_overlap_closed_forms(normal_1d, unit_box_1d, delta_1d):
    assert overlap_sq(normal_1d, 0.0) == pytest.approx(1.0 / (2.0 * math.sqrt(math.pi)), rel=1e-12)
    assert overlap_sq(unit_box_1d, 0.0) == pytest.approx(1.0)
    assert overlap_sq(delta_1d, 0.2) == pytest.approx((8.0 * math.pi * 0.2) ** -0.5, rel=1e-12)
    xs = np.linspace(-4.0, 5.0, 9001)
    dens = smoothed_density_eval(unit_box_1d, 0.02, xs)
    numeric = np.sum(dens ** 2) * (xs[1] - xs[0])
    assert overlap_sq(unit_box_1d, 0.02) == pytest.approx(numeric, rel=1e-6)


def test_ball_mass_one_dimensional(normal_1d, unit_box_1d):
    assert ball_mass(normal_1d, 0.0, 1.0) == pytest.approx(0.6826895, rel=1e-6)
    assert ball_mass(unit_box_1d, 0.5, 0.25) == pytest.approx(0.5)


def test_ball_mass_two_dimensional(normal_2d):
    radii = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(ball_mass(normal_2d, [0.0, 0.0], radii), 1.0 - np.exp(-radii ** 2 / 2.0), rtol=1e-10)
    box = UniformBox(dim=2, lower=[0.0, 0.0], upper=[1.0, 1.0])
    assert ball_mass(box, [0.5, 0.5], 0.3) == pytest.approx(math.pi * 0.09, rel=1e-6)


def test_ball_mass_closed_ball_on_atoms(delta_1d):
    assert ball_mass(delta_1d, 0.0, 0.0) == 1.0
    assert ball_mass(delta_1d, 1.0, 0.999) == 0.0
    assert ball_mass(delta_1d, 1.0, 1.0) == 1.0


def test_maximal_function_examples(delta_1d, unit_box_1d, normal_1d):
    assert maximal_function(delta_1d, 0.5) == pytest.approx(1.0, rel=1e-12)
    assert maximal_function(unit_box_1d, 0.5) == pytest.approx(1.0, rel=1e-9)
    assert maximal_function(delta_1d, 0.0) == math.inf
    assert maximal_function(normal_1d, 0.0) == pytest.approx(0.39894228, rel=1e-6)


def test_maximal_function_shrinks_with_fewer_radii(two_bumps):
    grid = np.logspace(-6, 3, 400)
    full = maximal_function(two_bumps, 1.3, grid)
    partial = maximal_function(two_bumps, 1.3, grid[::3])
    assert partial <= full
