import numpy as np
import pytest
from pydantic import ValidationError

from modulation_lab.exceptions import ArityError, InvalidInputError
from modulation_lab.sobolev import (
    Box,
    FunctionChannels,
    SobolevSpec,
    count_inversions,
    finite_difference_hessian,
    fit_rate,
    grid_rule,
    monte_carlo_rule,
    sobolev_error,
    sobolev_norm,
)


class TestBox:
    def test_symmetric(self):
        box = Box.symmetric(3.0, dim=2)
        assert box.volume == pytest.approx(36.0)
        assert box.radius == pytest.approx(3.0 * np.sqrt(2.0))

    def test_empty_box_rejected(self):
        with pytest.raises(ValidationError):
            Box(lower=[1.0], upper=[0.0])

    def test_sample_stays_inside(self, rng):
        box = Box(lower=[-1.0, 0.0], upper=[2.0, 0.5])
        assert np.all(box.contains(box.sample(rng, 500)))


class TestQuadratureRules:
    def test_grid_rule_integrates_polynomials(self):
        rule = grid_rule(Box.symmetric(3.0), 601)
        assert rule.weights.sum() == pytest.approx(6.0)
        # trapezoid overshoot for x^2 is (b - a) h^2 / 6
        assert np.dot(rule.weights, rule.points[:, 0] ** 2) == pytest.approx(
            18.0 + 0.01**2, rel=1e-10
        )

    def test_grid_rule_shape_2d(self):
        rule = grid_rule(Box.symmetric(1.0, dim=2), 11)
        assert rule.points.shape == (121, 2)
        assert rule.shape == (11, 11)
        assert rule.weights.sum() == pytest.approx(4.0)

    def test_monte_carlo_weights(self, rng):
        box = Box.symmetric(3.0, dim=2)
        rule = monte_carlo_rule(box, 1000, rng)
        assert len(rule) == 1000
        np.testing.assert_allclose(rule.weights, 36.0 / 1000)

    def test_monte_carlo_reuses_points(self):
        points = np.array([[0.0], [1.0]])
        rule = monte_carlo_rule(Box.symmetric(1.0), 99, points=points)
        np.testing.assert_array_equal(rule.points, points)
        np.testing.assert_allclose(rule.weights, 1.0)


class TestSobolevError:
    def setup_method(self):
        self.rule = grid_rule(Box.symmetric(3.0), 601)
        x = self.rule.points[:, 0]
        self.linear = FunctionChannels(value=x, gradient=np.ones((x.size, 1)))
        self.zero = FunctionChannels.zeros_like(self.linear)

    def test_identical_functions(self):
        spec = SobolevSpec(n=1, r=2)
        assert sobolev_error(self.linear, self.linear, spec, self.rule) == 0.0

    def test_l2_distance(self):
        spec = SobolevSpec(n=0, r=2)
        value = sobolev_error(self.linear, self.zero, spec, self.rule)
        assert value == pytest.approx(np.sqrt(18.0), rel=1e-5)

    def test_h1_norm(self):
        spec = SobolevSpec(n=1, r=2)
        assert sobolev_norm(self.linear, spec, self.rule) == pytest.approx(
            np.sqrt(24.0), rel=1e-5
        )

    def test_higher_exponent(self):
        spec = SobolevSpec(n=1, r=4)
        # int x^4 + 1 over [-3, 3] = 2 * 243 / 5 + 6
        expected = (2 * 243 / 5 + 6) ** 0.25
        assert sobolev_norm(self.linear, spec, self.rule) == pytest.approx(
            expected, rel=1e-4
        )

    def test_missing_gradient(self):
        spec = SobolevSpec(n=1, r=2)
        bare = FunctionChannels(value=self.linear.value)
        with pytest.raises(ArityError):
            sobolev_error(bare, self.zero, spec, self.rule)

    def test_wrong_length(self):
        spec = SobolevSpec(n=0, r=2)
        short = FunctionChannels(value=np.zeros(3))
        with pytest.raises(InvalidInputError):
            sobolev_error(short, short, spec, self.rule)

    def test_exponent_below_two_rejected(self):
        with pytest.raises(ValidationError):
            SobolevSpec(n=1, r=1.5)

    def test_second_order_needs_diagnostics(self):
        with pytest.raises(ValidationError):
            SobolevSpec(n=2, r=2)

    def test_second_order_from_finite_differences(self):
        spec = SobolevSpec(n=2, r=2, diagnostics=True)
        x = self.rule.points[:, 0]
        square = FunctionChannels(value=x**2, gradient=(2 * x)[:, None])
        norm = sobolev_norm(square, spec, self.rule)
        # int x^4 + 4 x^2 + 4 over [-3, 3]
        assert norm == pytest.approx(np.sqrt(2 * 243 / 5 + 72 + 24), rel=1e-4)

    def test_second_order_without_grid(self, rng):
        spec = SobolevSpec(n=2, r=2, diagnostics=True)
        rule = monte_carlo_rule(Box.symmetric(3.0), 50, rng)
        x = rule.points[:, 0]
        channels = FunctionChannels(value=x, gradient=np.ones((50, 1)))
        with pytest.raises(ArityError):
            sobolev_norm(channels, spec, rule)


def random_channels(rng, m, dim=1):
    return FunctionChannels(
        value=rng.normal(size=m), gradient=rng.normal(size=(m, dim))
    )


class TestMetricProperties:
    def setup_method(self):
        self.rule = grid_rule(Box.symmetric(3.0, dim=2), 21)

    @pytest.mark.parametrize("r", [2.0, 3.0])
    def test_symmetric(self, rng, r):
        spec = SobolevSpec(n=1, r=r)
        f, g = random_channels(rng, 441, 2), random_channels(rng, 441, 2)
        forward = sobolev_error(f, g, spec, self.rule)
        assert forward == sobolev_error(g, f, spec, self.rule)

    @pytest.mark.parametrize("r", [2.0, 3.0, 5.0])
    def test_triangle_inequality(self, rng, r):
        spec = SobolevSpec(n=1, r=r)
        for _ in range(50):
            f, g, h = (random_channels(rng, 441, 2) for _ in range(3))
            direct = sobolev_error(f, h, spec, self.rule)
            first = sobolev_error(f, g, spec, self.rule)
            detour = first + sobolev_error(g, h, spec, self.rule)
            assert direct <= detour * (1 + 1e-12)

    def test_gradient_terms_only_add(self, rng):
        f, g = random_channels(rng, 441, 2), random_channels(rng, 441, 2)
        values_only = sobolev_error(f, g, SobolevSpec(n=0, r=2), self.rule)
        assert sobolev_error(f, g, SobolevSpec(n=1, r=2), self.rule) >= values_only

    def test_monte_carlo_agrees_with_grid(self, rng, target1d):
        box = Box.symmetric(3.0)
        spec = SobolevSpec(n=1, r=2)
        grid = grid_rule(box, 601)
        value, slope = target1d.evaluate(grid.points)
        exact = sobolev_norm(FunctionChannels(value, slope), spec, grid) ** 2

        rule = monte_carlo_rule(box, 20_000, rng)
        value, slope = target1d.evaluate(rule.points)
        estimate = sobolev_norm(FunctionChannels(value, slope), spec, rule) ** 2
        integrand = value**2 + np.sum(slope**2, axis=1)
        standard_error = box.volume * np.std(integrand) / np.sqrt(len(rule))
        assert abs(estimate - exact) < 4 * standard_error


class TestFiniteDifferenceHessian:
    def test_quadratic_2d(self):
        rule = grid_rule(Box.symmetric(1.0, dim=2), 21)
        x, y = rule.points[:, 0], rule.points[:, 1]
        # f = x^2 + 3 x y
        gradient = np.stack([2 * x + 3 * y, 3 * x], axis=1)
        hessian = finite_difference_hessian(gradient, rule)
        np.testing.assert_allclose(hessian[:, 0, 0], 2.0, atol=1e-10)
        np.testing.assert_allclose(hessian[:, 0, 1], 3.0, atol=1e-10)
        np.testing.assert_allclose(hessian[:, 1, 1], 0.0, atol=1e-10)

    def test_needs_grid(self, rng):
        rule = monte_carlo_rule(Box.symmetric(1.0), 10, rng)
        with pytest.raises(ArityError):
            finite_difference_hessian(np.zeros((10, 1)), rule)


class TestRateFit:
    def test_exact_power_law(self):
        ns = [16, 32, 64, 128, 256]
        errors = [3.0 * n**-0.5 for n in ns]
        report = fit_rate(ns, errors)
        assert report.slope == pytest.approx(-0.5, abs=1e-12)
        assert report.intercept == pytest.approx(np.log(3.0), abs=1e-12)
        assert report.residual < 1e-12
        assert report.inversions == 0
        assert report.seed_count == 1

    def test_median_over_seeds(self):
        ns = [10, 100, 1000, 10000]
        base = np.array([n**-0.5 for n in ns])
        table = np.stack([base, 2 * base, 4 * base], axis=1)
        report = fit_rate(ns, table)
        np.testing.assert_allclose(report.median_errors, 2 * base)
        assert report.slope == pytest.approx(-0.5, abs=1e-12)
        assert report.seed_count == 3
        lo, hi = report.confidence_band
        assert lo <= report.slope <= hi

    def test_frame_columns(self):
        ns = [1, 2, 4, 8]
        frame = fit_rate(ns, [1.0, 0.7, 0.5, 0.35]).to_frame()
        assert list(frame.columns) == ["N", "median_error", "q25", "q75", "fitted_slope"]
        assert len(frame) == 4

    @pytest.mark.parametrize(
        "ns,errors",
        [
            ([1, 2, 4], [1.0, 0.5, 0.25]),
            ([1, 4, 2, 8], [1.0, 0.5, 0.7, 0.3]),
            ([1, 2, 4, 8], [1.0, 0.0, 0.5, 0.3]),
            ([1, 2, 4, 8], [1.0, np.nan, 0.5, 0.3]),
            ([1, 2, 4, 8], [1.0, 0.5, 0.3]),
        ],
    )
    def test_invalid_input(self, ns, errors):
        with pytest.raises(InvalidInputError):
            fit_rate(ns, errors)

    def test_count_inversions(self):
        assert count_inversions([4.0, 3.0, 3.5, 2.0, 2.0]) == 1
        assert count_inversions([1.0]) == 0
