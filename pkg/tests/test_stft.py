import numpy as np
import pytest
from scipy.integrate import quad

from modulation_lab.domain.grid import AxisGrid, SampledField, StftGridSpec
from modulation_lab.exceptions import (
    GridTooLargeError,
    IllConditionedInversionError,
    TailTruncationError,
)
from modulation_lab.stft import (
    MAX_GRID_ENTRIES,
    MixedNormSpec,
    barron_norm,
    default_grid_spec,
    fourier_transform,
    istft,
    l2_norm,
    mixed_norm,
    stft,
)
from modulation_lab.windows import GaussianWindow


def relative_error(reconstruction: SampledField, field: SampledField) -> float:
    difference = SampledField(field.axes, reconstruction.values - field.values)
    return l2_norm(difference) / l2_norm(field)


class TestAnalysis:
    def test_gaussian_against_closed_form(self, gaussian_field):
        F = stft(gaussian_field)
        x = F.space_axes[0].nodes[:, None]
        w = F.freq_axes[0].nodes[None, :]
        expected = (
            np.exp(-np.pi * x * x / 2)
            * np.exp(-np.pi * w * w / 2)
            * np.exp(-1j * np.pi * x * w)
            / np.sqrt(2)
        )
        np.testing.assert_allclose(F.values, expected, atol=1e-12)

    def test_tail_truncation(self):
        axis = AxisGrid(start=-2.0, stop=2.0, num=81)
        field = SampledField([axis], np.ones(81))
        with pytest.raises(TailTruncationError) as info:
            stft(field)
        assert info.value.boundary_magnitude == pytest.approx(1.0)

    def test_frame_columns(self, gaussian_field):
        frame = stft(gaussian_field).to_frame()
        assert list(frame.columns) == ["x0", "omega0", "abs", "re", "im"]
        assert len(frame) == 121 * 121


class TestRoundTrip:
    def test_gaussian(self, gaussian_field):
        assert relative_error(istft(stft(gaussian_field)), gaussian_field) < 1e-6

    def test_target(self, target_field):
        assert relative_error(istft(stft(target_field)), target_field) < 1e-6

    def test_dual_window(self, target_field):
        F = stft(target_field)
        reconstruction = istft(F, synthesis_window=GaussianWindow(normalization="unit"))
        assert relative_error(reconstruction, target_field) < 1e-6

    def test_two_dimensional_target(self, target2d):
        sample = AxisGrid.from_spacing(-5.0, 5.0, 0.1)
        field = SampledField.from_function(target2d, [sample, sample])
        coarse = AxisGrid.from_spacing(-5.0, 5.0, 0.25)
        F = stft(field, grid=StftGridSpec(space=coarse, freq=coarse, dim=2))
        assert F.values.shape == (41, 41, 41, 41)
        assert relative_error(istft(F), field) < 1e-6

    def test_orthogonal_windows_are_rejected(self, gaussian_field):
        F = stft(gaussian_field)
        with pytest.raises(IllConditionedInversionError):
            istft(F, synthesis_window=GaussianWindow(modulation=5.0))


class TestNorms:
    def test_l2_norm_is_moyal(self, gaussian_field):
        # ||V_g f||_2 = ||f||_2 ||g||_2 = 1/sqrt(2) for the canonical Gaussian
        value = mixed_norm(stft(gaussian_field), MixedNormSpec(p=2, q=2))
        assert value == pytest.approx(1 / np.sqrt(2), rel=1e-8)

    def test_sup_norm(self, gaussian_field):
        spec = MixedNormSpec(p=np.inf, q=np.inf)
        assert mixed_norm(stft(gaussian_field), spec) == pytest.approx(1 / np.sqrt(2))

    def test_weights_increase_the_norm(self, target_field):
        F = stft(target_field)
        plain = mixed_norm(F, MixedNormSpec(p=1, q=1))
        weighted = mixed_norm(F, MixedNormSpec(p=1, q=1, s1=1.0, s2=1.0))
        assert weighted > plain > 0

    def test_fourier_transform_of_gaussian(self, gaussian_field):
        axis = AxisGrid.from_spacing(-4.0, 4.0, 0.1)
        transform = fourier_transform(gaussian_field, [axis])
        np.testing.assert_allclose(
            transform.values, np.exp(-np.pi * axis.nodes**2), atol=1e-12
        )

    def test_barron_norm_of_gaussian(self, gaussian_field):
        assert barron_norm(gaussian_field, 0.0) == pytest.approx(1.0, rel=1e-8)

    def test_barron_norm_grows_with_order(self, target_field):
        assert barron_norm(target_field, 2.0) > barron_norm(target_field, 0.0)


class TestGridBudget:
    def test_default_two_dimensional_grid_fits(self):
        spec = default_grid_spec(2)
        assert spec.space.spacing == pytest.approx(0.25)
        assert spec.entries == 49**4
        assert spec.entries <= MAX_GRID_ENTRIES

    def test_fine_two_dimensional_grid_is_rejected(self):
        sample = AxisGrid.from_spacing(-6.0, 6.0, 0.5)
        field = SampledField.from_function(
            lambda p: np.exp(-np.pi * np.sum(p * p, axis=-1)), [sample, sample]
        )
        fine = AxisGrid.from_spacing(-6.0, 6.0, 0.1)
        with pytest.raises(GridTooLargeError) as info:
            stft(field, grid=StftGridSpec(space=fine, freq=fine, dim=2))
        assert info.value.entries == 121**4
        assert info.value.limit == MAX_GRID_ENTRIES


def gaussian_sine(t):
    return np.exp(-t * t) * np.sin(3 * t)


class TestCovariance:
    def test_shift(self, sample_axis, target_field):
        shifted = SampledField.from_function(
            lambda p: gaussian_sine(p[:, 0] - 0.5), [sample_axis]
        )
        F = stft(target_field)
        G = stft(shifted)
        w = F.freq_axes[0].nodes[None, :]
        # x0 = 0.5 is five STFT grid steps
        np.testing.assert_allclose(
            G.values[5:], np.exp(-1j * np.pi * w) * F.values[:-5], atol=1e-10
        )

    def test_modulation(self, sample_axis, target_field):
        modulated = SampledField.from_function(
            lambda p: gaussian_sine(p[:, 0]) * np.exp(1j * np.pi * p[:, 0]),
            [sample_axis],
        )
        F = stft(target_field)
        G = stft(modulated)
        np.testing.assert_allclose(G.values[:, 5:], F.values[:, :-5], atol=1e-12)


class TestRefinement:
    def test_stft_is_stable_under_sample_refinement(self, target_field):
        fine_axis = AxisGrid.from_spacing(-6.0, 6.0, 0.025)
        fine = SampledField.from_function(lambda p: gaussian_sine(p[:, 0]), [fine_axis])
        assert np.max(np.abs(stft(fine).values - stft(target_field).values)) < 1e-9

    def test_value_against_adaptive_quadrature(self, target_field):
        F = stft(target_field)
        x = F.space_axes[0].nodes[63]
        w = F.freq_axes[0].nodes[67]
        assert x == pytest.approx(0.3) and w == pytest.approx(0.7)

        def integrand(t, phase):
            window = np.exp(-np.pi * (t - x) ** 2)
            return gaussian_sine(t) * window * phase(2 * np.pi * w * t)

        def part(phase):
            return quad(
                integrand,
                -12,
                12,
                args=(phase,),
                limit=400,
                epsabs=1e-14,
            )[0]

        expected = part(np.cos) - 1j * part(np.sin)
        assert abs(F.values[63, 67] - expected) < 1e-8

    def test_odd_target_vanishes_at_origin(self, target_field):
        # odd f against an even window
        assert abs(stft(target_field).values[60, 60]) < 1e-12

    def test_barron_norm_is_stable_under_refinement(self, target_field):
        fine_axis = AxisGrid.from_spacing(-6.0, 6.0, 0.025)
        fine = SampledField.from_function(lambda p: gaussian_sine(p[:, 0]), [fine_axis])
        coarse = barron_norm(target_field, 2.0)
        refined = barron_norm(fine, 2.0, [AxisGrid.from_spacing(-8.0, 8.0, 0.005)])
        assert np.isfinite(coarse)
        assert abs(coarse - refined) / refined < 1e-4
