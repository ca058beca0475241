import numpy as np
import pytest
from pydantic import ValidationError

from modulation_lab.domain.grid import (
    AxisGrid,
    SampledField,
    StftGridSpec,
    mesh_points,
    tensor_weights,
)
from modulation_lab.exceptions import FileOperationError, InvalidInputError


class TestAxisGrid:
    def test_from_spacing(self):
        axis = AxisGrid.from_spacing(-6.0, 6.0, 0.05)
        assert axis.num == 241
        assert axis.spacing == pytest.approx(0.05)
        assert axis.nodes[0] == -6.0 and axis.nodes[-1] == 6.0

    def test_trapezoid_weights_integrate_constants(self):
        axis = AxisGrid(start=-1.0, stop=3.0, num=9)
        assert np.sum(axis.trapezoid_weights()) == pytest.approx(4.0)

    def test_empty_interval_rejected(self):
        with pytest.raises(ValidationError):
            AxisGrid(start=1.0, stop=1.0, num=5)

    def test_bad_spacing(self):
        with pytest.raises(InvalidInputError):
            AxisGrid.from_spacing(0.0, 1.0, 0.0)


class TestTensorGrids:
    def test_mesh_points_are_c_ordered(self):
        axes = [AxisGrid(start=0, stop=1, num=2), AxisGrid(start=0, stop=2, num=3)]
        points = mesh_points(axes)
        assert points.shape == (6, 2)
        np.testing.assert_allclose(points[:3, 0], 0.0)
        np.testing.assert_allclose(points[:3, 1], [0.0, 1.0, 2.0])

    def test_tensor_weights_integrate_area(self):
        axes = [AxisGrid(start=0, stop=2, num=5), AxisGrid(start=-1, stop=1, num=7)]
        assert tensor_weights(axes).shape == (5, 7)
        assert np.sum(tensor_weights(axes)) == pytest.approx(4.0)

    def test_stft_grid_spec_repeats_axes(self):
        axis = AxisGrid(start=-1, stop=1, num=3)
        spec = StftGridSpec(space=axis, freq=axis, dim=2)
        assert len(spec.space_axes()) == 2 and len(spec.freq_axes()) == 2

    def test_stft_grid_spec_entries(self):
        space = AxisGrid(start=-1, stop=1, num=3)
        freq = AxisGrid(start=-2, stop=2, num=5)
        assert StftGridSpec(space=space, freq=freq).entries == 15
        assert StftGridSpec(space=space, freq=freq, dim=2).entries == 225


class TestSampledField:
    def test_shape_must_match(self):
        with pytest.raises(InvalidInputError):
            SampledField([AxisGrid(start=0, stop=1, num=3)], np.zeros(4))

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            SampledField([AxisGrid(start=0, stop=1, num=2)], np.array([0.0, np.nan]))

    def test_binary_file(self, tmp_path):
        axes = [AxisGrid(start=-1, stop=1, num=5), AxisGrid(start=0, stop=2, num=4)]
        values = np.arange(20).reshape(5, 4) * (1 + 0.5j)
        field = SampledField(axes, values)
        path = field.save(str(tmp_path / "field.bin"))
        loaded = SampledField.load(path)
        np.testing.assert_array_equal(loaded.values, field.values)
        np.testing.assert_allclose(loaded.origin, [-1.0, 0.0])
        np.testing.assert_allclose(loaded.spacing, [0.5, 2.0 / 3.0])

    def test_header_layout(self):
        field = SampledField([AxisGrid(start=0, stop=1, num=2)], np.array([1.0, 2j]))
        data = field.to_bytes()
        assert len(data) == 8 * 2 + 8 * 2 + 16 * 2
        assert np.frombuffer(data[:16], dtype="<i8").tolist() == [1, 2]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileOperationError):
            SampledField.load(str(tmp_path / "missing.bin"))

    def test_frame(self, gaussian_field):
        frame = gaussian_field.to_frame()
        assert list(frame.columns) == ["x0", "re", "im"]
        assert len(frame) == 241

    def test_boundary_magnitude(self, gaussian_field):
        assert gaussian_field.boundary_magnitude() == pytest.approx(np.exp(-36 * np.pi))
