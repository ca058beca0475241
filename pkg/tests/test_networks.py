import numpy as np
import pytest

from modulation_lab.dictionary import AtomParams, FixedConstants, atom_grad
from modulation_lab.exceptions import FileOperationError, InvalidInputError
from modulation_lab.networks import (
    ModulationNetwork,
    PlainReluNetwork,
    TrainingBatch,
    checkpoint_vector,
    encode_checkpoint,
    network_class,
    parameter_count,
)
from modulation_lab.sobolev import Box

KINK_MARGIN = 1e-3


def random_batch(rng, dim, size=6):
    points = rng.uniform(-2.0, 2.0, size=(size, dim))
    return TrainingBatch(
        points=points,
        value=rng.normal(size=size),
        gradient=rng.normal(size=(size, dim)),
    )


def random_network(kind, rng, dim, units=3):
    box = Box.symmetric(2.0, dim)
    if kind == "modulation":
        t = float(rng.uniform(-0.5, 0.5))
        tau = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.7, 1.5))
        net = ModulationNetwork.initialize(units, dim, box, rng, t=t, tau=tau)
        net.c = float(rng.normal())
        return net
    net = PlainReluNetwork.initialize(units, dim, box, rng)
    net.z = float(rng.normal())
    return net


def preactivations(net, points):
    if isinstance(net, ModulationNetwork):
        return points @ (net.eta / net.tau).T + net.b[None, :]
    return points @ net.omega.T + net.m[None, :]


def finite_difference_gradient(net, batch, h=1e-5):
    base = net.to_vector()
    grad = np.empty_like(base)
    for i in range(base.size):
        step = np.zeros_like(base)
        step[i] = h
        net.set_vector(base + step)
        plus = net.loss(batch)
        net.set_vector(base - step)
        minus = net.loss(batch)
        grad[i] = (plus - minus) / (2 * h)
    net.set_vector(base)
    return grad


class TestParameterCounts:
    @pytest.mark.parametrize(
        "kind,units,dim,expected",
        [
            ("modulation", 300, 1, 1201),
            ("plain", 400, 1, 1201),
            ("modulation", 300, 2, 1801),
            ("plain", 450, 2, 1801),
            ("modulation", 48, 1, 193),
            ("plain", 64, 1, 193),
            ("modulation", 50, 2, 301),
            ("plain", 75, 2, 301),
        ],
    )
    def test_reference_budgets(self, kind, units, dim, expected):
        assert parameter_count(kind, units, dim) == expected

    def test_vector_length_matches_count(self, rng):
        for kind in ("modulation", "plain"):
            net = random_network(kind, rng, 2, units=5)
            assert net.to_vector().shape == (net.count_params(),)

    def test_unknown_kind(self):
        with pytest.raises(InvalidInputError):
            network_class("deep")


class TestTrainingBatch:
    def test_from_target(self, target2d, rng):
        batch = TrainingBatch.from_target(target2d, rng.uniform(-1, 1, size=(8, 2)))
        assert len(batch) == 8
        assert batch.gradient.shape == (8, 2)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            TrainingBatch(np.zeros((0, 1)), np.zeros(0), np.zeros((0, 1)))

    def test_mismatched(self):
        with pytest.raises(InvalidInputError):
            TrainingBatch(np.zeros((3, 2)), np.zeros(3), np.zeros((3, 1)))


class TestForward:
    def test_single_modulation_unit_is_an_atom(self, rng):
        net = ModulationNetwork(
            eta=[[1.2, -0.4]], b=[0.3], y=[[0.5, -1.0]], a=[1.0], c=0.0, t=0.2, tau=1.4
        )
        points = rng.uniform(-2, 2, size=(20, 2))
        value, gradient = net.forward(points)
        atoms = AtomParams(y=net.y, eta=net.eta, b=net.b)
        constants = FixedConstants(t=0.2, tau=1.4, normalization="unit")
        derivs = atom_grad(atoms, constants, points, order=1)
        np.testing.assert_allclose(value, derivs.value[:, 0], rtol=1e-14, atol=1e-15)
        np.testing.assert_allclose(gradient, derivs.gradient[:, 0, :], rtol=1e-14, atol=1e-15)

    def test_plain_network(self):
        net = PlainReluNetwork(
            omega=[[1.0], [-2.0]], m=[0.5, 1.0], zeta=[2.0, 3.0], z=-1.0
        )
        value, gradient = net.forward(np.array([[0.25], [1.0]]))
        np.testing.assert_allclose(value, [2 * 0.75 + 3 * 0.5 - 1, 2 * 1.5 - 1])
        np.testing.assert_allclose(gradient[:, 0], [2.0 - 6.0, 2.0])

    def test_loss_matches_forward(self, rng):
        net = random_network("modulation", rng, 1)
        batch = random_batch(rng, 1)
        loss, _ = net.loss_and_grad(batch)
        assert loss == pytest.approx(net.loss(batch), rel=1e-13)

    def test_initialization_ranges(self, rng):
        box = Box.symmetric(3.0, 2)
        net = ModulationNetwork.initialize(300, 2, box, rng)
        assert np.all(np.abs(net.eta) <= 3.0) and np.all(np.abs(net.b) <= 3.0)
        assert np.all(box.contains(net.y))
        assert net.c == 0.0
        assert np.std(net.a) == pytest.approx(1 / np.sqrt(300), rel=0.2)


class TestNetworkProperties:
    def test_modulation_output_is_a_sum_of_units(self, rng):
        net = random_network("modulation", rng, 2, units=6)
        points = rng.uniform(-2, 2, size=(25, 2))
        value, gradient = net.forward(points)
        total_value = np.full(25, net.c)
        total_gradient = np.zeros((25, 2))
        for k in range(net.units):
            unit = ModulationNetwork(
                eta=net.eta[k : k + 1],
                b=net.b[k : k + 1],
                y=net.y[k : k + 1],
                a=net.a[k : k + 1],
                t=net.t,
                tau=net.tau,
            )
            v, g = unit.forward(points)
            total_value += v
            total_gradient += g
        np.testing.assert_allclose(value, total_value, rtol=0, atol=1e-12)
        np.testing.assert_allclose(gradient, total_gradient, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("kind", ["modulation", "plain"])
    def test_small_step_decreases_loss(self, kind):
        rng = np.random.default_rng([7, len(kind)])
        trials = 0
        while trials < 20:
            net = random_network(kind, rng, 1, units=5)
            batch = random_batch(rng, 1, size=10)
            if np.min(np.abs(preactivations(net, batch.points))) < KINK_MARGIN:
                continue
            loss, grad = net.loss_and_grad(batch)
            net.set_vector(net.to_vector() - 1e-4 * grad)
            assert net.loss(batch) < loss
            trials += 1

    @pytest.mark.parametrize("kind", ["modulation", "plain"])
    def test_input_gradient_matches_finite_differences(self, kind):
        rng = np.random.default_rng([11, len(kind)])
        h = 1e-5
        checked = 0
        while checked < 1000:
            dim = 1 + checked % 2
            net = random_network(kind, rng, dim)
            x = rng.uniform(-2.0, 2.0, size=(1, dim))
            if np.min(np.abs(preactivations(net, x))) < KINK_MARGIN:
                continue
            _, gradient = net.forward(x)
            steps = h * np.eye(dim)
            plus, _ = net.forward(x + steps)
            minus, _ = net.forward(x - steps)
            np.testing.assert_allclose(
                gradient[0], (plus - minus) / (2 * h), rtol=1e-5, atol=1e-7
            )
            checked += 1


class TestParameterGradients:
    @pytest.mark.parametrize("kind", ["modulation", "plain"])
    @pytest.mark.parametrize("dim", [1, 2])
    def test_matches_finite_differences(self, kind, dim):
        rng = np.random.default_rng([42, dim, len(kind)])
        checked = 0
        while checked < 250:
            net = random_network(kind, rng, dim)
            batch = random_batch(rng, dim)
            if np.min(np.abs(preactivations(net, batch.points))) < KINK_MARGIN:
                continue
            _, grad = net.loss_and_grad(batch)
            expected = finite_difference_gradient(net, batch)
            np.testing.assert_allclose(grad, expected, rtol=1e-5, atol=1e-6)
            checked += 1

    def test_set_vector_round_trip(self, rng):
        net = random_network("modulation", rng, 2)
        vector = rng.normal(size=net.count_params())
        net.set_vector(vector)
        np.testing.assert_array_equal(net.to_vector(), vector)

    def test_set_vector_wrong_length(self, rng):
        net = random_network("plain", rng, 1)
        with pytest.raises(InvalidInputError):
            net.set_vector(np.zeros(net.count_params() + 1))


class TestCheckpoints:
    @pytest.mark.parametrize("kind", ["modulation", "plain"])
    def test_round_trip(self, kind, rng, tmp_path):
        net = random_network(kind, rng, 2, units=4)
        path = net.save_checkpoint(str(tmp_path / "params.bin"))
        with open(path, "rb") as fh:
            data = fh.read()
        np.testing.assert_array_equal(checkpoint_vector(data), net.to_vector())
        header = np.frombuffer(data[:32], dtype="<i8")
        assert header.tolist() == [net.kind_code, 2, 4, net.count_params()]

    def test_truncated(self):
        with pytest.raises(FileOperationError):
            checkpoint_vector(b"\x00" * 8)

    def test_unknown_code(self):
        with pytest.raises(FileOperationError):
            checkpoint_vector(encode_checkpoint(9, 1, 1, np.zeros(4)))

    def test_inconsistent_header(self):
        with pytest.raises(FileOperationError):
            checkpoint_vector(encode_checkpoint(1, 1, 2, np.zeros(4)))

    def test_short_payload(self):
        data = encode_checkpoint(2, 1, 1, np.zeros(4))
        with pytest.raises(FileOperationError):
            checkpoint_vector(data[:-8])

    def test_unwritable_path(self, rng, tmp_path):
        net = random_network("plain", rng, 1)
        with pytest.raises(FileOperationError):
            net.save_checkpoint(str(tmp_path / "missing" / "params.bin"))
