from dataclasses import dataclass, field
from typing import ClassVar, Tuple

import numpy as np

from modulation_lab.dictionary import (
    RELU,
    AtomParams,
    FixedConstants,
    activation_profile,
    atom_grad,
)
from modulation_lab.networks.base import ShallowNetwork, TrainingBatch
from modulation_lab.sobolev import Box


@dataclass
class ModulationNetwork(ShallowNetwork):
    """
    u(x) = sum_k a_k ReLU(u_k) exp(-(u_k - t)^2 / 2) exp(-|x - y_k|^2 / 2) + c

    with u_k = eta_k . x / tau + b_k. Flat parameter order:
    eta (N x d, row-major), b (N), y (N x d), a (N), c.
    """

    kind: ClassVar[str] = "modulation"
    kind_code: ClassVar[int] = 1

    eta: np.ndarray
    b: np.ndarray
    y: np.ndarray
    a: np.ndarray
    c: float = 0.0
    t: float = 0.0
    tau: float = 1.0
    constants: FixedConstants = field(init=False, repr=False)

    def __post_init__(self):
        self.eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        self.a = np.atleast_1d(np.asarray(self.a, dtype=float))
        AtomParams(self.y, self.eta, self.b)
        self.constants = FixedConstants(t=self.t, tau=self.tau, normalization="unit")

    @classmethod
    def initialize(
        cls,
        units: int,
        dim: int,
        domain: Box,
        rng: np.random.Generator,
        t: float = 0.0,
        tau: float = 1.0,
    ) -> "ModulationNetwork":
        return cls(
            eta=rng.uniform(-3.0, 3.0, size=(units, dim)),
            b=rng.uniform(-3.0, 3.0, size=units),
            y=domain.sample(rng, units),
            a=rng.normal(0.0, 1.0 / np.sqrt(units), size=units),
            c=0.0,
            t=t,
            tau=tau,
        )

    @property
    def dim(self) -> int:
        return self.eta.shape[1]

    @property
    def units(self) -> int:
        return self.eta.shape[0]

    @staticmethod
    def parameter_count(units: int, dim: int) -> int:
        return units * (2 * dim + 2) + 1

    def atoms(self) -> AtomParams:
        return AtomParams(self.y, self.eta, self.b)

    def forward(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        derivs = atom_grad(self.atoms(), self.constants, points, order=1)
        value = derivs.value @ self.a + self.c
        gradient = np.einsum("nkd,k->nd", derivs.gradient, self.a)
        return value, gradient

    def loss_and_grad(self, batch: TrainingBatch) -> Tuple[float, np.ndarray]:
        x = batch.points
        direction = self.eta / self.tau
        pre = x @ direction.T + self.b[None, :]
        h0, h1, h2 = activation_profile(RELU, pre, self.t, 1.0)
        offset = x[:, None, :] - self.y[None, :, :]
        gauss = np.exp(-0.5 * np.sum(offset * offset, axis=-1))
        phi = h0 * gauss
        # grad_x phi_k = G (h' eta/tau - h (x - y))
        dphi = gauss[..., None] * (
            h1[..., None] * direction[None, :, :] - h0[..., None] * offset
        )

        residual = phi @ self.a + self.c - batch.value
        slope = np.einsum("nkd,k->nd", dphi, self.a) - batch.gradient
        loss = float(np.mean(residual * residual + np.sum(slope * slope, axis=1)))

        scale = 2.0 / len(batch)
        r_dot_dir = slope @ direction.T
        r_dot_offset = np.einsum("nd,nkd->nk", slope, offset)
        r_dot_dphi = np.einsum("nd,nkd->nk", slope, dphi)
        q = gauss * (residual[:, None] * h1 + h2 * r_dot_dir - h1 * r_dot_offset)

        grad_c = scale * np.sum(residual)
        grad_a = scale * (residual @ phi + np.sum(r_dot_dphi, axis=0))
        grad_b = self.a * scale * np.sum(q, axis=0)
        grad_eta = self.a[:, None] * scale * (
            np.einsum("nk,nd->kd", q, x) + np.einsum("nd,nk->kd", slope, h1 * gauss)
        ) / self.tau
        grad_y = self.a[:, None] * scale * (
            np.einsum("nk,nkd->kd", residual[:, None] * phi + r_dot_dphi, offset)
            + np.einsum("nd,nk->kd", slope, phi)
        )
        grad = np.concatenate(
            [grad_eta.ravel(), grad_b, grad_y.ravel(), grad_a, [grad_c]]
        )
        return loss, grad

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.eta.ravel(), self.b, self.y.ravel(), self.a, [self.c]]
        )

    def set_vector(self, vector: np.ndarray) -> None:
        vector = self._check_vector(vector)
        n, d = self.units, self.dim
        sizes = np.cumsum([n * d, n, n * d, n])
        eta, b, y, a, c = np.split(vector, sizes)
        self.eta = eta.reshape(n, d).copy()
        self.b = b.copy()
        self.y = y.reshape(n, d).copy()
        self.a = a.copy()
        self.c = float(c[0])
