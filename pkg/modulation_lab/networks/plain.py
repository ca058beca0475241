from dataclasses import dataclass
from typing import ClassVar, Tuple

import numpy as np

from modulation_lab.exceptions import InvalidInputError
from modulation_lab.networks.base import ShallowNetwork, TrainingBatch
from modulation_lab.sobolev import Box


@dataclass
class PlainReluNetwork(ShallowNetwork):
    """
    u(x) = sum_k zeta_k ReLU(omega_k . x + m_k) + z

    Flat parameter order: omega (M x d, row-major), m (M), zeta (M), z.
    """

    kind: ClassVar[str] = "plain"
    kind_code: ClassVar[int] = 2

    omega: np.ndarray
    m: np.ndarray
    zeta: np.ndarray
    z: float = 0.0

    def __post_init__(self):
        self.omega = np.atleast_2d(np.asarray(self.omega, dtype=float))
        self.m = np.atleast_1d(np.asarray(self.m, dtype=float))
        self.zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        units = self.omega.shape[0]
        if self.m.shape != (units,) or self.zeta.shape != (units,):
            raise InvalidInputError("omega, m and zeta must describe the same units")

    @classmethod
    def initialize(
        cls, units: int, dim: int, domain: Box, rng: np.random.Generator
    ) -> "PlainReluNetwork":
        return cls(
            omega=rng.uniform(-3.0, 3.0, size=(units, dim)),
            m=rng.uniform(-3.0, 3.0, size=units),
            zeta=rng.normal(0.0, 1.0 / np.sqrt(units), size=units),
            z=0.0,
        )

    @property
    def dim(self) -> int:
        return self.omega.shape[1]

    @property
    def units(self) -> int:
        return self.omega.shape[0]

    @staticmethod
    def parameter_count(units: int, dim: int) -> int:
        return units * (dim + 2) + 1

    def _hidden(self, points: np.ndarray):
        pre = np.asarray(points, dtype=float) @ self.omega.T + self.m[None, :]
        return np.maximum(pre, 0.0), np.heaviside(pre, 1.0)

    def forward(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        active, step = self._hidden(points)
        value = active @ self.zeta + self.z
        gradient = (step * self.zeta[None, :]) @ self.omega
        return value, gradient

    def loss_and_grad(self, batch: TrainingBatch) -> Tuple[float, np.ndarray]:
        x = batch.points
        active, step = self._hidden(x)
        residual = active @ self.zeta + self.z - batch.value
        slope = (step * self.zeta[None, :]) @ self.omega - batch.gradient
        loss = float(np.mean(residual * residual + np.sum(slope * slope, axis=1)))

        scale = 2.0 / len(batch)
        r_dot_omega = slope @ self.omega.T
        grad_z = scale * np.sum(residual)
        grad_zeta = scale * (residual @ active + np.sum(step * r_dot_omega, axis=0))
        grad_m = self.zeta * scale * (residual @ step)
        grad_omega = self.zeta[:, None] * scale * (
            np.einsum("nk,nd->kd", step * residual[:, None], x)
            + np.einsum("nk,nd->kd", step, slope)
        )
        grad = np.concatenate([grad_omega.ravel(), grad_m, grad_zeta, [grad_z]])
        return loss, grad

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.omega.ravel(), self.m, self.zeta, [self.z]])

    def set_vector(self, vector: np.ndarray) -> None:
        vector = self._check_vector(vector)
        n, d = self.units, self.dim
        omega, m, zeta, z = np.split(vector, np.cumsum([n * d, n, n]))
        self.omega = omega.reshape(n, d).copy()
        self.m = m.copy()
        self.zeta = zeta.copy()
        self.z = float(z[0])
