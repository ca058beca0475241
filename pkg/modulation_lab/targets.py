"""
Target functions with analytic gradients.

Custom targets are written in a small grammar: sums, differences and
products, integer powers 0..3, numeric constants, the variables ``x``/``y``
(or ``x0``/``x1``) and the functions ``gaussian(u) = exp(-u^2)``, ``sin`` and
``cos``. Expressions are parsed with :mod:`ast` and evaluated in forward
mode so every target carries its exact gradient.
"""

import ast
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from modulation_lab.exceptions import ConfigurationError
from modulation_lab.sobolev import FunctionChannels

Dual = Tuple[np.ndarray, np.ndarray]


@dataclass
class Target(ABC):
    """A real function on R^d with its gradient."""

    dim: int = 1

    @abstractmethod
    def evaluate(self, points: np.ndarray) -> Dual:
        """Values (m,) and gradients (m, d) at (m, d) points."""
        raise NotImplementedError

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.evaluate(np.asarray(points, dtype=float))[0]

    def channels(self, points: np.ndarray) -> FunctionChannels:
        value, gradient = self.evaluate(np.asarray(points, dtype=float))
        return FunctionChannels(value=value, gradient=gradient)


@dataclass
class GaussianSine1D(Target):
    """f(x) = exp(-x^2) sin(3x)."""

    dim: int = 1

    def evaluate(self, points: np.ndarray) -> Dual:
        x = points[:, 0]
        envelope = np.exp(-x * x)
        value = envelope * np.sin(3.0 * x)
        slope = envelope * (3.0 * np.cos(3.0 * x) - 2.0 * x * np.sin(3.0 * x))
        return value, slope[:, None]


@dataclass
class GaussianSine2D(Target):
    """F(x, y) = exp(-(x^2 + y^2)) sin(x + y)."""

    dim: int = 2

    def evaluate(self, points: np.ndarray) -> Dual:
        x, y = points[:, 0], points[:, 1]
        envelope = np.exp(-(x * x + y * y))
        phase = x + y
        value = envelope * np.sin(phase)
        gx = envelope * (np.cos(phase) - 2.0 * x * np.sin(phase))
        gy = envelope * (np.cos(phase) - 2.0 * y * np.sin(phase))
        return value, np.stack([gx, gy], axis=1)


VARIABLES: Dict[str, int] = {"x": 0, "y": 1, "x0": 0, "x1": 1}


class _ForwardEvaluator:
    def __init__(self, points: np.ndarray):
        self.points = points
        self.m, self.dim = points.shape

    def constant(self, c: float) -> Dual:
        return np.full(self.m, c), np.zeros((self.m, self.dim))

    def visit(self, node: ast.AST) -> Dual:
        if isinstance(node, ast.Expression):
            return self.visit(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return self.constant(float(node.value))
        if isinstance(node, ast.Name):
            index = VARIABLES.get(node.id)
            if index is None or index >= self.dim:
                raise ConfigurationError(f"Unknown variable '{node.id}'")
            grad = np.zeros((self.m, self.dim))
            grad[:, index] = 1.0
            return self.points[:, index].copy(), grad
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v, g = self.visit(node.operand)
            return (-v, -g) if isinstance(node.op, ast.USub) else (v, g)
        if isinstance(node, ast.BinOp):
            return self.binary(node)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            return self.call(node)
        raise ConfigurationError(f"Unsupported expression: {ast.dump(node)}")

    def binary(self, node: ast.BinOp) -> Dual:
        if isinstance(node.op, ast.Pow):
            exponent = node.right
            if not (
                isinstance(exponent, ast.Constant)
                and isinstance(exponent.value, int)
                and 0 <= exponent.value <= 3
            ):
                raise ConfigurationError("Powers must be integer constants 0..3")
            v, g = self.visit(node.left)
            k = exponent.value
            if k == 0:
                return self.constant(1.0)
            return v**k, (k * v ** (k - 1))[:, None] * g
        lv, lg = self.visit(node.left)
        rv, rg = self.visit(node.right)
        if isinstance(node.op, ast.Add):
            return lv + rv, lg + rg
        if isinstance(node.op, ast.Sub):
            return lv - rv, lg - rg
        if isinstance(node.op, ast.Mult):
            return lv * rv, lg * rv[:, None] + lv[:, None] * rg
        raise ConfigurationError(f"Unsupported operator {type(node.op).__name__}")

    def call(self, node: ast.Call) -> Dual:
        name = node.func.id  # type: ignore[attr-defined]
        if len(node.args) != 1 or node.keywords:
            raise ConfigurationError(f"{name}() takes exactly one argument")
        v, g = self.visit(node.args[0])
        if name == "sin":
            return np.sin(v), np.cos(v)[:, None] * g
        if name == "cos":
            return np.cos(v), -np.sin(v)[:, None] * g
        if name == "gaussian":
            e = np.exp(-v * v)
            return e, (-2.0 * v * e)[:, None] * g
        raise ConfigurationError(f"Unknown function '{name}'")


@dataclass
class ExpressionTarget(Target):
    expression: str = "gaussian(x) * sin(3 * x)"

    def __post_init__(self):
        try:
            self._tree = ast.parse(self.expression, mode="eval")
        except SyntaxError as e:
            raise ConfigurationError(f"Cannot parse target '{self.expression}': {e}")
        # validate names and structure once on a dummy point
        self.evaluate(np.zeros((1, self.dim)))

    def evaluate(self, points: np.ndarray) -> Dual:
        return _ForwardEvaluator(points).visit(self._tree)


TARGET_CLASS_MAP = {"target1d": GaussianSine1D, "target2d": GaussianSine2D}


def make_target(target_id: str, dim: int = 1, expression: str = "") -> Target:
    """Build a target by id ("target1d", "target2d" or "custom")."""
    if target_id == "custom":
        if not expression:
            raise ConfigurationError("Custom targets need an expression")
        return ExpressionTarget(dim=dim, expression=expression)
    target_class = TARGET_CLASS_MAP.get(target_id)
    if target_class is None:
        raise ConfigurationError(f"Unknown target: {target_id}")
    return target_class()
