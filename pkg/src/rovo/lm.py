"""Levenberg-Marquardt on manifolds with pluggable linear systems.

A problem supplies three things:

* ``cost(state) -> float``
* ``linearize(state) -> LinearSystem`` (gradient plus a damped solver)
* ``retract(state, delta) -> state``

so the same loop drives a 2-parameter test function, pose-only refinement
and the Schur-complement bundle adjuster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import numpy as np

from .errors import NumericalError


@dataclass(frozen=True)
class LmSettings:
    max_iterations: int = 50
    initial_damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 3.0
    gradient_tolerance: float = 1e-12
    step_tolerance: float = 1e-12
    cost_tolerance: float = 1e-12
    baseline_weight: float = 1e6

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) <= 0:
                raise ValueError(f"LmSettings.{name} must be positive")


@dataclass
class LmReport:
    initial_cost: float
    final_cost: float
    iterations: int
    termination: str
    cost_history: list[float] = field(default_factory=list)  # cost after each accepted step
    rejected_steps: int = 0

    @property
    def monotone(self) -> bool:
        seq = [self.initial_cost] + self.cost_history
        return all(b <= a for a, b in zip(seq, seq[1:]))


class LinearSystem(Protocol):
    gradient: np.ndarray

    def solve(self, damping: float) -> np.ndarray:
        """Step minimizing the damped quadratic model."""

    def predicted_decrease(self, delta: np.ndarray) -> float: ...


@dataclass
class DenseSystem:
    """Gauss-Newton normal equations ``H = J^T W J``, ``g = J^T W r``."""

    H: np.ndarray
    gradient: np.ndarray

    def solve(self, damping: float) -> np.ndarray:
        D = np.clip(np.diag(self.H), 1e-6, 1e32)
        A = self.H + damping * np.diag(D)
        try:
            return -np.linalg.solve(A, self.gradient)
        except np.linalg.LinAlgError:
            return -np.linalg.lstsq(A, self.gradient, rcond=None)[0]

    def predicted_decrease(self, delta: np.ndarray) -> float:
        return float(-(self.gradient @ delta) - 0.5 * delta @ self.H @ delta)


def cauchy(s: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Cauchy loss of squared residual norms ``s``: value and first derivative."""
    c2 = scale * scale
    return c2 * np.log1p(s / c2), 1.0 / (1.0 + s / c2)


def squared(s: np.ndarray, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    return np.asarray(s, dtype=float), np.ones_like(s, dtype=float)


LOSSES: dict[str, Callable] = {"cauchy": cauchy, "squared": squared}


class Problem(Protocol):
    def cost(self, state: Any) -> float: ...

    def linearize(self, state: Any) -> LinearSystem: ...

    def retract(self, state: Any, delta: np.ndarray) -> Any: ...


def levenberg_marquardt(problem: Problem, state: Any, settings: LmSettings = LmSettings()) -> tuple[Any, LmReport]:
    """Minimize ``problem.cost`` from ``state``.

    Only steps that strictly lower the cost are accepted, so the cost history
    is monotone.  Termination reasons: ``gradient``, ``step``, ``cost``,
    ``max_iterations`` or ``no_progress`` (damping blew up).
    """
    cost = problem.cost(state)
    if not math.isfinite(cost):
        raise NumericalError("initial cost is not finite")
    report = LmReport(cost, cost, 0, "max_iterations")
    damping = settings.initial_damping
    nu = settings.damping_up
    for it in range(settings.max_iterations):
        report.iterations = it + 1
        system = problem.linearize(state)
        if not np.all(np.isfinite(system.gradient)):
            raise NumericalError("non-finite gradient")
        if np.max(np.abs(system.gradient), initial=0.0) <= settings.gradient_tolerance:
            report.termination = "gradient"
            report.iterations = it
            break
        accepted = False
        while not accepted:
            delta = system.solve(damping)
            if not np.all(np.isfinite(delta)):
                damping *= nu
                nu *= 2.0
                if damping > 1e32:
                    break
                continue
            if np.linalg.norm(delta) <= settings.step_tolerance:
                report.termination = "step"
                break
            candidate = problem.retract(state, delta)
            new_cost = problem.cost(candidate)
            predicted = system.predicted_decrease(delta)
            if math.isfinite(new_cost) and new_cost < cost:
                rho = (cost - new_cost) / predicted if predicted > 0 else 1.0
                damping *= max(1.0 / settings.damping_down, 1.0 - (2.0 * rho - 1.0) ** 3)
                damping = max(damping, 1e-15)
                nu = settings.damping_up
                relative = (cost - new_cost) / max(cost, 1e-300)
                state, cost = candidate, new_cost
                report.cost_history.append(cost)
                accepted = True
                if relative <= settings.cost_tolerance:
                    report.termination = "cost"
            else:
                report.rejected_steps += 1
                damping *= nu
                nu *= 2.0
                if damping > 1e32:
                    break
        if not accepted:
            if report.termination != "step":
                report.termination = "no_progress"
            break
        if report.termination == "cost":
            break
    report.final_cost = cost
    return state, report


@dataclass
class VectorProblem:
    """Residual function over a flat parameter vector, with an optional robust loss.

    ``residual(x)`` returns ``(m,)``; ``jacobian(x)`` returns ``(m, n)``.
    Cost is ``0.5 * sum(loss(r_i^2))`` with the loss applied per residual.
    """

    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    loss: str = "squared"
    scale: float = 1.0

    def cost(self, x: np.ndarray) -> float:
        r = self.residual(x)
        rho, _ = LOSSES[self.loss](r * r, self.scale)
        return 0.5 * float(np.sum(rho))

    def linearize(self, x: np.ndarray) -> DenseSystem:
        r = self.residual(x)
        J = self.jacobian(x)
        _, w = LOSSES[self.loss](r * r, self.scale)
        Jw = J * w[:, None]
        return DenseSystem(J.T @ Jw, Jw.T @ r)

    def retract(self, x: np.ndarray, delta: np.ndarray) -> np.ndarray:
        return x + delta


def solve_lm(problem: Problem, state: Any, settings: LmSettings = LmSettings()):
    """Alias kept for readability at call sites."""
    return levenberg_marquardt(problem, state, settings)
