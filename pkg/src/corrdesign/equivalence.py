"""Optimality certificates and the resulting upper bound on exact designs.

For a measure ``xi`` with sensitivities ``h`` and ``d = n sum xi h``, concavity
gives for every measure ``mu``

    Phi(M(mu)) <= Phi(M(xi)) + (kappa/n) sum (mu - xi) h.

The right side is maximized by putting ``1/n`` on the ``n`` largest ``h``, so

    max Phi <= Phi(M(xi)) + (kappa/n) (top_n_sum - d) / n.

Every exact n-point design is a measure, so this also bounds all of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criteria import Criterion, ExactDesign, efficiency, info_matrix_exact, phi
from .vncore import DesignMeasure, equivalence_context


@dataclass(frozen=True, eq=False)
class OptimalityCertificate:
    criterion: Criterion
    n: int
    kappa: float
    order: np.ndarray  # indices sorted by decreasing h
    h_sorted: np.ndarray
    top_n_sum: float
    d_value: float
    delta_h: float  # max(0, (top_n_sum - d)/n), in sensitivity units
    delta_gap: float  # (kappa/n) * delta_h, in criterion units
    phi: float
    bound: float
    is_optimal: bool
    tol: float

    def to_dict(self) -> dict:
        head = min(2 * self.n, self.order.size)
        return {
            "criterion": self.criterion.value,
            "n": self.n,
            "kappa": self.kappa,
            "phi": self.phi,
            "top_n_sum": self.top_n_sum,
            "d_value": self.d_value,
            "delta_h": self.delta_h,
            "delta_gap": self.delta_gap,
            "relative_gap": self.delta_gap / self.phi,
            "bound": self.bound,
            "is_optimal": self.is_optimal,
            "tol": self.tol,
            "h_head": [
                {"index": int(i), "h": float(v)} for i, v in zip(self.order[:head], self.h_sorted[:head])
            ],
        }


def certify(problem, criterion, xi_bar, tol: float | None = None) -> OptimalityCertificate:
    """Check the first-order optimality condition at ``xi_bar`` and bound the criterion.

    ``tol`` defaults to ``1e-8 * max(1, d)``, the scale of the compared sums.
    """
    criterion = Criterion.parse(criterion)
    ctx = equivalence_context(problem, criterion, xi_bar)
    n = problem.n
    order = np.argsort(-ctx.h_values, kind="stable")
    h_sorted = ctx.h_values[order]
    top = float(np.sum(h_sorted[:n]))
    d = ctx.d_value
    if tol is None:
        tol = 1e-8 * max(1.0, abs(d))
    delta_h = max(0.0, (top - d) / n)
    delta_gap = problem.kappa / n * delta_h
    return OptimalityCertificate(
        criterion=criterion,
        n=n,
        kappa=problem.kappa,
        order=order,
        h_sorted=h_sorted,
        top_n_sum=top,
        d_value=d,
        delta_h=delta_h,
        delta_gap=delta_gap,
        phi=ctx.phi,
        bound=ctx.phi + delta_gap,
        is_optimal=bool(top <= d + tol),
        tol=tol,
    )


def calibrate(problem, criterion, xi_bar, designs, certificate: OptimalityCertificate | None = None):
    """Efficiencies ``Phi(M_T) / bound`` for a list of exact designs."""
    if certificate is None:
        certificate = certify(problem, criterion, xi_bar)
    out = []
    for design in designs:
        design = design if isinstance(design, ExactDesign) else ExactDesign.of(design)
        val = phi(criterion, info_matrix_exact(problem, design))
        out.append((design, val, efficiency(val, certificate.bound)))
    return out


__all__ = ["DesignMeasure", "OptimalityCertificate", "calibrate", "certify"]
