"""Fixed Gauss rules and composite rules used by the vectorized integrators.

Fixed (non-adaptive) rules are used wherever the same integral is evaluated
for many parameter values at once, e.g. a mixture over y for a whole grid of
z, or a Laplace transform at every node of an inversion contour.  Reusing the
nodes also makes finite-difference checks of such integrals consistent.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def gauss_legendre_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = roots_legendre(n)
    x = 0.5 * (1.0 + x)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def gauss_jacobi_unit(n: int, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for the integral of ``g(u) u**beta`` over [0, 1].

    The weights absorb the factor ``u**beta``, so only ``g`` is sampled.
    """
    if beta <= -1.0:
        raise ValueError("beta must exceed -1")
    x, w = roots_jacobi(n, 0.0, beta)
    u = 0.5 * (1.0 + x)
    w = w * 2.0 ** (-beta - 1.0)
    u.setflags(write=False)
    w.setflags(write=False)
    return u, w


@dataclass(frozen=True)
class CompositeRule:
    """A fixed quadrature rule ``sum(w_i g(x_i))`` for ``int g(x) dx``.

    Attributes
    ----------
    nodes, weights : ndarray
        Quadrature nodes and weights (1-D, same length).
    lower, upper : float
        Integration interval covered by the rule.
    singular_power : float or None
        If set, the first panel is a Gauss-Jacobi panel whose weights already
        contain ``x**singular_power``.  Integrands must then be supplied with
        that factor divided out on the first panel; use :meth:`integrate_singular`.
    n_first : int
        Number of nodes in the first (possibly Jacobi) panel.
    """

    nodes: np.ndarray
    weights: np.ndarray
    lower: float
    upper: float
    singular_power: float | None = None
    n_first: int = 0

    @classmethod
    def graded(
        cls,
        upper: float,
        *,
        smallest: float,
        grade_to: float,
        step: float,
        order: int = 16,
        singular_power: float | None = None,
    ) -> "CompositeRule":
        """Geometrically graded panels near 0 followed by uniform panels.

        Panels are ``[0, smallest]``, then doubling widths up to ``grade_to``,
        then uniform panels of width at most ``step`` up to ``upper``.
        """
        if not 0.0 < smallest < upper:
            raise ValueError("need 0 < smallest < upper")
        grade_to = min(max(grade_to, smallest), upper)
        edges = [0.0]
        e = smallest
        while e < grade_to:
            edges.append(e)
            e *= 2.0
        edges.append(grade_to)
        if upper > grade_to:
            n_uni = int(np.ceil((upper - grade_to) / step))
            edges.extend(np.linspace(grade_to, upper, n_uni + 1)[1:].tolist())
        edges = np.unique(np.asarray(edges))
        return cls.from_edges(edges, order=order, singular_power=singular_power)

    @classmethod
    def from_edges(
        cls, edges: np.ndarray, *, order: int = 16, singular_power: float | None = None
    ) -> "CompositeRule":
        edges = np.asarray(edges, dtype=float)
        a, b = edges[:-1], edges[1:]
        x, w = gauss_legendre_unit(order)
        nodes = (a[:, None] + (b - a)[:, None] * x[None, :]).ravel()
        weights = ((b - a)[:, None] * w[None, :]).ravel()
        n_first = 0
        if singular_power is not None and edges[0] == 0.0:
            u, wj = gauss_jacobi_unit(order, float(singular_power))
            h = edges[1]
            nodes[:order] = h * u
            weights[:order] = wj * h ** (1.0 + singular_power)
            n_first = order
        nodes.setflags(write=False)
        weights.setflags(write=False)
        return cls(nodes, weights, float(edges[0]), float(edges[-1]), singular_power, n_first)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate sampled values (last axis runs over the nodes)."""
        if self.n_first and self.singular_power is not None:
            raise ValueError("rule has a singular first panel; use integrate_singular")
        return np.asarray(values) @ self.weights

    def integrate_singular(self, values: np.ndarray) -> np.ndarray:
        """Integrate ``values`` known to behave like ``x**singular_power`` near 0.

        ``values`` are the full integrand samples; on the first panel the power
        is divided out before applying the Jacobi weights.
        """
        values = np.array(values, dtype=float if not np.iscomplexobj(values) else complex)
        if self.n_first:
            xs = self.nodes[: self.n_first]
            values[..., : self.n_first] = values[..., : self.n_first] * xs ** (-self.singular_power)
        return values @ self.weights
