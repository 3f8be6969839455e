"""Shared integration and randomness kernels.

Everything downstream funnels Gaussian expectations through
:func:`gauss_expect`, so quadrature exactness and Monte Carlo determinism
are controlled in a single place.  Gauss-Hermite rules are the probabilists'
ones (weight ``exp(-x^2/2)/sqrt(2*pi)``), matching the Hermite family used
by the chaos module.  Monte Carlo uses the counter-based Philox generator
with one substream per fixed-size batch, so results depend only on the seed
and the sample count, never on scheduling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .errors import QuadratureFailure, SchemeTooCoarse

GH_MAX_NODES = 128
# hard cap on tensor-grid size before the scheme must switch to Monte Carlo
_GRID_CAP = 4_000_000
_MC_BATCH = 1 << 16


@dataclass(frozen=True)
class QuadScheme:
    """Declarative integration scheme.

    kind is one of ``tensor_gauss_hermite``, ``monte_carlo`` or
    ``time_panels``; the remaining fields are only meaningful for the kinds
    that use them.  ``tolerance`` is optional: when set, Monte Carlo
    estimates raise :class:`SchemeTooCoarse` if the standard error exceeds
    it, and chaos projections use it to validate polynomial residuals.
    """

    kind: str
    nodes: int = 0
    samples: int = 0
    seed: int = 0
    order: int = 8
    max_refine: int = 14
    tolerance: float | None = None

    def __post_init__(self):
        if self.kind not in ("tensor_gauss_hermite", "monte_carlo", "time_panels"):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "tensor_gauss_hermite" and not 1 <= self.nodes <= GH_MAX_NODES:
            raise ValueError("tensor_gauss_hermite needs 1 <= nodes <= 128")
        if self.kind == "monte_carlo" and self.samples < 2:
            raise ValueError("monte_carlo needs at least 2 samples")

    @classmethod
    def gauss_hermite(cls, nodes, tolerance=None):
        return cls(kind="tensor_gauss_hermite", nodes=nodes, tolerance=tolerance)

    @classmethod
    def monte_carlo(cls, samples, seed=0, tolerance=None):
        return cls(kind="monte_carlo", samples=samples, seed=seed, tolerance=tolerance)

    @classmethod
    def time_panels(cls, order=8, max_refine=14, tolerance=None):
        return cls(kind="time_panels", order=order, max_refine=max_refine,
                   tolerance=tolerance)

    @classmethod
    def default_for(cls, dim, degree, seed=0):
        """Tensor Gauss-Hermite with degree + 2 nodes per axis for dim <= 4,
        Monte Carlo fallback above that."""
        if dim <= 4:
            return cls.gauss_hermite(min(degree + 2, GH_MAX_NODES))
        return cls.monte_carlo(200_000, seed=seed)


def gh_nodes(n):
    """Nodes and weights of the n-point probabilists' Gauss-Hermite rule.

    The weights sum to one, so the rule integrates against the standard
    normal density and is exact for polynomials of degree 2n - 1.
    """
    if not 1 <= n <= GH_MAX_NODES:
        raise ValueError("gauss-hermite rule needs 1 <= n <= 128")
    x, w = hermegauss(n)
    return x, w / math.sqrt(2.0 * math.pi)


def gh_tensor(dim, n):
    """Tensor-product Gauss-Hermite grid: points of shape (n**dim, dim) and
    the matching product weights."""
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    if n ** dim > _GRID_CAP:
        raise SchemeTooCoarse(
            f"tensor grid {n}^{dim} exceeds the size cap; use monte_carlo")
    x, w = gh_nodes(n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=-1)
    wts = np.ones(len(pts))
    for axis in range(dim):
        wts *= w[_axis_index(pts, x, axis)]
    return pts, wts


def _axis_index(pts, x, axis):
    # recover per-axis node indices; nodes are distinct so searchsorted is safe
    order = np.argsort(x)
    return order[np.searchsorted(x[order], pts[:, axis])]


def eval_batch(f, pts):
    """Evaluate f on a batch of points, accepting both vectorized callables
    (f(pts) -> (m,)) and scalar ones (f(p) -> float)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    m = len(pts)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = np.asarray(f(pts), dtype=float)
    except Exception:
        out = None
    if out is not None and out.shape == (m,):
        return out
    if out is not None and out.shape == (m, 1):
        return out[:, 0]
    return np.array([float(f(p)) for p in pts], dtype=float)


def _philox_batch(seed, batch_index, shape):
    bg = np.random.Philox(key=np.uint64(seed)).jumped(batch_index)
    return np.random.Generator(bg).standard_normal(shape)


def mc_estimate(f, sampler, n, seed):
    """Monte Carlo mean of f over draws from ``sampler``.

    sampler(generator, size) must return an array of ``size`` samples.
    Samples are drawn in fixed-size batches, each from its own jumped
    Philox substream, so the estimate is a pure function of (seed, n).
    Returns (mean, stderr).
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    total = 0.0
    total_sq = 0.0
    done = 0
    batch_index = 0
    while done < n:
        size = min(_MC_BATCH, n - done)
        bg = np.random.Philox(key=np.uint64(seed)).jumped(batch_index)
        xs = sampler(np.random.Generator(bg), size)
        vals = eval_batch(f, xs)
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
        done += size
        batch_index += 1
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    return mean, math.sqrt(var / n)


def gauss_expect(f, mean, cols, scheme):
    """E[f(mean + cols @ xi)] with xi a standard normal vector.

    ``cols`` is a d x m factor of the covariance (cov = cols @ cols.T);
    columns that vanish are pruned before building the grid.  Gauss-Hermite
    mode trusts the rule (exact for polynomial f of degree < 2*nodes);
    Monte Carlo mode enforces ``scheme.tolerance`` on the standard error
    when a tolerance is set.
    """
    value, _ = gauss_expect_err(f, mean, cols, scheme)
    return value


def gauss_expect_err(f, mean, cols, scheme):
    """Like :func:`gauss_expect` but also returns the error estimate
    (zero in quadrature mode, the standard error in Monte Carlo mode)."""
    mean = np.asarray(mean, dtype=float)
    cols = np.atleast_2d(np.asarray(cols, dtype=float))
    if cols.shape[0] != mean.shape[0]:
        raise ValueError("cols must have one row per coordinate of mean")
    norms = np.linalg.norm(cols, axis=0)
    cols = cols[:, norms > 0.0]
    m = cols.shape[1]
    if m == 0:
        return float(eval_batch(f, mean[None, :])[0]), 0.0
    if scheme.kind == "tensor_gauss_hermite":
        pts, wts = gh_tensor(m, scheme.nodes)
        vals = eval_batch(f, mean[None, :] + pts @ cols.T)
        return float(np.dot(wts, vals)), 0.0
    if scheme.kind == "monte_carlo":
        def sampler(gen, size):
            return mean[None, :] + gen.standard_normal((size, m)) @ cols.T
        est, err = mc_estimate(f, sampler, scheme.samples, scheme.seed)
        if scheme.tolerance is not None and err > scheme.tolerance * max(1.0, abs(est)):
            raise SchemeTooCoarse(
                f"standard error {err:.3e} above tolerance {scheme.tolerance:.3e}")
        return est, err
    raise ValueError(f"scheme kind {scheme.kind!r} cannot average over a Gaussian")


def panel_integrate(f, a, b, order=8, max_refine=14, rtol=1e-10):
    """Composite Gauss-Legendre integral of a vector/matrix-valued function.

    f must map an array of nodes (m,) to an array (m, ...) of integrand
    values.  The panel count doubles until the L1 mass of the result is
    stable to ``rtol`` (relative once the mass exceeds one), starting from a
    single panel.  Raises :class:`QuadratureFailure` when the refinement cap
    is hit without convergence.
    """
    if b < a:
        raise ValueError("integration interval is reversed")
    probe = np.asarray(f(np.array([0.5 * (a + b)])), dtype=float)
    if b == a:
        return np.zeros(probe.shape[1:])
    xg, wg = leggauss(order)
    previous = None
    panels = 1
    for _ in range(max_refine + 1):
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        # nodes for every panel at once: shape (panels, order) -> flat
        nodes = (mid[:, None] + half[:, None] * xg[None, :]).reshape(-1)
        weights = (half[:, None] * wg[None, :]).reshape(-1)
        vals = np.asarray(f(nodes), dtype=float)
        result = np.tensordot(weights, vals, axes=(0, 0))
        mass = float(np.sum(np.abs(result)))
        if previous is not None and abs(mass - previous) <= rtol * max(1.0, mass):
            return result
        previous = mass
        panels *= 2
    raise QuadratureFailure(
        f"panel integration on [{a}, {b}] did not converge in {max_refine} refinements")


def psd_sqrt(mat, neg_tol=1e-10):
    """Symmetric square root of a positive semidefinite matrix.

    Eigenvalues in [-neg_tol, 0) are clamped to zero; anything below that
    is treated as a genuine failure of positivity and raises ValueError.
    """
    mat = np.asarray(mat, dtype=float)
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    if vals.min(initial=0.0) < -neg_tol:
        raise ValueError(f"matrix has eigenvalue {vals.min():.3e}, not psd")
    root = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * root) @ vecs.T
