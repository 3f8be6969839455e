"""Hermite calculus and Wiener chaos expansions.

Polynomials are kept in the normalized family phi_n = He_n/n!, whose
three-term recurrence is stable far beyond the degrees used here; the
orthonormal basis of L^2(gamma) is Phi_alpha = sqrt(alpha!) prod_j
phi_{alpha_j}(x_j/sqrt(lambda_j)) over graded multi-indices.  Expansions are
sparse maps from multi-index to coefficient, with closed forms for the two
families the rest of the library leans on: exponentials of white noise and
products of white noises.
"""

from __future__ import annotations

import itertools
import json
import math
from functools import lru_cache

import numpy as np

from .errors import (DegreeTooLarge, OffSupport, SchemeTooCoarse,
                     SizeTooLarge)
from .numerics import QuadScheme, eval_batch, gh_tensor

HERMITE_MAX_DEGREE = 60
MONOMIAL_MAX_FACTORS = 8
SIGMA_MAX_ORDER = 20


class MultiIndex(tuple):
    """Multi-index of nonnegative integers; behaves as a plain tuple."""

    def __new__(cls, entries):
        entries = tuple(int(e) for e in entries)
        if any(e < 0 for e in entries):
            raise ValueError("multi-index entries must be nonnegative")
        return super().__new__(cls, entries)

    @property
    def order(self):
        return sum(self)

    @property
    def factorial(self):
        out = 1
        for e in self:
            out *= math.factorial(e)
        return out

    def repeated(self):
        """Non-decreasing list of positions, each repeated by its entry:
        (2,0,1) -> (0,0,2)."""
        return tuple(j for j, e in enumerate(self) for _ in range(e))


def _colex_key(alpha):
    return (sum(alpha), tuple(reversed(alpha)))


@lru_cache(maxsize=None)
def _indices(d, n):
    if d == 1:
        return (MultiIndex((n,)),)
    out = []
    for last in range(n + 1):
        out.extend(MultiIndex(head + (last,)) for head in _indices(d - 1, n - last))
    return tuple(out)


def enumerate_indices(d, n):
    """All multi-indices of length d with |alpha| = n, in graded colex order;
    there are C(n+d-1, n) of them."""
    if d < 1 or n < 0:
        raise ValueError("need d >= 1 and n >= 0")
    return list(_indices(d, n))


def enumerate_up_to(d, max_degree):
    out = []
    for n in range(max_degree + 1):
        out.extend(_indices(d, n))
    return out


def sigma_class_count(alpha):
    """Number of distinct rearrangements of the repeated-index list: |alpha|!/alpha!."""
    alpha = MultiIndex(alpha)
    if alpha.order > SIGMA_MAX_ORDER:
        raise SizeTooLarge(f"order {alpha.order} exceeds the combinatorial budget")
    return math.factorial(alpha.order) // alpha.factorial


def hermite_phi(n, xi):
    """phi_n(xi) = He_n(xi)/n!, the normalized probabilists' Hermite polynomial."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    if n > HERMITE_MAX_DEGREE:
        raise DegreeTooLarge(f"degree {n} exceeds the recurrence budget")
    xi = np.asarray(xi, dtype=float)
    prev = np.ones_like(xi)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = xi.copy()
    for k in range(1, n):
        prev, cur = cur, (xi * cur - prev) / (k + 1)
    return cur if cur.ndim else float(cur)


def _phi_table(xi, max_degree):
    """phi_k(xi) for k = 0..max_degree; xi of shape (m,), result (max_degree+1, m)."""
    out = np.empty((max_degree + 1, len(xi)))
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = xi
    for k in range(1, max_degree):
        out[k + 1] = (xi * out[k] - out[k - 1]) / (k + 1)
    return out


def phi_alpha(gamma, alpha, x):
    """Orthonormal Hermite basis element of L^2(gamma) at x (point or batch)."""
    alpha = MultiIndex(alpha)
    if len(alpha) != gamma.dim:
        raise ValueError("multi-index length does not match the dimension")
    if any(e > 0 and not s for e, s in zip(alpha, gamma.support)):
        raise OffSupport("multi-index loads a kernel direction")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    out = np.full(len(x), math.sqrt(alpha.factorial))
    for j, e in enumerate(alpha):
        if e > 0:
            out = out * hermite_phi(e, x[:, j] / math.sqrt(gamma.eigenvalues[j]))
    return float(out[0]) if single else out


class ChaosExpansion:
    """Sparse chaos expansion: coefficients over multi-indices up to max_degree."""

    def __init__(self, measure, max_degree, coeffs, residual=None):
        self.measure = measure
        self.max_degree = int(max_degree)
        clean = {}
        for alpha, c in coeffs.items():
            alpha = MultiIndex(alpha)
            if len(alpha) != measure.dim:
                raise ValueError("multi-index length does not match the measure")
            if alpha.order > self.max_degree:
                raise ValueError("coefficient beyond max_degree")
            if c != 0.0:
                clean[alpha] = float(c)
        self.coeffs = clean
        self.residual = residual

    def __getitem__(self, alpha):
        return self.coeffs.get(MultiIndex(alpha), 0.0)

    def sorted_items(self):
        return sorted(self.coeffs.items(), key=lambda kv: _colex_key(kv[0]))

    def degree_slice(self, n):
        return {a: c for a, c in self.coeffs.items() if a.order == n}

    def to_json(self):
        return json.dumps([{"alpha": list(a), "c": c} for a, c in self.sorted_items()])

    @classmethod
    def from_json(cls, payload, measure, max_degree):
        data = json.loads(payload) if isinstance(payload, str) else payload
        return cls(measure, max_degree,
                   {MultiIndex(item["alpha"]): item["c"] for item in data})


def eval_expansion(expansion, x):
    """Pointwise sum of coefficients times basis elements."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    out = np.zeros(len(x))
    for alpha, c in expansion.coeffs.items():
        out += c * phi_alpha(expansion.measure, alpha, x)
    return float(out[0]) if single else out


def l2_norm(expansion):
    return math.sqrt(sum(c * c for c in expansion.coeffs.values()))


def _support_tables(gamma, pts_embedded, max_degree):
    """phi tables per supported coordinate for a batch of points in X."""
    tables = {}
    for j in range(gamma.dim):
        if gamma.support[j]:
            xi = pts_embedded[:, j] / math.sqrt(gamma.eigenvalues[j])
            tables[j] = _phi_table(xi, max_degree)
    return tables


def _phi_from_tables(alpha, tables, m):
    out = np.full(m, math.sqrt(alpha.factorial))
    for j, e in enumerate(alpha):
        if e > 0:
            out = out * tables[j][e]
    return out


def project(gamma, f, max_degree, scheme=None, expect_polynomial=False):
    """Chaos coefficients c_alpha = integral of f * Phi_alpha against gamma.

    With expect_polynomial=True the Parseval residual
    ||f||^2 - sum c_alpha^2 is computed on the same grid and must stay below
    the scheme tolerance (default 1e-9), otherwise SchemeTooCoarse is raised;
    the residual is stored on the returned expansion either way.
    """
    supp = np.flatnonzero(gamma.support)
    if scheme is None:
        scheme = QuadScheme.default_for(len(supp), max_degree)
    alphas = [a for a in enumerate_up_to(gamma.dim, max_degree)
              if all(e == 0 or gamma.support[j] for j, e in enumerate(a))]
    if scheme.kind == "tensor_gauss_hermite":
        pts, wts = gh_tensor(len(supp), scheme.nodes)
        x = np.zeros((len(pts), gamma.dim))
        x[:, supp] = pts * np.sqrt(gamma.eigenvalues[supp])[None, :]
        fv = eval_batch(f, x)
        tables = _support_tables(gamma, x, max_degree)
        coeffs = {a: float(np.dot(wts, fv * _phi_from_tables(a, tables, len(pts))))
                  for a in alphas}
        sq_mass = float(np.dot(wts, fv * fv))
    elif scheme.kind == "monte_carlo":
        sums = np.zeros(len(alphas))
        sq_sum = 0.0
        done = 0
        batch_index = 0
        while done < scheme.samples:
            size = min(1 << 16, scheme.samples - done)
            bg = np.random.Philox(key=np.uint64(scheme.seed)).jumped(batch_index)
            draw = np.random.Generator(bg).standard_normal((size, len(supp)))
            x = np.zeros((size, gamma.dim))
            x[:, supp] = draw * np.sqrt(gamma.eigenvalues[supp])[None, :]
            fv = eval_batch(f, x)
            tables = _support_tables(gamma, x, max_degree)
            for i, a in enumerate(alphas):
                sums[i] += float(np.sum(fv * _phi_from_tables(a, tables, size)))
            sq_sum += float(np.sum(fv * fv))
            done += size
            batch_index += 1
        coeffs = {a: s / scheme.samples for a, s in zip(alphas, sums)}
        sq_mass = sq_sum / scheme.samples
    else:
        raise ValueError("project needs a Gaussian-average scheme")
    residual_sq = sq_mass - sum(c * c for c in coeffs.values())
    residual = math.sqrt(max(residual_sq, 0.0))
    if expect_polynomial:
        # tolerance applies to the Parseval mass mismatch; the norm itself is
        # a square root of a float cancellation and cannot do better
        tol = scheme.tolerance if scheme.tolerance is not None else 1e-9
        if residual_sq > tol * max(1.0, sq_mass):
            raise SchemeTooCoarse(
                f"polynomial reconstruction residual {residual:.3e} above budget")
    return ChaosExpansion(gamma, max_degree, coeffs, residual=residual)


def exp_functional_coeffs(gamma, z, max_degree):
    """Chaos coefficients of the exponential functional E_z:
    c_alpha = prod_j z_j^{alpha_j} / sqrt(alpha!), over the support of gamma."""
    z = np.asarray(z, dtype=float).reshape(-1)
    live = [j for j in range(gamma.dim) if gamma.support[j] and z[j] != 0.0]
    coeffs = {MultiIndex([0] * gamma.dim): 1.0}
    for n in range(1, max_degree + 1):
        for packed in (_indices(len(live), n) if live else ()):
            alpha = [0] * gamma.dim
            for pos, e in zip(live, packed):
                alpha[pos] = e
            alpha = MultiIndex(alpha)
            c = 1.0
            for pos, e in zip(live, packed):
                c *= z[pos] ** e
            coeffs[alpha] = c / math.sqrt(alpha.factorial)
    return ChaosExpansion(gamma, max_degree, coeffs)


def monomial_coeffs(gamma, h_list):
    """Degree-n chaos slice of a product of white noises prod_j W_{h_j}.

    c_alpha = sqrt(alpha!) * sum over distinct rearrangements tau of the
    repeated-index list of alpha of prod_k h_k[tau_k]; everything lives on
    the support of gamma, kernel components of the h_j are ignored.
    """
    hs = [np.asarray(h, dtype=float).reshape(-1) for h in h_list]
    n = len(hs)
    if n > MONOMIAL_MAX_FACTORS:
        raise SizeTooLarge(f"{n} factors exceed the rearrangement budget")
    if n == 0:
        return ChaosExpansion(gamma, 0, {MultiIndex([0] * gamma.dim): 1.0})
    mask = gamma.support
    coeffs = {}
    for alpha in _indices(gamma.dim, n):
        if any(e > 0 and not mask[j] for j, e in enumerate(alpha)):
            continue
        idx = alpha.repeated()
        total = 0.0
        for tau in sorted(set(itertools.permutations(idx))):
            term = 1.0
            for k, pos in enumerate(tau):
                term *= hs[k][pos]
            total += term
        c = math.sqrt(alpha.factorial) * total
        if c != 0.0:
            coeffs[alpha] = c
    return ChaosExpansion(gamma, n, coeffs)
