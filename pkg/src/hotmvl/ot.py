"""
Optimal transport kernels.

Sample matrices follow the column convention: a ``(d, N)`` array holds N
samples in R^d.  Everything here is a pure function of its inputs.
"""

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from .errors import NumericalError

MAX_BRUTE_FORCE_N = 8


@dataclass(frozen=True)
class ProjectionSet:
    """Unit directions used to slice a d-dimensional distribution.

    Attributes
    ----------
    thetas : ndarray, shape (M, d)
        One unit vector per row.
    seed : int or None
        Seed the directions were drawn with, when known.
    """

    thetas: np.ndarray
    seed: int | None = None

    @property
    def n_projections(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]


def sample_projections(m, d, seed=None) -> ProjectionSet:
    r"""Draw ``m`` directions uniformly from the unit sphere :math:`\mathcal{S}^{d-1}`.

    Parameters
    ----------
    m : int
        Number of directions.
    d : int
        Ambient dimension.
    seed : int, numpy.random.Generator or None
        Seed or generator.  A generator is advanced in place.

    Returns
    -------
    ProjectionSet
    """
    if m < 1 or d < 1:
        raise ValueError(f"need m >= 1 and d >= 1, got m={m}, d={d}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    thetas = rng.standard_normal((m, d))
    norms = np.linalg.norm(thetas, axis=1)
    for i in np.flatnonzero(norms == 0.0):
        while norms[i] == 0.0:
            thetas[i] = rng.standard_normal(d)
            norms[i] = np.linalg.norm(thetas[i])
    thetas /= norms[:, None]
    return ProjectionSet(thetas, seed if isinstance(seed, (int, np.integer)) else None)


def wasserstein_1d_sq(u, v) -> float:
    """Squared 2-Wasserstein cost between two equal-size 1-D samples.

    Returns ``||sort(u) - sort(v)||^2`` without dividing by the sample count.
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValueError(f"samples must have equal length, got {u.size} and {v.size}")
    if u.size == 0:
        raise ValueError("samples must be non-empty")
    diff = np.sort(u) - np.sort(v)
    return float(diff @ diff)


def _check_pair(z1, z2, proj=None):
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z1.ndim != 2 or z2.ndim != 2:
        raise ValueError("sample matrices must be 2-D with shape (d, N)")
    if z1.shape != z2.shape:
        raise ValueError(f"sample matrices must share (d, N), got {z1.shape} and {z2.shape}")
    if proj is not None and proj.dim != z1.shape[0]:
        raise ValueError(f"projection dimension {proj.dim} != sample dimension {z1.shape[0]}")
    return z1, z2


def sliced_wasserstein(z1, z2, proj: ProjectionSet):
    r"""Empirical sliced Wasserstein cost and its gradients.

    .. math::
        \widehat{D}(Z_1, Z_2) = \frac{1}{M}\sum_{m=1}^{M}
            \|\mathrm{sort}(\theta_m^\top Z_1) - \mathrm{sort}(\theta_m^\top Z_2)\|_2^2

    The objective is piecewise quadratic; gradients hold each projection's
    sorting permutation fixed.  Ties are broken by a stable sort.

    Parameters
    ----------
    z1, z2 : ndarray, shape (d, N)
    proj : ProjectionSet
        Directions of dimension d.

    Returns
    -------
    value : float
    grad_z1, grad_z2 : ndarray, shape (d, N)
    """
    z1, z2 = _check_pair(z1, z2, proj)
    return sliced_wasserstein_sorted(sorted_projections(z1, proj), sorted_projections(z2, proj), proj)


def sorted_projections(z, proj: ProjectionSet):
    """Projections ``theta_m^T Z`` sorted along samples, with the sorting indices."""
    p = proj.thetas @ z
    idx = np.argsort(p, axis=1, kind="stable")
    return np.take_along_axis(p, idx, axis=1), idx


def sliced_wasserstein_sorted(a, b, proj: ProjectionSet):
    """:func:`sliced_wasserstein` from precomputed :func:`sorted_projections` of both sides."""
    (s1, i1), (s2, i2) = a, b
    m, n = s1.shape
    if s2.shape != (m, n):
        raise ValueError(f"sample matrices must share N, got {n} and {s2.shape[1]}")
    diff = s1 - s2
    value = float(np.sum(diff * diff)) / m
    g = (2.0 / m) * diff
    rows = np.arange(m)[:, None]
    g1 = np.empty((m, n))
    g2 = np.empty((m, n))
    g1[rows, i1] = g
    g2[rows, i2] = -g
    return value, proj.thetas.T @ g1, proj.thetas.T @ g2


@dataclass(frozen=True)
class CostMatrix:
    """Ground costs for the outer transport problem.

    ``costs`` already includes ``diag_shift`` on the diagonal when one is used.
    """

    costs: np.ndarray
    diag_shift: float = 0.0

    @property
    def raw(self) -> np.ndarray:
        if self.diag_shift == 0.0:
            return self.costs
        return self.costs - self.diag_shift * np.eye(self.costs.shape[0])


def pairwise_cost_with_diag_shift(raw, tol=1e-8) -> CostMatrix:
    """Add ``c * I`` to a symmetric view-to-view cost, with ``c`` the sum of all entries.

    The shift makes self-transport the most expensive option so that the
    entropic plan puts (almost) no mass on the diagonal.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise ValueError(f"pairwise cost must be square, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise NumericalError("pairwise cost has non-finite entries")
    if np.max(np.abs(raw - raw.T), initial=0.0) > tol:
        raise ValueError("pairwise cost must be symmetric")
    if np.max(np.abs(np.diag(raw)), initial=0.0) > tol:
        raise ValueError("pairwise cost must have a zero diagonal")
    c = float(raw.sum())
    return CostMatrix(raw + c * np.eye(raw.shape[0]), diag_shift=c)


@dataclass
class TransportPlan:
    """Entropic transport plan ``W = diag(a) exp(-C / beta) diag(b)``.

    The scaling vectors are kept as logarithms because the diagonal-shifted
    costs drive ``a`` far below the smallest double.
    """

    weights: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    log_scaling_left: np.ndarray
    log_scaling_right: np.ndarray
    cost: np.ndarray
    beta: float
    iterations: int
    marginal_residual: float = field(default=0.0)

    @property
    def scaling_left(self) -> np.ndarray:
        return np.exp(self.log_scaling_left)

    @property
    def scaling_right(self) -> np.ndarray:
        return np.exp(self.log_scaling_right)

    @property
    def kernel(self) -> np.ndarray:
        return np.exp(-self.cost / self.beta)

    @property
    def shape(self):
        return self.weights.shape

    def residuals(self):
        """Row and column marginal errors in the max norm."""
        r = np.max(np.abs(self.weights.sum(axis=1) - self.row_marginal))
        c = np.max(np.abs(self.weights.sum(axis=0) - self.col_marginal))
        return float(r), float(c)

    def to_dict(self) -> dict:
        rows, cols = self.weights.shape
        return {
            "rows": rows,
            "cols": cols,
            "weights": self.weights.ravel().tolist(),
            "p": self.row_marginal.tolist(),
            "q": self.col_marginal.tolist(),
            "beta": self.beta,
            "iterations": self.iterations,
            "marginal_residual": self.marginal_residual,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.weights:
            writer.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, obj: dict) -> "TransportPlan":
        """Rebuild a plan from its serialized form.

        Scalings and costs are not part of the serialized form.
        """
        rows, cols = int(obj["rows"]), int(obj["cols"])
        w = np.asarray(obj["weights"], dtype=float).reshape(rows, cols)
        # unit scalings with cost -beta*log(W) reproduce W exactly
        logw = _log(w)
        return cls(
            weights=w,
            row_marginal=np.asarray(obj["p"], dtype=float),
            col_marginal=np.asarray(obj["q"], dtype=float),
            log_scaling_left=np.zeros(rows),
            log_scaling_right=np.zeros(cols),
            cost=-float(obj["beta"]) * logw,
            beta=float(obj["beta"]),
            iterations=int(obj["iterations"]),
            marginal_residual=float(obj["marginal_residual"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "TransportPlan":
        return cls.from_dict(json.loads(text))


def _logsumexp(x, axis):
    # scipy.special.logsumexp costs ~0.1 ms per call in validation overhead,
    # which dominates a 20-iteration solve on a 6x3 matrix
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(x - m), axis=axis))


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def sinkhorn(cost, p, q, beta=0.1, n_iter=20) -> TransportPlan:
    r"""Entropic optimal transport by Sinkhorn scaling in the log domain.

    Solves :math:`\min_{W \in \Pi(p, q)} \langle W, C\rangle + \beta\langle W, \log W\rangle`
    approximately with ``n_iter`` rounds of ``b <- q / (K^T a)``, ``a <- p / (K b)``
    starting from ``a = p``, where ``K = exp(-C / beta)``.

    Parameters
    ----------
    cost : CostMatrix or ndarray, shape (S, K)
    p : ndarray, shape (S,)
        Row marginal.
    q : ndarray, shape (K,)
        Column marginal, same total as ``p``.
    beta : float
        Entropic weight.
    n_iter : int
        Number of scaling rounds.  No early stopping; the achieved residual is
        recorded on the plan.

    Returns
    -------
    TransportPlan
    """
    c = np.asarray(cost.costs if isinstance(cost, CostMatrix) else cost, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if c.ndim != 2 or c.shape != (p.size, q.size):
        raise ValueError(f"cost shape {c.shape} does not match marginals ({p.size}, {q.size})")
    if not np.all(np.isfinite(c)):
        raise NumericalError("cost matrix has non-finite entries")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("marginals must be nonnegative")
    if abs(p.sum() - q.sum()) > 1e-9:
        raise ValueError(f"marginal totals differ: {p.sum()} vs {q.sum()}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if n_iter < 1:
        raise ValueError(f"n_iter must be >= 1, got {n_iter}")

    log_k = -c / beta
    log_p, log_q = _log(p), _log(q)
    log_a = log_p.copy()
    log_b = np.zeros(q.size)
    # a zero marginal can give -inf - (-inf) = nan; such rows/columns carry no mass
    with np.errstate(invalid="ignore", divide="ignore"):
        for _ in range(n_iter):
            log_b = log_q - _logsumexp(log_k + log_a[:, None], axis=0)
            log_b[q == 0] = -np.inf
            log_a = log_p - _logsumexp(log_k + log_b[None, :], axis=1)
            log_a[p == 0] = -np.inf
    w = np.exp(log_a[:, None] + log_k + log_b[None, :])
    if not np.all(np.isfinite(w)):
        raise NumericalError("Sinkhorn produced non-finite weights")
    plan = TransportPlan(w, p, q, log_a, log_b, c, float(beta), int(n_iter))
    plan.marginal_residual = max(plan.residuals())
    return plan


def brute_force_matching(z1, z2):
    """Best column matching of ``z1`` onto ``z2`` by enumerating all permutations.

    Returns the minimum of ``||Z1 P - Z2||_F^2`` over permutation matrices and
    a minimizing permutation ``perm`` such that column ``perm[j]`` of ``z1`` is
    matched to column ``j`` of ``z2``.  Test-scale only (N <= 8).
    """
    z1, z2 = _check_pair(z1, z2)
    n = z1.shape[1]
    if n > MAX_BRUTE_FORCE_N:
        raise ValueError(f"brute force matching limited to N <= {MAX_BRUTE_FORCE_N}, got {n}")
    d2 = np.sum((z1[:, :, None] - z2[:, None, :]) ** 2, axis=0)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    totals = d2[perms, np.arange(n)].sum(axis=1)
    best = int(np.argmin(totals))
    return float(totals[best]), tuple(int(i) for i in perms[best])


def uniform(n) -> np.ndarray:
    return np.full(n, 1.0 / n)


def diagonal_mass(plan: TransportPlan) -> float:
    """Total mass on the diagonal of a square plan."""
    return float(math.fsum(np.diag(plan.weights)))
