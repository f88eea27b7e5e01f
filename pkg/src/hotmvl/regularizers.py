"""
Multi-view coupling objectives.

Each loss takes the projected latents ``Z_s = U_s f_s(X_s)`` (one ``(d, B)``
array per view) and returns a :class:`RegularizerOutput` holding the loss and
its gradients with respect to the latents and, where used, the references.
Chaining those gradients into encoders and projections is the caller's job.

Transport plans inside the HOT losses are solved once and then held fixed, so
the gradients are those of ``<W, C>`` with constant ``W``.
"""

from dataclasses import dataclass, replace

import numpy as np

from .ot import (
    CostMatrix,
    TransportPlan,
    pairwise_cost_with_diag_shift,
    sinkhorn,
    sliced_wasserstein_sorted,
    sorted_projections,
    uniform,
)

KINDS = ("lscca", "gdcca", "sw_pairwise", "sw_reference", "hot_pairwise", "hot_reference", "none")


@dataclass
class ReferenceSet:
    """K learnable global latent matrices, each ``(d, B)``."""

    refs: list

    def __post_init__(self):
        if not self.refs:
            raise ValueError("a reference set needs K >= 1 matrices")
        shape = self.refs[0].shape
        if any(G.shape != shape for G in self.refs):
            raise ValueError("all references must share one shape")

    @classmethod
    def init(cls, k, d, width, rng) -> "ReferenceSet":
        return cls([rng.standard_normal((d, width)) / np.sqrt(d) for _ in range(k)])

    @property
    def k(self) -> int:
        return len(self.refs)

    def named_parameters(self) -> dict:
        return {f"ref.{k}": G for k, G in enumerate(self.refs)}


@dataclass
class RegularizerOutput:
    loss: float
    grad_latents: list
    grad_refs: list | None = None
    plan: TransportPlan | None = None
    cost: CostMatrix | None = None


def _check_latents(latents, min_views=1):
    if len(latents) < min_views:
        raise ValueError(f"need at least {min_views} views, got {len(latents)}")
    d = latents[0].shape[0]
    for s, Z in enumerate(latents):
        if Z.ndim != 2 or Z.shape[0] != d:
            raise ValueError(f"view {s}: latent shape {Z.shape} does not have shared dim {d}")


def _check_widths(mats):
    width = mats[0].shape[1]
    for Z in mats:
        if Z.shape[1] != width:
            raise ValueError(f"batch widths differ: {Z.shape[1]} vs {width}")


def ortho_penalty(mats):
    """``||sum_i Z_i Z_i^T / B - I||_F^2`` and its gradient for each ``Z_i``."""
    _check_latents(mats)
    d = mats[0].shape[0]
    A = sum(Z @ Z.T / Z.shape[1] for Z in mats) - np.eye(d)
    return float(np.sum(A * A)), [(4.0 / Z.shape[1]) * (A @ Z) for Z in mats]


def _with_ortho(loss, grads, mats, alpha):
    if alpha == 0:
        return loss, grads
    pen, pgrads = ortho_penalty(mats)
    return loss + alpha * pen, [g + alpha * pg for g, pg in zip(grads, pgrads)]


def lscca_loss(latents, alpha=0.01, aligned=True) -> RegularizerOutput:
    """Average squared distance between every pair of aligned view latents."""
    if not aligned:
        raise ValueError("lscca_loss compares samples index by index and needs aligned views")
    _check_latents(latents, 2)
    _check_widths(latents)
    S = len(latents)
    coef = 2.0 / (S * (S - 1))
    loss = 0.0
    grads = [np.zeros_like(Z) for Z in latents]
    for s in range(S):
        for t in range(s + 1, S):
            diff = latents[s] - latents[t]
            loss += coef * float(np.sum(diff * diff))
            grads[s] += 2 * coef * diff
            grads[t] -= 2 * coef * diff
    loss, grads = _with_ortho(loss, grads, latents, alpha)
    return RegularizerOutput(loss, grads)


def gdcca_loss(latents, refs: ReferenceSet, alpha=0.01, aligned=True) -> RegularizerOutput:
    """Mean squared distance of each aligned view latent to one global matrix ``G``."""
    if not aligned:
        raise ValueError("gdcca_loss compares samples index by index and needs aligned views")
    if refs.k != 1:
        raise ValueError(f"gdcca_loss uses a single reference, got K={refs.k}")
    _check_latents(latents + refs.refs)
    G = refs.refs[0]
    _check_widths(latents + [G])
    S = len(latents)
    loss = 0.0
    grads, gG = [], np.zeros_like(G)
    for Z in latents:
        diff = Z - G
        loss += float(np.sum(diff * diff)) / S
        grads.append((2.0 / S) * diff)
        gG -= (2.0 / S) * diff
    pen_loss, (gG,) = _with_ortho(0.0, [gG], [G], alpha)
    return RegularizerOutput(loss + pen_loss, grads, [gG])


def pairwise_sw_costs(latents, proj):
    """Symmetric matrix of sliced Wasserstein costs between views, with gradients.

    ``grads[s][t]`` is the gradient of ``cost[s, t]`` with respect to view ``s``.
    """
    S = len(latents)
    C = np.zeros((S, S))
    grads = [[None] * S for _ in range(S)]
    srt = [sorted_projections(Z, proj) for Z in latents]
    for s in range(S):
        for t in range(s + 1, S):
            v, g1, g2 = sliced_wasserstein_sorted(srt[s], srt[t], proj)
            C[s, t] = C[t, s] = v
            grads[s][t], grads[t][s] = g1, g2
    return C, grads


def reference_sw_costs(latents, refs, proj):
    """``(S, K)`` sliced Wasserstein costs between views and references, with gradients."""
    S, K = len(latents), len(refs)
    C = np.zeros((S, K))
    gz = [[None] * K for _ in range(S)]
    gr = [[None] * K for _ in range(S)]
    zs = [sorted_projections(Z, proj) for Z in latents]
    gs = [sorted_projections(G, proj) for G in refs]
    for s in range(S):
        for k in range(K):
            C[s, k], gz[s][k], gr[s][k] = sliced_wasserstein_sorted(zs[s], gs[k], proj)
    return C, gz, gr


def sw_pairwise_loss(latents, proj, alpha=0.01) -> RegularizerOutput:
    """Average sliced Wasserstein cost over all view pairs."""
    _check_latents(latents, 2)
    _check_widths(latents)
    S = len(latents)
    W = np.full((S, S), 1.0 / (S * (S - 1)))
    np.fill_diagonal(W, 0.0)
    return _weighted_pairwise(latents, pairwise_sw_costs(latents, proj), W, alpha)


def _weighted_pairwise(latents, costs, W, alpha, plan=None, cost=None):
    C, cg = costs
    S = len(latents)
    loss = float(np.sum(W * C))
    grads = []
    for s in range(S):
        g = np.zeros_like(latents[s])
        for t in range(S):
            if t != s:
                # C is symmetric, so view s receives weight from both w_st and w_ts
                g += (W[s, t] + W[t, s]) * cg[s][t]
        grads.append(g)
    loss, grads = _with_ortho(loss, grads, latents, alpha)
    return RegularizerOutput(loss, grads, None, plan, cost if cost is not None else CostMatrix(C))


def _weighted_reference(latents, refs: ReferenceSet, costs, W, alpha, plan=None):
    C, gz, gr = costs
    S, K = W.shape
    loss = float(np.sum(W * C))
    grads = [sum(W[s, k] * gz[s][k] for k in range(K)) for s in range(S)]
    gref = [sum(W[s, k] * gr[s][k] for s in range(S)) for k in range(K)]
    pen_loss, gref = _with_ortho(0.0, gref, refs.refs, alpha)
    return RegularizerOutput(loss + pen_loss, grads, gref, plan, CostMatrix(C))


def sw_reference_loss(latents, refs: ReferenceSet, proj, alpha=0.01) -> RegularizerOutput:
    """Mean sliced Wasserstein cost from each view to a single reference ``G``."""
    if refs.k != 1:
        raise ValueError(f"sw_reference_loss uses a single reference, got K={refs.k}")
    _check_latents(latents + refs.refs)
    _check_widths(latents + refs.refs)
    S = len(latents)
    costs = reference_sw_costs(latents, refs.refs, proj)
    return _weighted_reference(latents, refs, costs, np.full((S, 1), 1.0 / S), alpha)


def hot_pairwise_loss(latents, proj, alpha=0.01, beta=0.1, n_iter=20) -> RegularizerOutput:
    """Sliced Wasserstein costs between views weighted by an entropic view-to-view plan.

    The plan is solved on the diagonal-shifted cost with uniform marginals
    ``1/S`` and then frozen; the loss is ``<W, C> + alpha * penalty`` on the
    unshifted cost.

    A few Sinkhorn rounds on a near-degenerate kernel leave the plan visibly
    asymmetric, so the returned plan is the symmetric part of the solve.  With
    a symmetric ``C`` this leaves the loss and gradients unchanged; the plan's
    scalings still describe the unsymmetrized solve.
    """
    _check_latents(latents, 2)
    _check_widths(latents)
    S = len(latents)
    costs = pairwise_sw_costs(latents, proj)
    shifted = pairwise_cost_with_diag_shift(costs[0])
    plan = sinkhorn(shifted, uniform(S), uniform(S), beta, n_iter)
    plan = replace(plan, weights=0.5 * (plan.weights + plan.weights.T))
    plan.marginal_residual = max(plan.residuals())
    return _weighted_pairwise(latents, costs, plan.weights, alpha, plan, shifted)


def hot_reference_loss(latents, refs: ReferenceSet, proj, alpha=0.01, beta=0.1, n_iter=20) -> RegularizerOutput:
    """Sliced Wasserstein costs from views to K references weighted by an entropic plan.

    ``W`` has marginals ``1/S`` over views and ``1/K`` over references; row
    ``s`` of ``W`` is the (scaled) membership of view ``s`` in each cluster.
    """
    _check_latents(latents + refs.refs)
    _check_widths(latents + refs.refs)
    S, K = len(latents), refs.k
    costs = reference_sw_costs(latents, refs.refs, proj)
    plan = sinkhorn(costs[0], uniform(S), uniform(K), beta, n_iter)
    return _weighted_reference(latents, refs, costs, plan.weights, alpha, plan)


def evaluate(kind, latents, *, refs=None, proj=None, alpha=0.01, beta=0.1, n_iter=20, aligned=True):
    """Dispatch on the regularizer name used in training configs."""
    if kind == "lscca":
        return lscca_loss(latents, alpha, aligned)
    if kind == "gdcca":
        return gdcca_loss(latents, refs, alpha, aligned)
    if kind == "sw_pairwise":
        return sw_pairwise_loss(latents, proj, alpha)
    if kind == "sw_reference":
        return sw_reference_loss(latents, refs, proj, alpha)
    if kind == "hot_pairwise":
        return hot_pairwise_loss(latents, proj, alpha, beta, n_iter)
    if kind == "hot_reference":
        return hot_reference_loss(latents, refs, proj, alpha, beta, n_iter)
    raise ValueError(f"unknown regularizer {kind!r}; expected one of {KINDS}")
