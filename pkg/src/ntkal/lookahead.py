"""Linearized-network prediction and single-candidate look-ahead.

A trained network plus the Gram matrix of its labeled set defines a
kernel-regression predictor (its converged linearization):

    predict(q) = f(q) + k(q, X) K^{-1} (Y - f(X))

Hypothetically labeling one more point (x', y') augments K by one row
and column. Rather than refactorizing the augmented matrix for every
candidate, the block structure gives the augmented prediction as the
current one plus a rank-one correction built from one triangular solve
(v = K^{-1} k_x') and the scalar Schur complement u:

    predict+(q) = predict(q) + (k(q,X) v - k(q,x')) / u * (v^T R - r')

which is exact, and costs O(L^2) per candidate instead of O(L^3).
The same solve extends the Cholesky factor, so feeding true labels
sequentially into the state costs one solve per point and is order
independent.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import kernel as kernel_mod
from . import linalg, net
from .errors import ContractError, DegenerateCandidateError, ShapeError

__all__ = [
    "CandidateContext",
    "predict_lin",
    "predict_lin_at_time",
    "prepare_candidate",
    "lookahead_predict",
    "augment_state",
]

# A candidate whose Schur complement falls below this fraction of its
# self-kernel is numerically inside the labeled span: adding it cannot
# change a fixed-kernel regression.
DEGENERATE_U_SCALE = 1e-10


def predict_lin(state, q):
    """Converged linearized prediction at query rows q, shape (len(q), C)."""
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    outputs = np.atleast_2d(net.forward(state.params, q))
    return outputs + state.kernel_rows(q) @ state.solved_residual


def predict_lin_at_time(state, q, t):
    """Linearized prediction after gradient-flow time t (t=0 gives f(q)).

    Uses the eigendecomposition of the labeled Gram matrix to apply
    K^{-1} (I - exp(-t K)) to the residual; as t grows this converges to
    predict_lin.
    """
    if t < 0:
        raise ContractError("time t must be >= 0")
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    outputs = np.atleast_2d(net.forward(state.params, q))
    evals, evecs = linalg.sym_eig(state.gram)
    # (1 - exp(-t*w)) / w, with the finite limit t at w -> 0.
    wt = evals * t
    safe = np.abs(wt) > 1e-12
    coef = np.where(
        safe, -np.expm1(-wt) / np.where(evals != 0.0, evals, 1.0), t
    )
    propagated = evecs @ (coef[:, None] * (evecs.T @ state.residual))
    return outputs + state.kernel_rows(q) @ propagated


@dataclass(frozen=True)
class CandidateContext:
    """Precomputed block quantities for one hypothetical labeled point."""

    x: np.ndarray  # (n_0,)
    pseudo_label: np.ndarray  # (C,)
    cross_to_labeled: np.ndarray  # (L,) kernel column k(X, x')
    self_kernel: float  # k(x', x')
    v: np.ndarray  # (L,) solve of the labeled Gram against the column
    schur: float  # u = k(x',x') - k(x',X) K^{-1} k(X,x')
    candidate_output: np.ndarray  # (C,) network output at x'
    candidate_residual: np.ndarray  # (C,) pseudo_label - output
    degenerate: bool


def prepare_candidate(state, x, y):
    """Schur-complement context for candidate x' with hypothetical label y.

    Returns a context flagged degenerate when the candidate adds no new
    direction to the labeled span (u below DEGENERATE_U_SCALE times the
    self-kernel); callers treat the model change for such points as zero.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != state.class_count:
        raise ShapeError(
            f"label has {y.shape[0]} entries, state has {state.class_count} classes"
        )
    col = state.kernel_rows(x[None, :])[0]
    self_k = float(state.kernel_diag(x[None, :])[0])
    v = linalg.chol_solve(state.factor, col)
    u = self_k - float(col @ v)
    out = net.forward(state.params, x)
    return CandidateContext(
        x=x,
        pseudo_label=y,
        cross_to_labeled=col,
        self_kernel=self_k,
        v=v,
        schur=u,
        candidate_output=out,
        candidate_residual=y - out,
        degenerate=u <= DEGENERATE_U_SCALE * max(self_k, 0.0),
    )


def lookahead_predict(state, ctx, q):
    """Predictions after hypothetically adding (ctx.x, ctx.pseudo_label).

    Equals building a fresh state on the augmented labeled set and calling
    predict_lin, via the rank-one block correction.
    """
    if ctx.degenerate:
        raise DegenerateCandidateError(
            "candidate lies in the labeled span; look-ahead change is zero"
        )
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    base = predict_lin(state, q)
    gain, shift = lookahead_correction(state, ctx, q)
    return base + np.outer(gain, shift)


def lookahead_correction(state, ctx, q):
    """Rank-one correction factors: per-query gains and the label shift.

    The prediction change at query x is gain(x) * shift, with
    gain = (k(q,X) v - k(q,x')) / u and shift = v^T R - r'.
    """
    kq = state.kernel_rows(q)
    kq_cand = state.kernel_block(q, ctx.x[None, :])[:, 0]
    gain = (kq @ ctx.v - kq_cand) / ctx.schur
    shift = ctx.v @ state.residual - ctx.candidate_residual
    return gain, shift


def augment_state(state, x, y, f_val=None):
    """New KernelState over the labeled set plus (x, y).

    Extends the existing Cholesky factor with one triangular solve and a
    scalar square root instead of refactorizing; predictions from the
    returned state match a cold rebuild on the enlarged set.
    ``f_val`` lets callers pass a previously computed network output at x
    (the network itself does not change here, so caching is exact).
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    col = state.kernel_rows(x[None, :])[0]
    self_k = float(state.kernel_diag(x[None, :])[0])
    w = solve_triangular(state.factor.lower, col, lower=True, check_finite=False)
    jitter = state.factor.jitter_applied
    d_sq = self_k + jitter - float(w @ w)
    # d_sq - jitter is the Schur complement of the jittered Gram matrix.
    if d_sq - jitter <= DEGENERATE_U_SCALE * max(self_k, 0.0):
        raise DegenerateCandidateError(
            "cannot augment with a point inside the labeled span"
        )
    n = state.labeled_count
    lower = np.zeros((n + 1, n + 1))
    lower[:n, :n] = state.factor.lower
    lower[n, :n] = w
    lower[n, n] = np.sqrt(d_sq)
    factor = linalg.CholeskyFactor(lower=lower, jitter_applied=jitter)

    gram = np.zeros((n + 1, n + 1))
    gram[:n, :n] = state.gram
    gram[n, :n] = col
    gram[:n, n] = col
    gram[n, n] = self_k

    if f_val is None:
        f_val = net.forward(state.params, x)
    f_val = np.asarray(f_val, dtype=np.float64).reshape(-1)

    inputs = np.vstack([state.inputs, x[None, :]])
    targets = np.vstack([state.targets, y[None, :]])
    outputs = np.vstack([state.net_outputs, f_val[None, :]])
    residual = targets - outputs
    solved = linalg.chol_solve(factor, residual)

    cache = state.factor_cache
    if cache is not None and state.kernel_fn is None:
        new_factors = net.grad_factors(state.params, x[None, :])
        cache = tuple(
            (np.vstack([a, na]), np.vstack([d, nd]))
            for (a, d), (na, nd) in zip(cache, new_factors)
        )

    return kernel_mod.KernelState(
        params=state.params,
        inputs=inputs,
        targets=targets,
        net_outputs=outputs,
        residual=residual,
        gram=gram,
        factor=factor,
        solved_residual=solved,
        kernel_fn=state.kernel_fn,
        factor_cache=cache,
        jitter_policy=state.jitter_policy,
    )
