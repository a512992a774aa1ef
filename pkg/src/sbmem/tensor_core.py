"""Dense complex multilinear algebra: the substrate for all other modules.

Conventions (used consistently across the package):

* Tensors are plain ``numpy.ndarray`` objects with complex dtype and
  **row-major (C order)** linearization.  An operator ``O`` on a
  d-dimensional Hilbert space is vectorized as ``vec(O)[n*d + m] = <n|O|m>``.
* Bipartite operators on ``C^{d1} (x) C^{d2}`` are ``(d1*d2, d1*d2)``
  matrices whose row index factorizes as ``i = i1*d2 + i2`` (party 1 major),
  i.e. the layout produced by ``numpy.kron(A1, A2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import EigConvergenceError, SvdConvergenceError

__all__ = [
    "SvdResult",
    "contract",
    "svd_truncate",
    "trace_norm",
    "partial_transpose",
    "partial_trace",
    "leading_eigenpair",
]


def _as_tensor(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise ValueError("tensor contains non-finite entries")
    return a


def contract(a, b, pairs) -> np.ndarray:
    """Contract tensors ``a`` and ``b`` over the given leg pairs.

    Parameters
    ----------
    a, b:
        Dense tensors of arbitrary rank.
    pairs:
        Iterable of ``(leg_of_a, leg_of_b)`` index pairs.  Paired legs must
        have equal dimension.

    Returns
    -------
    ndarray
        Tensor whose legs are the unpaired legs of ``a`` followed by the
        unpaired legs of ``b``, each group in original order.
    """
    a = _as_tensor(a)
    b = _as_tensor(b)
    pairs = list(pairs)
    ax_a = [p[0] for p in pairs]
    ax_b = [p[1] for p in pairs]
    for i, j in pairs:
        if not (0 <= i < a.ndim and 0 <= j < b.ndim):
            raise ValueError(f"leg index out of range: pair ({i}, {j})")
        if a.shape[i] != b.shape[j]:
            raise ValueError(
                f"dimension mismatch: a leg {i} has {a.shape[i]}, "
                f"b leg {j} has {b.shape[j]}"
            )
    if len(set(ax_a)) != len(ax_a) or len(set(ax_b)) != len(ax_b):
        raise ValueError("repeated leg index in contraction pairs")
    return np.tensordot(a, b, axes=(ax_a, ax_b))


@dataclass(frozen=True)
class SvdResult:
    """Truncated singular value decomposition ``m ~ u @ diag(s) @ vh``.

    ``discarded_weight`` is the sum of the squared dropped singular values,
    so the Frobenius reconstruction error equals ``sqrt(discarded_weight)``.
    """

    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray
    rank: int
    discarded_weight: float

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vh


def _svd_safe(m: np.ndarray):
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails where the slower gesvd succeeds
        import scipy.linalg

        try:
            return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover - pathological input
            raise SvdConvergenceError(f"SVD did not converge: {exc}") from exc


def svd_truncate(m, rel_tol: float, max_rank: int | None = None) -> SvdResult:
    """SVD of a matrix, truncated by relative discarded weight and rank cap.

    The retained rank is the smallest ``r`` such that the discarded weight
    does not exceed ``rel_tol**2`` times the total squared Frobenius norm,
    additionally capped at ``max_rank`` (whichever binds first).  At least
    one singular value is always kept.
    """
    m = _as_tensor(m)
    if m.ndim != 2:
        raise ValueError("svd_truncate expects a matrix (2 effective legs)")
    u, s, vh = _svd_safe(m)
    w = s.astype(float) ** 2
    total = float(w.sum())
    # discarded(r) = sum of w[r:]
    tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    budget = (rel_tol**2) * total
    rank = int(np.searchsorted(-tail, -budget))  # smallest r with tail[r] <= budget
    rank = max(1, rank)
    if max_rank is not None:
        rank = min(rank, int(max_rank))
    rank = min(rank, len(s))
    discarded = float(tail[rank])
    return SvdResult(u[:, :rank], s[:rank], vh[:rank], rank, discarded)


def trace_norm(m) -> float:
    """Sum of singular values of a square matrix.

    Computed from singular values rather than eigenvalues so the result is
    correct for non-Hermitian input as well.
    """
    m = _as_tensor(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("trace_norm expects a square matrix")
    return float(np.linalg.svd(m, compute_uv=False).sum())


def _split_bipartite(rho, dims) -> np.ndarray:
    rho = _as_tensor(rho)
    d1, d2 = int(dims[0]), int(dims[1])
    n = d1 * d2
    if rho.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix for dims {dims}, got {rho.shape}")
    return rho.reshape(d1, d2, d1, d2)


def partial_transpose(rho, dims, party: int) -> np.ndarray:
    """Transpose the chosen tensor factor of a bipartite operator.

    ``party`` is 1 or 2.  The operation is involutive and preserves trace
    and Hermiticity of Hermitian input.
    """
    r = _split_bipartite(rho, dims)
    if party == 1:
        r = r.transpose(2, 1, 0, 3)
    elif party == 2:
        r = r.transpose(0, 3, 2, 1)
    else:
        raise ValueError("party must be 1 or 2")
    n = dims[0] * dims[1]
    return r.reshape(n, n)


def partial_trace(rho, dims, traced_party: int) -> np.ndarray:
    """Reduced operator after tracing out one party of a bipartite operator."""
    r = _split_bipartite(rho, dims)
    if traced_party == 1:
        return np.einsum("iaib->ab", r)
    if traced_party == 2:
        return np.einsum("aibi->ab", r)
    raise ValueError("traced_party must be 1 or 2")


def _as_matvec(op, n):
    if isinstance(op, np.ndarray):
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise ValueError("operator matrix must be square")
        return (lambda x: op @ x), op.shape[0]
    if isinstance(op, spla.LinearOperator):
        return (lambda x: op.matvec(x)), op.shape[0]
    if callable(op):
        if n is None:
            raise ValueError("dimension n is required for a callable operator")
        return op, int(n)
    raise TypeError("op must be an ndarray, LinearOperator or callable")


def leading_eigenpair(op, n=None, tol=1e-10, max_iter=10000, v0=None):
    """Dominant eigenpair of a linear operator given by its action.

    Uses an implicitly restarted Arnoldi iteration (ARPACK) for n >= 4 and a
    dense solve below that, so the operator is only ever applied to vectors.
    The returned eigenvector is normalized and its residual
    ``norm(op(v) - lam*v)`` is guaranteed to be at most ``tol``.

    Raises
    ------
    EigConvergenceError
        If the iteration does not reach the requested residual, e.g. when
        the leading eigenvalue is (nearly) degenerate.
    """
    matvec, n = _as_matvec(op, n)
    if v0 is None:
        v0 = np.full(n, 1.0 / np.sqrt(n), dtype=complex)
    v0 = np.asarray(v0, dtype=complex)

    if n >= 4:
        linop = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)
        try:
            vals, vecs = spla.eigs(
                linop, k=1, which="LM", v0=v0, tol=tol * 1e-2, maxiter=max_iter
            )
            lam = complex(vals[0])
            v = vecs[:, 0]
        except spla.ArpackNoConvergence as exc:
            res = None
            if len(exc.eigenvalues):
                lam = complex(exc.eigenvalues[0])
                v = exc.eigenvectors[:, 0]
                v = v / np.linalg.norm(v)
                res = float(np.linalg.norm(matvec(v) - lam * v))
            raise EigConvergenceError(
                f"Arnoldi iteration did not converge within {max_iter} iterations "
                f"(last residual {res})",
                residual=res,
            ) from exc
    else:
        # n <= 3: build the matrix column by column and solve densely
        cols = [matvec(np.eye(n, dtype=complex)[:, j]) for j in range(n)]
        mat = np.stack(cols, axis=1)
        vals, vecs = np.linalg.eig(mat)
        idx = int(np.argmax(np.abs(vals)))
        lam = complex(vals[idx])
        v = vecs[:, idx]

    v = v / np.linalg.norm(v)
    # fix the global phase for reproducibility
    k = int(np.argmax(np.abs(v)))
    phase = v[k] / abs(v[k])
    v = v / phase
    residual = float(np.linalg.norm(matvec(v) - lam * v))
    if residual > tol:
        raise EigConvergenceError(
            f"leading eigenpair residual {residual:.3e} exceeds tol {tol:.3e} "
            "(degenerate or nearly degenerate leading eigenvalue?)",
            residual=residual,
        )
    return lam, v
