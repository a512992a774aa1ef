"""Internals for constructing the uniform influence-matrix MPO.

The discrete influence functional factorizes over window pairs, so the
weight a path accumulates at each step depends on the history only through
K "pending phases" m_1..m_K (m_i is applied i steps in the future).  All
future steps probe a pending phase m only through exp(-phi * m) where phi
runs over the finite grid of coupling-eigenvalue differences, so a history
is fully represented by the product vector

    X(m) = (x)_{i=1..K} x(m_i),      x(m)[a] = exp(-phis[a] * m) / sqrt(p)

in (C^p)^(x K) (the 1/sqrt(p) keeps per-site norms O(1)).  Stepping with a
double index mu acts linearly on these states:

    T^mu X(m) = I0(mu) * sqrt(p) * x(m_1)[a(mu)] * X(shift(m) + psi(mu)),

with psi_k(mu) = eta_k s_n - conj(eta_k) s_m.  The quench boundaries are
the vacuum product state (all m = 0) on the right and evaluation at the
phi = 0 grid point on the left (no further system-bath interaction), which
maps every reachable product state to 1 (trace closure).

The MPO auxiliary space is built by iterating the weighted quench orbit:
starting from the vacuum, all one-step images are stacked and the family
is re-truncated by an SVD over the family (dangling) leg.  The family
member for a path carries its accumulated influence weight, so this
truncation is democratic over paths, i.e. it truncates the Schmidt
spectrum of the influence tensor itself at the growing cut (the measure
under which the temporal correlations of these kernels are known to be
compressible).  Families from a spread of cut depths, including the early
cuts (short chains are then represented essentially exactly) and the
stabilized asymptotic cut, are unioned and orthonormalized into the final
bond basis; everything is represented as matrix product states over the K
lag slots with one dangling family leg, so all truncations are ordinary
backward-stable SVDs with recorded discarded weights.  The f^mu matrices,
the boundary vectors and a weighted invariance-residual certificate are
then extracted by MPS contractions against the final basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RankOverflowError
from .tensor_core import svd_truncate


@dataclass(frozen=True)
class StepAlgebra:
    """Data defining the transfer action for one (eta table, coupling) pair.

    Double indices mu = (n, m) are grouped into classes by their pair of
    coupling eigenvalues (s_n, s_m); the transfer action depends on mu only
    through its class.
    """

    K: int
    d: int
    phis: np.ndarray  # (p,) ascending real grid of s_n - s_m values
    a0: int  # index of phi = 0 in the grid
    class_of_mu: np.ndarray  # (d*d,)
    a_of_class: np.ndarray  # (n_class,)
    phi_of_class: np.ndarray  # (n_class,)
    psi: np.ndarray  # (n_class, K+1) lag-resolved kernel weights
    i0: np.ndarray  # (n_class,) same-window weights

    @property
    def p(self) -> int:
        return len(self.phis)

    @property
    def n_class(self) -> int:
        return len(self.a_of_class)

    @classmethod
    def from_table(cls, eta: np.ndarray, s_eigs) -> "StepAlgebra":
        eta = np.asarray(eta, dtype=complex)
        K = len(eta) - 1
        s = np.asarray(s_eigs, dtype=float)
        d = len(s)
        sn = np.repeat(s, d)  # mu = n*d + m, row-major
        sm = np.tile(s, d)
        pair_keys = np.round(np.stack([sn, sm], axis=1), 12)
        _, class_idx, class_of_mu = np.unique(
            pair_keys, axis=0, return_index=True, return_inverse=True
        )
        csn, csm = sn[class_idx], sm[class_idx]
        phi_cls = csn - csm
        phis = np.unique(np.round(np.concatenate([phi_cls, [0.0]]), 12))
        a_of_class = np.searchsorted(phis, np.round(phi_cls, 12))
        a0 = int(np.searchsorted(phis, 0.0))
        psi = np.outer(csn, eta) - np.outer(csm, np.conj(eta))  # (n_class, K+1)
        i0 = np.exp(-phi_cls * psi[:, 0])
        return cls(
            K=K,
            d=d,
            phis=phis,
            a0=a0,
            class_of_mu=class_of_mu,
            a_of_class=a_of_class,
            phi_of_class=phi_cls,
            psi=psi,
            i0=i0,
        )

    def step_m(self, ms: np.ndarray, c: int) -> np.ndarray:
        """Pending-phase update for one step of class c (vectorized over rows)."""
        out = np.empty_like(ms)
        out[:, :-1] = ms[:, 1:]
        out[:, -1] = 0.0
        out += self.psi[c, 1:][None, :]
        return out


# -- fat MPS machinery (K lag sites, one dangling family leg) -----------------


def product_mps(alg: StepAlgebra, m: np.ndarray) -> list[np.ndarray]:
    """The product state X(m) as a fat MPS with dangling dimension 1."""
    sites = np.exp(-np.multiply.outer(np.asarray(m, complex), alg.phis)) / np.sqrt(
        alg.p
    )
    return [v.reshape(1, alg.p, 1).astype(complex) for v in sites]


def right_truncate_sweep(tensors, lag_tol: float, lag_cap: int | None):
    """Right-to-left truncated SVD sweep; leaves sites 1.. right-isometric.

    When the input chain is (approximately) right-isometric to begin with,
    the local singular values are (to the same accuracy) the global Schmidt
    values, so this single sweep is the workhorse truncation of the orbit
    iteration.
    """
    K = len(tensors)
    tensors = list(tensors)
    discards = []
    for i in range(K - 1, 0, -1):
        l, p, r = tensors[i].shape
        res = svd_truncate(tensors[i].reshape(l, p * r), lag_tol, lag_cap)
        tensors[i] = res.vh.reshape(res.rank, p, r)
        carry = res.u * res.s
        tensors[i - 1] = np.einsum("lpb,br->lpr", tensors[i - 1], carry)
        discards.append(res.discarded_weight)
    return tensors, discards[::-1]


def right_canonicalize(tensors, lag_tol: float, lag_cap: int | None):
    """Left-to-right QR then right-to-left truncated SVD sweep.

    After the sweep every site except site 0 is right-isometric, so the
    dangling-leg spectrum at site 0 is the exact Schmidt spectrum of the
    stacked family and per-bond discarded weights are globally meaningful.
    The leading QR pass also tightens bond dimensions from the left after a
    dangling truncation.
    """
    K = len(tensors)
    tensors = list(tensors)
    if K == 1:
        return tensors, []
    for i in range(K - 1):
        l, p, r = tensors[i].shape
        q, rmat = np.linalg.qr(tensors[i].reshape(l * p, r))
        tensors[i] = q.reshape(l, p, q.shape[1])
        tensors[i + 1] = np.einsum("br,rps->bps", rmat, tensors[i + 1])
    return right_truncate_sweep(tensors, lag_tol, lag_cap)


def dangling_truncate(tensors, bond_tol: float, max_rank: int | None):
    """Orthonormalize and truncate the dangling family leg at site 0.

    Requires sites 1.. to be right-isometric.  Returns the new tensors (the
    dangling leg now indexes an orthonormal basis of the family span), the
    retained family spectrum, the discarded weight and the total squared
    weight.
    """
    dang, p, b1 = tensors[0].shape
    res = svd_truncate(tensors[0].reshape(dang, p * b1), bond_tol, max_rank)
    out = list(tensors)
    out[0] = res.vh.reshape(res.rank, p, b1)
    total = float(np.sum(np.abs(tensors[0]) ** 2))
    return out, res.s, res.discarded_weight, total


def apply_step_mps(alg: StepAlgebra, tensors, c: int):
    """T^c applied to every family member of a fat MPS (dangling preserved)."""
    K = alg.K
    p = alg.p
    head = tensors[0][:, alg.a_of_class[c], :] * (np.sqrt(p) * alg.i0[c])
    tail_vec = np.exp(-alg.phis * alg.psi[c, K]) / np.sqrt(p)
    if K == 1:
        return [head[:, :, None] * tail_vec[None, :, None]]
    out = []
    for j in range(1, K):
        e = np.exp(-alg.phis * alg.psi[c, j])
        out.append(tensors[j] * e[None, :, None])
    out.append(tail_vec.reshape(1, p, 1).astype(complex))
    out[0] = np.einsum("rb,bpc->rpc", head, out[0])
    return out


def stack_fat(branches):
    """Stack fat MPSs along the dangling leg (block-diagonal lag bonds)."""
    K = len(branches[0])
    out = []
    for i in range(K):
        mats = [b[i] for b in branches]
        if i == K - 1:
            out.append(np.concatenate(mats, axis=0))
            continue
        L = sum(m.shape[0] for m in mats)
        R = sum(m.shape[2] for m in mats)
        p = mats[0].shape[1]
        blk = np.zeros((L, p, R), dtype=complex)
        lo = ro = 0
        for m in mats:
            blk[lo : lo + m.shape[0], :, ro : ro + m.shape[2]] = m
            lo += m.shape[0]
            ro += m.shape[2]
        out.append(blk)
    return out


def inner_dangling(a_tensors, b_tensors) -> np.ndarray:
    """<a_r, b_s> over all family pairs of two fat MPSs."""
    K = len(a_tensors)
    env = np.ones((1, 1), dtype=complex)
    for i in range(K - 1, -1, -1):
        tmp = np.tensordot(b_tensors[i], env, axes=(2, 1))  # (m, a, r)
        env = np.tensordot(np.conj(a_tensors[i]), tmp, axes=((1, 2), (1, 2)))
    return env


def closure_boundary(alg: StepAlgebra, tensors) -> np.ndarray:
    """v_l coefficients: each basis vector evaluated at the phi = 0 point."""
    v = np.ones(1, dtype=complex)
    for i in range(alg.K - 1, -1, -1):
        v = np.sqrt(alg.p) * (tensors[i][:, alg.a0, :] @ v)
    return v


def vacuum_overlap(alg: StepAlgebra, tensors) -> np.ndarray:
    """v_r coefficients: <w_r, X(0)> with X(0) the uncoupled-bath state."""
    v = np.ones(1, dtype=complex)
    for i in range(alg.K - 1, -1, -1):
        v = (np.conj(tensors[i]).sum(axis=1) / np.sqrt(alg.p)) @ v
    return v


def _scaled(tensors, weights):
    out = list(tensors)
    out[0] = weights[:, None, None] * out[0]
    return out


def _class_maps_and_certificate(alg: StepAlgebra, tensors, weights):
    """f^c matrices plus exact invariance residuals per class and member.

    The residual of family member s under class c is
    |T^c w_s - sum_r f^c[r,s] w_r|, computed from an explicitly stacked
    and canonicalized difference so that no catastrophic norm subtraction
    occurs.  The weighted summary contracts the residuals with the family
    spectrum, i.e. it estimates the per-step leakage of the represented
    influence tensor in the democratic path measure.
    """
    chi = tensors[0].shape[0]
    f_cls = np.empty((alg.n_class, chi, chi), dtype=complex)
    residuals = np.empty((alg.n_class, chi))
    image_norms = np.empty((alg.n_class, chi))
    for c in range(alg.n_class):
        stepped = apply_step_mps(alg, tensors, c)
        f_c = inner_dangling(tensors, stepped)
        f_cls[c] = f_c
        both, _ = right_canonicalize(stack_fat([stepped, tensors]), 0.0, None)
        s1 = both[0].reshape(2 * chi, -1)
        combo = np.concatenate([np.eye(chi, dtype=complex), -f_c], axis=0)
        residuals[c] = np.linalg.norm(combo.T @ s1, axis=1)
        image_norms[c] = np.linalg.norm(s1[:chi], axis=1)
    w2 = np.abs(weights) ** 2
    denom = float((image_norms**2 * w2[None, :]).sum())
    weighted = float(np.sqrt((residuals**2 * w2[None, :]).sum() / max(denom, 1e-300)))
    return f_cls, residuals, weighted


@dataclass
class UniformMpoBuild:
    """Result of the uniform-MPO construction, in class-resolved form."""

    alg: StepAlgebra
    tensors: list
    f_class: np.ndarray  # (n_class, chi, chi)
    v_l: np.ndarray
    v_r: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def chi(self) -> int:
        return self.f_class.shape[1]


def _merge_families(alg, a, b, svd_tol, max_rank, lag_tol, lag_cap):
    """Union of two weighted families, re-truncated (equal Frobenius vote)."""
    (ta, wa), (tb, wb) = a, b
    st = stack_fat([_scaled(ta, wa / np.sqrt(2.0)), _scaled(tb, wb / np.sqrt(2.0))])
    st, _ = right_canonicalize(st, lag_tol, lag_cap)
    tens, spectrum, disc, total = dangling_truncate(st, svd_tol, max_rank)
    return (tens, spectrum / np.linalg.norm(spectrum)), disc, total


def build_uniform_mpo(
    alg: StepAlgebra,
    svd_tol: float,
    max_rank: int,
    *,
    lag_tol: float | None = None,
    lag_cap: int | None = None,
    n_exact: int = 6,
    k_max: int | None = None,
    enforce_tolerance: bool = True,
    certify: bool = True,
) -> UniformMpoBuild:
    """Weighted-orbit construction of the uniform MPO for one step algebra."""
    if alg.K == 0:
        f_cls = alg.i0.reshape(-1, 1, 1).astype(complex)
        one = np.ones(1, dtype=complex)
        return UniformMpoBuild(
            alg, [], f_cls, one.copy(), one.copy(), {"chi": 1, "K": 0}
        )

    if lag_tol is None:
        lag_tol = 0.3 * svd_tol
    if lag_cap is None:
        lag_cap = max_rank + max_rank // 2 + 16
    if k_max is None:
        k_max = alg.K + 8
    n_exact = min(n_exact, k_max)
    conv_tol = max(100.0 * svd_tol**2, 1e-26)

    tensors = product_mps(alg, np.zeros(alg.K))
    weights = np.ones(1)
    collector = None
    n_collected = 0
    stride = max(2, min(alg.K, k_max) // 8)
    deficiency_hist: list[float] = []
    merge_disc = 0.0
    disc_rel = 0.0
    stopped_at = k_max
    for k in range(1, k_max + 1):
        scaled = _scaled(tensors, weights)
        # pairwise class merging keeps the expensive sweeps at ~2x bonds
        acc = apply_step_mps(alg, scaled, 0)
        for c in range(1, alg.n_class):
            acc, _ = right_canonicalize(
                stack_fat([acc, apply_step_mps(alg, scaled, c)]), lag_tol, lag_cap
            )
        new_tensors, spectrum, disc, total = dangling_truncate(acc, svd_tol, max_rank)
        disc_rel = disc / total if total > 0 else 0.0
        new_weights = spectrum / np.linalg.norm(spectrum)
        # subspace convergence: weighted coverage of the new family in the old
        ov = inner_dangling(tensors, new_tensors)
        cover = float(np.linalg.norm(ov * new_weights[None, :]) ** 2)
        deficiency = max(0.0, 1.0 - cover)
        deficiency_hist.append(deficiency)
        tensors, weights = new_tensors, new_weights
        if k <= n_exact or (k - n_exact) % stride == 0:
            fam = (tensors, weights)
            if collector is None:
                collector = fam
            else:
                collector, d, _ = _merge_families(
                    alg, collector, fam, svd_tol, max_rank, lag_tol, lag_cap
                )
                merge_disc += d
            n_collected += 1
        # stop once the family gains less than the truncation throws away
        stop_ref = max(conv_tol, 100.0 * disc_rel)
        if k > n_exact and len(deficiency_hist) >= 2 and all(
            d <= stop_ref for d in deficiency_hist[-2:]
        ):
            stopped_at = k
            break

    collector, _, _ = _merge_families(
        alg, collector, (tensors, weights), svd_tol, max_rank, lag_tol, lag_cap
    )
    st = stack_fat([_scaled(*collector)])
    st, lag_disc = right_canonicalize(st, lag_tol, lag_cap)
    tensors, spectrum, bond_disc, bond_total = dangling_truncate(
        st, svd_tol, max_rank
    )
    chi = tensors[0].shape[0]
    bond_disc_rel = bond_disc / bond_total if bond_total > 0 else 0.0
    if enforce_tolerance and chi >= max_rank and bond_disc_rel > svd_tol**2:
        raise RankOverflowError(
            f"bond dimension capped at {max_rank} with relative discarded weight "
            f"{bond_disc_rel:.3e} above svd_tol^2 = {svd_tol**2:.3e} "
            "(under-resolved memory)",
            discarded_weight=bond_disc_rel,
            max_rank=max_rank,
        )

    family_weights = spectrum / max(np.linalg.norm(spectrum), 1e-300)
    if certify:
        f_cls, residuals, weighted_res = _class_maps_and_certificate(
            alg, tensors, family_weights
        )
        res_max = float(residuals.max())
    else:
        f_cls = np.empty((alg.n_class, chi, chi), dtype=complex)
        for c in range(alg.n_class):
            f_cls[c] = inner_dangling(tensors, apply_step_mps(alg, tensors, c))
        weighted_res = res_max = float("nan")

    meta = {
        "chi": chi,
        "K": alg.K,
        "svd_tol": svd_tol,
        "max_rank": max_rank,
        "lag_tol": lag_tol,
        "lag_cap": lag_cap,
        "orbit_depth": stopped_at,
        "families_collected": n_collected + 1,
        "deficiency_hist": [float(x) for x in deficiency_hist[-6:]],
        "merge_discarded": float(merge_disc),
        "union_lag_discarded_total": float(sum(lag_disc)) if lag_disc else 0.0,
        "bond_discarded": float(bond_disc),
        "bond_discarded_rel": float(bond_disc_rel),
        "bond_spectrum_top": [float(s) for s in spectrum[:8]],
        "residual_weighted": weighted_res,
        "residual_max": res_max,
        "lag_bonds": [int(t.shape[2]) for t in tensors],
    }
    return UniformMpoBuild(
        alg,
        tensors,
        f_cls,
        closure_boundary(alg, tensors),
        vacuum_overlap(alg, tensors),
        meta,
    )
