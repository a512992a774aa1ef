"""Uniform MPO representation of the influence matrix and the step propagator.

The influence matrix of a Gaussian bath over N time steps is the path
functional

    F^{mu_N..mu_1} = exp(- sum_{k=1}^N sum_{k'=1}^{k}
        (s_{n_k} - s_{m_k}) (eta_{k-k'} s_{n_{k'}} - conj(eta_{k-k'}) s_{m_{k'}}))

with lags beyond the memory cutoff K dropped.  This module compresses it
into a uniform matrix product operator

    F^{mu_N..mu_1} = v_l^T f^{mu_N} ... f^{mu_1} v_r

whose bulk tensors f^mu do not depend on the step index, with boundary
vectors realizing the quench initial condition (uncoupled bath) and the
terminal trace closure.  Combining the bulk tensors with the half-step
system channel of a symmetric Trotter splitting yields the effective step
propagator q on the joint (auxiliary x system-operator) space; its leading
eigenvector provides the stationary (correlated) initial condition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import _build
from .bath import EtaTable
from .errors import EigConvergenceError
from .tensor_core import leading_eigenpair

__all__ = [
    "SystemSpec",
    "InfluenceMPO",
    "StepPropagator",
    "path_weight",
    "build_influence_mpo",
    "step_propagator",
    "stationary_vector",
]

_SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class SystemSpec:
    """Local system in the eigenbasis of the bath coupling operator.

    ``h_sys`` is the system Hamiltonian and ``s_eigs`` the eigenvalues of
    the coupling operator S; the working basis is assumed to diagonalize S,
    so all influence construction is basis-free beyond this list.
    """

    h_sys: np.ndarray
    s_eigs: tuple[float, ...]

    def __post_init__(self):
        h = np.asarray(self.h_sys, dtype=complex)
        object.__setattr__(self, "h_sys", h)
        object.__setattr__(self, "s_eigs", tuple(float(s) for s in self.s_eigs))
        d = len(self.s_eigs)
        if h.shape != (d, d):
            raise ValueError("h_sys shape must match len(s_eigs)")
        if np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ValueError("h_sys must be Hermitian to 1e-12")

    @property
    def d(self) -> int:
        return len(self.s_eigs)

    @classmethod
    def single_spin(cls, omega: float = 1.0) -> "SystemSpec":
        """Spin-1/2 with H = omega * S_x, coupled through S_z (eigs +-1/2)."""
        return cls(omega * _SIGMA_X / 2.0, (0.5, -0.5))

    @classmethod
    def two_spin(cls, omega: float = 1.0) -> "SystemSpec":
        """Two spins with H = omega (S_x1 + S_x2), coupled through total S_z.

        Working basis |00>, |01>, |10>, |11>; total-S_z eigenvalues
        (1, 0, 0, -1).
        """
        eye = np.eye(2)
        h = omega * (np.kron(_SIGMA_X, eye) + np.kron(eye, _SIGMA_X)) / 2.0
        return cls(h, (1.0, 0.0, 0.0, -1.0))


def path_weight(eta: EtaTable, s_eigs, path) -> complex:
    """Exact weight of one discrete forward/backward path.

    ``path`` is a sequence of double indices, either flat integers
    mu = n*d + m or (n, m) pairs.  Lags beyond the table cutoff K carry no
    weight (truncated kernel).  Diagonal paths (n_k = m_k for all k) have
    weight exactly 1.
    """
    s = np.asarray(s_eigs, dtype=float)
    d = len(s)
    pairs = []
    for mu in path:
        if np.isscalar(mu) or isinstance(mu, (int, np.integer)):
            pairs.append((int(mu) // d, int(mu) % d))
        else:
            pairs.append((int(mu[0]), int(mu[1])))
    for n, m in pairs:
        if not (0 <= n < d and 0 <= m < d):
            raise ValueError(f"path index ({n},{m}) out of range for d={d}")
    sn = np.array([s[n] for n, _ in pairs])
    sm = np.array([s[m] for _, m in pairs])
    phi = sn - sm
    e = eta.eta
    total = 0.0 + 0.0j
    for k in range(len(pairs)):
        lo = max(0, k - eta.K)
        lags = k - np.arange(lo, k + 1)
        total += phi[k] * np.sum(e[lags] * sn[lo : k + 1] - np.conj(e[lags]) * sm[lo : k + 1])
    return complex(np.exp(-total))


@dataclass
class InfluenceMPO:
    """Uniform bulk tensors f^mu with quench boundary vectors.

    ``contract(path)`` reproduces the exact path weight within the
    certified truncation error recorded in ``meta``.
    """

    dt: float
    K: int
    d: int
    s_eigs: tuple[float, ...]
    f: np.ndarray  # (d*d, chi, chi)
    v_l: np.ndarray  # (chi,)
    v_r: np.ndarray  # (chi,)
    eta: np.ndarray  # (K+1,) kernel used for the build
    svd_tol: float
    max_rank: int
    meta: dict = field(default_factory=dict)

    @property
    def bond_dim(self) -> int:
        return self.f.shape[1]

    def contract(self, path) -> complex:
        """v_l^T f^{mu_N} .. f^{mu_1} v_r for one path of flat double indices."""
        v = self.v_r.copy()
        for mu in path:
            idx = mu if np.isscalar(mu) else mu[0] * self.d + mu[1]
            v = self.f[int(idx)] @ v
        return complex(self.v_l @ v)

    def save(self, path) -> None:
        """Self-describing binary container (npz: shapes, little-endian
        complex doubles, JSON metadata)."""
        np.savez_compressed(
            path,
            format_version=np.int64(1),
            dt=np.float64(self.dt),
            K=np.int64(self.K),
            d=np.int64(self.d),
            s_eigs=np.asarray(self.s_eigs, dtype="<f8"),
            f=self.f.astype("<c16"),
            v_l=self.v_l.astype("<c16"),
            v_r=self.v_r.astype("<c16"),
            eta=self.eta.astype("<c16"),
            svd_tol=np.float64(self.svd_tol),
            max_rank=np.int64(self.max_rank),
            meta=np.frombuffer(json.dumps(self.meta).encode(), dtype=np.uint8),
        )

    @classmethod
    def load(cls, path) -> "InfluenceMPO":
        with np.load(path) as z:
            if int(z["format_version"]) != 1:
                raise ValueError("unsupported influence-MPO container version")
            meta = json.loads(bytes(z["meta"]).decode())
            return cls(
                dt=float(z["dt"]),
                K=int(z["K"]),
                d=int(z["d"]),
                s_eigs=tuple(float(s) for s in z["s_eigs"]),
                f=np.ascontiguousarray(z["f"], dtype=complex),
                v_l=np.ascontiguousarray(z["v_l"], dtype=complex),
                v_r=np.ascontiguousarray(z["v_r"], dtype=complex),
                eta=np.ascontiguousarray(z["eta"], dtype=complex),
                svd_tol=float(z["svd_tol"]),
                max_rank=int(z["max_rank"]),
                meta=meta,
            )


def build_influence_mpo(
    eta: EtaTable,
    sys: SystemSpec,
    svd_tol: float,
    max_rank: int,
    *,
    lag_tol: float | None = None,
    orbit_depth: int | None = None,
    enforce_tolerance: bool = True,
    certify: bool = False,
) -> InfluenceMPO:
    """Compress the lag-K influence functional into a uniform MPO.

    Truncation policy: relative discarded-weight threshold ``svd_tol`` and
    hard ``max_rank`` cap, whichever binds first; both recorded in the
    build metadata together with the invariance-residual certificate.  With
    ``enforce_tolerance`` the build fails when the cap binds while the
    discarded weight still exceeds the tolerance (under-resolved memory);
    convergence studies disable this to scan deliberately capped builds.
    """
    alg = _build.StepAlgebra.from_table(eta.eta, sys.s_eigs)
    res = _build.build_uniform_mpo(
        alg,
        svd_tol,
        max_rank,
        lag_tol=lag_tol,
        k_max=orbit_depth,
        enforce_tolerance=enforce_tolerance,
        certify=certify,
    )
    f = res.f_class[alg.class_of_mu]  # (d*d, chi, chi)
    return InfluenceMPO(
        dt=eta.dt,
        K=eta.K,
        d=sys.d,
        s_eigs=sys.s_eigs,
        f=np.ascontiguousarray(f),
        v_l=res.v_l,
        v_r=res.v_r,
        eta=eta.eta.copy(),
        svd_tol=svd_tol,
        max_rank=max_rank,
        meta=res.meta,
    )


@dataclass
class StepPropagator:
    """One Trotterized time step on the joint auxiliary (x) operator space.

    ``q`` is laid out with the auxiliary index major: a joint vector is
    ``kron(aux, vec(rho))``.  ``u_half`` is the half-step unitary channel
    of the system Hamiltonian; the full step applies half-step, bath
    coupling (through the bulk tensors), half-step.
    """

    q: np.ndarray  # (chi*d^2, chi*d^2)
    u_half: np.ndarray  # (d^2, d^2)
    f: np.ndarray  # (d^2, chi, chi)
    v_l: np.ndarray
    v_r: np.ndarray
    d: int
    chi: int
    dt: float
    K: int
    meta: dict = field(default_factory=dict)

    @property
    def joint_dim(self) -> int:
        return self.chi * self.d * self.d

    def embed(self, rho: np.ndarray) -> np.ndarray:
        """v_r (x) vec(rho): the quench initial joint vector."""
        return np.kron(self.v_r, np.asarray(rho, dtype=complex).reshape(-1))

    def close(self, joint: np.ndarray) -> np.ndarray:
        """Contract the auxiliary leg with v_l, returning a d x d matrix."""
        m = joint.reshape(self.chi, self.d * self.d)
        return (self.v_l @ m).reshape(self.d, self.d)

    def apply(self, joint: np.ndarray) -> np.ndarray:
        return self.q @ joint

    def trace_dual_residual(self) -> float:
        """|q^T c - c| / |c| for the closure covector c = v_l (x) trace."""
        tr = np.eye(self.d, dtype=complex).reshape(-1)
        c = np.kron(self.v_l, tr)
        return float(np.linalg.norm(self.q.T @ c - c) / np.linalg.norm(c))


def step_propagator(mpo: InfluenceMPO, sys: SystemSpec) -> StepPropagator:
    """Assemble q_{r alpha, s beta} = sum_mu f^mu_{rs} U^{alpha mu} U^{mu beta}.

    U is the half-step (dt/2) unitary channel of h_sys in the vectorized
    working basis, so that repeated application realizes the symmetric
    Trotter splitting (half system, bath, half system).
    """
    if sys.d != mpo.d or tuple(sys.s_eigs) != tuple(mpo.s_eigs):
        raise ValueError("system and influence MPO disagree on d or s_eigs")
    u_h = expm(-1j * sys.h_sys * mpo.dt / 2.0)
    u_half = np.kron(u_h, np.conj(u_h))  # row-major vec: rho -> u rho u^dag
    chi = mpo.bond_dim
    d2 = mpo.d * mpo.d
    q = np.einsum("mrs,am,mb->rasb", mpo.f, u_half, u_half)
    q = np.ascontiguousarray(q.reshape(chi * d2, chi * d2))
    return StepPropagator(
        q=q,
        u_half=u_half,
        f=mpo.f,
        v_l=mpo.v_l.copy(),
        v_r=mpo.v_r.copy(),
        d=mpo.d,
        chi=chi,
        dt=mpo.dt,
        K=mpo.K,
        meta=dict(mpo.meta),
    )


def stationary_vector(
    prop: StepPropagator, tol: float = 1e-8, max_iter: int = 20000
) -> np.ndarray:
    """Fixed point Gamma_0 of the step propagator, q Gamma_0 = Gamma_0.

    Requires a decaying bath so the leading eigenvalue 1 is unique (a
    degenerate steady state, e.g. at zero coupling or near the localization
    transition, fails the residual or eigenvalue check).  The result is
    normalized so the closed system state v_l^T Gamma_0 has unit trace.
    """
    d = prop.d
    seed = np.kron(
        np.full(prop.chi, 1.0 / np.sqrt(prop.chi), dtype=complex),
        (np.eye(d, dtype=complex) / d).reshape(-1),
    )
    lam, vec = leading_eigenpair(prop.q, tol=tol, max_iter=max_iter, v0=seed)
    if abs(lam - 1.0) > tol:
        raise EigConvergenceError(
            f"leading eigenvalue {lam} of the step propagator is not 1 within "
            f"{tol:.1e}; bath not decaying or memory under-resolved",
            residual=abs(lam - 1.0),
        )
    rho_block = prop.close(vec)
    tr = np.trace(rho_block)
    if abs(tr) < 1e-14:
        raise EigConvergenceError(
            "stationary vector has vanishing closed trace; degenerate fixed point"
        )
    return vec / tr
