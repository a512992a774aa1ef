"""Bath spectral densities, autocorrelation functions and memory kernels.

The bath autocorrelation function is

    C(t) = (1/pi) * int dw J(w) [coth(beta*w/2) cos(wt) - i sin(wt)],

consistent with J(w) = pi * sum_k |g_k|^2 delta(w - w_k) giving
C(t) = sum_k |g_k|^2 [coth(beta*w_k/2) cos(w_k t) - i sin(w_k t)].

The discrete memory-kernel coefficients eta_k are window double integrals
of C over a uniform grid with step dt:

    eta_0 = int_0^dt dt' int_0^t' dt'' C(t' - t'')
    eta_k = int_{k dt}^{(k+1) dt} dt' int_0^dt dt'' C(t' - t''),  k >= 1.

Both are finite differences of the twice-integrated correlation
g(t) = int_0^t dt' int_0^t' ds C(s) (g(0) = g'(0) = 0):

    eta_0 = g(dt),   eta_k = g((k+1) dt) - 2 g(k dt) + g((k-1) dt).

Closed forms of g are used for every supported bath; adaptive quadrature of
C remains available as an independent cross-check and finite-beta fallback.

Units: all frequencies are in units of the system splitting Omega and all
times in 1/Omega, unless a Discrete bath defines its own scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.integrate import quad
from scipy.special import loggamma

from .errors import MemoryCapError, QuadratureError

__all__ = [
    "Ohmic",
    "Lorentzian",
    "DiscreteModes",
    "BathSpec",
    "EtaTable",
    "correlation",
    "correlation_quadrature",
    "twice_integrated_correlation",
    "eta_table",
    "memory_time_estimate",
]


@dataclass(frozen=True)
class Ohmic:
    """Ohmic spectral density with exponential high-frequency cutoff,
    J(w) = Theta(w) * alpha * w * exp(-w/omega_c)."""

    alpha: float
    omega_c: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("Ohmic coupling alpha must be >= 0")
        if self.omega_c <= 0:
            raise ValueError("Ohmic cutoff omega_c must be > 0")

    def j_value(self, omega):
        omega = np.asarray(omega, dtype=float)
        return np.where(
            omega > 0, self.alpha * omega * np.exp(-omega / self.omega_c), 0.0
        )


@dataclass(frozen=True)
class Lorentzian:
    """Lorentzian spectral density J(w) = eta*gamma / (gamma^2 + (omega_0 - w)^2).

    Has support at negative frequencies, so it is only admitted at zero
    temperature (see BathSpec).
    """

    eta: float
    gamma: float
    omega_0: float

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("Lorentzian weight eta must be >= 0")
        if self.gamma <= 0:
            raise ValueError("Lorentzian width gamma must be > 0")

    def j_value(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.eta * self.gamma / (self.gamma**2 + (self.omega_0 - omega) ** 2)


@dataclass(frozen=True)
class DiscreteModes:
    """Finite set of bath modes, J(w) = pi * sum_k g_k^2 delta(w - w_k)."""

    modes: tuple[tuple[float, float], ...]  # (coupling g_k, frequency w_k)

    def __post_init__(self):
        modes = tuple((float(g), float(w)) for g, w in self.modes)
        object.__setattr__(self, "modes", modes)
        if any(w <= 0 for _, w in modes):
            raise ValueError("all discrete mode frequencies must be > 0")


SpectralDensity = Ohmic | Lorentzian | DiscreteModes


@dataclass(frozen=True)
class BathSpec:
    """A spectral density together with an inverse temperature.

    ``beta`` may be ``math.inf`` (zero temperature).  Lorentzian spectral
    densities are rejected at finite temperature: they carry negative
    frequency components, so a thermal coth weighting is not well defined
    for them.
    """

    spectral_density: SpectralDensity
    beta: float = math.inf

    def __post_init__(self):
        if not (self.beta > 0):
            raise ValueError("inverse temperature beta must be > 0 (or inf)")
        if isinstance(self.spectral_density, Lorentzian) and math.isfinite(self.beta):
            raise ValueError(
                "Lorentzian baths are only supported at beta = inf; the "
                "spectral density has negative-frequency weight"
            )

    @property
    def is_zero_coupling(self) -> bool:
        sd = self.spectral_density
        if isinstance(sd, Ohmic):
            return sd.alpha == 0.0
        if isinstance(sd, Lorentzian):
            return sd.eta == 0.0
        return len(sd.modes) == 0


@dataclass(frozen=True)
class EtaTable:
    """Discretized memory-kernel coefficients eta_k on a uniform time grid.

    ``eta[k]`` for k = 0 .. K; eta_0 is the same-window self term and eta_k
    the window-pair term at lag k.
    """

    dt: float
    K: int
    eta: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=complex)
        object.__setattr__(self, "eta", eta)
        if eta.shape != (self.K + 1,):
            raise ValueError("eta must have K+1 entries")
        if not np.all(np.isfinite(eta.view(float))):
            raise ValueError("eta table contains non-finite entries")

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.eta == 0))


def _coth(x):
    return 1.0 / np.tanh(x)


def correlation(bath: BathSpec, t: float) -> complex:
    """Bath autocorrelation C(t) for t >= 0, using closed forms."""
    if t < 0:
        raise ValueError("correlation requires t >= 0")
    sd = bath.spectral_density
    beta = bath.beta
    if bath.is_zero_coupling:
        return 0.0 + 0.0j

    if isinstance(sd, DiscreteModes):
        c = 0.0 + 0.0j
        for g, w in sd.modes:
            th = 1.0 if math.isinf(beta) else _coth(beta * w / 2.0)
            c += g * g * (th * np.cos(w * t) - 1j * np.sin(w * t))
        return complex(c)

    if isinstance(sd, Lorentzian):
        return complex(sd.eta * np.exp(-(sd.gamma + 1j * sd.omega_0) * t))

    # Ohmic
    a, wc = sd.alpha, sd.omega_c
    c0 = (a / np.pi) * wc**2 / (1.0 + 1j * wc * t) ** 2
    if math.isinf(beta):
        return complex(c0)
    cb = 1.0 / (beta * wc)
    zp = 1.0 + cb + 1j * t / beta
    zm = 1.0 + cb - 1j * t / beta
    # sum over Matsubara-like images: sum_{n>=1} 1/(1/wc + n beta +- i t)^2
    tri = complex(mpmath.polygamma(1, mpmath.mpc(zp.real, zp.imag)))
    tri += complex(mpmath.polygamma(1, mpmath.mpc(zm.real, zm.imag)))
    return complex(c0 + (a / (np.pi * beta**2)) * tri)


def correlation_quadrature(bath: BathSpec, t: float, abs_tol: float = 1e-10) -> complex:
    """C(t) by adaptive quadrature over the spectral density.

    Serves as an independent cross-check of the closed forms.  For finite
    temperature the coth weight is split as coth = 1 + 2 n_B, with the Bose
    part decaying exponentially so that adaptive quadrature is robust.
    """
    if t < 0:
        raise ValueError("correlation requires t >= 0")
    sd = bath.spectral_density
    beta = bath.beta
    if bath.is_zero_coupling:
        return 0.0 + 0.0j
    if isinstance(sd, DiscreteModes):
        return correlation(bath, t)  # delta functions: the sum is exact

    def _quad(f, lo, hi, pts=None):
        val, err = quad(f, lo, hi, epsabs=abs_tol, epsrel=0.0, limit=400, points=pts)
        if err > 100 * max(abs_tol, abs(val) * 1e-8):
            raise QuadratureError(
                f"quadrature error estimate {err:.2e} too large for tolerance"
            )
        return val

    if isinstance(sd, Lorentzian):
        w0, span = sd.omega_0, 60.0 * sd.gamma
        re = _quad(
            lambda w: sd.j_value(w) / np.pi * np.cos(w * t), w0 - span, w0 + span
        )
        re += _quad(lambda w: sd.j_value(w) / np.pi * np.cos(w * t), -np.inf, w0 - span)
        re += _quad(lambda w: sd.j_value(w) / np.pi * np.cos(w * t), w0 + span, np.inf)
        im = _quad(
            lambda w: sd.j_value(w) / np.pi * np.sin(w * t), w0 - span, w0 + span
        )
        im += _quad(lambda w: sd.j_value(w) / np.pi * np.sin(w * t), -np.inf, w0 - span)
        im += _quad(lambda w: sd.j_value(w) / np.pi * np.sin(w * t), w0 + span, np.inf)
        return complex(re - 1j * im)

    # Ohmic: zero-temperature part plus (for finite beta) the Bose part
    hi = 60.0 * sd.omega_c
    re = _quad(lambda w: sd.j_value(w) / np.pi * np.cos(w * t), 0.0, hi)
    im = _quad(lambda w: sd.j_value(w) / np.pi * np.sin(w * t), 0.0, hi)
    c = re - 1j * im
    if math.isfinite(beta):
        hi_t = min(hi, 80.0 / beta)

        def bose_part(w):
            return (2.0 / np.pi) * sd.j_value(w) * np.cos(w * t) / np.expm1(beta * w)

        c += _quad(bose_part, 0.0, hi_t)
    return complex(c)


def twice_integrated_correlation(bath: BathSpec, t: float) -> complex:
    """g(t) = int_0^t dt' int_0^t' ds C(s), in closed form.

    g''(t) = C(t) and g(0) = g'(0) = 0.  Re g(t) is the pure-dephasing
    decoherence exponent for a unit gap of coupling-operator eigenvalues.
    """
    if t < 0:
        raise ValueError("twice_integrated_correlation requires t >= 0")
    sd = bath.spectral_density
    beta = bath.beta
    if bath.is_zero_coupling or t == 0:
        return 0.0 + 0.0j

    if isinstance(sd, DiscreteModes):
        g_val = 0.0 + 0.0j
        for g, w in sd.modes:
            th = 1.0 if math.isinf(beta) else _coth(beta * w / 2.0)
            g_val += (g * g / w**2) * (
                th * (1.0 - np.cos(w * t)) - 1j * (w * t - np.sin(w * t))
            )
        return complex(g_val)

    if isinstance(sd, Lorentzian):
        z = sd.gamma + 1j * sd.omega_0
        return complex(sd.eta * (np.exp(-z * t) + z * t - 1.0) / z**2)

    a, wc = sd.alpha, sd.omega_c
    g0 = (a / np.pi) * (np.log(1.0 + 1j * wc * t) - 1j * wc * t)
    if math.isinf(beta):
        return complex(g0)
    cb = 1.0 / (beta * wc)
    zp = 1.0 + cb + 1j * t / beta
    zm = 1.0 + cb - 1j * t / beta
    gt = -(a / np.pi) * (
        loggamma(zp) + loggamma(zm) - 2.0 * loggamma(complex(1.0 + cb))
    )
    return complex(g0 + gt)


def eta_table(bath: BathSpec, dt: float, K: int) -> EtaTable:
    """Memory-kernel coefficients eta_k for k = 0..K at time step dt.

    Emits a warning when K*dt is shorter than the bath decay time (memory
    truncation risk), or when the bath never decays (Discrete modes).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if K < 0:
        raise ValueError("K must be >= 0")
    label = f"{bath.spectral_density!r}, beta={bath.beta}"
    if bath.is_zero_coupling:
        return EtaTable(dt, K, np.zeros(K + 1, complex), label)

    g = np.array(
        [twice_integrated_correlation(bath, k * dt) for k in range(K + 2)],
        dtype=complex,
    )
    eta = np.empty(K + 1, dtype=complex)
    eta[0] = g[1]
    if K >= 1:
        eta[1:] = g[2 : K + 2] - 2.0 * g[1 : K + 1] + g[0 : K]

    try:
        t_mem = memory_time_estimate(bath, 0.01)
        if t_mem > K * dt:
            warnings.warn(
                f"memory window K*dt = {K * dt:.3g} is shorter than the bath "
                f"decay time ~{t_mem:.3g}; memory truncation risk",
                stacklevel=2,
            )
    except MemoryCapError:
        warnings.warn(
            "bath autocorrelation does not decay within the scan cap "
            "(discrete modes?); choose K to cover the full propagation window",
            stacklevel=2,
        )
    return EtaTable(dt, K, eta, label)


def memory_time_estimate(bath: BathSpec, rel_threshold: float) -> float:
    """Smallest t with |C(t)| <= rel_threshold * |C(0)|, by scanning.

    Raises MemoryCapError when the scan cap is reached (bath memory too
    long, e.g. non-decaying discrete modes).
    """
    if not (0.0 < rel_threshold < 1.0):
        raise ValueError("rel_threshold must lie in (0, 1)")
    if bath.is_zero_coupling:
        return 0.0
    sd = bath.spectral_density
    if isinstance(sd, Ohmic):
        t_char = 1.0 / sd.omega_c
    elif isinstance(sd, Lorentzian):
        t_char = 1.0 / sd.gamma
    else:
        t_char = 2.0 * np.pi / min(w for _, w in sd.modes)
    step = t_char / 40.0
    c0 = abs(correlation(bath, 0.0))
    cap = 20000
    for k in range(1, cap + 1):
        if abs(correlation(bath, k * step)) <= rel_threshold * c0:
            return k * step
    raise MemoryCapError(
        f"|C(t)| did not fall below {rel_threshold} * |C(0)| within "
        f"t = {cap * step:.3g} (bath memory too long for requested truncation)"
    )
