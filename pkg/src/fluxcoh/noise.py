"""Forward models for every decoherence channel.

Unit conventions: frequencies in GHz, times in microseconds, rates in 1/us,
flux-noise amplitudes in micro-flux-quanta per root hertz, flux dispersion
``D = d omega_01 / d phi_ext`` in rad GHz per flux quantum.

Flux-noise spectra are two-sided, ``S(f) = A^2 / |f|`` (equivalently
``S(omega) = A^2 (2 pi x 1 Hz) / |omega|``), and the accumulated phase obeys
``<exp(i phi)> = exp(-<phi^2>/2)`` with
``<phi^2> = D^2 int_{-inf}^{inf} S(f) |F(2 pi f)|^2 df``.  With this
convention the echo coefficient is exactly sqrt(ln 2).
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass

import numpy as np

from .constants import DELTA_AL_GHZ, KB_OVER_H_GHZ_PER_K
from .errors import SolverError, ValidationError

# t [us] * D [rad GHz / Phi0] * A [uPhi0] -> dimensionless
_GAUSS_UNIT = 1e-3

U_ABS_TOL = 1e-6


@dataclass(frozen=True)
class NoiseEnvironment:
    tan_delta_c: float = 0.0
    temp: float = 0.0
    loss_exponent: float = 0.0
    a_phi: float = 0.0
    a_white: float = 0.0
    x_qp: float = 0.0
    delta_gap: float = DELTA_AL_GHZ

    def __post_init__(self):
        for name in ("tan_delta_c", "temp", "a_phi", "a_white", "x_qp", "delta_gap"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValidationError(f"{name} must be finite and nonnegative, got {value!r}")
        if not np.isfinite(self.loss_exponent):
            raise ValidationError("loss_exponent must be finite")


@dataclass(frozen=True)
class CavityParams:
    kappa: float  # MHz, kappa / 2 pi
    chi: float  # MHz, chi / 2 pi
    f_cavity: float = 0.0  # GHz
    n_bar: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValidationError("kappa must be positive")
        if self.chi == 0 or not np.isfinite(self.chi):
            raise ValidationError("chi must be nonzero")
        if self.n_bar < 0:
            raise ValidationError("n_bar must be nonnegative")


@dataclass(frozen=True)
class SequenceType:
    """Ramsey (``n_pulses == 0``) or CPMG with ``n_pulses`` pi pulses."""

    n_pulses: int = 1
    ramsey_cutoff: float = 1.0  # Hz

    def __post_init__(self):
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 0:
            raise ValidationError(f"n_pulses must be a nonnegative integer, got {self.n_pulses!r}")
        if not self.ramsey_cutoff > 0:
            raise ValidationError("ramsey_cutoff must be positive")

    @classmethod
    def ramsey(cls, cutoff: float = 1.0) -> "SequenceType":
        return cls(0, cutoff)

    @classmethod
    def cpmg(cls, n: int) -> "SequenceType":
        if n < 1:
            raise ValidationError("CPMG needs at least one pi pulse")
        return cls(n)

    @classmethod
    def echo(cls) -> "SequenceType":
        return cls(1)

    @classmethod
    def parse(cls, name: str) -> "SequenceType":
        """Parse ``ramsey``, ``echo`` or ``cpmgN``."""
        key = name.strip().lower()
        if key == "ramsey":
            return cls.ramsey()
        if key in ("echo", "spin_echo"):
            return cls.echo()
        match = re.fullmatch(r"cpmg\(?(\d+)\)?", key)
        if match:
            return cls.cpmg(int(match.group(1)))
        raise ValidationError(f"unknown sequence {name!r}")

    @property
    def is_ramsey(self) -> bool:
        return self.n_pulses == 0

    @property
    def name(self) -> str:
        return "ramsey" if self.is_ramsey else f"cpmg{self.n_pulses}"

    def toggle_times(self) -> np.ndarray:
        """Pi-pulse positions as fractions of the total evolution time."""
        n = self.n_pulses
        return (np.arange(1, n + 1) - 0.5) / n if n else np.empty(0)


# -- relaxation -----------------------------------------------------------------


def coth_factor(f01: float, temp: float) -> float:
    """coth(h f01 / 2 k_B T), exactly 1 at T = 0."""
    if temp == 0:
        return 1.0
    return 1.0 / math.tanh(f01 / (2 * KB_OVER_H_GHZ_PER_K * temp))


def dielectric_rate(
    f01: float,
    e_c: float,
    abs_phi01: float,
    tan_delta: float,
    temp: float = 0.0,
    loss_exponent: float = 0.0,
) -> float:
    """Capacitive-loss relaxation rate in 1/us."""
    if not f01 > 0:
        raise ValidationError(f"f01 must be positive, got {f01!r}")
    tan_eff = tan_delta * f01**loss_exponent
    # hbar omega^2 / (4 E_C) = pi f^2 / (2 E_C) in 1/ns for GHz inputs
    prefactor = math.pi * f01**2 / (2 * e_c) * 1e3
    return prefactor * tan_eff * abs_phi01**2 * coth_factor(f01, temp)


def t1_dielectric(sol, elems, env: NoiseEnvironment) -> float:
    """Dielectric-loss T1 in us; ``env.temp == 0`` gives the TLS-bath variant."""
    rate = dielectric_rate(
        sol.f01, sol.params.e_c, elems.abs_phi, env.tan_delta_c, env.temp, env.loss_exponent
    )
    return math.inf if rate == 0 else 1.0 / rate


def quasiparticle_rate(sol, elems, env: NoiseEnvironment, channel: str = "JJ") -> float:
    """Quasiparticle tunneling rate (1/us) across the junction or the array."""
    f01 = sol.f01
    if not f01 > 0:
        raise ValidationError("f01 must be positive")
    if env.delta_gap <= f01:
        raise ValidationError(f"delta_gap={env.delta_gap} GHz must exceed f01={f01:.4g} GHz")
    channel = channel.upper()
    if channel == "JJ":
        element2 = elems.abs_sin_half_phi**2
        energy = sol.params.e_j
    elif channel == "JJA":
        element2 = (elems.abs_phi / 2) ** 2
        energy = sol.params.e_l
    else:
        raise ValidationError(f"channel must be JJ or JJA, got {channel!r}")
    # 8 E / (hbar pi) = 16 E[GHz] in 1/ns
    thermal = 1.0 + (math.exp(-f01 / (KB_OVER_H_GHZ_PER_K * env.temp)) if env.temp > 0 else 0.0)
    return element2 * 16 * energy * 1e3 * env.x_qp * math.sqrt(2 * env.delta_gap / f01) * thermal


def flux_noise_relaxation_rate(f01: float, e_l: float, abs_phi01: float, a_phi: float) -> float:
    """Golden-rule relaxation (1/us) from the 1/f flux spectrum evaluated at f01.

    The transverse coupling is dH/dphi_ext = 2 pi E_L phi, so the rate is
    (2 pi)^2 (2 pi E_L |<0|phi|1>|)^2 A^2 / f01 with S(f) = A^2/|f|.
    """
    coupling = 4 * math.pi**2 * e_l * abs_phi01  # rad GHz per Phi0
    # (coupling * 1e9)^2 * (A * 1e-6)^2 / (f01 * 1e9) per second -> per us
    return coupling**2 * a_phi**2 / f01 * 1e-9


def thermal_population(f01: float, temp: float) -> float:
    """Excited-state fraction of a thermal two-level system."""
    if temp == 0:
        return 0.0
    return 1.0 / (1.0 + math.exp(f01 / (KB_OVER_H_GHZ_PER_K * temp)))


def effective_temperature(b: float, f01: float) -> float:
    """Inverse of :func:`thermal_population`, in kelvin."""
    if not 0 < b < 0.5:
        raise ValidationError(f"thermal population must lie in (0, 0.5), got {b!r}")
    return f01 / (KB_OVER_H_GHZ_PER_K * math.log(1.0 / b - 1.0))


# -- filter functions -------------------------------------------------------------


def _toggle_coefficients(seq: SequenceType):
    """Positions and weights c_k with int_0^1 s e^{i z tau} = sum c_k e^{i z tau_k} / (i z)."""
    taus = np.concatenate([[0.0], seq.toggle_times(), [1.0]])
    signs = (-1.0) ** np.arange(seq.n_pulses + 1)
    weights = np.empty(len(taus))
    weights[0] = -signs[0]
    weights[-1] = signs[-1]
    weights[1:-1] = signs[:-1] - signs[1:]
    return taus, weights


def filter_function(seq: SequenceType, z) -> np.ndarray:
    """|F(omega)|^2 / t^2 as a function of z = omega t."""
    z = np.asarray(z, dtype=float)
    taus, weights = _toggle_coefficients(seq)
    phase = np.exp(1j * np.multiply.outer(z, taus)) @ weights
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.abs(phase) ** 2 / z**2
    # z -> 0 limit: (int s)^2, zero for CPMG, one for Ramsey
    small = np.abs(z) < 1e-6
    if np.any(small):
        out = np.where(small, 1.0 if seq.is_ramsey else 0.0, out)
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_GL_NODES_LO, _GL_WEIGHTS_LO = np.polynomial.legendre.leggauss(12)


def _piecewise_gauss(func, edges, nodes, weights):
    a = edges[:-1, None]
    b = edges[1:, None]
    x = 0.5 * (b - a) * nodes + 0.5 * (b + a)
    return float(np.sum(0.5 * (b - a) * weights * func(x)))


_LOW_EDGE = 1.0


def _check_pair(fine, coarse, what):
    if abs(fine - coarse) > 0.1 * U_ABS_TOL:
        raise SolverError(f"filter quadrature did not converge for {what} (diff {abs(fine - coarse):.2e})")
    return fine


@functools.lru_cache(maxsize=64)
def _u_squared_high(n_pulses: int) -> float:
    """Integral of |F|^2/z from z = 1 to infinity, tail added analytically."""
    seq = SequenceType(n_pulses)
    z_max = 500.0 * math.pi * (n_pulses + 1)
    edges = np.concatenate([[_LOW_EDGE], np.arange(math.pi, z_max + 1, math.pi / 2)])

    def integrand(z):
        return filter_function(seq, z) / z

    fine = _piecewise_gauss(integrand, edges, _GL_NODES, _GL_WEIGHTS)
    coarse = _piecewise_gauss(integrand, edges, _GL_NODES_LO, _GL_WEIGHTS_LO)
    _check_pair(fine, coarse, seq.name)
    _, w = _toggle_coefficients(seq)
    # oscillating terms average to sum |c_k|^2 beyond z_max
    return fine + float(np.sum(w**2)) / (2 * z_max**2)


@functools.lru_cache(maxsize=64)
def _u_squared_low(n_pulses: int, z_low: float) -> float:
    """Integral of |F|^2/z from z_low to 1 on log-spaced panels."""
    seq = SequenceType(n_pulses)
    start = max(z_low, 1e-9)
    if start >= _LOW_EDGE:
        return 0.0
    edges = np.geomspace(start, _LOW_EDGE, 40)

    def integrand(z):
        return filter_function(seq, z) / z

    fine = _piecewise_gauss(integrand, edges, _GL_NODES, _GL_WEIGHTS)
    coarse = _piecewise_gauss(integrand, edges, _GL_NODES_LO, _GL_WEIGHTS_LO)
    return _check_pair(fine, coarse, seq.name)


# largest z_low at which the Ramsey integral is still evaluated
_RAMSEY_Z_MAX = 0.5 * _LOW_EDGE


# Taylor coefficients of (2 - 2 cos z) / z^2 = sum_k a_k z^(2k - 2), k >= 1
_RAMSEY_SERIES = tuple(2.0 * (-1) ** (k + 1) / math.factorial(2 * k) for k in range(1, 14))


def _ramsey_low(z_low: float) -> float:
    """Integral of (2 - 2 cos z)/z^3 from z_low to 1, termwise from the Taylor series."""
    total = _RAMSEY_SERIES[0] * math.log(1.0 / z_low)
    for k, a in enumerate(_RAMSEY_SERIES[1:], start=2):
        total += a * (1.0 - z_low ** (2 * k - 2)) / (2 * k - 2)
    return total


def _u_squared(n_pulses: int, z_low: float) -> float:
    if z_low >= _LOW_EDGE:
        raise ValidationError("evaluation time too long for the Ramsey low-frequency cutoff")
    if n_pulses == 0:
        return _u_squared_high(0) + _ramsey_low(z_low)
    return _u_squared_high(n_pulses) + _u_squared_low(n_pulses, z_low)


def filter_u_coefficient(seq: SequenceType, t: float | None = None) -> float:
    """Sequence coefficient u with Gaussian 1/f decay exp[-(t D A u)^2].

    CPMG values are independent of ``t``; Ramsey needs the evolution time
    ``t`` (us) because the decay depends logarithmically on the low-frequency
    cutoff.
    """
    if seq.is_ramsey:
        if t is None or not t > 0:
            raise ValidationError("Ramsey coefficient requires t > 0")
        # past the cutoff horizon the 1/f band is exhausted; hold u there
        z_low = min(2 * math.pi * seq.ramsey_cutoff * t * 1e-6, _RAMSEY_Z_MAX)
        return math.sqrt(_u_squared(0, z_low))
    return math.sqrt(_u_squared(seq.n_pulses, 0.0))


# -- dephasing --------------------------------------------------------------------


def white_dephasing_rate(dispersion: float, a_white: float) -> float:
    """Exponential dephasing rate (1/us) from a flat flux PSD (a_white^2 per Hz)."""
    return 0.5 * dispersion**2 * a_white**2


def gaussian_exponent(seq: SequenceType, dispersion: float, a_phi: float, t) -> np.ndarray:
    """(t D A u)^2 for scalar or array ``t``."""
    t = np.asarray(t, dtype=float)
    if seq.is_ramsey:
        u = np.array([filter_u_coefficient(seq, tt) if tt > 0 else 0.0 for tt in t.ravel()]).reshape(t.shape)
    else:
        u = filter_u_coefficient(seq)
    return (t * dispersion * a_phi * u * _GAUSS_UNIT) ** 2


def dephasing_envelope(seq: SequenceType, dispersion: float, env: NoiseEnvironment, t, t1: float = math.inf):
    """f_T1(t/2) f_white(t) f_N(t); the amplitude ``a`` is left to callers."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValidationError("delays must be nonnegative")
    relax = 0.0 if math.isinf(t1) else 1.0 / (2 * t1)
    gamma_w = white_dephasing_rate(dispersion, env.a_white)
    exponent = (relax + gamma_w) * t_arr + gaussian_exponent(seq, dispersion, env.a_phi, t_arr)
    out = np.exp(-exponent)
    return float(out) if np.ndim(t) == 0 else out


def pure_dephasing_time(seq: SequenceType, dispersion: float, a_phi: float, a_white: float) -> float:
    """1/e time (us) of f_white(t) f_N(t), infinite when both channels vanish."""
    gamma_w = white_dephasing_rate(dispersion, a_white)
    k = abs(dispersion) * a_phi * _GAUSS_UNIT
    if gamma_w == 0 and k == 0:
        return math.inf
    if not seq.is_ramsey:
        g = (k * filter_u_coefficient(seq)) ** 2
        return 2.0 / (gamma_w + math.sqrt(gamma_w**2 + 4 * g))

    # positive root of gamma_w t + g t^2 = 1, written without cancellation;
    # u(t) varies only logarithmically, so iterate it for Ramsey
    t = 1.0
    for _ in range(100):
        g = (k * filter_u_coefficient(seq, t)) ** 2
        t_new = 2.0 / (gamma_w + math.sqrt(gamma_w**2 + 4 * g))
        if abs(t_new - t) <= 1e-13 * t_new:
            return t_new
        t = t_new
    raise SolverError("Ramsey dephasing time iteration did not converge")


def pure_dephasing_from_t1_t2(t1: float, t2: float) -> float:
    """T_phi = (1/T2 - 1/(2 T1))^-1."""
    rate = 1.0 / t2 - 1.0 / (2 * t1)
    if rate <= 0:
        raise ValidationError("T2 exceeds 2 T1; no pure dephasing")
    return 1.0 / rate


def photon_shot_dephasing(cav: CavityParams) -> float:
    """Gamma_phi = n kappa / (1 + kappa^2/chi^2), in 1/us (kappa angular)."""
    kappa = 2 * math.pi * cav.kappa  # rad/us
    return cav.n_bar * kappa / (1 + (cav.kappa / cav.chi) ** 2)


def n_bar_from_dephasing(gamma_phi: float, cav: CavityParams) -> float:
    kappa = 2 * math.pi * cav.kappa
    return gamma_phi * (1 + (cav.kappa / cav.chi) ** 2) / kappa


def cavity_temperature(n_bar: float, f_cavity: float) -> float:
    """Bose-Einstein temperature (K) of a mode holding ``n_bar`` photons."""
    if not n_bar > 0:
        raise ValidationError("cavity temperature undefined for n_bar <= 0")
    return f_cavity / (KB_OVER_H_GHZ_PER_K * math.log1p(1.0 / n_bar))


# -- normalization ----------------------------------------------------------------


def zeta(t1: float, elems, params) -> float:
    """T1 |<0|phi|1>|^2 / E_C in us/GHz."""
    if not t1 > 0:
        raise ValidationError("t1 must be positive")
    return t1 * elems.abs_phi**2 / params.e_c


def zeta_dielectric(f01, tan_delta: float, temp: float = 0.0, loss_exponent: float = 0.0):
    """Model zeta for pure dielectric loss; independent of the circuit energies."""
    f01 = np.asarray(f01, dtype=float)
    coth = np.vectorize(coth_factor)(f01, temp) if temp > 0 else np.ones_like(f01)
    return 2.0 / (math.pi * f01**2 * 1e3 * tan_delta * f01**loss_exponent * coth)


def zeta_flux(f01, a_phi: float, e_c: float, e_l: float):
    """Model zeta for flux-noise relaxation alone (independent of the matrix element)."""
    f01 = np.asarray(f01, dtype=float)
    if a_phi == 0:
        return np.full_like(f01, np.inf)
    return f01 / (16 * math.pi**4 * e_l**2 * a_phi**2 * 1e-9) / e_c
