"""Synthetic data generators and the Monte Carlo dephasing oracle.

Every generator is a pure function of its inputs and an integer seed.  Noise
trajectories use a counter-based Philox stream keyed on (seed, trajectory
index), so any subset of trajectories can be regenerated independently and
the ensemble does not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .extraction import FluxScanDataset, ScanRecord
from .fitting import DecayTrace, DephasingTriple, nonexponential_curve
from .noise import (
    NoiseEnvironment,
    SequenceType,
    dielectric_rate,
    pure_dephasing_time,
    quasiparticle_rate,
)
from .qubit import FluxoniumParams, converged_spectrum, flux_dispersion, matrix_elements

MIN_TRAJECTORIES = 100


def keyed_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` under master ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


@dataclass(frozen=True)
class NoiseTrajectorySpec:
    """1/f flux-noise synthesis settings; times in us, frequencies in Hz.

    ``f_low`` defaults to 1/(10 duration), realized by synthesizing a record
    ten times longer than ``duration`` and keeping its start; ``f_high``
    defaults to the Nyquist frequency 1/(2 dt).
    """

    a_phi: float
    duration: float
    dt: float
    seed: int = 0
    f_low: float | None = None
    f_high: float | None = None

    def __post_init__(self):
        if self.a_phi < 0:
            raise ValidationError("a_phi must be nonnegative")
        if not (self.duration > 0 and self.dt > 0) or self.dt >= self.duration:
            raise ValidationError("need 0 < dt < duration")
        if self.band[0] >= self.band[1]:
            raise ValidationError("f_low must be below f_high")
        if self.band[1] > 1.0 / (2 * self.dt * 1e-6) * (1 + 1e-12):
            raise ValidationError("f_high exceeds the Nyquist frequency of the time grid")

    @property
    def band(self) -> tuple:
        f_low = self.f_low if self.f_low is not None else 1.0 / (10 * self.duration * 1e-6)
        f_high = self.f_high if self.f_high is not None else 1.0 / (2 * self.dt * 1e-6)
        return f_low, f_high

    @property
    def n_window(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def n_record(self) -> int:
        f_low = self.band[0]
        return max(self.n_window, int(math.ceil(1.0 / (f_low * self.dt * 1e-6))))


def _shaped_amplitudes(spec: NoiseTrajectorySpec):
    m = spec.n_record
    dt_s = spec.dt * 1e-6
    freqs = np.fft.rfftfreq(m, dt_s)
    df = 1.0 / (m * dt_s)
    f_low, f_high = spec.band
    inside = (freqs >= f_low * (1 - 1e-12)) & (freqs <= f_high * (1 + 1e-12)) & (freqs > 0)
    if m % 2 == 0:
        inside[-1] = False  # real-valued Nyquist bin left empty
    std = np.zeros_like(freqs)
    # two-sided S(f) = A^2/|f| in Phi0^2/Hz
    a = spec.a_phi * 1e-6
    std[inside] = np.sqrt(a**2 / freqs[inside] * df)
    return std, inside


def synth_1f_noise(spec: NoiseTrajectorySpec, index: int = 0, full_record: bool = False) -> np.ndarray:
    """One flux-noise trajectory in Phi0 sampled every ``spec.dt``."""
    m = spec.n_record
    std, inside = _shaped_amplitudes(spec)
    rng = keyed_rng(spec.seed, index)
    noise = rng.standard_normal((2, len(std)))
    coeff = std * (noise[0] + 1j * noise[1]) / math.sqrt(2)
    series = np.fft.irfft(coeff * m, n=m)
    return series if full_record else series[: spec.n_window]


def periodogram(series: np.ndarray, dt: float):
    """Two-sided periodogram (Phi0^2/Hz) at positive frequencies, dt in us."""
    m = len(series)
    dt_s = dt * 1e-6
    spectrum = np.fft.rfft(series)
    freqs = np.fft.rfftfreq(m, dt_s)
    return freqs[1:], (np.abs(spectrum) ** 2 * dt_s / m)[1:]


@dataclass(frozen=True)
class EnsembleResult:
    delays: np.ndarray
    envelope: np.ndarray
    stderr: np.ndarray
    n_trajectories: int


def _segment_bounds(seq: SequenceType, n_steps: int):
    """Sample indices where the toggling function flips, snapped to the grid."""
    inner = np.rint(seq.toggle_times() * n_steps).astype(int)
    return np.concatenate([[0], inner, [n_steps]])


def simulate_dephasing(
    spec: NoiseTrajectorySpec,
    dispersion: float,
    seq: SequenceType,
    delays,
    n_traj: int,
    seed: int | None = None,
    chunk: int = 200,
) -> EnsembleResult:
    """Ensemble |<exp(i phi)>| under 1/f flux noise and a pulse sequence.

    phi(t) = D int_0^t dPhi(s) sign(s) ds with the CPMG toggling sign
    (constant for Ramsey); the integral is an exact sum over dt bins.
    """
    if n_traj < MIN_TRAJECTORIES:
        raise ValidationError(f"n_traj must be at least {MIN_TRAJECTORIES}")
    delays = np.asarray(delays, dtype=float)
    if np.any(delays < 0) or np.any(delays > spec.duration * (1 + 1e-12)):
        raise ValidationError("delays must lie within the trajectory duration")
    if seed is not None and seed != spec.seed:
        spec = NoiseTrajectorySpec(spec.a_phi, spec.duration, spec.dt, seed, spec.f_low, spec.f_high)
    steps = np.rint(delays / spec.dt).astype(int)
    bounds = [_segment_bounds(seq, k) for k in steps]
    rate = dispersion * 1e3  # rad per us per Phi0
    phases = np.empty((len(delays), n_traj))
    for start in range(0, n_traj, chunk):
        stop = min(n_traj, start + chunk)
        block = np.vstack([synth_1f_noise(spec, i) for i in range(start, stop)])
        cumulative = np.concatenate([np.zeros((stop - start, 1)), np.cumsum(block, axis=1)], axis=1) * spec.dt
        for row, edges in enumerate(bounds):
            signs = (-1.0) ** np.arange(len(edges) - 1)
            seg = cumulative[:, edges[1:]] - cumulative[:, edges[:-1]]
            phases[row, start:stop] = rate * (seg @ signs)
    envelope = np.empty(len(delays))
    stderr = np.empty(len(delays))
    for row in range(len(delays)):
        c = math.fsum(np.cos(phases[row])) / n_traj
        s = math.fsum(np.sin(phases[row])) / n_traj
        envelope[row] = math.hypot(c, s)
        angle = math.atan2(s, c)
        proj = np.cos(phases[row] - angle)
        stderr[row] = float(np.std(proj, ddof=1) / math.sqrt(n_traj))
    return EnsembleResult(delays, envelope, stderr, n_traj)


def one_over_e_time(delays, envelope) -> float:
    """First 1/e crossing by log-linear interpolation between samples."""
    delays = np.asarray(delays, dtype=float)
    envelope = np.asarray(envelope, dtype=float)
    level = math.exp(-1)
    below = np.nonzero(envelope < level)[0]
    if len(below) == 0 or below[0] == 0:
        raise ValidationError("envelope does not cross 1/e inside the delay range")
    i = below[0]
    y0, y1 = math.log(envelope[i - 1]), math.log(max(envelope[i], 1e-300))
    return float(delays[i - 1] + (delays[i] - delays[i - 1]) * (y0 + 1) / (y0 - y1))


# -- decay traces ---------------------------------------------------------------------


def _sample(curve, shots, rng, label):
    curve = np.asarray(curve, dtype=float)
    if np.any(curve < -1e-12) or np.any(curve > 1 + 1e-12):
        raise ValidationError("model probabilities fall outside [0, 1]")
    curve = np.clip(curve, 0.0, 1.0)
    if not shots:
        return curve, None
    counts = rng.binomial(int(shots), curve)
    return counts / shots, np.full(curve.shape, float(shots))


def synth_decay_trace(model: str, params: dict, delays, shots: int = 0, seed: int = 0):
    """Evaluate a decay model on ``delays`` and sample it binomially.

    Models and their parameters:

    * ``exponential``: a, t1, b
    * ``joint_pair``: a1, a2, t1, b (returns two traces: from_1, from_0)
    * ``nonexponential``: a, n, t1_tilde, t1, b
    * ``composite_chi``: a, dispersion, a_phi, a_white, t1, sequence

    ``shots = 0`` returns the exact curve.
    """
    delays = np.asarray(delays, dtype=float)
    rng = np.random.default_rng(seed)
    if model == "exponential":
        curve = params["a"] * np.exp(-delays / params["t1"]) + params["b"]
        p1, s = _sample(curve, shots, rng, "none")
        return DecayTrace(delays, p1, s)
    if model == "joint_pair":
        decay = np.exp(-delays / params["t1"])
        p_a, s_a = _sample(params["a1"] * decay + params["b"], shots, rng, "from_1")
        p_b, s_b = _sample(params["a2"] * decay + params["b"], shots, rng, "from_0")
        return DecayTrace(delays, p_a, s_a, "from_1"), DecayTrace(delays, p_b, s_b, "from_0")
    if model == "nonexponential":
        curve = nonexponential_curve(
            delays, params["a"], params["n"], params["t1_tilde"], params["t1"], params["b"]
        )
        p1, s = _sample(curve, shots, rng, "none")
        return DecayTrace(delays, p1, s)
    if model == "composite_chi":
        from .noise import dephasing_envelope

        seq = params.get("sequence", SequenceType.echo())
        if isinstance(seq, str):
            seq = SequenceType.parse(seq)
        env = NoiseEnvironment(a_phi=params.get("a_phi", 0.0), a_white=params.get("a_white", 0.0))
        curve = params.get("a", 1.0) * dephasing_envelope(
            seq, params.get("dispersion", 0.0), env, delays, params.get("t1", math.inf)
        )
        p1, s = _sample(curve, shots, rng, "envelope")
        return DecayTrace(delays, p1, s, "envelope")
    raise ValidationError(f"unknown decay model {model!r}")


def synth_dephasing_triple(
    envelope, delays, offset: float = 0.5, theta: float = 0.0, shots: int = 0, seed: int = 0
) -> DephasingTriple:
    """Three analysis-phase traces p_k = c + A(t) cos(theta - phi_k)."""
    delays = np.asarray(delays, dtype=float)
    amplitude = np.asarray(envelope, dtype=float)
    rng = np.random.default_rng(seed)
    phases = (0.0, math.pi / 3, 2 * math.pi / 3)
    traces = []
    for phi in phases:
        p, s = _sample(offset + amplitude * np.cos(theta - phi), shots, rng, "none")
        traces.append(DecayTrace(delays, p, s))
    return DephasingTriple(tuple(traces), phases)


# -- flux scans -----------------------------------------------------------------------


def forward_flux_point(qubit: FluxoniumParams, env: NoiseEnvironment, phi_ext: float):
    """(f01, |<0|phi|1>|, D, T1) at one flux bias from the forward models."""
    sol = converged_spectrum(qubit, phi_ext, n_levels=4)
    elems = matrix_elements(sol, 0, 1)
    slope = flux_dispersion(qubit, phi_ext, basis_size=sol.basis_size)
    rate = dielectric_rate(sol.f01, qubit.e_c, elems.abs_phi, env.tan_delta_c, env.temp, env.loss_exponent)
    if env.x_qp > 0:
        rate += quasiparticle_rate(sol, elems, env, "JJ") + quasiparticle_rate(sol, elems, env, "JJA")
    t1 = math.inf if rate == 0 else 1.0 / rate
    return sol.f01, elems.abs_phi, slope, t1


def synth_flux_scan(
    qubit: FluxoniumParams,
    env: NoiseEnvironment,
    flux_grid,
    sequences=(),
    tls_dips=(),
    seed: int = 0,
    scatter: float = 0.10,
    max_time_us: float = 1e5,
    include_t1: bool = True,
) -> FluxScanDataset:
    """Forward-model T1 and T_phi over a flux grid.

    ``tls_dips`` is a list of (phi_ext, suppression) pairs; each divides T1 at
    the nearest grid point.  ``scatter`` is the log-normal sigma applied to
    every value.  Dephasing times longer than ``max_time_us`` (effectively
    unmeasurable, e.g. at the sweet spot) are omitted.
    """
    grid = np.asarray(list(flux_grid), dtype=float)
    if np.ptp(grid) >= 1.0:
        raise ValidationError("flux grid must lie within one period")
    sequences = [SequenceType.parse(s) if isinstance(s, str) else s for s in sequences]
    rng = np.random.default_rng(seed)
    suppression = np.ones(len(grid))
    for phi, factor in tls_dips:
        suppression[int(np.argmin(np.abs(grid - phi)))] *= factor
    records = []
    for k, phi in enumerate(grid):
        _, _, slope, t1 = forward_flux_point(qubit, env, phi)
        if include_t1:
            value = t1 / suppression[k]
            noise = math.exp(scatter * rng.standard_normal()) if scatter > 0 else 1.0
            records.append(ScanRecord(float(phi), "t1", value * noise, value * scatter if scatter > 0 else None))
        for seq in sequences:
            tphi = pure_dephasing_time(seq, slope, env.a_phi, env.a_white)
            noise = math.exp(scatter * rng.standard_normal()) if scatter > 0 else 1.0
            if tphi > max_time_us:
                continue
            records.append(ScanRecord(float(phi), seq.name, tphi * noise, tphi * scatter if scatter > 0 else None))
    return FluxScanDataset(qubit, records)
