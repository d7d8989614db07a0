"""Noise-parameter extraction from coherence-versus-flux scans.

Two inverse problems live here:

* the dielectric loss tangent from T1(phi_ext), fitted as an upper envelope so
  that TLS-induced dips pull the estimate as little as possible;
* the 1/f and white flux-noise amplitudes from dephasing data of several
  pulse sequences, fitted jointly with two shared noise parameters.

Plus the zeta normalization table and the model band for zeta(f01) plots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, least_squares

from .errors import FitError, UnidentifiableError, ValidationError
from .fitting import DecayTrace
from .noise import (
    SequenceType,
    dielectric_rate,
    filter_u_coefficient,
    pure_dephasing_time,
    white_dephasing_rate,
    zeta_dielectric,
    zeta_flux,
)
from .qubit import FluxoniumParams, converged_spectrum, flux_dispersion, matrix_elements

T1_TAG = "t1"
SEQUENCE_NAMES = ("t1", "ramsey", "cpmg1", "cpmg2", "cpmg4", "cpmg8")

# |D| below this (rad GHz / Phi0) counts as the sweet spot
SWEET_SPOT_TOL = 1e-3

DEFAULT_ASYMMETRY = 10.0
DEFAULT_MASK_FACTOR = 3.0

# representative sweet-spot energies (qubit G) for model bands
BAND_E_C = 1.212
BAND_E_L = 0.547


@dataclass(frozen=True)
class ScanRecord:
    phi_ext: float
    sequence: str
    value_us: float
    err_us: float | None = None


@dataclass(frozen=True)
class TraceRecord:
    phi_ext: float
    sequence: str
    trace: DecayTrace


@dataclass
class FluxScanDataset:
    qubit: FluxoniumParams
    records: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    idle_phi: float | None = None

    def __post_init__(self):
        phis = [r.phi_ext for r in self.records] + [t.phi_ext for t in self.traces]
        if phis and max(phis) - min(phis) >= 1.0:
            raise ValidationError("flux values must lie within one period")
        for r in self.records:
            if not (r.value_us > 0 and math.isfinite(r.value_us)):
                raise ValidationError(f"time constant must be positive at phi_ext={r.phi_ext}")
            if r.err_us is not None and not r.err_us > 0:
                raise ValidationError(f"error must be positive at phi_ext={r.phi_ext}")

    def t1_records(self):
        return [r for r in self.records if r.sequence == T1_TAG]

    def dephasing_records(self):
        return [r for r in self.records if r.sequence != T1_TAG]


@dataclass
class ExtractionReport:
    tan_delta_finite_t: float | None = None
    tan_delta_t0: float | None = None
    tan_delta_err: dict = field(default_factory=dict)
    temp: float | None = None
    variant: str | None = None
    a_phi: float | None = None
    a_phi_err: float | None = None
    a_white: float | None = None
    a_white_err: float | None = None
    residuals: list = field(default_factory=list)
    masked: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def tan_delta_c(self) -> float | None:
        return self.tan_delta_t0 if self.variant == "tls_T0" else self.tan_delta_finite_t

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            return x

        return {
            "tand_finiteT": clean(self.tan_delta_finite_t),
            "tand_T0": clean(self.tan_delta_t0),
            "tand_err": {k: clean(v) for k, v in self.tan_delta_err.items()},
            "T_mK": None if self.temp is None else self.temp * 1e3,
            "variant": self.variant,
            "A_phi": clean(self.a_phi),
            "A_phi_err": clean(self.a_phi_err),
            "A_white": clean(self.a_white),
            "A_white_err": clean(self.a_white_err),
            "residuals": [{k: clean(v) for k, v in row.items()} for row in self.residuals],
            "masked": self.masked,
            "extra": {k: clean(v) for k, v in self.extra.items()},
        }


class _FluxCache:
    """Per-flux spectrum quantities for one qubit, computed once."""

    def __init__(self, qubit: FluxoniumParams):
        self.qubit = qubit
        self._cache = {}

    def __call__(self, phi: float):
        key = float(phi)
        if key not in self._cache:
            sol = converged_spectrum(self.qubit, key, n_levels=4)
            elems = matrix_elements(sol, 0, 1)
            self._cache[key] = (sol.f01, elems.abs_phi, None, sol.basis_size)
        return self._cache[key]

    def dispersion(self, phi: float) -> float:
        f01, abs_phi, slope, basis = self(phi)
        if slope is None:
            slope = flux_dispersion(self.qubit, phi, basis_size=basis)
            self._cache[float(phi)] = (f01, abs_phi, slope, basis)
        return slope


# -- dielectric loss ---------------------------------------------------------------


def _asymmetric_location(values, asymmetry, active):
    """x minimizing sum w(v - x) (v - x)^2 with weight ``asymmetry`` for v > x.

    The objective is convex and piecewise quadratic; its derivative is
    monotone, so the root is bracketed by the data range.
    """
    v = values[active]
    if len(v) == 0:
        raise FitError("no unmasked points left to fit")
    if np.ptp(v) == 0:
        return float(v[0])

    def slope(x):
        r = v - x
        return float(np.sum(np.where(r > 0, asymmetry, 1.0) * r))

    return brentq(slope, v.min(), v.max(), xtol=1e-14, rtol=1e-15)


def _fit_envelope(log_t1, log_k, asymmetry, mask_factor, clip_fraction):
    """Return (log tan_delta, active mask, reasons) after iterative dip masking."""
    # log T1_model = -(x + log k); residual r = log T1 + log k + x
    base = -(log_t1 + log_k)  # r = x - base ... data above model <=> base < x
    n = len(base)
    active = np.ones(n, bool)
    reasons = {}
    for _ in range(50):
        # data above model means residual log(T1/T1_model) = x - base > 0
        x = -_asymmetric_location(-base, asymmetry, active)
        resid = x - base
        new_active = np.ones(n, bool)
        new_reasons = {}
        if mask_factor is not None:
            dips = resid < -math.log(mask_factor)
            for i in np.nonzero(dips)[0]:
                new_reasons[i] = f"T1 {math.exp(-resid[i]):.2f}x below model (TLS dip)"
            new_active &= ~dips
        if clip_fraction > 0:
            negatives = np.nonzero((resid < 0) & new_active)[0]
            n_clip = int(math.floor(clip_fraction * new_active.sum()))
            if n_clip:
                worst = negatives[np.argsort(resid[negatives])][:n_clip]
                for i in worst:
                    new_reasons[i] = "clipped negative outlier"
                new_active[worst] = False
        if new_active.sum() == 0:
            raise FitError("all points fall below the model floor")
        if np.array_equal(new_active, active):
            return x, active, reasons, resid
        active, reasons = new_active, new_reasons
    raise FitError("dip masking did not settle")


def extract_tan_delta(
    scan: FluxScanDataset,
    temp: float,
    variant: str = "finite_T",
    asymmetry: float = DEFAULT_ASYMMETRY,
    mask_factor: float | None = DEFAULT_MASK_FACTOR,
    clip_fraction: float = 0.0,
    loss_exponent: float = 0.0,
    min_points: int = 8,
) -> ExtractionReport:
    """Fit the loss tangent to T1(phi_ext) as an upper envelope.

    Residuals are log(T1_data / T1_model); points above the model weigh
    ``asymmetry`` times more than points below.  Points more than
    ``mask_factor`` below the current model are masked as TLS dips (and
    reported).  Both the finite-temperature and the T = 0 variant are fitted;
    ``variant`` selects which one's residuals and masks are reported.
    ``asymmetry=1, mask_factor=None`` is plain symmetric least squares.
    """
    if variant not in ("finite_T", "tls_T0"):
        raise ValidationError("variant must be 'finite_T' or 'tls_T0'")
    if asymmetry < 1:
        raise ValidationError("asymmetry must be >= 1")
    if temp < 0:
        raise ValidationError("temp must be nonnegative")
    records = scan.t1_records()
    phis = np.array([r.phi_ext for r in records])
    folded = phis - np.floor(phis)
    if len(np.unique(phis)) < min_points:
        raise ValidationError(f"need at least {min_points} flux points, got {len(np.unique(phis))}")
    if not (np.any(folded < 0.5) and np.any(folded > 0.5)):
        raise ValidationError("flux points must span both sides of 0.5")
    cache = _FluxCache(scan.qubit)
    t1 = np.array([r.value_us for r in records])
    f01 = np.empty(len(records))
    abs_phi = np.empty(len(records))
    for i, r in enumerate(records):
        f01[i], abs_phi[i], _, _ = cache(r.phi_ext)

    report = ExtractionReport(temp=temp, variant=variant)
    for name, t in (("finite_T", temp), ("tls_T0", 0.0)):
        k = np.array(
            [dielectric_rate(f, scan.qubit.e_c, m, 1.0, t, loss_exponent) for f, m in zip(f01, abs_phi)]
        )
        x, active, reasons, resid = _fit_envelope(np.log(t1), np.log(k), asymmetry, mask_factor, clip_fraction)
        tan_delta = math.exp(x)
        spread = float(np.sqrt(np.mean(resid[active] ** 2)) / math.sqrt(max(active.sum() - 1, 1)))
        if name == "finite_T":
            report.tan_delta_finite_t = tan_delta
        else:
            report.tan_delta_t0 = tan_delta
        report.tan_delta_err[name] = tan_delta * spread
        if name == variant:
            report.residuals = [
                {
                    "phi_ext": float(phis[i]),
                    "sequence": T1_TAG,
                    "data_us": float(t1[i]),
                    "model_us": float(1.0 / (tan_delta * k[i])),
                    "log_residual": float(resid[i]),
                    "masked": bool(not active[i]),
                }
                for i in range(len(records))
            ]
            report.masked = [
                {"phi_ext": float(phis[i]), "reason": reasons[i]} for i in sorted(reasons)
            ]
    return report


# -- flux noise ---------------------------------------------------------------------


def _normalize_t1_reference(t1_reference, scans):
    if t1_reference is None:
        lookup = {}
        for scan in scans:
            for r in scan.t1_records():
                lookup[float(r.phi_ext)] = r.value_us
        return lambda phi: lookup.get(float(phi), math.inf)
    if callable(t1_reference):
        return t1_reference
    if isinstance(t1_reference, dict):
        table = {float(k): v for k, v in t1_reference.items()}
        return lambda phi: table.get(float(phi), math.inf)
    value = float(t1_reference)
    return lambda phi: value


def _initial_grid(cost):
    """Coarse deterministic grid search for (A_phi, a_white)."""
    best = None
    for a in np.concatenate([[0.0], np.geomspace(0.05, 50, 13)]):
        for w in np.concatenate([[0.0], np.geomspace(1e-5, 1e-1, 9)]):
            if a == 0 and w == 0:
                continue
            c = cost(np.array([a, w]))
            if best is None or c < best[0]:
                best = (c, a, w)
    return np.array(best[1:])


def extract_flux_noise(
    scans,
    t1_reference=None,
    fit_white: bool = True,
) -> ExtractionReport:
    """Joint fit of (A_phi, a_white) to dephasing data of several sequences.

    Two data forms are accepted.  Fitted pure-dephasing times (records) are
    compared on a log scale with the 1/e time of f_white * f_N.  Raw envelope
    traces are fitted directly to a_k f_T1(t/2) f_white(t) f_N(t), with one
    free amplitude per trace and ``t1_reference`` (callable, dict or scalar,
    defaulting to the scans' own T1 records) supplying T1 per flux point.
    """
    if isinstance(scans, FluxScanDataset):
        scans = [scans]
    scans = list(scans)
    if not scans:
        raise ValidationError("no scans supplied")
    qubit = scans[0].qubit
    cache = _FluxCache(qubit)
    records = [r for s in scans for r in s.dephasing_records()]
    traces = [t for s in scans for t in s.traces if t.sequence != T1_TAG]
    if records and traces:
        raise ValidationError("mixing fitted time constants and raw traces is not supported")
    items = records or traces
    if not items:
        raise ValidationError("no dephasing data in the scans")
    sequences = {SequenceType.parse(item.sequence).name for item in items}
    if len(sequences) < 2:
        raise UnidentifiableError(
            "A_phi and A_white are unidentifiable from a single sequence type; need at least two"
        )
    slopes = {float(item.phi_ext): abs(cache.dispersion(item.phi_ext)) for item in items}
    if max(slopes.values()) < SWEET_SPOT_TOL:
        raise UnidentifiableError("A_Φ unidentifiable: every point sits at the sweet spot (D = 0)")

    report = ExtractionReport()
    if records:
        _fit_records(records, slopes, report, fit_white)
    else:
        t1_of = _normalize_t1_reference(t1_reference, scans)
        _fit_traces(traces, slopes, t1_of, report, fit_white)
    return report


def _fit_records(records, slopes, report, fit_white):
    seqs = [SequenceType.parse(r.sequence) for r in records]
    data = np.log([r.value_us for r in records])
    sigma = np.array([r.err_us / r.value_us if r.err_us else 1.0 for r in records])
    d = np.array([slopes[float(r.phi_ext)] for r in records])

    def model_log(p):
        a_phi, a_white = p[0], (p[1] if fit_white else 0.0)
        out = np.empty(len(records))
        for i, (seq, slope) in enumerate(zip(seqs, d)):
            tphi = pure_dephasing_time(seq, slope, a_phi, a_white)
            out[i] = math.log(tphi) if math.isfinite(tphi) else 50.0
        return out

    def residuals(p):
        return (model_log(p) - data) / sigma

    def cost(p):
        return float(np.sum(residuals(p) ** 2))

    x0 = _initial_grid(cost)
    if not fit_white:
        x0 = x0[:1]
    lower = np.zeros(len(x0))
    sol = least_squares(
        residuals, np.maximum(x0, 1e-8), bounds=(lower, np.full(len(x0), np.inf)),
        method="trf", x_scale="jac", ftol=1e-12, xtol=1e-12, gtol=1e-12,
    )
    if not sol.success:
        raise FitError(f"flux-noise fit did not converge: {sol.message}")
    err = _param_errors(sol, len(records), weighted=any(r.err_us for r in records))
    report.a_phi, report.a_phi_err = float(sol.x[0]), err[0]
    report.a_white, report.a_white_err = (float(sol.x[1]), err[1]) if fit_white else (0.0, 0.0)
    model = np.exp(model_log(sol.x))
    report.residuals = [
        {
            "phi_ext": float(r.phi_ext),
            "sequence": r.sequence,
            "data_us": float(r.value_us),
            "model_us": float(m),
            "log_residual": float(math.log(r.value_us / m)),
        }
        for r, m in zip(records, model)
    ]
    report.extra["cost"] = float(2 * sol.cost)
    report.extra["n_points"] = len(records)


def _fit_traces(traces, slopes, t1_of, report, fit_white):
    blocks = []
    for item in traces:
        seq = SequenceType.parse(item.sequence)
        t = item.trace.delays
        if seq.is_ramsey:
            u = np.array([filter_u_coefficient(seq, tt) if tt > 0 else 0.0 for tt in t])
        else:
            u = np.full(len(t), filter_u_coefficient(seq))
        t1 = t1_of(item.phi_ext)
        relax = 0.0 if math.isinf(t1) else 1.0 / (2 * t1)
        sigma = item.trace.sigma()
        w = np.ones(len(t)) if sigma is None else 1.0 / sigma
        blocks.append((t, u, relax, slopes[float(item.phi_ext)], item.trace.p1, w))
    n_traces = len(blocks)

    def unpack(p):
        return p[0], (p[1] if fit_white else 0.0), p[2 if fit_white else 1:]

    def residuals(p):
        a_phi, a_white, amps = unpack(p)
        out = []
        for (t, u, relax, slope, y, w), amp in zip(blocks, amps):
            gauss = (t * slope * a_phi * u * 1e-3) ** 2
            gw = white_dephasing_rate(slope, a_white)
            out.append((amp * np.exp(-(relax + gw) * t - gauss) - y) * w)
        return np.concatenate(out)

    amps0 = [max(b[4][0], 1e-3) for b in blocks]

    def cost(q):
        p = np.concatenate([q if fit_white else q[:1], amps0])
        return float(np.sum(residuals(p) ** 2))

    q0 = _initial_grid(cost)
    x0 = np.concatenate([np.maximum(q0 if fit_white else q0[:1], 1e-8), amps0])
    n_noise = 2 if fit_white else 1
    lower = np.zeros(len(x0))
    sol = least_squares(
        residuals, x0, bounds=(lower, np.full(len(x0), np.inf)),
        method="trf", x_scale="jac", ftol=1e-12, xtol=1e-12, gtol=1e-12,
    )
    if not sol.success:
        raise FitError(f"flux-noise trace fit did not converge: {sol.message}")
    n_points = sum(len(b[0]) for b in blocks)
    weighted = any(item.trace.shots is not None for item in traces)
    err = _param_errors(sol, n_points, weighted)
    report.a_phi, report.a_phi_err = float(sol.x[0]), err[0]
    report.a_white, report.a_white_err = (float(sol.x[1]), err[1]) if fit_white else (0.0, 0.0)
    report.extra["amplitudes"] = [float(a) for a in sol.x[n_noise:]]
    report.extra["cost"] = float(2 * sol.cost)
    report.extra["n_points"] = n_points
    report.extra["n_traces"] = n_traces


def _param_errors(sol, n_points, weighted):
    jac = sol.jac
    dof = n_points - jac.shape[1]
    col_norm = np.linalg.norm(jac, axis=0)
    cov = np.linalg.pinv(jac.T @ jac)
    if not weighted:
        cov = cov * (2 * sol.cost / dof if dof > 0 else np.inf)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    # a parameter the residuals do not respond to is unconstrained
    err = np.where(col_norm < 1e-12 * max(col_norm.max(), 1e-300), np.inf, err)
    return [float(e) for e in err]


# -- zeta ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZetaRow:
    label: str
    f01: float
    abs_phi01: float
    t1: float
    zeta: float


def zeta_table(qubits) -> list[ZetaRow]:
    """Sweet-spot zeta = T1 |<0|phi|1>|^2 / E_C per qubit, sorted by f01.

    ``qubits`` is an iterable of (FluxoniumParams, measured T1 in us).
    """
    rows = []
    for params, t1 in qubits:
        if not t1 > 0:
            raise ValidationError(f"T1 must be positive for {params.label or params}")
        sol = converged_spectrum(params, 0.5, n_levels=4)
        elems = matrix_elements(sol, 0, 1)
        rows.append(ZetaRow(params.label, sol.f01, elems.abs_phi, float(t1), t1 * elems.abs_phi**2 / params.e_c))
    return sorted(rows, key=lambda r: r.f01)


@dataclass(frozen=True)
class BandRow:
    f01: float
    zeta_lo: float
    zeta_hi: float
    zeta_flux: float


def model_band(
    f01_grid,
    tan_delta_range,
    a_phi: float,
    temp: float = 0.0,
    e_c: float = BAND_E_C,
    e_l: float = BAND_E_L,
    loss_exponent: float = 0.0,
) -> list[BandRow]:
    """Model zeta(f01) band combining dielectric loss and flux-noise relaxation.

    Rates add, so 1/zeta = 1/zeta_dielectric + 1/zeta_flux.  The lower edge
    uses the larger loss tangent.  The flux term is the golden-rule rate from
    the 1/f spectrum at f01 for a device with charging and inductive energies
    ``e_c`` and ``e_l``.
    """
    grid = np.asarray(list(f01_grid), dtype=float)
    if grid.size == 0:
        raise ValidationError("f01 grid is empty")
    if np.any(np.diff(grid) <= 0) or np.any(grid <= 0):
        raise ValidationError("f01 grid must be positive and ascending")
    lo, hi = tan_delta_range
    if lo > hi:
        raise ValidationError("tan_delta_range must be (lo, hi) with lo <= hi")
    z_flux = zeta_flux(grid, a_phi, e_c, e_l)
    z_small = zeta_dielectric(grid, hi, temp, loss_exponent)
    z_large = zeta_dielectric(grid, lo, temp, loss_exponent)
    combine = lambda zd: 1.0 / (1.0 / zd + 1.0 / z_flux)  # noqa: E731
    return [
        BandRow(float(f), float(a), float(b), float(c))
        for f, a, b, c in zip(grid, combine(z_small), combine(z_large), z_flux)
    ]
