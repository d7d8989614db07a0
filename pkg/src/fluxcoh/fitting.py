"""Least-squares fits of time-domain decay traces.

All fitters optimize time constants in log space with bounded damped least
squares (``scipy.optimize.least_squares``) from a fixed list of starting
points, keeping the lowest cost (ties go to the earliest start).  Standard
errors come from the Jacobian at the optimum: scaled by the reduced
chi-square for unweighted data, absolute when binomial shot weights are used.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import FitError, ValidationError
from .noise import SequenceType, effective_temperature

N_STARTS = 8
_LS_TOL = dict(ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=20000)

_NONEXP_BUDGET = 500

INIT_LABELS = ("from_0", "from_1", "none", "envelope")


@dataclass(frozen=True)
class DecayTrace:
    delays: np.ndarray
    p1: np.ndarray
    shots: np.ndarray | None = None
    init_label: str = "none"

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        p1 = np.asarray(self.p1, dtype=float)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "p1", p1)
        if delays.ndim != 1 or delays.shape != p1.shape:
            raise ValidationError("delays and p1 must be 1-D arrays of equal length")
        if len(delays) and np.any(np.diff(delays) <= 0):
            raise ValidationError("delays must be strictly ascending")
        if not np.all(np.isfinite(p1)):
            raise ValidationError("p1 contains non-finite values")
        upper = np.inf if self.init_label == "envelope" else 1.0
        if np.any(p1 < 0) or np.any(p1 > upper):
            raise ValidationError("p1 outside [0, 1]")
        if self.init_label not in INIT_LABELS:
            raise ValidationError(f"init_label must be one of {INIT_LABELS}")
        if self.shots is not None:
            shots = np.broadcast_to(np.asarray(self.shots, dtype=float), delays.shape).copy()
            if np.any(shots <= 0):
                raise ValidationError("shot counts must be positive")
            object.__setattr__(self, "shots", shots)

    def __len__(self):
        return len(self.delays)

    def sigma(self) -> np.ndarray | None:
        """Binomial standard deviation per point, or None when unweighted."""
        if self.shots is None:
            return None
        p = np.clip(self.p1, 0.5 / self.shots, 1 - 0.5 / self.shots)
        return np.sqrt(p * (1 - p) / self.shots)


@dataclass(frozen=True)
class DephasingTriple:
    traces: tuple
    phases: tuple = (0.0, math.pi / 3, 2 * math.pi / 3)

    def __post_init__(self):
        if len(self.traces) != 3 or len(self.phases) != 3:
            raise ValidationError("a dephasing triple needs exactly three traces")
        grid = self.traces[0].delays
        for tr in self.traces[1:]:
            if tr.delays.shape != grid.shape or not np.array_equal(tr.delays, grid):
                raise ValidationError("the three traces must share one delay grid")


@dataclass
class FitResult:
    model_id: str
    params: dict
    residual_norm: float
    converged: bool
    n_points: int
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def value(self, name: str) -> float:
        return self.params[name][0]

    def error(self, name: str) -> float:
        return self.params[name][1]

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "parameters": [
                {"name": k, "value": _json_float(v), "error": _json_float(e)} for k, (v, e) in self.params.items()
            ],
            "residual_norm": _json_float(self.residual_norm),
            "converged": self.converged,
            "n_points": self.n_points,
            "flags": list(self.flags),
            "extra": {k: _json_float(v) if isinstance(v, float) else v for k, v in self.extra.items()},
        }


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else None


# -- shared machinery -------------------------------------------------------------


def _run_starts(residuals, starts, lower, upper, max_nfev=None):
    """Best-of multi-start; runs that exhaust ``max_nfev`` are discarded as stalled."""
    options = dict(_LS_TOL) if max_nfev is None else dict(_LS_TOL, max_nfev=max_nfev)
    best = None
    for x0 in starts:
        x0 = np.clip(np.asarray(x0, dtype=float), lower + 1e-12, upper - 1e-12)
        try:
            sol = least_squares(residuals, x0, bounds=(lower, upper), method="trf", x_scale="jac", **options)
        except (ValueError, FloatingPointError):
            continue
        if not np.isfinite(sol.cost) or sol.status == 0:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or best.status <= 0:
        raise FitError("least-squares fit did not converge from any starting point")
    return best


def _covariance(sol, n_points, weighted):
    jac = sol.jac
    dof = n_points - jac.shape[1]
    try:
        cov = np.linalg.pinv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return np.full((jac.shape[1], jac.shape[1]), np.inf)
    if not weighted:
        scale = 2 * sol.cost / dof if dof > 0 else np.inf
        cov = cov * scale
    return cov


def _stderr(sol, n_points, weighted):
    cov = _covariance(sol, n_points, weighted)
    return np.sqrt(np.clip(np.diag(cov), 0, None))


def _residual_norm(residual_vector):
    return float(np.linalg.norm(residual_vector))


def _time_seed(delays, values):
    """T seed from a log-linear regression of the decaying part."""
    if values[0] >= values[-1]:
        y = values - values.min()
    else:
        y = values.max() - values
    span = delays[-1] - delays[0] if len(delays) > 1 else 1.0
    keep = y > 0.05 * y.max() if y.max() > 0 else np.zeros(len(y), bool)
    if keep.sum() >= 2:
        slope = np.polyfit(delays[keep], np.log(y[keep]), 1)[0]
        if slope < 0 and np.isfinite(slope):
            return float(min(max(-1.0 / slope, span / 1e3), span * 1e3))
    return span / 3


def _log_starts(seed):
    return seed * np.geomspace(1 / 8, 8, N_STARTS)


def _linear_ab(delays, values, tau, weights=None):
    """Best (a, b) for a exp(-t/tau) + b at fixed tau."""
    basis = np.column_stack([np.exp(-delays / tau), np.ones_like(delays)])
    if weights is not None:
        basis = basis * weights[:, None]
        values = values * weights
    coef, *_ = np.linalg.lstsq(basis, values, rcond=None)
    return coef


def _weights(trace):
    sigma = trace.sigma()
    return None if sigma is None else 1.0 / sigma


# -- exponential ------------------------------------------------------------------


def fit_exponential(trace: DecayTrace, fix_b: float | None = None) -> FitResult:
    """Fit p1(t) = a exp(-t/T1) + b."""
    if len(trace) < 4:
        raise ValidationError("exponential fit needs at least 4 points")
    t, y = trace.delays, trace.p1
    w = _weights(trace)
    if np.ptp(y) <= 1e-12 * max(1.0, abs(y).max()):
        return FitResult(
            "constant",
            {"b": (float(y.mean()), 0.0)},
            0.0,
            True,
            len(t),
            flags=["degenerate"],
        )
    wv = np.ones_like(y) if w is None else w

    def model(x):
        a, log_t1 = x[0], x[1]
        b = fix_b if fix_b is not None else x[2]
        return a * np.exp(-t / math.exp(log_t1)) + b

    def residuals(x):
        return (model(x) - y) * wv

    seed = _time_seed(t, y)
    starts = []
    for tau in _log_starts(seed):
        a0, b0 = _linear_ab(t, y, tau, w)
        starts.append([a0, math.log(tau)] + ([] if fix_b is not None else [b0]))
    n_free = 2 if fix_b is not None else 3
    lower = np.array([-np.inf, -50.0, -np.inf][:n_free])
    upper = np.array([np.inf, 50.0, np.inf][:n_free])
    sol = _run_starts(residuals, starts, lower, upper)
    err = _stderr(sol, len(t), w is not None)
    t1 = math.exp(sol.x[1])
    params = {"a": (sol.x[0], err[0]), "T1": (t1, t1 * err[1])}
    params["b"] = (fix_b, 0.0) if fix_b is not None else (sol.x[2], err[2])
    return FitResult("exponential", params, _residual_norm(model(sol.x) - y), True, len(t))


def fit_joint_t1(
    trace_a: DecayTrace,
    trace_b: DecayTrace,
    f01: float | None = None,
    fix_b: float | None = None,
) -> FitResult:
    """Two exponentials sharing T1 and the thermal offset b.

    ``a1`` belongs to the first trace and ``a2`` to the second.  With ``f01``
    (GHz) the offset is converted to an effective temperature.
    """
    for tr in (trace_a, trace_b):
        if len(tr) < 4:
            raise ValidationError("each trace needs at least 4 points")
    if trace_a.init_label == trace_b.init_label and trace_a.init_label != "none":
        raise ValidationError("the two traces must come from distinct initializations")
    if len(trace_a) == len(trace_b) and np.array_equal(trace_a.p1, trace_b.p1) and np.array_equal(
        trace_a.delays, trace_b.delays
    ):
        warnings.warn("identical traces: a1 and a2 are not separately determined", stacklevel=2)
    t = np.concatenate([trace_a.delays, trace_b.delays])
    y = np.concatenate([trace_a.p1, trace_b.p1])
    first = np.arange(len(t)) < len(trace_a)
    wa, wb = _weights(trace_a), _weights(trace_b)
    weighted = wa is not None and wb is not None
    wv = np.concatenate([wa, wb]) if weighted else np.ones_like(y)

    def model(x):
        tau = math.exp(x[2])
        b = fix_b if fix_b is not None else x[3]
        amp = np.where(first, x[0], x[1])
        return amp * np.exp(-t / tau) + b

    def residuals(x):
        return (model(x) - y) * wv

    # seed from whichever trace has the larger swing
    ref = trace_a if np.ptp(trace_a.p1) >= np.ptp(trace_b.p1) else trace_b
    seed = _time_seed(ref.delays, ref.p1)
    starts = []
    for tau in _log_starts(seed):
        basis = np.column_stack([np.where(first, 1.0, 0.0), np.where(first, 0.0, 1.0)]) * np.exp(-t / tau)[:, None]
        if fix_b is None:
            basis = np.column_stack([basis, np.ones_like(t)])
            coef, *_ = np.linalg.lstsq(basis * wv[:, None], y * wv, rcond=None)
            starts.append([coef[0], coef[1], math.log(tau), coef[2]])
        else:
            coef, *_ = np.linalg.lstsq(basis * wv[:, None], (y - fix_b) * wv, rcond=None)
            starts.append([coef[0], coef[1], math.log(tau)])
    n_free = 3 if fix_b is not None else 4
    lower = np.array([-np.inf, -np.inf, -50.0, -np.inf][:n_free])
    upper = np.array([np.inf, np.inf, 50.0, np.inf][:n_free])
    sol = _run_starts(residuals, starts, lower, upper)
    err = _stderr(sol, len(t), weighted)
    t1 = math.exp(sol.x[2])
    params = {
        "a1": (sol.x[0], err[0]),
        "a2": (sol.x[1], err[1]),
        "T1": (t1, t1 * err[2]),
        "b": (fix_b, 0.0) if fix_b is not None else (sol.x[3], err[3]),
    }
    result = FitResult("joint_exponential", params, _residual_norm(model(sol.x) - y), True, len(t))
    if f01 is not None:
        b = params["b"][0]
        if 0 < b < 0.5:
            result.extra["effective_temperature_K"] = effective_temperature(b, f01)
        else:
            result.flags.append("thermal_population_out_of_range")
    return result


# -- tri-phase envelope -------------------------------------------------------------


def bloch_envelope(triple: DephasingTriple) -> DecayTrace:
    """Solve p_k = c + X cos(phi_k) + Y sin(phi_k) per delay; return sqrt(X^2 + Y^2)."""
    phases = np.asarray(triple.phases, dtype=float)
    design = np.column_stack([np.ones(3), np.cos(phases), np.sin(phases)])
    if abs(np.linalg.det(design)) < 1e-12:
        raise ValidationError("analysis phases do not determine the Bloch vector")
    data = np.vstack([tr.p1 for tr in triple.traces])
    coef = np.linalg.solve(design, data)
    envelope = np.hypot(coef[1], coef[2])
    return DecayTrace(triple.traces[0].delays, envelope, init_label="envelope")


def bloch_components(triple: DephasingTriple) -> np.ndarray:
    """(c, X, Y) per delay as a 3 x n array."""
    phases = np.asarray(triple.phases, dtype=float)
    design = np.column_stack([np.ones(3), np.cos(phases), np.sin(phases)])
    return np.linalg.solve(design, np.vstack([tr.p1 for tr in triple.traces]))


# -- dephasing ----------------------------------------------------------------------


def fit_gaussian_dephasing(
    envelope: DecayTrace,
    t1_ref: float,
    model: SequenceType | None = None,
    include_white: bool = False,
    exponential: bool = False,
) -> FitResult:
    """Fit a exp(-t/2T1) exp(-Gamma_w t) exp(-(t/T_phi)^2) with T1 fixed.

    ``exponential=True`` fits the plain a exp(-t/T2) form used for headline
    echo numbers instead.
    """
    if not t1_ref > 0:
        raise ValidationError("t1_ref must be positive")
    if len(envelope) < 4:
        raise ValidationError("dephasing fit needs at least 4 points")
    t, y = envelope.delays, envelope.p1
    if np.polyfit(t, y, 1)[0] > 0:
        raise FitError("envelope rises with delay; not a decay")
    w = _weights(envelope)
    wv = np.ones_like(y) if w is None else w
    relax = 0.0 if math.isinf(t1_ref) else 1.0 / (2 * t1_ref)
    seed = _time_seed(t, y)
    label = "" if model is None else f"[{model.name}]"

    if exponential:
        def fmodel(x):
            return x[0] * np.exp(-t / math.exp(x[1]))

        starts = [[y[0] if y[0] > 0 else y.max(), math.log(s)] for s in _log_starts(seed)]
        lower, upper = np.array([0.0, -50.0]), np.array([np.inf, 50.0])
        names = ("a", "T2")
    elif include_white:
        def fmodel(x):
            return x[0] * np.exp(-(relax + x[2]) * t - (t / math.exp(x[1])) ** 2)

        starts = [[y.max(), math.log(s), g] for s in _log_starts(seed) for g in (0.0, 1.0 / s)]
        lower, upper = np.array([0.0, -50.0, 0.0]), np.array([np.inf, 50.0, np.inf])
        names = ("a", "Tphi", "gamma_white")
    else:
        def fmodel(x):
            return x[0] * np.exp(-relax * t - (t / math.exp(x[1])) ** 2)

        starts = [[y.max(), math.log(s)] for s in _log_starts(seed)]
        lower, upper = np.array([0.0, -50.0]), np.array([np.inf, 50.0])
        names = ("a", "Tphi")

    def residuals(x):
        return (fmodel(x) - y) * wv

    sol = _run_starts(residuals, starts, lower, upper)
    err = _stderr(sol, len(t), w is not None)
    tau = math.exp(sol.x[1])
    params = {names[0]: (sol.x[0], err[0]), names[1]: (tau, tau * err[1])}
    if len(names) == 3:
        params[names[2]] = (sol.x[2], err[2])
    model_id = ("exponential_dephasing" if exponential else "gaussian_dephasing") + label
    return FitResult(model_id, params, _residual_norm(fmodel(sol.x) - y), True, len(t))


# -- non-exponential ----------------------------------------------------------------


def nonexponential_curve(t, a, n, t1_tilde, t1, b):
    """a exp[n (exp(-t/T1~) - 1)] exp(-t/T1) + b."""
    t = np.asarray(t, dtype=float)
    return a * np.exp(n * (np.exp(-t / t1_tilde) - 1.0)) * np.exp(-t / t1) + b


def fit_nonexponential(trace: DecayTrace, n_min: float = 1e-4) -> FitResult:
    """Fit the Poissonian non-exponential decay model.

    The single-exponential optimum (n = 0) is always one of the starting
    points, so the residual never exceeds that of :func:`fit_exponential`.
    When the fitted ``n`` falls below ``n_min`` the decay time T1~ is not
    identifiable; ``n`` is pinned to 0 and the result flagged.
    """
    if len(trace) < 6:
        raise ValidationError("non-exponential fit needs at least 6 points")
    t, y = trace.delays, trace.p1
    w = _weights(trace)
    wv = np.ones_like(y) if w is None else w
    exp_fit = fit_exponential(trace)
    if exp_fit.model_id == "constant":
        raise FitError("constant trace; no decay to fit")
    exp_norm = exp_fit.residual_norm

    def model(x):
        return nonexponential_curve(t, x[0], x[1], math.exp(x[2]), math.exp(x[3]), x[4])

    def residuals(x):
        return (model(x) - y) * wv

    a0, t10, b0 = exp_fit.value("a"), exp_fit.value("T1"), exp_fit.value("b")
    seed = _time_seed(t, y)
    starts = [[a0, 0.0, math.log(seed), math.log(t10), b0]]
    for tau in _log_starts(seed):
        for n0 in (0.5, 1.5):
            starts.append([a0, n0, math.log(tau), math.log(max(t10, 2 * tau)), b0])
    lower = np.array([-np.inf, 0.0, -50.0, -50.0, -np.inf])
    upper = np.array([np.inf, 50.0, 50.0, 50.0, np.inf])
    # when n -> 0 the other two time constants drift along flat directions;
    # such starts are cut off rather than allowed to wander
    sol = _run_starts(residuals, starts, lower, upper, max_nfev=_NONEXP_BUDGET)
    norm = _residual_norm(model(sol.x) - y)
    if norm > exp_norm:
        # trf can stall at the n = 0 boundary; fall back to the nested optimum
        norm = exp_norm
        sol = None
    if sol is None or sol.x[1] < n_min:
        params = {
            "a": exp_fit.params["a"],
            "n": (0.0, 0.0),
            "T1_tilde": (math.nan, math.inf),
            "T1": exp_fit.params["T1"],
            "b": exp_fit.params["b"],
        }
        result = FitResult("nonexponential", params, exp_norm, True, len(t), flags=["n_pinned_zero"])
    else:
        err = _stderr(sol, len(t), w is not None)
        tt, t1 = math.exp(sol.x[2]), math.exp(sol.x[3])
        params = {
            "a": (sol.x[0], err[0]),
            "n": (sol.x[1], err[1]),
            "T1_tilde": (tt, tt * err[2]),
            "T1": (t1, t1 * err[3]),
            "b": (sol.x[4], err[4]),
        }
        result = FitResult("nonexponential", params, norm, True, len(t))
    result.extra["exponential_residual_norm"] = exp_norm
    return result
