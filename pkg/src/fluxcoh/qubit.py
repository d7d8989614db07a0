"""Fluxonium spectrum, matrix elements and flux dispersion.

The Hamiltonian (in GHz) is

    H/h = 4 E_C n^2 - E_J cos(phi) + (E_L/2) (phi + 2 pi phi_ext)^2

with ``phi`` the phase across the small junction.  It is diagonalized in the
harmonic-oscillator basis of the linear part, written in the shifted
coordinate ``theta = phi + 2 pi phi_ext`` so that the oscillator is centred.
Matrix elements of periodic functions of ``theta`` are built from exact
displacement-operator matrix elements, so nothing depends on a matrix
exponential of a truncated operator.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import SolverError, UnconvergedError, ValidationError

DEFAULT_BASIS = 120
START_BASIS = 60
MAX_BASIS = 2000

# fraction of the basis treated as "tail" by the truncation check
_TAIL_FRACTION = 0.25
_TAIL_WEIGHT_TOL = 1e-10

FD_STEP = 1e-5


@dataclass(frozen=True)
class FluxoniumParams:
    """Circuit energies of one device, all in GHz (E/h)."""

    e_c: float
    e_j: float
    e_l: float
    label: str = ""

    def __post_init__(self):
        for name in ("e_c", "e_j", "e_l"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive and finite, got {value!r}")
        ratio = self.e_j / self.e_c
        if not 0.5 <= ratio <= 20:
            warnings.warn(
                f"E_J/E_C = {ratio:.3g} is outside the usual fluxonium range [0.5, 20]",
                stacklevel=3,
            )

    @property
    def phi_zp(self) -> float:
        """Zero-point phase spread of the linear oscillator."""
        return (2.0 * self.e_c / self.e_l) ** 0.25

    @property
    def plasma_frequency(self) -> float:
        return math.sqrt(8.0 * self.e_c * self.e_l)


@dataclass(frozen=True)
class EigenSolution:
    params: FluxoniumParams
    phi_ext: float
    basis_size: int
    energies: np.ndarray
    eigenvectors: np.ndarray
    phi_zp: float
    converged_tol: float | None = field(default=None, compare=False)

    @property
    def n_levels(self) -> int:
        return len(self.energies)

    @property
    def f01(self) -> float:
        return float(self.energies[1] - self.energies[0])

    def transitions(self) -> np.ndarray:
        """Frequencies E_k - E_0 for k >= 1, in GHz."""
        return self.energies[1:] - self.energies[0]


@dataclass(frozen=True)
class MatrixElements:
    phi: complex
    sin_half_phi: complex

    @property
    def abs_phi(self) -> float:
        return abs(self.phi)

    @property
    def abs_sin_half_phi(self) -> float:
        return abs(self.sin_half_phi)


def displacement_matrix(alpha: complex, size: int) -> np.ndarray:
    """Matrix <m|exp(alpha a^dag - alpha^* a)|n>, m, n < size, by the ladder recursion.

    Uses sqrt(m) D[m, n] = sqrt(n) D[m-1, n-1] + alpha D[m-1, n], which follows
    from a D(alpha) = D(alpha) (a + alpha).  The recursion loses accuracy once
    ``size`` reaches a few hundred; it is kept as a small-basis reference for
    :func:`_trig_operators`.
    """
    d = np.zeros((size, size), dtype=complex)
    d[0, 0] = np.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, size):
        d[0, n] = d[0, n - 1] * (-np.conj(alpha)) / math.sqrt(n)
    sqrt_n = np.sqrt(np.arange(1, size))
    for m in range(1, size):
        d[m, 0] = d[m - 1, 0] * alpha / math.sqrt(m)
        d[m, 1:] = (sqrt_n * d[m - 1, :-1] + alpha * d[m - 1, 1:]) / math.sqrt(m)
    return d


@functools.lru_cache(maxsize=16)
def _position_eigensystem(size: int):
    """Eigenpairs of the truncated a + a^dag (Hermite nodes and vectors)."""
    nodes, vecs = sla.eigh_tridiagonal(np.zeros(size), np.sqrt(np.arange(1, size)))
    return nodes, vecs


def _trig_operators(beta: float, size: int):
    """cos(beta (a + a^dag)) and sin(beta (a + a^dag)) on the first ``size`` states.

    Built on a basis twice as large and truncated afterwards, which is
    Gauss-Hermite quadrature of every retained matrix element; the padding
    keeps the quadrature exact to rounding for the retained block.
    """
    pad = max(2 * size, size + 64)
    nodes, vecs = _position_eigensystem(pad)
    top = vecs[:size]
    cos_op = (top * np.cos(beta * nodes)) @ top.T
    sin_op = (top * np.sin(beta * nodes)) @ top.T
    return cos_op, sin_op


def _cos_operator(phi_zp: float, scale: float, shift: float, size: int) -> np.ndarray:
    """Matrix of cos(scale*theta - shift) with theta = phi_zp (a + a^dag)."""
    c, s = _trig_operators(scale * phi_zp, size)
    return math.cos(shift) * c + math.sin(shift) * s


def _sin_operator(phi_zp: float, scale: float, shift: float, size: int) -> np.ndarray:
    """Matrix of sin(scale*theta - shift) with theta = phi_zp (a + a^dag)."""
    c, s = _trig_operators(scale * phi_zp, size)
    return math.cos(shift) * s - math.sin(shift) * c


def _theta_operator(phi_zp: float, size: int) -> np.ndarray:
    off = phi_zp * np.sqrt(np.arange(1, size))
    return np.diag(off, 1) + np.diag(off, -1)


def hamiltonian(params: FluxoniumParams, phi_ext: float, basis_size: int) -> np.ndarray:
    """Dense Hamiltonian matrix in GHz in the oscillator basis."""
    diag = params.plasma_frequency * (np.arange(basis_size) + 0.5)
    cos_op = _cos_operator(params.phi_zp, 1.0, 2 * np.pi * phi_ext, basis_size)
    return np.diag(diag) - params.e_j * cos_op


def _diagonalize(params, phi_ext, basis_size, n_levels):
    h = hamiltonian(params, phi_ext, basis_size)
    try:
        energies, vecs = sla.eigh(h, subset_by_index=[0, n_levels - 1])
    except (sla.LinAlgError, ValueError) as exc:
        raise SolverError(f"eigensolver failed at phi_ext={phi_ext}: {exc}") from exc
    if not np.all(np.isfinite(energies)):
        raise SolverError(f"non-finite eigenvalues at phi_ext={phi_ext}")
    return energies, vecs


def _tail_weight(vecs: np.ndarray) -> float:
    n_tail = max(1, int(_TAIL_FRACTION * vecs.shape[0]))
    return float(np.max(np.sum(np.abs(vecs[-n_tail:]) ** 2, axis=0)))


def _check_flux(phi_ext):
    if not np.isfinite(phi_ext):
        raise ValidationError(f"phi_ext must be finite, got {phi_ext!r}")
    return float(phi_ext)


def solve_spectrum(
    params: FluxoniumParams,
    phi_ext: float,
    basis_size: int = DEFAULT_BASIS,
    n_levels: int = 4,
) -> EigenSolution:
    """Lowest ``n_levels`` eigenpairs at a fixed basis size.

    Raises UnconvergedError when the retained eigenvectors carry more than
    1e-10 of their weight in the top quarter of the oscillator basis.
    """
    phi_ext = _check_flux(phi_ext)
    if n_levels < 2:
        raise ValidationError("n_levels must be at least 2")
    if basis_size < 4 * n_levels:
        raise ValidationError(f"basis_size must be >= 4*n_levels = {4 * n_levels}")
    energies, vecs = _diagonalize(params, phi_ext, basis_size, n_levels)
    tail = _tail_weight(vecs)
    if tail > _TAIL_WEIGHT_TOL:
        raise UnconvergedError(
            f"basis_size={basis_size} unconverged: tail weight {tail:.2e} at phi_ext={phi_ext}"
        )
    return EigenSolution(params, phi_ext, basis_size, energies, vecs, params.phi_zp)


def converged_spectrum(
    params: FluxoniumParams,
    phi_ext: float,
    n_levels: int = 4,
    rel_tol: float = 1e-9,
    start_basis: int = START_BASIS,
    max_basis: int = MAX_BASIS,
) -> EigenSolution:
    """Double the basis from ``start_basis`` until transitions settle to ``rel_tol``."""
    phi_ext = _check_flux(phi_ext)
    if rel_tol <= 0:
        raise ValidationError("rel_tol must be positive")
    size = max(start_basis, 4 * n_levels)
    energies, vecs = _diagonalize(params, phi_ext, size, n_levels)
    prev = energies[1:] - energies[0]
    while True:
        size *= 2
        if size > max_basis:
            raise UnconvergedError(
                f"no convergence to rel_tol={rel_tol} below basis cap {max_basis}"
            )
        energies, vecs = _diagonalize(params, phi_ext, size, n_levels)
        trans = energies[1:] - energies[0]
        if np.all(np.abs(trans - prev) < rel_tol * np.abs(trans)):
            return EigenSolution(
                params, phi_ext, size, energies, vecs, params.phi_zp, converged_tol=rel_tol
            )
        prev = trans


def matrix_elements(sol: EigenSolution, i: int = 0, j: int = 1) -> MatrixElements:
    """<i|phi|j> and <i|sin(phi/2)|j> with phi the junction phase."""
    for idx in (i, j):
        if not 0 <= idx < sol.n_levels:
            raise ValidationError(f"level {idx} out of range for {sol.n_levels} retained levels")
    size = sol.basis_size
    shift = 2 * np.pi * sol.phi_ext
    vi = sol.eigenvectors[:, i]
    vj = sol.eigenvectors[:, j]
    theta = _theta_operator(sol.phi_zp, size)
    phi_ij = vi.conj() @ theta @ vj
    if i == j:
        phi_ij -= shift
    sin_half = _sin_operator(sol.phi_zp, 0.5, 0.5 * shift, size)
    sin_ij = vi.conj() @ sin_half @ vj
    return MatrixElements(complex(phi_ij), complex(sin_ij))


def _f01_at(params, phi_ext, basis_size):
    energies, _ = _diagonalize(params, phi_ext, basis_size, 2)
    return energies[1] - energies[0]


def flux_dispersion(
    params: FluxoniumParams,
    phi_ext: float,
    step: float = FD_STEP,
    basis_size: int | None = None,
    check: bool = True,
) -> float:
    """d(omega_01)/d(phi_ext) in rad GHz per flux quantum.

    Central difference at ``step`` and ``step/2`` combined by Richardson
    extrapolation, all on one basis size so truncation does not jump between
    evaluations.
    """
    phi_ext = _check_flux(phi_ext)
    if basis_size is None:
        basis_size = converged_spectrum(params, phi_ext, n_levels=2).basis_size

    def central(h):
        return (_f01_at(params, phi_ext + h, basis_size) - _f01_at(params, phi_ext - h, basis_size)) / (2 * h)

    coarse = central(step)
    fine = central(step / 2)
    slope = (4 * fine - coarse) / 3
    if check:
        scale = max(abs(slope), 2 * np.pi * _f01_at(params, phi_ext, basis_size) * 1e-4)
        # eigenvalues carry rounding of order eps * ||H||; near the sweet spot
        # that floor, not truncation, limits the difference quotient
        rounding = 100 * np.finfo(float).eps * (params.plasma_frequency * basis_size + params.e_j) / step
        if abs(fine - coarse) > 1e-4 * scale + rounding:
            raise SolverError(f"finite-difference derivative unstable at phi_ext={phi_ext}")
    return float(2 * np.pi * slope)


@dataclass(frozen=True)
class SweepRow:
    phi_ext: float
    transitions: np.ndarray
    abs_phi_01: float
    abs_sin_half_phi_01: float
    dispersion: float
    basis_size: int

    @property
    def f01(self) -> float:
        return float(self.transitions[0])


def spectrum_sweep(
    params: FluxoniumParams,
    flux_grid,
    n_levels: int = 4,
    rel_tol: float = 1e-9,
) -> list[SweepRow]:
    """One converged record per flux point, in input order."""
    grid = list(flux_grid)
    if not grid:
        raise ValidationError("flux grid is empty")
    rows = []
    for index, phi in enumerate(grid):
        try:
            sol = converged_spectrum(params, phi, n_levels=n_levels, rel_tol=rel_tol)
            elems = matrix_elements(sol, 0, 1)
            slope = flux_dispersion(params, phi, basis_size=sol.basis_size)
        except SolverError as exc:
            raise type(exc)(f"row {index} (phi_ext={phi}): {exc}", row=index) from exc
        except ValidationError as exc:
            raise ValidationError(f"row {index} (phi_ext={phi}): {exc}") from exc
        rows.append(
            SweepRow(float(phi), sol.transitions(), elems.abs_phi, elems.abs_sin_half_phi, slope, sol.basis_size)
        )
    return rows


# -- independent oracle -------------------------------------------------------

# 8th-order central second-derivative stencil, offsets 0..4
_D2_STENCIL = np.array([-205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])


@dataclass(frozen=True)
class GridSolution:
    grid: np.ndarray
    energies: np.ndarray
    wavefunctions: np.ndarray

    @property
    def f01(self) -> float:
        return float(self.energies[1] - self.energies[0])

    def expectation(self, values: np.ndarray, i: int, j: int) -> float:
        step = self.grid[1] - self.grid[0]
        return float(np.sum(self.wavefunctions[:, i] * values * self.wavefunctions[:, j]) * step)


def grid_oracle(
    params: FluxoniumParams,
    phi_ext: float,
    n_levels: int = 4,
    n_points: int = 8192,
    half_width: float | None = None,
    gauge: str = "inductive",
) -> GridSolution:
    """Finite-difference Schroedinger solve on a uniform phase grid.

    ``gauge='inductive'`` puts the flux in the quadratic term (the grid variable
    is the junction phase); ``gauge='cosine'`` puts it in the Josephson term.
    The spectrum is gauge independent.
    """
    if half_width is None:
        half_width = 4 * np.pi + 8 * params.phi_zp
    x = np.linspace(-half_width, half_width, n_points)
    h = x[1] - x[0]
    shift = 2 * np.pi * phi_ext
    if gauge == "inductive":
        potential = -params.e_j * np.cos(x) + 0.5 * params.e_l * (x + shift) ** 2
    elif gauge == "cosine":
        potential = -params.e_j * np.cos(x - shift) + 0.5 * params.e_l * x**2
    else:
        raise ValidationError(f"unknown gauge {gauge!r}")
    # n = -i d/dphi so 4 E_C n^2 = -4 E_C d^2/dphi^2
    kinetic = -4.0 * params.e_c / h**2
    offsets = np.arange(-len(_D2_STENCIL) + 1, len(_D2_STENCIL))
    diagonals = [
        np.full(n_points - abs(k), kinetic * _D2_STENCIL[abs(k)]) for k in offsets
    ]
    diagonals[len(_D2_STENCIL) - 1] = diagonals[len(_D2_STENCIL) - 1] + potential
    matrix = sps.diags(diagonals, offsets, format="csc")
    # shift-invert just below the potential minimum; fixed start vector for determinism
    sigma = float(potential.min()) - 1.0
    start = np.ones(n_points)
    energies, vecs = spla.eigsh(matrix, k=n_levels, sigma=sigma, which="LM", v0=start, tol=1e-14)
    order = np.argsort(energies)
    energies = energies[order]
    vecs = vecs[:, order]
    vecs = vecs / math.sqrt(h)
    return GridSolution(x, energies, vecs)
