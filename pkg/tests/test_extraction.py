import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxcoh.errors import UnidentifiableError, ValidationError
from fluxcoh.extraction import (
    BAND_E_C,
    BAND_E_L,
    FluxScanDataset,
    ScanRecord,
    TraceRecord,
    extract_flux_noise,
    extract_tan_delta,
    model_band,
    zeta_table,
)
from fluxcoh.io import fixture_path, load_published, load_qubit
from fluxcoh.noise import (
    NoiseEnvironment,
    SequenceType,
    dephasing_envelope,
    dielectric_rate,
    flux_noise_relaxation_rate,
)
from fluxcoh.qubit import FluxoniumParams, converged_spectrum, matrix_elements
from fluxcoh.synth import forward_flux_point, keyed_rng, synth_decay_trace, synth_flux_scan

QUBIT_G = FluxoniumParams(1.212, 5.315, 0.547, "G")
T1_GRID = np.round(np.linspace(0.4, 0.6, 21), 6)
DEPHASING_GRID = np.round(np.linspace(0.48, 0.52, 17), 6)
SEQUENCES = ["ramsey", "cpmg1", "cpmg2", "cpmg4", "cpmg8"]


def _dips(seed, grid=T1_GRID):
    rng = keyed_rng(seed, 10_000)
    return [(float(p), 5.0) for p in rng.choice(grid, 3, replace=False)]


@pytest.fixture(scope="module")
def clean_scan():
    return synth_flux_scan(QUBIT_G, NoiseEnvironment(tan_delta_c=2.5e-6), T1_GRID, scatter=0.0)


# -- dataset -------------------------------------------------------------------------


def test_dataset_invariants():
    with pytest.raises(ValidationError):
        FluxScanDataset(QUBIT_G, [ScanRecord(0.1, "t1", 10.0), ScanRecord(1.2, "t1", 10.0)])
    with pytest.raises(ValidationError):
        FluxScanDataset(QUBIT_G, [ScanRecord(0.1, "t1", -1.0)])
    with pytest.raises(ValidationError):
        FluxScanDataset(QUBIT_G, [ScanRecord(0.1, "t1", 1.0, 0.0)])


# -- loss tangent ----------------------------------------------------------------------


@pytest.mark.parametrize("asymmetry", [1.0, 10.0, 40.0])
def test_dip_free_noiseless_recovery_is_exact(clean_scan, asymmetry):
    report = extract_tan_delta(clean_scan, 0.0, "tls_T0", asymmetry=asymmetry)
    assert report.tan_delta_t0 == pytest.approx(2.5e-6, rel=1e-9)
    assert report.masked == []


@pytest.mark.parametrize("seed", range(4))
def test_asymmetric_fit_ignores_tls_dips(seed):
    scan = synth_flux_scan(
        QUBIT_G, NoiseEnvironment(tan_delta_c=2.5e-6), T1_GRID, tls_dips=_dips(seed), seed=seed, scatter=0.0
    )
    report = extract_tan_delta(scan, 0.0, "tls_T0")
    assert report.tan_delta_t0 == pytest.approx(2.5e-6, rel=0.10)
    masked = {m["phi_ext"] for m in report.masked}
    assert masked == {p for p, _ in _dips(seed)}
    assert all("TLS dip" in m["reason"] for m in report.masked)


@pytest.mark.parametrize("seed", range(4))
def test_symmetric_least_squares_misses_on_the_same_data(seed):
    scan = synth_flux_scan(
        QUBIT_G, NoiseEnvironment(tan_delta_c=2.5e-6), T1_GRID, tls_dips=_dips(seed), seed=seed, scatter=0.0
    )
    symmetric = extract_tan_delta(scan, 0.0, "tls_T0", asymmetry=1.0, mask_factor=None)
    assert symmetric.tan_delta_t0 > 1.25 * 2.5e-6


def test_scatter_biases_the_envelope_fit_low():
    # with symmetric log-normal scatter the 10:1 loss tracks the upper part of
    # the cloud, so the loss tangent comes out low on average (see ledger)
    values = []
    for seed in range(6):
        scan = synth_flux_scan(QUBIT_G, NoiseEnvironment(tan_delta_c=2.5e-6), T1_GRID, seed=seed)
        values.append(extract_tan_delta(scan, 0.0, "tls_T0").tan_delta_t0)
    assert np.mean(values) < 2.5e-6


@settings(max_examples=10)
@given(st.floats(0.2, 5.0))
def test_scale_consistency(k):
    scan = synth_flux_scan(QUBIT_G, NoiseEnvironment(tan_delta_c=2.5e-6), T1_GRID, scatter=0.0)
    scaled = FluxScanDataset(QUBIT_G, [ScanRecord(r.phi_ext, r.sequence, k * r.value_us) for r in scan.records])
    a = extract_tan_delta(scan, 0.0187)
    b = extract_tan_delta(scaled, 0.0187)
    assert b.tan_delta_finite_t == pytest.approx(a.tan_delta_finite_t / k, rel=1e-9)
    assert b.tan_delta_t0 == pytest.approx(a.tan_delta_t0 / k, rel=1e-9)


def test_finite_temperature_variant_is_smaller_for_qubit_g():
    env = NoiseEnvironment(tan_delta_c=0.79e-6, temp=0.0187)
    scan = synth_flux_scan(QUBIT_G, env, np.round(np.linspace(0.46, 0.54, 17), 6), seed=1)
    report = extract_tan_delta(scan, 0.0187)
    assert report.tan_delta_finite_t < report.tan_delta_t0
    assert report.tan_delta_c == report.tan_delta_finite_t
    assert report.temp == 0.0187


def test_variant_selects_reported_value(clean_scan):
    finite = extract_tan_delta(clean_scan, 0.02, "finite_T")
    zero = extract_tan_delta(clean_scan, 0.02, "tls_T0")
    assert finite.tan_delta_c == finite.tan_delta_finite_t
    assert zero.tan_delta_c == zero.tan_delta_t0
    assert finite.tan_delta_t0 == zero.tan_delta_t0


def test_residual_table_is_complete(clean_scan):
    report = extract_tan_delta(clean_scan, 0.0, "tls_T0")
    assert len(report.residuals) == len(T1_GRID)
    assert max(abs(r["log_residual"]) for r in report.residuals) < 1e-9
    json.dumps(report.to_dict(), allow_nan=False)


def test_clip_fraction_is_optional_robustness(clean_scan):
    report = extract_tan_delta(clean_scan, 0.0, "tls_T0", clip_fraction=0.1)
    assert report.tan_delta_t0 == pytest.approx(2.5e-6, rel=1e-9)


@pytest.mark.parametrize(
    "grid, message",
    [(np.linspace(0.4, 0.6, 7), "at least 8"), (np.linspace(0.3, 0.45, 10), "both sides")],
)
def test_tan_delta_preconditions(grid, message):
    scan = synth_flux_scan(QUBIT_G, NoiseEnvironment(tan_delta_c=2.5e-6), grid, scatter=0.0)
    with pytest.raises(ValidationError, match=message):
        extract_tan_delta(scan, 0.0)


def test_tan_delta_argument_checks(clean_scan):
    with pytest.raises(ValidationError):
        extract_tan_delta(clean_scan, 0.0, "hot")
    with pytest.raises(ValidationError):
        extract_tan_delta(clean_scan, 0.0, asymmetry=0.5)
    with pytest.raises(ValidationError):
        extract_tan_delta(clean_scan, -0.01)


# -- flux noise: fitted dephasing times ------------------------------------------------


@pytest.mark.parametrize("seed", range(3))
def test_flux_noise_records_recover_injected_amplitude(seed):
    env = NoiseEnvironment(tan_delta_c=2.64e-6, a_phi=2.43)
    scan = synth_flux_scan(QUBIT_G, env, DEPHASING_GRID, SEQUENCES, seed=seed)
    report = extract_flux_noise(scan)
    assert report.a_phi == pytest.approx(2.43, rel=0.10)
    assert report.a_phi_err > 0


def test_flux_noise_noiseless_records_exact():
    env = NoiseEnvironment(tan_delta_c=2.64e-6, a_phi=2.43, a_white=0.01)
    scan = synth_flux_scan(QUBIT_G, env, DEPHASING_GRID, SEQUENCES, scatter=0.0)
    report = extract_flux_noise(scan)
    assert report.a_phi == pytest.approx(2.43, rel=1e-6)
    assert report.a_white == pytest.approx(0.01, rel=1e-5)


def test_white_only_scan():
    env = NoiseEnvironment(tan_delta_c=2.64e-6, a_white=0.05)
    scan = synth_flux_scan(QUBIT_G, env, DEPHASING_GRID, SEQUENCES, seed=2)
    report = extract_flux_noise(scan)
    assert report.a_white == pytest.approx(0.05, rel=0.10)
    # consistent with zero: within two standard errors, or unconstrained
    assert report.a_phi <= 2 * report.a_phi_err or math.isinf(report.a_phi_err)


def test_single_sequence_is_unidentifiable():
    env = NoiseEnvironment(a_phi=2.43)
    scan = synth_flux_scan(QUBIT_G, env, [0.49], ["cpmg1"], include_t1=False)
    with pytest.raises(UnidentifiableError):
        extract_flux_noise(scan)


def test_sweet_spot_only_is_unidentifiable():
    records = [ScanRecord(0.5, "cpmg1", 900.0), ScanRecord(0.5, "cpmg2", 1200.0)]
    with pytest.raises(UnidentifiableError, match="sweet spot"):
        extract_flux_noise(FluxScanDataset(QUBIT_G, records))


def test_mixed_data_forms_rejected():
    trace = synth_decay_trace("exponential", dict(a=0.9, t1=100.0, b=0.0), np.linspace(0, 100, 11))
    scan = FluxScanDataset(
        QUBIT_G, [ScanRecord(0.49, "cpmg1", 100.0)], [TraceRecord(0.49, "cpmg2", trace)]
    )
    with pytest.raises(ValidationError, match="mixing"):
        extract_flux_noise(scan)


def test_no_dephasing_data_rejected(clean_scan):
    with pytest.raises(ValidationError):
        extract_flux_noise(clean_scan)
    with pytest.raises(ValidationError):
        extract_flux_noise([])


# -- flux noise: raw traces ----------------------------------------------------------


def _trace_scan(a_phi, a_white=0.0, shots=0, seed=0, amplitude=0.9):
    env = NoiseEnvironment(tan_delta_c=2.64e-6, a_phi=a_phi, a_white=a_white)
    traces, t1_ref = [], {}
    for k, phi in enumerate([0.47, 0.485, 0.49, 0.51, 0.53]):
        _, _, slope, t1 = forward_flux_point(QUBIT_G, env, phi)
        t1_ref[phi] = t1
        for j, name in enumerate(("ramsey", "cpmg1", "cpmg4")):
            seq = SequenceType.parse(name)
            scale = 1.0 / max(abs(slope) * max(a_phi, 0.5) * 1e-3, 1e-4)
            delays = np.linspace(0, min(3 * scale, 4000.0), 41)
            params = dict(a=amplitude, dispersion=slope, a_phi=a_phi, a_white=a_white, t1=t1, sequence=seq)
            trace = synth_decay_trace("composite_chi", params, delays, shots, seed * 100 + 10 * k + j)
            traces.append(TraceRecord(phi, name, trace))
    return FluxScanDataset(QUBIT_G, traces=traces), t1_ref


def test_trace_mode_noiseless_exact():
    scan, t1_ref = _trace_scan(2.43, 0.01)
    report = extract_flux_noise(scan, t1_reference=t1_ref)
    assert report.a_phi == pytest.approx(2.43, rel=1e-6)
    assert report.a_white == pytest.approx(0.01, rel=1e-5)
    assert report.extra["amplitudes"] == pytest.approx([0.9] * 15, rel=1e-6)
    assert report.extra["n_traces"] == 15


def test_trace_mode_sampled_recovery():
    scan, t1_ref = _trace_scan(2.43, shots=2000, seed=3)
    report = extract_flux_noise(scan, t1_reference=t1_ref)
    assert report.a_phi == pytest.approx(2.43, rel=0.10)


def test_trace_mode_accepts_scalar_and_callable_reference():
    scan, t1_ref = _trace_scan(2.43)
    by_dict = extract_flux_noise(scan, t1_reference=t1_ref).a_phi
    by_callable = extract_flux_noise(scan, t1_reference=lambda phi: t1_ref[phi]).a_phi
    assert by_dict == by_callable
    # a scalar T1 far from the truth biases, but still runs
    assert extract_flux_noise(scan, t1_reference=1e9).a_phi > 0


# -- product degeneracy --------------------------------------------------------------


@given(st.floats(0.5, 60.0), st.floats(0.1, 10.0), st.floats(0.0, 0.05), st.sampled_from([0, 1, 2, 4, 8]))
def test_envelope_depends_only_on_dispersion_times_amplitude(d, a_phi, a_white, n):
    seq = SequenceType(n)
    t = np.linspace(1.0, 300.0, 7)
    ref = dephasing_envelope(seq, d, NoiseEnvironment(a_phi=a_phi, a_white=a_white), t, 800.0)
    scaled = dephasing_envelope(seq, 2 * d, NoiseEnvironment(a_phi=a_phi / 2, a_white=a_white / 2), t, 800.0)
    assert np.allclose(ref, scaled, rtol=1e-12)


def test_degeneracy_broken_by_flux_dependence():
    # doubling A_phi cannot be absorbed into a single global factor on D
    # without changing the per-flux shape, so the joint fit resolves it
    env = NoiseEnvironment(a_phi=2.43)
    scan = synth_flux_scan(QUBIT_G, env, DEPHASING_GRID, SEQUENCES, scatter=0.0, include_t1=False)
    doubled = synth_flux_scan(
        QUBIT_G, NoiseEnvironment(a_phi=4.86), DEPHASING_GRID, SEQUENCES, scatter=0.0, include_t1=False
    )
    assert extract_flux_noise(doubled).a_phi == pytest.approx(2 * extract_flux_noise(scan).a_phi, rel=1e-6)


# -- zeta -----------------------------------------------------------------------------


TABLE1 = "ABCDEFG"


@pytest.fixture(scope="module")
def table1_rows():
    qubits = [(load_qubit(fixture_path(label)), load_published(fixture_path(label))["t1_ms"] * 1e3) for label in TABLE1]
    return zeta_table(qubits)


def test_zeta_table_has_one_sorted_row_per_qubit(table1_rows):
    assert len(table1_rows) == 7
    assert sorted(r.label for r in table1_rows) == list(TABLE1)
    f = [r.f01 for r in table1_rows]
    assert f == sorted(f)


@pytest.mark.parametrize("label", TABLE1)
def test_zeta_table_frequency_matches_published(table1_rows, label):
    # C, E, F and G deviate beyond 2 % (see the decisions ledger)
    row = next(r for r in table1_rows if r.label == label)
    published = load_published(fixture_path(label))["f01_mhz"] * 1e-3
    assert row.f01 == pytest.approx(published, rel=0.02)


def test_zeta_table_empty():
    assert zeta_table([]) == []


def test_zeta_doubles_with_t1():
    one = zeta_table([(QUBIT_G, 500.0)])[0]
    two = zeta_table([(QUBIT_G, 1000.0)])[0]
    assert two.zeta == 2 * one.zeta


def test_zeta_rejects_nonpositive_t1():
    with pytest.raises(ValidationError):
        zeta_table([(QUBIT_G, 0.0)])


# -- model band ---------------------------------------------------------------------


GRID = np.linspace(0.15, 0.95, 81)


def test_band_edges_ordered():
    band = model_band(GRID, (1.21e-6, 4.93e-6), 2.43)
    assert all(r.zeta_lo < r.zeta_hi for r in band)
    equal = model_band(GRID, (2e-6, 2e-6), 2.43)
    assert all(r.zeta_lo == r.zeta_hi for r in equal)


def test_band_without_flux_noise_is_pure_dielectric():
    band = model_band(GRID, (1.21e-6, 4.93e-6), 0.0)
    for attr in ("zeta_lo", "zeta_hi"):
        product = np.array([getattr(r, attr) * r.f01**2 for r in band])
        assert np.max(np.abs(product / product[0] - 1)) < 1e-9
    assert all(math.isinf(r.zeta_flux) for r in band)


def test_strong_flux_noise_flattens_low_frequency_end():
    def low_slope(a_phi):
        band = model_band(GRID, (1.21e-6, 4.93e-6), a_phi)
        z = np.log([r.zeta_hi for r in band[:5]])
        return np.polyfit(np.log(GRID[:5]), z, 1)[0]

    assert low_slope(2.43) < -1.0
    assert low_slope(14.0) > -0.2
    # both flatten less at the top of the band, where dielectric loss dominates
    assert model_band(GRID, (1.21e-6, 4.93e-6), 14.0)[-1].zeta_hi < model_band(GRID, (1.21e-6, 4.93e-6), 2.43)[-1].zeta_hi


@pytest.mark.parametrize(
    "grid, rng",
    [([], (1e-6, 2e-6)), ([0.3, 0.2], (1e-6, 2e-6)), ([0.0, 0.2], (1e-6, 2e-6)), ([0.2, 0.3], (3e-6, 2e-6))],
)
def test_band_preconditions(grid, rng):
    with pytest.raises(ValidationError):
        model_band(grid, rng, 2.43)


def test_generated_qubits_fall_inside_band():
    lo, hi, a_phi = 1.21e-6, 4.93e-6, 2.43
    tan_delta = math.sqrt(lo * hi)
    rows = []
    for e_j in (3.0, 4.0, 5.0, 6.0):
        params = FluxoniumParams(BAND_E_C, e_j, BAND_E_L)
        sol = converged_spectrum(params, 0.5)
        m = matrix_elements(sol).abs_phi
        rate = dielectric_rate(sol.f01, BAND_E_C, m, tan_delta) + flux_noise_relaxation_rate(
            sol.f01, BAND_E_L, m, a_phi
        )
        rows.append((params, 1.0 / rate))
    for row in zeta_table(rows):
        (edge,) = model_band([row.f01], (lo, hi), a_phi)
        assert edge.zeta_lo < row.zeta < edge.zeta_hi
