"""Command-line front end: ``fluxcoh <command> [options]``.

Options can come from the command line or from the section of a TOML
``--config`` file named after the command (command-line values win).  Paths
in a config file are relative to the file.  Every output embeds the config
hash and seed, and reruns with the same inputs are byte-identical.

Exit codes: 0 success, 2 invalid input, 3 numerical solver failure,
4 non-convergence or unidentifiable parameters.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as fio
from .errors import FitError, SolverError, ValidationError
from .extraction import (
    extract_flux_noise,
    extract_tan_delta,
    model_band,
    zeta_table,
)
from .fitting import (
    DecayTrace,
    bloch_envelope,
    fit_exponential,
    fit_gaussian_dephasing,
    fit_joint_t1,
    fit_nonexponential,
)
from .noise import SequenceType, thermal_population
from .qubit import converged_spectrum, spectrum_sweep

log = logging.getLogger("fluxcoh")

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_FIT = 0, 2, 3, 4

TABLE_COLUMNS = (
    "f01_MHz", "EC_GHz", "EJ_GHz", "EL_GHz", "T1_ms", "T2echo_ms", "T_mK", "tand_finiteT", "tand_T0", "A_phi",
)

# options whose values are file paths (resolved and fingerprinted)
PATH_OPTIONS = {
    "qubit", "noise", "trace", "trace_b", "triple", "scan", "traces", "input", "targets",
}

DEFAULTS = {
    "spectrum": {
        "qubit": None, "fixture": None, "flux_start": 0.45, "flux_stop": 0.55, "flux_step": 0.001,
        "levels": 4, "rel_tol": 1e-9,
    },
    "fit": {
        "model": None, "trace": None, "trace_b": None, "triple": None, "t1_ref_us": None,
        "sequence": "cpmg1", "f01_ghz": None, "label_a": "from_1", "label_b": "from_0",
    },
    "extract": {
        "qubit": None, "fixture": None, "scan": None, "traces": None, "temp_mk": 0.0, "variant": "finite_T",
        "asymmetry": 10.0, "mask_factor": 3.0, "idle_phi": 0.5, "t1_ref_us": None, "label": None,
    },
    "synth": {
        "kind": None, "qubit": None, "fixture": "G", "noise": None, "shots": None, "flux_start": 0.48,
        "flux_stop": 0.52, "flux_points": 17, "sequences": "ramsey,cpmg1,cpmg2,cpmg4,cpmg8",
        "sequence": "cpmg1", "scatter": 0.1, "n_dies": 16, "dips": 3,
    },
    "wafer": {
        "input": None, "edge_dies": "", "tolerance": 0.25, "targets": None, "short_threshold": 10.0,
        "min_count": 3,
    },
    "zeta": {
        "qubits": "A,B,C,D,E,F,G", "tand_lo": 1.21e-6, "tand_hi": 4.93e-6, "a_phi": 2.43, "temp_mk": 0.0,
        "epsilon": 0.0, "f_min_ghz": 0.15, "f_max_ghz": 0.95, "f_points": 81, "band_e_c": 1.212,
        "band_e_l": 0.547,
    },
}


SYNTH_SHOTS = {"joint": 2000, "nonexp": 20000, "triple": 2000}


# -- config resolution ------------------------------------------------------------------


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the config section and command-line values."""
    command = args.command
    options = dict(DEFAULTS[command])
    base = Path.cwd()
    if args.config:
        cfg_path = Path(args.config)
        table = fio.read_toml(cfg_path)
        section = table.get(command, {})
        unknown = sorted(set(section) - set(options))
        if unknown:
            raise ValidationError(f"{cfg_path}: unknown option(s) for {command}: {', '.join(unknown)}")
        for key, value in section.items():
            if key in PATH_OPTIONS and value is not None:
                value = str((cfg_path.parent / value).resolve())
            options[key] = value
        if args.seed is None and "seed" in table:
            args.seed = int(table["seed"])
        if args.out is None and "out" in table:
            args.out = str((cfg_path.parent / table["out"]).resolve())
    for key in options:
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value
    for key in PATH_OPTIONS & set(options):
        if options[key] is not None:
            path = Path(options[key])
            if not path.is_absolute():
                path = (base / path).resolve()
            if not path.exists():
                raise ValidationError(f"{key}: file not found: {path}")
            options[key] = str(path)
    return options


def _fingerprint(command: str, options: dict, seed: int) -> dict:
    """Config content used for hashing: paths replaced by name and digest."""
    content = {}
    for key, value in sorted(options.items()):
        if key in PATH_OPTIONS and value is not None:
            content[key] = {"name": Path(value).name, "sha256": fio.file_digest(value)}
        else:
            content[key] = value
    return {"command": command, "seed": seed, "options": content}


class Context:
    def __init__(self, args, options):
        self.command = args.command
        self.options = options
        self.seed = 0 if args.seed is None else int(args.seed)
        self.out = Path(args.out or ".")
        self.quiet = args.quiet
        self.hash = fio.config_hash(_fingerprint(self.command, options, self.seed))
        self.written = []

    def metadata(self, **extra) -> dict:
        meta = {"fluxcoh_version": __version__, "command": self.command, "config_hash": self.hash, "seed": self.seed}
        meta.update(extra)
        return meta

    def write_csv(self, name, header, rows, **extra):
        self.written.append(fio.write_csv(self.out / name, header, rows, self.metadata(**extra)))

    def write_json(self, name, payload):
        self.written.append(fio.write_json(self.out / name, {"metadata": self.metadata(), **payload}))

    def say(self, text):
        if not self.quiet:
            print(text)


def _qubit(options):
    if options.get("qubit"):
        return fio.load_qubit(options["qubit"])
    if options.get("fixture"):
        return fio.load_qubit(fio.fixture_path(options["fixture"]))
    raise ValidationError("a qubit file (--qubit) or shipped fixture label (--fixture) is required")


def _flux_grid(start, stop, step):
    if not step > 0 or stop < start:
        raise ValidationError("flux grid needs step > 0 and stop >= start")
    n = int(round((stop - start) / step)) + 1
    return [round(start + k * step, 12) for k in range(n)]


# -- commands ---------------------------------------------------------------------------


def cmd_spectrum(ctx: Context) -> None:
    o = ctx.options
    qubit = _qubit(o)
    grid = _flux_grid(float(o["flux_start"]), float(o["flux_stop"]), float(o["flux_step"]))
    rows = spectrum_sweep(qubit, grid, n_levels=int(o["levels"]), rel_tol=float(o["rel_tol"]))
    n_trans = len(rows[0].transitions)
    header = ["phi_ext_phi0"] + [f"f0{k + 1}_ghz" for k in range(n_trans)]
    header += ["abs_phi01", "abs_sin_half_phi01", "dispersion_rad_ghz_per_phi0", "basis_size"]
    table = [
        [r.phi_ext, *r.transitions, r.abs_phi_01, r.abs_sin_half_phi_01, r.dispersion, r.basis_size] for r in rows
    ]
    label = qubit.label or "qubit"
    ctx.write_csv(f"spectrum_{label}.csv", header, table, qubit=label)
    i_min = int(np.argmin([r.f01 for r in rows]))
    ctx.write_json(
        f"spectrum_{label}.json",
        {
            "qubit": {"label": label, "e_c_ghz": qubit.e_c, "e_j_ghz": qubit.e_j, "e_l_ghz": qubit.e_l},
            "n_points": len(rows),
            "n_levels": int(o["levels"]),
            "convergence_rel_tol": float(o["rel_tol"]),
            "basis_size_max": max(r.basis_size for r in rows),
            "basis_size_min": min(r.basis_size for r in rows),
            "f01_min_ghz": rows[i_min].f01,
            "phi_ext_at_f01_min": rows[i_min].phi_ext,
        },
    )
    ctx.say(f"{label}: {len(rows)} flux points, min f01 = {1e3 * rows[i_min].f01:.2f} MHz at {rows[i_min].phi_ext}")


def cmd_fit(ctx: Context) -> None:
    o = ctx.options
    model = o["model"]
    if model is None:
        raise ValidationError("--model is required (exp, joint, nonexp, gaussian, composite)")
    if model in ("exp", "nonexp", "joint") and not o["trace"]:
        raise ValidationError(f"model {model} needs --trace")
    if model == "exp":
        result = fit_exponential(fio.read_trace_csv(o["trace"]))
    elif model == "nonexp":
        result = fit_nonexponential(fio.read_trace_csv(o["trace"]))
    elif model == "joint":
        if not o["trace_b"]:
            raise ValidationError("model joint needs --trace and --trace-b")
        a = fio.read_trace_csv(o["trace"], o["label_a"])
        b = fio.read_trace_csv(o["trace_b"], o["label_b"])
        result = fit_joint_t1(a, b, f01=o["f01_ghz"])
    elif model in ("gaussian", "composite"):
        if o["triple"]:
            envelope = bloch_envelope(fio.read_triple_csv(o["triple"]))
        elif o["trace"]:
            envelope = fio.read_trace_csv(o["trace"], "envelope")
        else:
            raise ValidationError(f"model {model} needs --triple or --trace")
        t1_ref = math.inf if o["t1_ref_us"] is None else float(o["t1_ref_us"])
        seq = SequenceType.parse(o["sequence"])
        result = fit_gaussian_dephasing(envelope, t1_ref, model=seq, include_white=(model == "composite"))
    else:
        raise ValidationError(f"unknown model {model!r}")
    ctx.write_json(f"fit_{model}.json", {"fit": result.to_dict()})
    summary = ", ".join(f"{k} = {v:.6g} +/- {e:.2g}" for k, (v, e) in result.params.items())
    ctx.say(f"{result.model_id}: {summary}")


def _nearest(records, phi):
    if not records:
        return None
    return min(records, key=lambda r: (abs(r.phi_ext - phi), r.phi_ext))


def cmd_extract(ctx: Context) -> None:
    o = ctx.options
    qubit = _qubit(o)
    if o["variant"] not in ("finite_T", "tls_T0"):
        raise ValidationError("variant must be finite_T or tls_T0")
    if o["scan"]:
        scan = fio.read_flux_scan_csv(o["scan"], qubit, idle_phi=float(o["idle_phi"]))
    elif o["traces"]:
        scan = fio.read_trace_bundle(o["traces"], qubit)
    else:
        raise ValidationError("extract needs --scan (time constants) or --traces (raw envelopes)")
    temp = float(o["temp_mk"]) * 1e-3
    # identifiability of the flux noise is checked first: it is the cheaper
    # failure and the more informative one for sweet-spot-only scans
    report_flux = None
    if scan.dephasing_records() or scan.traces:
        t1_ref = o["t1_ref_us"]
        report_flux = extract_flux_noise(scan, t1_reference=None if t1_ref is None else float(t1_ref))
    report_tan = None
    if scan.t1_records():
        report_tan = extract_tan_delta(
            scan, temp, variant=o["variant"], asymmetry=float(o["asymmetry"]), mask_factor=o["mask_factor"]
        )
    if report_tan is None and report_flux is None:
        raise ValidationError("scan holds neither T1 nor dephasing data")

    sol = converged_spectrum(qubit, 0.5)
    idle = float(o["idle_phi"])
    t1_rec = _nearest(scan.t1_records(), idle)
    echo_rec = _nearest([r for r in scan.dephasing_records() if r.sequence == "cpmg1"], idle)
    t1_ms = t1_rec.value_us * 1e-3 if t1_rec else None
    t2_ms = None
    if t1_rec and echo_rec and echo_rec.phi_ext == t1_rec.phi_ext:
        t2_ms = 1e-3 / (1 / (2 * t1_rec.value_us) + 1 / echo_rec.value_us)
    finite = report_tan.tan_delta_finite_t if report_tan and o["variant"] == "finite_T" else None
    zero = report_tan.tan_delta_t0 if report_tan and o["variant"] == "tls_T0" else None
    row = [
        1e3 * sol.f01, qubit.e_c, qubit.e_j, qubit.e_l, t1_ms, t2_ms, float(o["temp_mk"]),
        None if finite is None else finite * 1e6,
        None if zero is None else zero * 1e6,
        report_flux.a_phi if report_flux else None,
    ]
    label = o["label"] or qubit.label or "qubit"
    ctx.write_csv(
        f"extract_{label}.csv", ("Qubit",) + TABLE_COLUMNS, [[label, *row]],
        variant=o["variant"], tand_units="1e-6", a_phi_units="uPhi0/sqrt(Hz)",
    )
    payload = {"qubit": label, "variant": o["variant"], "table_row": dict(zip(TABLE_COLUMNS, row))}
    if report_tan:
        payload["tan_delta"] = report_tan.to_dict()
    if report_flux:
        payload["flux_noise"] = report_flux.to_dict()
    ctx.write_json(f"extract_{label}.json", payload)
    ctx.say(", ".join(f"{k}={fio.format_value(v)}" for k, v in zip(TABLE_COLUMNS, row)))


def cmd_synth(ctx: Context) -> None:
    from . import synth
    from .noise import NoiseEnvironment, dephasing_envelope, pure_dephasing_time
    from .wafer import synth_wafer, write_wafer_csv

    o = ctx.options
    kind = o["kind"]
    seed = ctx.seed
    # the non-exponential model has five parameters and needs a denser fixture
    shots = int(o["shots"]) if o["shots"] is not None else SYNTH_SHOTS.get(kind, 2000)
    if kind == "joint":
        delays = np.linspace(0, 6000, 61)
        b = thermal_population(0.197, 0.0187)
        pair = synth.synth_decay_trace(
            "joint_pair", {"a1": 0.9 - b, "a2": -b * 0.9, "t1": 1168.0, "b": b}, delays, shots, seed
        )
        for name, trace in zip(("joint_from1.csv", "joint_from0.csv"), pair):
            _write_trace(ctx, name, trace, model="joint_pair", t1_us=1168.0, b=b)
    elif kind == "nonexp":
        delays = np.linspace(0, 6000, 121)
        params = {"a": 0.9, "n": 1.219, "t1_tilde": 246.0, "t1": 1464.0, "b": 0.03}
        _write_trace(ctx, "nonexp.csv", synth.synth_decay_trace("nonexponential", params, delays, shots, seed),
                     model="nonexponential", **params)
    elif kind == "triple":
        qubit = _qubit(o)
        env = fio.load_noise(o["noise"]) if o["noise"] else NoiseEnvironment(a_phi=2.43)
        f01, _, slope, _ = synth.forward_flux_point(qubit, env, 0.505)
        seq = SequenceType.parse(o["sequence"])
        tphi = pure_dephasing_time(seq, slope, env.a_phi, env.a_white)
        delays = np.linspace(0, 2.5 * tphi, 41)
        amp = 0.45 * dephasing_envelope(seq, slope, env, delays)
        triple = synth.synth_dephasing_triple(amp, delays, theta=0.7, shots=shots, seed=seed)
        rows = []
        for phase, trace in zip(fio.TRIPLE_PHASES_DEG, triple.traces):
            for i, (t, p) in enumerate(zip(trace.delays, trace.p1)):
                rows.append([t, phase, p] + ([trace.shots[i]] if trace.shots is not None else []))
        header = ["delay_us", "phase_deg", "p1"] + (["shots"] if shots else [])
        ctx.write_csv("triple.csv", header, rows, sequence=seq.name, tphi_us=tphi, phi_ext=0.505)
    elif kind == "flux-scan":
        qubit = _qubit(o)
        if not o["noise"]:
            raise ValidationError("synth flux-scan needs --noise")
        env = fio.load_noise(o["noise"])
        grid = np.linspace(float(o["flux_start"]), float(o["flux_stop"]), int(o["flux_points"]))
        rng = synth.keyed_rng(seed, 10_000)
        dips = [(float(p), 5.0) for p in rng.choice(grid, int(o["dips"]), replace=False)] if int(o["dips"]) else []
        seqs = [s for s in str(o["sequences"]).split(",") if s]
        scan = synth.synth_flux_scan(qubit, env, grid, sequences=seqs, tls_dips=dips, seed=seed,
                                     scatter=float(o["scatter"]))
        rows = [[r.phi_ext, r.sequence, r.value_us, r.err_us] for r in scan.records]
        ctx.write_csv("flux_scan.csv", fio.FLUX_SCAN_COLUMNS, rows, qubit=qubit.label,
                      tls_dips=";".join(f"{p:.6g}" for p, _ in dips))
    elif kind == "wafer":
        wafer = synth_wafer(seed, n_dies=int(o["n_dies"]))
        path = ctx.out / "wafer.csv"
        write_wafer_csv(wafer, path)
        ctx.written.append(path)
    else:
        raise ValidationError("--kind must be one of joint, nonexp, triple, flux-scan, wafer")
    ctx.say(f"synth {kind}: wrote {', '.join(p.name for p in ctx.written)}")


def _write_trace(ctx, name, trace: DecayTrace, **meta):
    header = ["delay_us", "p1"] + (["shots"] if trace.shots is not None else [])
    rows = [
        [t, p] + ([trace.shots[i]] if trace.shots is not None else [])
        for i, (t, p) in enumerate(zip(trace.delays, trace.p1))
    ]
    ctx.write_csv(name, header, rows, init_label=trace.init_label, **meta)


def cmd_wafer(ctx: Context) -> None:
    from .wafer import load_wafer_csv, rsd_by_area, yield_report

    o = ctx.options
    if not o["input"]:
        raise ValidationError("wafer needs --input")
    wafer = load_wafer_csv(o["input"], short_threshold=float(o["short_threshold"]))
    edge = [d for d in str(o["edge_dies"]).split(",") if d]
    summary = rsd_by_area(wafer, edge_dies=edge, min_count=int(o["min_count"]))
    if o["targets"]:
        targets = _read_targets(o["targets"])
    else:
        # without explicit targets each group is judged against its own median
        targets = {}
        for group in wafer.groups():
            values = [r.rn for r in wafer.records if r.group == group and not r.is_hard_failure]
            targets[group] = float(np.median(values)) if values else 1.0
    yld = yield_report(wafer, targets, float(o["tolerance"]), exclude_dies=edge)
    summary.yield_percent = yld.yield_percent
    rows = [[g.kind, g.area, g.rsd_percent, g.count, g.mean, g.std] for _, g in sorted(summary.groups.items())]
    ctx.write_csv("wafer_rsd.csv", ["kind", "area_um2", "rsd_percent", "count", "mean_ohm", "std_ohm"], rows,
                  wafer=wafer.wafer_label)
    ctx.write_json("wafer_summary.json", {"wafer": wafer.wafer_label, "stats": summary.to_dict(),
                                          "yield": yld.to_dict(), "tolerance": float(o["tolerance"])})
    ctx.say(f"{len(wafer)} records, {len(summary.groups)} groups, yield {yld.yield_percent:.2f}%")


def _read_targets(path):
    rows = fio._read_rows(path, ("kind", "area_um2", "rn_ohm"))
    return {(r["kind"], fio._float(r, "area_um2", n, path)): fio._float(r, "rn_ohm", n, path) for n, r in rows}


def cmd_zeta(ctx: Context) -> None:
    o = ctx.options
    entries = []
    for label in [s.strip() for s in str(o["qubits"]).split(",") if s.strip()]:
        path = fio.fixture_path(label)
        published = fio.load_published(path)
        if "t1_ms" not in published:
            raise ValidationError(f"fixture {label} carries no measured T1")
        entries.append((fio.load_qubit(path), 1e3 * float(published["t1_ms"])))
    rows = zeta_table(entries)
    ctx.write_csv("zeta_table.csv", ["label", "f01_ghz", "abs_phi01", "t1_us", "zeta_us_per_ghz"],
                  [[r.label, r.f01, r.abs_phi01, r.t1, r.zeta] for r in rows])
    grid = np.linspace(float(o["f_min_ghz"]), float(o["f_max_ghz"]), int(o["f_points"]))
    band = model_band(grid, (float(o["tand_lo"]), float(o["tand_hi"])), float(o["a_phi"]),
                      float(o["temp_mk"]) * 1e-3, e_c=float(o["band_e_c"]), e_l=float(o["band_e_l"]),
                      loss_exponent=float(o["epsilon"]))
    ctx.write_csv("zeta_band.csv", ["f01_ghz", "zeta_lo", "zeta_hi", "zeta_flux"],
                  [[b.f01, b.zeta_lo, b.zeta_hi, b.zeta_flux] for b in band],
                  tand_lo=float(o["tand_lo"]), tand_hi=float(o["tand_hi"]), a_phi=float(o["a_phi"]))
    ctx.say(f"{len(rows)} zeta points, {len(band)} band rows")


COMMANDS = {
    "spectrum": cmd_spectrum, "fit": cmd_fit, "extract": cmd_extract,
    "synth": cmd_synth, "wafer": cmd_wafer, "zeta": cmd_zeta,
}


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with a section per command")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary line")

    parser = argparse.ArgumentParser(prog="fluxcoh", description=__doc__.split("\n\n")[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="flux sweep of the fluxonium spectrum")
    p.add_argument("--qubit", help="qubit TOML file")
    p.add_argument("--fixture", help="shipped qubit fixture label (e.g. G or S_A)")
    p.add_argument("--flux-start", type=float)
    p.add_argument("--flux-stop", type=float)
    p.add_argument("--flux-step", type=float)
    p.add_argument("--levels", type=int)
    p.add_argument("--rel-tol", type=float)

    p = sub.add_parser("fit", parents=[common], help="fit decay traces")
    p.add_argument("--model", choices=["exp", "joint", "nonexp", "gaussian", "composite"])
    p.add_argument("--trace", help="trace CSV (delay_us,p1[,shots]); first trace for joint")
    p.add_argument("--trace-b", help="second trace for the joint fit")
    p.add_argument("--triple", help="tri-phase CSV (delay_us,phase_deg,p1[,shots])")
    p.add_argument("--t1-ref-us", type=float, help="T1 used in dephasing fits")
    p.add_argument("--sequence", help="sequence label for dephasing fits")
    p.add_argument("--f01-ghz", type=float, help="qubit frequency for the effective temperature")
    p.add_argument("--label-a", choices=["from_0", "from_1"])
    p.add_argument("--label-b", choices=["from_0", "from_1"])

    p = sub.add_parser("extract", parents=[common], help="extract tan delta and A_phi from flux scans")
    p.add_argument("--qubit")
    p.add_argument("--fixture")
    p.add_argument("--scan", help="flux-scan CSV of fitted time constants")
    p.add_argument("--traces", help="CSV of raw dephasing envelopes per flux point")
    p.add_argument("--temp-mk", type=float)
    p.add_argument("--variant", choices=["finite_T", "tls_T0"])
    p.add_argument("--asymmetry", type=float)
    p.add_argument("--mask-factor", type=float)
    p.add_argument("--idle-phi", type=float)
    p.add_argument("--t1-ref-us", type=float)
    p.add_argument("--label")

    p = sub.add_parser("synth", parents=[common], help="write synthetic fixtures")
    p.add_argument("--kind", choices=["joint", "nonexp", "triple", "flux-scan", "wafer"])
    p.add_argument("--qubit")
    p.add_argument("--fixture")
    p.add_argument("--noise", help="noise TOML file")
    p.add_argument("--shots", type=int)
    p.add_argument("--flux-start", type=float)
    p.add_argument("--flux-stop", type=float)
    p.add_argument("--flux-points", type=int)
    p.add_argument("--sequences", help="comma-separated dephasing sequences for flux-scan")
    p.add_argument("--sequence", help="sequence of the triple fixture")
    p.add_argument("--scatter", type=float)
    p.add_argument("--n-dies", type=int)
    p.add_argument("--dips", type=int)

    p = sub.add_parser("wafer", parents=[common], help="wafer RSD and yield statistics")
    p.add_argument("--input")
    p.add_argument("--edge-dies", help="comma-separated die ids to exclude")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--targets", help="CSV kind,area_um2,rn_ohm")
    p.add_argument("--short-threshold", type=float)
    p.add_argument("--min-count", type=int)

    p = sub.add_parser("zeta", parents=[common], help="zeta table and model band")
    p.add_argument("--qubits", help="comma-separated fixture labels")
    p.add_argument("--tand-lo", type=float)
    p.add_argument("--tand-hi", type=float)
    p.add_argument("--a-phi", type=float)
    p.add_argument("--temp-mk", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--f-min-ghz", type=float)
    p.add_argument("--f-max-ghz", type=float)
    p.add_argument("--f-points", type=int)
    p.add_argument("--band-e-c", type=float)
    p.add_argument("--band-e-l", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s: %(message)s")
    try:
        options = _resolve(args)
        ctx = Context(args, options)
        COMMANDS[args.command](ctx)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
