"""File formats: TOML parameter files, CSV data files and deterministic outputs.

Parameter files are flat TOML key/value tables.  Data files are CSV with a
header row; blank lines and lines starting with '#' are ignored and every
parse error names its line number.  Outputs are written atomically (temp file
then rename) and carry the config hash and seed so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .extraction import SEQUENCE_NAMES, FluxScanDataset, ScanRecord, TraceRecord
from .fitting import DecayTrace, DephasingTriple
from .noise import CavityParams, NoiseEnvironment
from .qubit import FluxoniumParams

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

QUBIT_KEYS = ("label", "e_c_ghz", "e_j_ghz", "e_l_ghz")
NOISE_KEYS = ("tan_delta_c", "temp_mk", "epsilon", "a_phi_uphi0", "a_white", "x_qp", "delta_gap_ghz")
CAVITY_KEYS = ("kappa_mhz", "chi_mhz", "f_cavity_ghz", "n_bar")
TRACE_COLUMNS = ("delay_us", "p1")
TRIPLE_PHASES_DEG = (0.0, 60.0, 120.0)
FLUX_SCAN_COLUMNS = ("phi_ext_phi0", "sequence", "time_constant_us", "err_us")


# -- TOML parameter files -------------------------------------------------------------


def read_toml(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def _number(table, key, path, default=None):
    if key not in table:
        if default is None:
            raise ValidationError(f"{path}: missing required field {key!r}")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{path}: field {key!r} must be a number")
    return float(value)


def _reject_unknown(table, allowed, path):
    extra = sorted(k for k, v in table.items() if k not in allowed and not isinstance(v, dict))
    if extra:
        raise ValidationError(f"{path}: unknown field(s) {', '.join(extra)}")


def qubit_from_table(table: dict, path="qubit") -> FluxoniumParams:
    _reject_unknown(table, QUBIT_KEYS, path)
    label = table.get("label", "")
    if not isinstance(label, str):
        raise ValidationError(f"{path}: field 'label' must be text")
    energies = [_number(table, key, path) for key in ("e_c_ghz", "e_j_ghz", "e_l_ghz")]
    try:
        return FluxoniumParams(*energies, label)
    except ValidationError as exc:
        # FluxoniumParams names its own fields; map them to file keys
        msg = str(exc)
        for field in ("e_c", "e_j", "e_l"):
            msg = msg.replace(f"{field} ", f"{field}_ghz ")
        raise ValidationError(f"{path}: {msg}") from None


def load_qubit(path) -> FluxoniumParams:
    return qubit_from_table(read_toml(path), path)


def load_published(path) -> dict:
    """The optional [published] table of a shipped fixture (empty if absent)."""
    return dict(read_toml(path).get("published", {}))


def noise_from_table(table: dict, path="noise") -> NoiseEnvironment:
    _reject_unknown(table, NOISE_KEYS, path)
    return NoiseEnvironment(
        tan_delta_c=_number(table, "tan_delta_c", path, 0.0),
        temp=_number(table, "temp_mk", path, 0.0) * 1e-3,
        loss_exponent=_number(table, "epsilon", path, 0.0),
        a_phi=_number(table, "a_phi_uphi0", path, 0.0),
        a_white=_number(table, "a_white", path, 0.0),
        x_qp=_number(table, "x_qp", path, 0.0),
        delta_gap=_number(table, "delta_gap_ghz", path, 44.0),
    )


def load_noise(path) -> NoiseEnvironment:
    return noise_from_table(read_toml(path), path)


def cavity_from_table(table: dict, path="cavity") -> CavityParams:
    _reject_unknown(table, CAVITY_KEYS, path)
    return CavityParams(
        kappa=_number(table, "kappa_mhz", path),
        chi=_number(table, "chi_mhz", path),
        f_cavity=_number(table, "f_cavity_ghz", path, 0.0),
        n_bar=_number(table, "n_bar", path, 0.0),
    )


def load_cavity(path) -> CavityParams:
    return cavity_from_table(read_toml(path), path)


def format_toml(table: dict) -> str:
    """Serialize a flat table of str/float/int values (enough for our files)."""
    lines = []
    for key, value in table.items():
        if isinstance(value, str):
            lines.append(f"{key} = {json.dumps(value)}")
        elif isinstance(value, bool):
            lines.append(f"{key} = {'true' if value else 'false'}")
        else:
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"


# -- shipped fixtures -----------------------------------------------------------------


def fixture_dir() -> Path:
    return Path(str(resources.files("fluxcoh") / "data" / "qubits"))


def fixture_path(label: str) -> Path:
    path = fixture_dir() / f"qubit_{label}.toml"
    if not path.exists():
        raise ValidationError(f"no shipped fixture for qubit {label!r}")
    return path


def fixture_labels(table: str | None = None) -> list[str]:
    """Labels of the shipped fixtures, optionally limited to 'table1' or 'table2'."""
    labels = []
    for path in sorted(fixture_dir().glob("qubit_*.toml")):
        if table is None or load_published(path).get("source") == table:
            labels.append(path.stem[len("qubit_"):])
    return labels


# -- CSV data files ------------------------------------------------------------------


def _read_rows(path, required):
    """(line number, row dict) pairs for the data rows of a commented CSV."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    with path.open(newline="") as fh:
        numbered = [(i, ln) for i, ln in enumerate(fh, 1) if ln.strip() and not ln.lstrip().startswith("#")]
    if not numbered:
        raise ValidationError(f"{path}: no header row")
    reader = csv.DictReader([ln for _, ln in numbered])
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header
    missing = [c for c in required if c not in header]
    if missing:
        raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")
    rows = []
    for (lineno, _), row in zip(numbered[1:], reader):
        if None in row or any(v is None for v in row.values()):
            raise ValidationError(f"{path}: line {lineno}: wrong number of fields")
        rows.append((lineno, {k: v.strip() for k, v in row.items()}))
    return rows


def _float(row, key, lineno, path, allow_empty=False):
    text = row.get(key, "")
    if text == "" and allow_empty:
        return None
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"{path}: line {lineno}: {key} is not a number ({text!r})") from None
    if not math.isfinite(value):
        raise ValidationError(f"{path}: line {lineno}: {key} is not finite")
    return value


def read_trace_csv(path, init_label: str = "none") -> DecayTrace:
    """``delay_us,p1[,shots]`` to a DecayTrace; an empty data section is an error."""
    rows = _read_rows(path, TRACE_COLUMNS)
    if not rows:
        raise ValidationError(f"{path}: trace has no data rows")
    delays = [_float(r, "delay_us", n, path) for n, r in rows]
    p1 = [_float(r, "p1", n, path) for n, r in rows]
    shots = None
    if "shots" in rows[0][1]:
        shots = [_float(r, "shots", n, path) for n, r in rows]
    try:
        return DecayTrace(np.array(delays), np.array(p1), None if shots is None else np.array(shots), init_label)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def read_triple_csv(path) -> DephasingTriple:
    """``delay_us,phase_deg,p1[,shots]`` with phases 0, 60 and 120 degrees."""
    rows = _read_rows(path, ("delay_us", "phase_deg", "p1"))
    if not rows:
        raise ValidationError(f"{path}: triple has no data rows")
    by_phase = {p: ([], [], []) for p in TRIPLE_PHASES_DEG}
    for n, r in rows:
        phase = _float(r, "phase_deg", n, path)
        if phase not in by_phase:
            raise ValidationError(f"{path}: line {n}: phase_deg must be one of 0, 60, 120")
        d, p, s = by_phase[phase]
        d.append(_float(r, "delay_us", n, path))
        p.append(_float(r, "p1", n, path))
        if "shots" in r:
            s.append(_float(r, "shots", n, path))
    traces = []
    try:
        for phase in TRIPLE_PHASES_DEG:
            d, p, s = by_phase[phase]
            order = np.argsort(d)
            shots = np.array(s)[order] if s else None
            traces.append(DecayTrace(np.array(d)[order], np.array(p)[order], shots))
        return DephasingTriple(tuple(traces), tuple(math.radians(p) for p in TRIPLE_PHASES_DEG))
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def read_flux_scan_csv(path, qubit: FluxoniumParams, idle_phi: float | None = None) -> FluxScanDataset:
    """``phi_ext_phi0,sequence,time_constant_us,err_us`` (err_us may be blank)."""
    rows = _read_rows(path, FLUX_SCAN_COLUMNS)
    records = []
    for n, r in rows:
        seq = r["sequence"].lower()
        if seq not in SEQUENCE_NAMES:
            raise ValidationError(f"{path}: line {n}: sequence must be one of {'|'.join(SEQUENCE_NAMES)}")
        value = _float(r, "time_constant_us", n, path)
        err = _float(r, "err_us", n, path, allow_empty=True)
        if value <= 0:
            raise ValidationError(f"{path}: line {n}: time_constant_us must be positive")
        if err is not None and err <= 0:
            raise ValidationError(f"{path}: line {n}: err_us must be positive")
        records.append(ScanRecord(_float(r, "phi_ext_phi0", n, path), seq, value, err))
    try:
        return FluxScanDataset(qubit, records, idle_phi=idle_phi)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def read_trace_bundle(path, qubit: FluxoniumParams) -> FluxScanDataset:
    """``phi_ext_phi0,sequence,delay_us,p1[,shots]``: raw dephasing envelopes per flux point."""
    rows = _read_rows(path, ("phi_ext_phi0", "sequence", "delay_us", "p1"))
    groups = {}
    for n, r in rows:
        key = (_float(r, "phi_ext_phi0", n, path), r["sequence"].lower())
        if key[1] not in SEQUENCE_NAMES or key[1] == "t1":
            raise ValidationError(f"{path}: line {n}: invalid dephasing sequence {r['sequence']!r}")
        shots = _float(r, "shots", n, path) if "shots" in r else None
        groups.setdefault(key, []).append((_float(r, "delay_us", n, path), _float(r, "p1", n, path), shots))
    if not groups:
        raise ValidationError(f"{path}: trace bundle has no data rows")
    traces = []
    try:
        for (phi, seq), pts in groups.items():
            pts.sort()
            d, p, s = zip(*pts)
            trace = DecayTrace(np.array(d), np.array(p), None if s[0] is None else np.array(s), "envelope")
            traces.append(TraceRecord(phi, seq, trace))
        return FluxScanDataset(qubit, [], traces)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


# -- deterministic outputs -----------------------------------------------------------


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def to_json(obj) -> str:
    return json.dumps(_canonical(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def config_hash(config: dict) -> str:
    """Short SHA-256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def atomic_write_text(path, text: str) -> Path:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        # mkstemp creates 0600 files; give the output ordinary permissions
        umask = os.umask(0)
        os.umask(umask)
        os.fchmod(fd, 0o666 & ~umask)
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "" if not math.isfinite(value) else repr(value)
    return str(value)


def csv_text(header, rows, metadata: dict | None = None) -> str:
    """CSV body with optional '# key: value' comment lines on top."""
    buf = _io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}: {format_value(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows, metadata: dict | None = None) -> Path:
    return atomic_write_text(path, csv_text(header, rows, metadata))


def write_json(path, obj) -> Path:
    return atomic_write_text(path, to_json(obj))
