"""File formats: the versioned series CSV, snapshots, profiles, rates.

Every float is written with 17 significant digits, which is enough to
round-trip IEEE doubles, so identical runs produce byte-identical
files and the regression suite can compare bytes rather than values.
"""

import json
import math

import numpy as np

from .errors import ValidationError
from .state import compute_Q, derived_density

SERIES_SCHEMA_VERSION = 1

_SCHEMA_PREFIX = "# series schema v"
_BOOL_FIELDS = ("eta_lower_ok", "eta_upper_ok", "eta_in_regime")


def _fmt(value):
    return format(float(value), ".17g")


def series_columns(b_count):
    """Column names for a series with b_count density-error weights."""
    return ["t", "E", "eta_int", "eta_lower_ok", "eta_upper_ok",
            "eta_in_regime", "D", "sup_r_err", "sup_v", "sup_rx_err",
            "R_t", *(f"rho_err_sup_{i}" for i in range(b_count)), "vr_sup"]


def write_series(path, records):
    """Write DiagnosticsRecord rows as the schema-versioned CSV."""
    if not records:
        raise ValidationError("cannot write an empty series")
    b_count = len(records[0].rho_err_sup)
    lines = [f"{_SCHEMA_PREFIX}{SERIES_SCHEMA_VERSION}",
             ",".join(series_columns(b_count))]
    for rec in records:
        row = [_fmt(rec.t), _fmt(rec.E), _fmt(rec.eta_int),
               "1" if rec.eta_lower_ok else "0",
               "1" if rec.eta_upper_ok else "0",
               "1" if rec.eta_in_regime else "0",
               _fmt(rec.D), _fmt(rec.sup_r_err), _fmt(rec.sup_v),
               _fmt(rec.sup_rx_err), _fmt(rec.R_t),
               *(_fmt(v) for v in rec.rho_err_sup), _fmt(rec.vr_sup)]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series(path):
    """Read a series CSV back as a mapping of column name to array.

    The mapping plugs straight into the decay fitter.  Unknown schema
    versions are rejected rather than misread.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith(_SCHEMA_PREFIX):
        raise ValidationError(f"{path} is not a series file (no schema line)")
    version = lines[0][len(_SCHEMA_PREFIX):]
    if version != str(SERIES_SCHEMA_VERSION):
        raise ValidationError(
            f"unsupported series schema v{version}; this build reads "
            f"v{SERIES_SCHEMA_VERSION}")
    header = lines[1].split(",")
    rows = [ln.split(",") for ln in lines[2:] if ln]
    if any(len(r) != len(header) for r in rows):
        raise ValidationError(f"ragged rows in {path}")
    data = np.array(rows, dtype=float)
    return {name: data[:, j] for j, name in enumerate(header)}


def write_snapshot(path, state, profile):
    """One state as JSON: the raw fields plus f and Q for convenience."""
    payload = {
        "t": float(state.t),
        "x": [float(v) for v in profile.x],
        "r": [float(v) for v in state.r],
        "v": [float(v) for v in state.v],
        "f": [float(v) for v in derived_density(state, profile)],
        "Q": [float(v) for v in compute_Q(state, profile)],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_snapshot(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    missing = {"t", "x", "r", "v", "f", "Q"} - set(payload)
    if missing:
        raise ValidationError(
            f"snapshot {path} is missing field(s): {', '.join(sorted(missing))}")
    out = {"t": float(payload["t"])}
    for key in ("x", "r", "v", "f", "Q"):
        out[key] = np.asarray(payload[key], dtype=float)
    return out


def probe_density(snapshot, r_query):
    """Eulerian density at radius r_query from snapshot arrays alone.

    The Lagrangian density f(x) equals the Eulerian density at r(x), so
    interpolation along (r, f) inverts the flow map implicitly.  Points
    at or beyond the moving boundary read zero.
    """
    r_query = float(r_query)
    if r_query < 0.0 or not math.isfinite(r_query):
        raise ValidationError(f"probe radius must be finite and >= 0, "
                              f"got {r_query}")
    r, f = snapshot["r"], snapshot["f"]
    if r_query >= r[-1]:
        return 0.0
    return float(np.interp(r_query, r, f))


def write_profile(csv_path, meta_path, profile):
    """Equilibrium tables plus scalar metadata, for external tooling."""
    lines = ["x,rho_bar,phi,rho_pow_gamma_minus_1"]
    for row in zip(profile.x, profile.rho_bar, profile.phi,
                   profile.rho_pow_gm1):
        lines.append(",".join(_fmt(v) for v in row))
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {
        "gamma": profile.gamma,
        "M": profile.total_mass,
        "R_bar": profile.radius,
        "rho0": profile.central_density,
        "C_pv": profile.c_pv,
        "n": profile.polytropic_index,
    }
    with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def write_rates(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_rates(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
