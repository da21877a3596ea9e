"""Result files: trace CSV, JSON summary, dispersion-map and scatter CSVs.

Every file starts with provenance (``# key=value`` lines in CSVs, a
``provenance`` object in JSON). Floats are written with fixed formats so
identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .analysis import CorrelationSet, XciTrace, asymptote, scatter_points, to_dbm
from .topology import LinkSegment, dispersion_map

SCHEMA_VERSION = 1
TRACE_COLUMNS = (
    "scenario_id", "mode", "span_index", "snr_xci_db", "p_xci_dbm", "delta_p_xci_db", "floor_snr_db",
)
DISPERSION_COLUMNS = ("span_index", "pre_dcu_ps_nm", "post_dcu_ps_nm")
SCATTER_COLUMNS = (
    "theta_ratio", "c_lag", "lag", "scenario_id", "d_res_ps_nm", "dispersion_ps_nm_km",
    "pump_offset_ghz", "baud_rate_gbaud",
)
PROVENANCE_KEYS = ("schema_version", "config_hash", "seed", "code_version")


def _num(x, fmt: str = ".6f") -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, fmt)


def _header(fh, provenance: dict) -> None:
    prov = dict(provenance)
    prov.setdefault("schema_version", SCHEMA_VERSION)
    for k in PROVENANCE_KEYS:
        fh.write(f"# {k}={prov.get(k, '')}\n")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _open(path):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return open(p, "w", newline="", encoding="utf-8")


def write_traces(path: str | Path, traces: list[XciTrace], provenance: dict) -> None:
    """One row per (scenario, mode, span)."""
    with _open(path) as fh:
        _header(fh, provenance)
        w = _writer(fh)
        w.writerow(TRACE_COLUMNS)
        for t in traces:
            d_db = to_dbm(np.where(t.delta_p_w > 0, t.delta_p_w, np.nan))
            for k in range(len(t)):
                floor = None if t.floor_snr_db is None else t.floor_snr_db[k]
                w.writerow([
                    t.scenario_id, t.mode, int(t.span_index[k]), _num(t.snr_xci_db[k]),
                    _num(t.p_xci_dbm[k]), _num(d_db[k]), _num(floor),
                ])


def _read_rows(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    prov, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            prov[k] = v
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    if not rows:
        raise ValueError(f"{path}: no CSV header")
    return prov, rows[0], rows[1:]


def _float(s: str) -> float:
    return float(s) if s else math.nan


def read_traces(path: str | Path, metadata: dict | None = None) -> tuple[dict, list[XciTrace]]:
    """Traces from a trace CSV. Increments are recomputed from the
    accumulated column. ``metadata`` maps ``"scenario_id/mode"`` to the
    scenario metadata stored in the JSON summary."""
    prov, header, rows = _read_rows(path)
    if tuple(header) != TRACE_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    groups: dict[tuple[str, str], list[list[str]]] = {}
    for r in rows:
        groups.setdefault((r[0], r[1]), []).append(r)
    traces = []
    for (sid, mode), rs in groups.items():
        idx = np.array([int(r[2]) for r in rs])
        snr = np.array([_float(r[3]) for r in rs])
        p = 1e-3 * 10 ** (np.array([_float(r[4]) for r in rs]) / 10)
        floor = None if all(not r[6] for r in rs) else np.array([_float(r[6]) for r in rs])
        meta = dict((metadata or {}).get(f"{sid}/{mode}", {}))
        d = np.diff(p, prepend=0.0)
        traces.append(XciTrace(sid, mode, idx, snr, p, d, floor, meta))
    return prov, traces


def _windows(t: XciTrace) -> list[tuple[str, int, int]]:
    n1, n2 = t.meta.get("n1"), t.meta.get("n2")
    if n1 is None or n2 is None:
        return [("all", int(t.span_index[0]), int(t.span_index[-1]))]
    # window bounds are local to the simulated segment; shift to the
    # reported span numbering
    off = t.meta.get("first_span", 1) - 1
    out = []
    for name, a, b in (("OLS1", 1 + off, n1 + off), ("OLS2", n1 + 1 + off, n1 + n2 + off)):
        lo, hi = max(a, int(t.span_index[0])), min(b, int(t.span_index[-1]))
        if hi >= lo:
            out.append((name, lo, hi))
    return out


def trace_asymptotes(t: XciTrace, tail_window: int = 3, band_db: float = 0.5) -> list[dict]:
    """Settled gradient level and settling span for each OLS window."""
    out = []
    for name, lo, hi in _windows(t):
        w = t.window(lo, hi)
        if len(w) < tail_window:
            continue
        level, settle = asymptote(w.delta_p_w, tail_window, band_db)
        out.append({
            "window": name,
            "first_span": lo,
            "last_span": hi,
            "level_dbm": _finite(level),
            "settling_span": None if settle is None else int(w.span_index[settle - 1]),
        })
    return out


def _finite(x):
    x = float(x)
    return round(x, 6) if math.isfinite(x) else None


def correlation_record(cs: CorrelationSet) -> dict:
    return {
        "meta": cs.meta,
        "lags": [int(k) for k in cs.lags],
        "c_lag": [_finite(c) for c in cs.c_lag],
        "theta_ratio": [_finite(t) for t in cs.theta_ratio],
        "sigma2_dbm": [_finite(v) for v in to_dbm(cs.sigma2_w)],
    }


def summary(traces: list[XciTrace], correlations: list[CorrelationSet], provenance: dict,
            failures: list[dict] | None = None) -> dict:
    prov = dict(provenance)
    prov.setdefault("schema_version", SCHEMA_VERSION)
    return {
        "provenance": prov,
        "traces": [
            {"key": f"{t.scenario_id}/{t.mode}", "meta": t.meta, "asymptotes": trace_asymptotes(t)}
            for t in traces
        ],
        "correlations": [correlation_record(c) for c in correlations],
        "failures": list(failures or []),
    }


def write_json(path: str | Path, doc: dict) -> None:
    with _open(path) as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


def read_summary_metadata(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return {t["key"]: t["meta"] for t in doc.get("traces", [])}


def write_dispersion_map(path: str | Path, segment: LinkSegment, provenance: dict) -> None:
    """Accumulated dispersion after each fiber (pre-DCU) and DCU (post-DCU)."""
    with _open(path) as fh:
        _header(fh, provenance)
        w = _writer(fh)
        w.writerow(DISPERSION_COLUMNS)
        if segment.n_spans == 0:
            return
        dm = dispersion_map(segment)
        for i, pre, post in zip(dm.span_index, dm.pre_dcu_ps_nm, dm.post_dcu_ps_nm):
            w.writerow([int(i), _num(pre, ".3f"), _num(post, ".3f")])


def write_scatter(path: str | Path, correlations: list[CorrelationSet], provenance: dict) -> int:
    """Normalized-dispersion scatter of the coherency coefficients; returns
    the number of rows."""
    n = 0
    with _open(path) as fh:
        _header(fh, provenance)
        w = _writer(fh)
        w.writerow(SCATTER_COLUMNS)
        for cs in correlations:
            for theta, c, tags in scatter_points(cs):
                w.writerow([
                    _num(theta, ".6g"), _num(c, ".6g"), tags["lag"], tags.get("scenario_id", ""),
                    _num(tags.get("d_res_ps_nm")), _num(tags.get("dispersion_ps_nm_km")),
                    _num(tags.get("pump_offset_ghz")), _num(tags.get("baud_rate_gbaud")),
                ])
                n += 1
    return n
