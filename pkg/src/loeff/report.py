"""Report serialization: JSON with 17 significant digits, or CSV tables."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Iterable

import numpy as np

from loeff.decomposition import ProofTrace
from loeff.efficiency import EfficiencyCertificate, EfficiencyResult
from loeff.harness import CSV_COLUMNS, ScenarioReport, SweepReport, scenario_row


def _float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def to_plain(obj: Any) -> Any:
    """Convert arrays, complex numbers and tuples into JSON-compatible values.

    Complex numbers become ``[re, im]``; complex arrays become nested lists of
    such pairs, real arrays nested lists of floats.
    """
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return to_plain(np.stack([obj.real, obj.imag], axis=-1).tolist())
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def _emit(obj: Any, out: list[str], indent: int, level: int) -> None:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
        elif all(not isinstance(v, (list, dict)) for v in obj):
            # leaf rows stay on one line
            parts: list[str] = []
            for v in obj:
                _emit(v, parts, indent, level + 1)
                parts.append(", ")
            out.append("[" + "".join(parts[:-1]) + "]")
        else:
            out.append("[")
            for i, v in enumerate(obj):
                out.append(pad)
                _emit(v, out, indent, level + 1)
                if i < len(obj) - 1:
                    out.append(",")
            out.append(end + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad + json.dumps(k) + ": ")
            _emit(v, out, indent, level + 1)
            if i < len(obj) - 1:
                out.append(",")
        out.append(end + "}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    out: list[str] = []
    _emit(to_plain(obj), out, indent, 0)
    return "".join(out) + "\n"


# -- payloads -----------------------------------------------------------------


def certificate_payload(c: EfficiencyCertificate | None) -> dict | None:
    if c is None:
        return None
    return {"W": c.W, "p": c.p, "K": c.K, "margin": c.margin, "rho0": c.rho0.matrix}


def efficiency_payload(res: EfficiencyResult, state: str | None = None) -> dict:
    return {
        "state": state,
        "measure": res.measure,
        "K": res.K,
        "value": res.value,
        "bound_type": res.bound_type,
        "per_mode": res.per_mode,
        "certificate": certificate_payload(res.certificate),
        "tolerances": res.tolerances.as_dict(),
        "seed": res.seed,
        "wall_time": res.wall_time,
        "details": res.details,
    }


def trace_payload(t: ProofTrace) -> dict:
    return {
        "M": t.M,
        "K": t.K,
        "U": t.U,
        "p": t.p,
        "R": t.R,
        "Q": t.Q,
        "X": t.X,
        "Rprime": t.Rprime,
        "Qprime": t.Qprime,
        "Qdoubleprime": t.Qdoubleprime,
        "Uprime": t.Uprime,
        "p_out": t.p_out,
        "certified_bound": t.certified_bound,
        "input_sum": t.input_sum,
        "residuals": t.residuals(),
    }


def scenario_payload(rep: ScenarioReport) -> dict:
    return {
        "outcome": rep.outcome,
        "probability": rep.probability,
        "input_sum": rep.input_sum,
        "certified_bound": rep.certified_bound,
        "slack": rep.slack,
        "margin": rep.margin,
        "bounds_by_k": {str(k): {"certified": b, "input": i} for k, (b, i) in rep.bounds_by_k.items()},
        "conclusions": rep.conclusions(),
        "output_state": rep.output_state.matrix,
        "trace": trace_payload(rep.trace),
    }


def sweep_payload(name: str, rep: SweepReport) -> dict:
    return {"name": name, **rep.summary(), "rows": rep.rows}


# -- CSV ------------------------------------------------------------------------


def _csv_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (tuple, list)):
        return ";".join(str(int(x)) for x in v)
    if isinstance(v, (float, np.floating)):
        return _float(float(v)).strip('"')
    return str(v)


def csv_table(rows: Iterable[dict], columns: Iterable[str] = CSV_COLUMNS) -> str:
    columns = list(columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_csv_cell(r.get(c)) for c in columns])
    return buf.getvalue()


EFFICIENCY_COLUMNS = ("state", "measure", "K", "value", "bound_type", "seed")


def scenario_rows(reports: Iterable[ScenarioReport]) -> list[dict]:
    return [scenario_row(r) for r in reports]
