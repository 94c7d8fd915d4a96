"""JSON system/observer/scenario files and CSV trajectories.

System file::

    {"type": "lti", "A": [[...]], "B": [[...]], "C": [[...]], "r_override": [3, 3]}
    {"type": "ltv_chain", "n": 4, "c": ["1", "2+sin(0.3*t)", "1", "0"],
     "plant_A": [[...]], "plant_B": [[...]]}

Matrices are row-major nested lists.  ``plant_A``/``plant_B`` are optional
for chains (default: the bare integrator chain).

Scenario file keys: ``x0``, ``z0`` (``"zero"``, ``"match"`` or a vector),
``xhat0``, ``f`` (list of expressions), ``u``, ``xi0``, ``t_final``, ``dt``,
``decimation`` and ``system`` (path, relative to the scenario file, or an
inline system object).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FuioError
from .ltv_gpebo import ReducedLtvSystem
from .system_model import LtiSystem, LtvCanonicalSystem, upshift, validate_lti
from .time_expr import parse_time_expr
from .uio_synth import FunctionalObserverRealization

__all__ = [
    "SystemFile", "load_json", "dump_json", "parse_system", "load_system",
    "parse_observer", "load_observer", "load_scenario", "write_csv", "csv_text",
]


class FileFormatError(FuioError, ValueError):
    pass


@dataclass(frozen=True)
class SystemFile:
    kind: str  # "lti" or "ltv_chain"
    system: object
    r_override: tuple | None = None
    plant_A: np.ndarray | None = None
    plant_B: np.ndarray | None = None


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from exc


def dump_json(obj, path=None):
    text = json.dumps(obj, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _matrix(d, key):
    try:
        arr = np.array(d[key], dtype=float)
    except KeyError:
        raise FileFormatError(f"missing key {key!r}") from None
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{key!r} is not a numeric matrix: {exc}") from None
    if arr.ndim != 2:
        raise DimensionError(f"{key!r} must be a nested list (matrix), got {arr.ndim}-D data")
    return arr


def parse_system(d) -> SystemFile:
    kind = d.get("type")
    override = tuple(d["r_override"]) if d.get("r_override") is not None else None
    if kind == "lti":
        sys = LtiSystem(_matrix(d, "A"), _matrix(d, "B"), _matrix(d, "C"))
        validate_lti(sys)
        return SystemFile("lti", sys, override)
    if kind == "ltv_chain":
        try:
            n = int(d["n"])
            coeffs = [parse_time_expr(c) for c in d["c"]]
        except KeyError as exc:
            raise FileFormatError(f"missing key {exc.args[0]!r}") from None
        sys = LtvCanonicalSystem(n, tuple(coeffs))
        pa = _matrix(d, "plant_A") if "plant_A" in d else upshift(n)
        pb = _matrix(d, "plant_B") if "plant_B" in d else np.eye(n)[:, [-1]]
        return SystemFile("ltv_chain", sys, override, pa, pb)
    raise FileFormatError(f"unknown system type {kind!r} (expected 'lti' or 'ltv_chain')")


def load_system(path_or_dict, base=None) -> SystemFile:
    if isinstance(path_or_dict, dict):
        return parse_system(path_or_dict)
    path = Path(path_or_dict)
    if base is not None and not path.is_absolute():
        path = Path(base) / path
    return parse_system(load_json(path))


def parse_observer(d):
    kind = d.get("type", "uio")
    if kind == "uio":
        try:
            return FunctionalObserverRealization.from_dict(d)
        except KeyError as exc:
            raise FileFormatError(f"observer file lacks {exc.args[0]!r}") from None
    if kind == "gpebo":
        return ReducedLtvSystem(int(d["beta"]), tuple(parse_time_expr(c) for c in d["c"]))
    raise FileFormatError(f"unknown observer type {kind!r}")


def load_observer(path):
    return parse_observer(load_json(path))


def load_scenario(path):
    path = Path(path)
    d = load_json(path)
    d.setdefault("_base", str(path.parent))
    return d


def _fmt(v):
    return "%.15g" % v


def csv_text(res, decimation=1, state="x", est="xbar", err="err"):
    """CSV with header ``t, x1..xn, xbar1..xbarq, err1..errq``."""
    decimation = max(1, int(decimation))
    n, q, e = res.x.shape[1], res.xbar.shape[1], res.err.shape[1]
    header = (["t"] + [f"{state}{i}" for i in range(1, n + 1)]
              + [f"{est}{i}" for i in range(1, q + 1)] + [f"{err}{i}" for i in range(1, e + 1)])
    lines = [",".join(header)]
    idx = list(range(0, len(res.t), decimation))
    if idx[-1] != len(res.t) - 1:
        idx.append(len(res.t) - 1)
    for k in idx:
        row = [res.t[k], *res.x[k], *res.xbar[k], *res.err[k]]
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, res, decimation=1):
    Path(path).write_text(csv_text(res, decimation), encoding="utf-8")
