"""Self-describing output files: CSV, JSONL, realization dumps and plot data.

Every file starts with provenance. CSV, realization and plot files carry it as
``# key: value`` comment lines; JSONL files carry it as a first line of the
form ``{"provenance": {...}}``. Floats are written with 17 significant
digits so reruns are byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import LatticeWindow, PotentialSpec, Realization

OUTPUT_ENV = "BERNOULLI_DIRAC_OUTPUT"

LYAPUNOV_COLUMNS = ("E", "V", "m", "c", "p", "gamma", "stderr", "steps", "realizations", "seed")
MOMENT_COLUMNS = ("t", "value")
LAPLACE_COLUMNS = ("T", "A_time", "A_energy", "rel_diff")
EIGEN_FIELDS = ("realization_seed", "index", "eigenvalue", "center", "decay_rate", "fit_quality")


def default_output_dir() -> Path:
    """Directory named by ``$BERNOULLI_DIRAC_OUTPUT``, else the working directory."""
    return Path(os.environ.get(OUTPUT_ENV, "."))


def format_value(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (complex, np.complexfloating)):
        z = complex(x)
        return f"{z.real:.17g}{z.imag:+.17g}j"
    return str(x)


def _jsonable(x: Any) -> Any:
    if isinstance(x, Mapping):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (complex, np.complexfloating)):
        return format_value(x)
    return x


def canonical_json(obj: Any) -> str:
    """Sorted-key compact JSON; floats round-trip exactly."""
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: Mapping) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def provenance_lines(provenance: Mapping) -> list[str]:
    return [f"# {k}: {canonical_json(v) if isinstance(v, (Mapping, list, tuple)) else format_value(v)}"
            for k, v in provenance.items()]


def _open_out(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence | Mapping],
              provenance: Optional[Mapping] = None) -> Path:
    path = _open_out(path)
    lines = provenance_lines(provenance or {})
    lines.append(",".join(columns))
    for row in rows:
        vals = [row[c] for c in columns] if isinstance(row, Mapping) else list(row)
        if len(vals) != len(columns):
            raise ValueError("row width does not match the header")
        lines.append(",".join(format_value(v) for v in vals))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Return ``(provenance, columns, rows)`` with cells left as strings."""
    prov, columns, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(": ")
            prov[key] = val
        elif columns is None:
            columns = line.split(",")
        elif line:
            rows.append(line.split(","))
    return prov, columns or [], rows


def write_jsonl(path, records: Iterable[Mapping], provenance: Optional[Mapping] = None) -> Path:
    path = _open_out(path)
    lines = [canonical_json({"provenance": provenance or {}})]
    lines += [canonical_json(r) for r in records]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_jsonl(path) -> tuple[dict, list[dict]]:
    lines = [json.loads(x) for x in Path(path).read_text().splitlines() if x.strip()]
    if lines and set(lines[0]) == {"provenance"}:
        return lines[0]["provenance"], lines[1:]
    return {}, lines


def write_lyapunov_csv(path, rows: Iterable[Mapping], provenance: Optional[Mapping] = None) -> Path:
    return write_csv(path, LYAPUNOV_COLUMNS, rows, provenance)


def write_moment_csv(path, times, values, provenance: Optional[Mapping] = None) -> Path:
    return write_csv(path, MOMENT_COLUMNS, zip(times, values), provenance)


def write_laplace_csv(path, rows: Iterable[Mapping], provenance: Optional[Mapping] = None) -> Path:
    return write_csv(path, LAPLACE_COLUMNS, rows, provenance)


def write_eigen_jsonl(path, records: Iterable[Mapping], provenance: Optional[Mapping] = None) -> Path:
    recs = []
    for r in records:
        missing = set(EIGEN_FIELDS) - set(r)
        if missing:
            raise ValueError(f"eigen record lacks {sorted(missing)}")
        recs.append({k: r[k] for k in EIGEN_FIELDS})
    return write_jsonl(path, recs, provenance)


def write_plot_data(path, x, y, provenance: Optional[Mapping] = None) -> Path:
    """Two whitespace-separated columns with ``#`` comments, readable by gnuplot."""
    path = _open_out(path)
    lines = provenance_lines(provenance or {})
    lines += [f"{format_value(float(a))} {format_value(float(b))}" for a, b in zip(x, y)]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_realization(path, realization: Realization) -> Path:
    """Dump a realization as ``n<TAB>V_n`` lines under a provenance header."""
    path = _open_out(path)
    spec = realization.spec
    prov = {
        "seed": realization.seed_record[0] if realization.seed_record else "none",
        "realization": realization.seed_record[1] if realization.seed_record else "none",
        "n_min": realization.window.n_min,
        "n_max": realization.window.n_max,
    }
    if spec is not None:
        prov.update(kind=spec.kind, V=spec.V, p=spec.p)
    lines = provenance_lines(prov)
    lines += [f"{n}\t{format_value(float(v))}" for n, v in zip(realization.window.sites, realization.values)]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_realization(path) -> Realization:
    prov, sites, vals = {}, [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(": ")
            prov[key] = val
        elif line.strip():
            n, v = line.split("\t")
            sites.append(int(n))
            vals.append(float(v))
    if not sites:
        raise ValueError("realization file has no sites")
    if sites != list(range(sites[0], sites[0] + len(sites))):
        raise ValueError("realization sites must be consecutive")
    window = LatticeWindow(sites[0], sites[-1])
    seed_record = None
    if prov.get("seed", "none") != "none":
        seed_record = (int(prov["seed"]), int(prov["realization"]))
    spec = None
    if prov.get("kind") == "bernoulli":
        spec = PotentialSpec.bernoulli(float(prov["V"]), float(prov["p"]))
    return Realization(window, np.array(vals), seed_record, spec)
