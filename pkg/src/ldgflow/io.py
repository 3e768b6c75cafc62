"""Deterministic output writers: diagnostics CSV, VTK snapshots, rate tables.

All floating-point values are written with 17 significant digits so the
files round-trip 64-bit values exactly; identical inputs produce
byte-identical files.  Snapshots use the legacy VTK STRUCTURED_POINTS
ASCII dialect (x varies fastest) so any standard reader can consume them
without libraries on our side.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .harness import DiagnosticsRecord, RateTable
from .qtensor import QTensorField, component_pairs, dominant_director, eigen_gap_field

DIAGNOSTICS_HEADER = ("step", "time", "tau", "energy", "sup_norm", "s", "g", "clamped")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_diagnostics(records: Iterable[DiagnosticsRecord], path) -> None:
    records = list(records)
    if not records:
        raise ValueError("no diagnostics records to write")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(",".join(DIAGNOSTICS_HEADER) + "\n")
            for r in records:
                fh.write(",".join([
                    str(r.step), _fmt(r.time), _fmt(r.tau), _fmt(r.energy),
                    _fmt(r.sup_norm), _fmt(r.s), _fmt(r.g),
                    "1" if r.clamped else "0",
                ]) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write diagnostics to {path}: {exc}") from exc


def read_diagnostics(path) -> list[DiagnosticsRecord]:
    path = Path(path)
    out = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DIAGNOSTICS_HEADER:
            raise ValueError(f"{path}: unexpected diagnostics header "
                             f"{reader.fieldnames}")
        for row in reader:
            out.append(DiagnosticsRecord(
                step=int(row["step"]), time=float(row["time"]),
                tau=float(row["tau"]), energy=float(row["energy"]),
                sup_norm=float(row["sup_norm"]), s=float(row["s"]),
                g=float(row["g"]), clamped=row["clamped"] == "1",
            ))
    return out


def write_rate_table(table: RateTable, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"{table.label},error_grad,error_L2,error_s,"
                 "rate_grad,rate_L2,rate_s\n")
        for row in table.rows:
            cells = [_fmt(row.resolution), _fmt(row.error_grad),
                     _fmt(row.error_L2), _fmt(row.error_s)]
            for r in (row.rate_grad, row.rate_L2, row.rate_s):
                cells.append("" if r is None else _fmt(r))
            fh.write(",".join(cells) + "\n")


def _snapshot_fields(Q: QTensorField,
                     extras: Mapping[str, np.ndarray] | None):
    shape = Q.mesh.shape
    scalars = {}
    for k, (i, j) in enumerate(component_pairs(Q.dim)):
        scalars[f"q{i + 1}{j + 1}"] = Q.comps[k]
    scalars["eigen_gap"] = eigen_gap_field(Q, 1.0 / Q.dim)
    for name, arr in (extras or {}).items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != shape:
            raise ValueError(f"extra field {name!r} has shape {arr.shape}, "
                             f"expected {shape}")
        scalars[name] = arr
    director = dominant_director(Q)
    return scalars, director


def _ravel_x_fastest(arr: np.ndarray) -> np.ndarray:
    # Arrays are indexed [ix, iy(, iz)]; Fortran raveling makes x fastest,
    # matching the VTK structured-points point order.
    return np.asarray(arr).ravel(order="F")


def write_snapshot(Q: QTensorField, extras: Mapping[str, np.ndarray] | None,
                   path, fmt: str = "vtk") -> None:
    """Write tensor components, director, and eigenvalue gap for one state."""
    if fmt == "vtk":
        _write_snapshot_vtk(Q, extras, Path(path))
    elif fmt == "csv":
        _write_snapshot_csv(Q, extras, Path(path))
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")


def _write_snapshot_vtk(Q: QTensorField, extras, path: Path) -> None:
    mesh = Q.mesh
    scalars, director = _snapshot_fields(Q, extras)
    npts_axis = [mesh.M + 1] * mesh.dim + [1] * (3 - mesh.dim)
    n_points = (mesh.M + 1) ** mesh.dim
    lines = [
        "# vtk DataFile Version 3.0",
        "ldgflow snapshot",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS {} {} {}".format(*npts_axis),
        "ORIGIN 0 0 0",
        f"SPACING {_fmt(mesh.h)} {_fmt(mesh.h)} {_fmt(mesh.h)}",
        f"POINT_DATA {n_points}",
    ]
    for name, arr in scalars.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in _ravel_x_fastest(arr))
    lines.append("VECTORS director double")
    flat_dir = [
        _ravel_x_fastest(director[..., ax]) if ax < Q.dim
        else np.zeros(n_points)
        for ax in range(3)
    ]
    lines.extend(
        f"{_fmt(vx)} {_fmt(vy)} {_fmt(vz)}"
        for vx, vy, vz in zip(*flat_dir)
    )
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write snapshot to {path}: {exc}") from exc


def _write_snapshot_csv(Q: QTensorField, extras, path: Path) -> None:
    mesh = Q.mesh
    scalars, director = _snapshot_fields(Q, extras)
    index_names = ["ix", "iy", "iz"][: mesh.dim]
    dir_names = [f"dir_{ax}" for ax in "xyz"[: Q.dim]]
    header = index_names + list(scalars) + dir_names
    grids = np.meshgrid(*[np.arange(mesh.M + 1)] * mesh.dim, indexing="ij")
    columns = [g.ravel() for g in grids]
    columns += [arr.ravel() for arr in scalars.values()]
    columns += [director[..., ax].ravel() for ax in range(Q.dim)]
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            cells = [str(int(v)) for v in row[: mesh.dim]]
            cells += [_fmt(v) for v in row[mesh.dim:]]
            fh.write(",".join(cells) + "\n")
