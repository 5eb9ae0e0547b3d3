"""Result serialisation: probe time series as CSV, field snapshots as
legacy-VTK ASCII.

Both writers are deterministic text emitters: identical inputs produce
byte-identical files, so reruns of the same configuration can be diffed
directly.  Snapshots use the legacy polydata format (POINTS plus POLYGONS
for bulk meshes or LINES for membrane curves, then one scalar array per
species), which every common visualiser reads without extra dependencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .micro import SURFACE_SPECIES


def _format_float(value):
    # repr round-trips doubles exactly and never depends on locale
    return repr(float(value))


def write_timeseries(traj, path):
    """Write the per-step probe samples of the macro ligand as CSV.

    One row per time level and probe, ``time,probe_id,species,value``;
    a trajectory without probes yields a header-only file.
    """
    times = np.asarray(traj.probe_times, dtype=float)
    values = np.asarray(traj.probe_values, dtype=float)
    if values.ndim != 2 or values.shape[0] != times.shape[0]:
        raise InputError(
            f"probe series shape {values.shape} does not match "
            f"{times.shape[0]} time levels")
    lines = ["time,probe_id,species,value"]
    for k, t in enumerate(times):
        for p in range(values.shape[1]):
            lines.append(
                f"{_format_float(t)},{p},c_e,{_format_float(values[k, p])}")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class FieldSnapshot:
    """Named nodal fields over one set of points at one time.

    ``cells`` holds triangle index triples for bulk meshes or segment index
    pairs for curves; every field must provide one value per point.
    """

    time: float
    points: np.ndarray
    cells: np.ndarray
    fields: dict = field(default_factory=dict)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        cells = np.asarray(self.cells, dtype=np.int64)
        if points.ndim != 2 or points.shape[1] != 2:
            raise InputError(f"snapshot points must be (N, 2), got {points.shape}")
        if cells.ndim != 2 or cells.shape[1] not in (2, 3):
            raise InputError(
                f"snapshot cells must be index pairs or triples, got {cells.shape}")
        if cells.size and (cells.min() < 0 or cells.max() >= points.shape[0]):
            raise InputError("snapshot cells index nonexistent points")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "cells", cells)
        converted = {}
        for name, values in self.fields.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (points.shape[0],):
                raise InputError(
                    f"snapshot field '{name}' has shape {arr.shape}, "
                    f"expected ({points.shape[0]},)")
            converted[str(name)] = arr
        object.__setattr__(self, "fields", converted)

    @staticmethod
    def from_mesh(mesh, fields, time=0.0):
        return FieldSnapshot(time=float(time), points=mesh.nodes,
                             cells=mesh.triangles, fields=dict(fields))

    @staticmethod
    def from_curve(curve, fields, time=0.0):
        return FieldSnapshot(time=float(time), points=curve.nodes,
                             cells=curve.segments, fields=dict(fields))


def write_snapshot(snap, path):
    """Write one snapshot as legacy-VTK ASCII polydata."""
    n = snap.points.shape[0]
    lines = [
        "# vtk DataFile Version 3.0",
        f"fields at t={_format_float(snap.time)}",
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {n} double",
    ]
    for x, y in snap.points:
        lines.append(f"{_format_float(x)} {_format_float(y)} 0.0")
    m, width = snap.cells.shape
    keyword = "POLYGONS" if width == 3 else "LINES"
    lines.append(f"{keyword} {m} {m * (width + 1)}")
    for cell in snap.cells:
        lines.append(f"{width} " + " ".join(str(int(i)) for i in cell))
    if snap.fields:
        lines.append(f"POINT_DATA {n}")
        for name in sorted(snap.fields):
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            for value in snap.fields[name]:
                lines.append(_format_float(value))
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def final_snapshots(traj, macro_mesh, curve=None, cell_mesh=None):
    """Snapshots of a finished run: the macro field, plus the membrane and
    interior fields below each probe node when micro meshes are given.

    Returns a name -> FieldSnapshot mapping whose keys are stable across
    runs ('macro', then 'probe<k>_membrane' / 'probe<k>_interior').
    """
    t = float(traj.times[-1])
    out = {"macro": FieldSnapshot.from_mesh(
        macro_mesh, {"c_e": traj.final_macro.values}, time=t)}
    if traj.final_micro is None or curve is None or cell_mesh is None:
        return out
    for k, node in enumerate(traj.probe_indices):
        state = traj.final_micro.node_state(int(node))
        membrane = {name: state.species(name) for name in SURFACE_SPECIES}
        out[f"probe{k}_membrane"] = FieldSnapshot.from_curve(
            curve, membrane, time=t)
        out[f"probe{k}_interior"] = FieldSnapshot.from_mesh(
            cell_mesh, {"c_i": state.c_i}, time=t)
    return out
