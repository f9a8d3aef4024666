"""Legacy ASCII VTK snapshots and CSV time series."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .elements import local_multi_indices, tensor_basis
from .fem import FEModel, TimeState

SERIES_COLUMNS = (
    "step", "t", "E_total", "E_kin", "E_dev", "E_press", "volume",
    "volerr_L1", "volerr_L2", "volerr_Linf", "schur_iters",
)

VTK_BIQUADRATIC_QUAD = 28
VTK_TRIQUADRATIC_HEXAHEDRON = 29

_VTK_QUAD9 = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 0), (2, 1), (1, 2), (0, 1), (1, 1)]
_VTK_HEX27 = [
    (0, 0, 0), (2, 0, 0), (2, 2, 0), (0, 2, 0), (0, 0, 2), (2, 0, 2), (2, 2, 2), (0, 2, 2),
    (1, 0, 0), (2, 1, 0), (1, 2, 0), (0, 1, 0), (1, 0, 2), (2, 1, 2), (1, 2, 2), (0, 1, 2),
    (0, 0, 1), (2, 0, 1), (2, 2, 1), (0, 2, 1),
    (0, 1, 1), (2, 1, 1), (1, 0, 1), (1, 2, 1), (1, 1, 0), (1, 1, 2),
    (1, 1, 1),
]


def fmt(x) -> str:
    return format(float(x), ".17g")


def vtk_permutation(dim: int) -> np.ndarray:
    """Local Q2 node index for each VTK node position."""
    local = {mi: a for a, mi in enumerate(local_multi_indices(2, dim))}
    order = _VTK_QUAD9 if dim == 2 else _VTK_HEX27
    return np.array([local[mi] for mi in order])


def pressure_at_q2_nodes(model: FEModel, p: np.ndarray) -> np.ndarray:
    """Evaluate the Q1 pressure at every Q2 node (the field is continuous)."""
    dim = model.dim
    ref = np.array([[(-1.0, 0.0, 1.0)[i] for i in mi] for mi in local_multi_indices(2, dim)])
    N1, _ = tensor_basis(1, ref)
    vals = np.einsum("ea,na->en", p[model.pg], N1)
    out = np.zeros(model.n_nodes)
    out[model.mesh.elements_q2] = vals
    return out


def write_vtk(path, model: FEModel, state: TimeState) -> None:
    mesh = model.mesh
    dim = mesh.dim
    n = mesh.n_nodes
    perm = vtk_permutation(dim)
    cells = mesh.elements_q2[:, perm]
    ctype = VTK_BIQUADRATIC_QUAD if dim == 2 else VTK_TRIQUADRATIC_HEXAHEDRON

    def pad3(a):
        return a if a.shape[1] == 3 else np.hstack([a, np.zeros((a.shape[0], 3 - a.shape[1]))])

    X = pad3(mesh.nodes)
    U = pad3(model.dofmap.nodal(state.U))
    V = pad3(model.dofmap.nodal(state.V))
    p = pressure_at_q2_nodes(model, state.p)
    jmin = model.element_min_jacobian(state.U)

    lines = ["# vtk DataFile Version 3.0", f"step {state.step} t {fmt(state.t)}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [" ".join(fmt(v) for v in row) for row in X]
    lines.append(f"CELLS {len(cells)} {len(cells) * (cells.shape[1] + 1)}")
    lines += [f"{cells.shape[1]} " + " ".join(map(str, row)) for row in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(ctype)] * len(cells)
    lines.append(f"POINT_DATA {n}")
    for name, arr in (("displacement", U), ("velocity", V)):
        lines.append(f"VECTORS {name} double")
        lines += [" ".join(fmt(v) for v in row) for row in arr]
    lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [fmt(v) for v in p]
    lines += [f"CELL_DATA {len(cells)}", "SCALARS jacobian_min double 1", "LOOKUP_TABLE default"]
    lines += [fmt(v) for v in jmin]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_counts(path) -> dict:
    """Structural summary of a legacy VTK file: point, cell and field counts."""
    out = {"fields": []}
    for line in Path(path).read_text().splitlines():
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "POINTS":
            out["points"] = int(tok[1])
        elif tok[0] == "CELLS":
            out["cells"] = int(tok[1])
            out["cell_list_size"] = int(tok[2])
        elif tok[0] == "CELL_TYPES":
            out["cell_types"] = int(tok[1])
        elif tok[0] in ("VECTORS", "SCALARS"):
            out["fields"].append(tok[1])
    return out


def record_row(rec) -> list[str]:
    return [
        str(rec.step), fmt(rec.t), fmt(rec.energy_total), fmt(rec.energy_kinetic),
        fmt(rec.energy_deviatoric), fmt(rec.energy_pressure), fmt(rec.volume),
        fmt(rec.vol_err_L1), fmt(rec.vol_err_L2), fmt(rec.vol_err_Linf), str(rec.schur_iters),
    ]


class SeriesWriter:
    """Streams diagnostic records to ``series.csv``; the header is always written."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(SERIES_COLUMNS)

    def write(self, rec) -> None:
        self._w.writerow(record_row(rec))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
