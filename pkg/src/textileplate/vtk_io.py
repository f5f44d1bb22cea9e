"""Legacy ASCII VTK export/import for hex and quad meshes with nodal vectors."""
import numpy as np

CELL_TYPE = {8: 12, 4: 9}  # hexahedron, quad


def export_vtk(mesh, fields=None, path="mesh.vtk", title="textileplate"):
    """Write an UNSTRUCTURED_GRID file with optional POINT_DATA vector fields.

    `mesh` needs .nodes (N,3) and .hexes (M,8) (or quads (M,4)); `fields`
    maps names to (N,3) nodal vectors. Floats are written with %.17g so a
    reload reproduces the coordinates bit-exactly.
    """
    nodes = np.asarray(mesh.nodes, dtype=float)
    cells = np.asarray(mesh.hexes, dtype=int)
    npts, ncell = len(nodes), len(cells)
    per_cell = cells.shape[1]
    ctype = CELL_TYPE[per_cell]
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {npts} double",
    ]
    lines += [" ".join(f"{v:.17g}" for v in p) for p in nodes]
    lines.append(f"CELLS {ncell} {ncell * (per_cell + 1)}")
    lines += [f"{per_cell} " + " ".join(str(int(i)) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {ncell}")
    lines += [str(ctype)] * ncell
    if fields:
        lines.append(f"POINT_DATA {npts}")
        for name in sorted(fields):
            data = np.asarray(fields[name], dtype=float)
            if data.shape != (npts, 3):
                raise ValueError(f"field {name!r} must have shape ({npts}, 3)")
            lines.append(f"VECTORS {name} double")
            lines += [" ".join(f"{v:.17g}" for v in row) for row in data]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_vtk(path):
    """Parse a file written by `export_vtk`; returns (nodes, cells, fields)."""
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take(n):
        nonlocal pos
        out = tokens[pos : pos + n]
        pos += n
        return out

    nodes = None
    cells = None
    fields = {}
    npts = 0
    while pos < len(tokens):
        tok = tokens[pos]
        pos += 1
        if tok == "POINTS":
            npts = int(take(1)[0])
            take(1)  # dtype
            nodes = np.array(take(3 * npts), dtype=float).reshape(npts, 3)
        elif tok == "CELLS":
            ncell = int(take(1)[0])
            total = int(take(1)[0])
            flat = np.array(take(total), dtype=int)
            per = flat[0]
            cells = flat.reshape(ncell, per + 1)[:, 1:]
        elif tok == "VECTORS":
            name = take(1)[0]
            take(1)  # dtype
            fields[name] = np.array(take(3 * npts), dtype=float).reshape(npts, 3)
    return nodes, cells, fields
