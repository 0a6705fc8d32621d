#!/usr/bin/env python3
"""Regenerate the shipped mesh fixtures (banded grid and icosphere graphs)."""

import json
from pathlib import Path

from sdse_lab.mesh import grid_mesh, icosphere_mesh, mesh_to_dict

DATA = Path(__file__).resolve().parent.parent / "src" / "sdse_lab" / "data"


def write(mesh, name):
    spec = mesh_to_dict(mesh)
    spec.pop("codes")
    spec["init"] = {"mode": "constant", "params": {"value": [0.5, 1.0]}}
    path = DATA / name
    path.write_text(json.dumps(spec) + "\n")
    print(f"{name}: {mesh.num_vertices} vertices, {len(mesh.edges)} edges")


if __name__ == "__main__":
    write(grid_mesh(rows=10, cols=10, num_regions=5), "grid_mesh.json")
    write(icosphere_mesh(num_regions=5), "icosphere_mesh.json")
