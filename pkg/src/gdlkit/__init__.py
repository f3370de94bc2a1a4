"""gdlkit: symmetry-certified computation on grids, groups, graphs, meshes
and gauges, with a verification CLI for every construction."""

__version__ = "0.1.0"

__all__ = [
    "numkit",
    "grid_signals",
    "finite_groups",
    "graph_nn",
    "mesh_core",
    "spectral",
    "equivariant_geo",
    "seq_models",
]
