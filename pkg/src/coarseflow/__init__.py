"""Hierarchical normalizing flows for coarse-to-fine molecular graph generation."""

import os

# Cap BLAS thread pools before numpy loads so reductions and matmuls are
# bit-reproducible regardless of the host's core count. Users can override
# by exporting these variables themselves.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
del _var, os

__version__ = "0.1.0"

from .elements import ElementTable, BUILTIN_TABLES, load_element_table  # noqa: E402
from .graph import MolGraph, bfs_order, check_valence, correct_validity  # noqa: E402
from .smiles import parse_smiles, write_smiles, canonical_smiles  # noqa: E402
from .encoding import EncodedGraph, encode, decode  # noqa: E402
from .metrics import GenMetrics, compute_metrics  # noqa: E402

__all__ = [
    "ElementTable",
    "BUILTIN_TABLES",
    "load_element_table",
    "MolGraph",
    "bfs_order",
    "check_valence",
    "correct_validity",
    "parse_smiles",
    "write_smiles",
    "canonical_smiles",
    "EncodedGraph",
    "encode",
    "decode",
    "GenMetrics",
    "compute_metrics",
    "__version__",
]
