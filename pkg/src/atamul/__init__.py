"""atamul: fast multiplication of a matrix by its own transpose.

The package computes C = alpha * A^T A + C for arbitrary rectangular dense
matrices through a recursive lower-triangular scheme with a Strassen
sub-kernel, and runs it sequentially, across worker threads, or on a
simulated distributed system with communication-cost accounting.
"""

from .ata import ata, ata_full, ata_mult_count, workspace_for_ata
from .bench import effective_gflops, gen_matrix
from .distsim import CommStats, ata_d, verify_comm_bounds
from .errors import (AtamulError, InvalidMeasurementError, ProtocolError,
                     ShapeMismatchError, TooManyWorkersError,
                     UnknownProcessError, UnsplittableError,
                     UnsupportedSizeError, WorkspaceUndersizedError)
from .matrix import (DenseMatrix, MatrixView, MultCounter,
                     PackedLowerTriangular, add_truncated,
                     mirror_lower_to_upper, naive_gemm_atb, naive_syrk_lower,
                     pack_lower, read_matrix, split4, unpack_lower,
                     write_matrix)
from .scheduler import (ComputationType, Region, Task, TaskTree,
                        build_tree_distributed, build_tree_shared, leaf_task,
                        levels_distributed, levels_shared, path_to_root,
                        render_tree)
from .shared import SharedRunner, ata_s
from .strassen import (DEFAULT_THRESHOLD, StrassenWorkspace, fast_strassen,
                       strassen_mult_count, workspace_for)

__version__ = "0.1.0"

__all__ = [
    "AtamulError", "CommStats", "ComputationType", "DEFAULT_THRESHOLD",
    "DenseMatrix", "InvalidMeasurementError", "MatrixView", "MultCounter",
    "PackedLowerTriangular", "ProtocolError", "Region", "ShapeMismatchError",
    "SharedRunner", "StrassenWorkspace", "Task", "TaskTree",
    "TooManyWorkersError",
    "UnknownProcessError", "UnsplittableError", "UnsupportedSizeError",
    "WorkspaceUndersizedError", "add_truncated", "ata", "ata_d", "ata_full",
    "ata_mult_count", "ata_s", "build_tree_distributed", "build_tree_shared",
    "effective_gflops", "fast_strassen", "gen_matrix", "leaf_task",
    "levels_distributed", "levels_shared", "mirror_lower_to_upper",
    "naive_gemm_atb", "naive_syrk_lower", "pack_lower", "path_to_root",
    "read_matrix", "render_tree", "split4", "strassen_mult_count",
    "unpack_lower", "verify_comm_bounds", "workspace_for",
    "workspace_for_ata", "write_matrix",
]
