"""Z/2Z x Z graded matrix factorizations over the q-graded polynomial ring.

``core``     -- polynomial matrices, factorizations, homomorphisms
``koszul``   -- Koszul matrices, row operations, variable exclusion, reduction
``homology`` -- degreewise slice homology of potential-zero factorizations
"""

from .core import (
    MFError,
    PolyMatrix,
    MatrixFactorization,
    MFHom,
    identity_hom,
    zero_hom,
    tensor_hom,
    coboundary,
)
from .koszul import KoszulRow, KoszulMatrix, Reduction, reduce_koszul
from .homology import (
    BigradedDims,
    homology_dims,
    induced_map_dims,
    induces_zero,
    induces_identity,
    slice_basis,
)

__all__ = [
    "MFError",
    "PolyMatrix",
    "MatrixFactorization",
    "MFHom",
    "identity_hom",
    "zero_hom",
    "tensor_hom",
    "coboundary",
    "KoszulRow",
    "KoszulMatrix",
    "Reduction",
    "reduce_koszul",
    "BigradedDims",
    "homology_dims",
    "induced_map_dims",
    "induces_zero",
    "induces_identity",
    "slice_basis",
]
