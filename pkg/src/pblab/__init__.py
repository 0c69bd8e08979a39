"""pblab: a desk-scale laboratory for Poisson brackets of partitions of unity
on closed symplectic surfaces (flat torus, round sphere).

Subpackages:

* ``surface``    grids, fields, brackets, integration
* ``cover``      node-mask covers, degree, essential sets, enclosing discs
* ``partition``  partitions of unity, sharp lattice covers, relaxation
* ``bracket``    pairwise bracket aggregation and bound checks
* ``levelset``   contours, level-set crossing counts, coarea checks
* ``divisions``  curve systems, face combinatorics, threshold covers
* ``symplinalg`` symplectic linear algebra and hypercube maximisation
* ``cli``        experiment runner (``pblab`` entry point)

Hot kernels run through numba by default; set ``PBLAB_BACKEND=numpy`` to
force the pure numpy/scipy fallbacks (see ``pblab._backend``).
"""

from ._backend import get_backend, set_backend
from .errors import PbLabError

__version__ = "0.1.0"

__all__ = ["get_backend", "set_backend", "PbLabError", "__version__"]
