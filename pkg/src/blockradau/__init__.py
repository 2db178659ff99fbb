"""Block Gauss and Gauss-Radau quadrature for ``B^T phi(A) B`` via block Lanczos.

Typical use::

    from blockradau import lanczos_run, sweep, PhiSpec
    T, state = lanczos_run(A, B, 50)
    for q in sweep(T, PhiSpec.resolvent(1e-3)):
        print(q.m, q.bound)
"""

from .errors import (
    BlockQuadError,
    DimensionMismatch,
    EigFailure,
    EmptyGraph,
    InvalidSpec,
    InvalidSpectrum,
    NonPositiveShift,
    NonSquare,
    NonSymmetric,
    NotPositiveDefinite,
    NotStieltjes,
    ParseError,
    RankDeficient,
    SingularShift,
    TooLarge,
)
from .lanczos import BlockTridiagonal, LanczosState, assemble, lanczos_run
from .mmio import load_edge_list, load_matrix_market, write_matrix_market
from .operators import (
    ProblemSpec,
    SparseSym,
    apply,
    build_problem,
    desk_diffusion_spec,
    enrich,
    gen_diagonal,
    gen_diffusion2d,
    gen_graph_laplacian,
)
from .quadrature import (
    NodesWeights,
    PhiSpec,
    QuadratureSet,
    ReferenceOracle,
    eval_gauss,
    eval_radau,
    extrapolate,
    nodes_weights,
    potential_rate,
    reference_oracle,
    sweep,
    two_sided,
)
from .smallmat import SymEig, block_tridiag_solve, loewner_geq, qr_thin, spd_fn, sym_eig
from .stieltjes import RadauMatrix, StieltjesParams, check_identities, extract, radau_matrix, reconstruct, sfraction_eval

__version__ = "0.1.0"
