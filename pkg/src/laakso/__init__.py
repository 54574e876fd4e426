"""Graph approximations of Laakso spaces.

Builds the level-N metric graphs of a Laakso space (interval times a product
of Cantor sets, glued at wormholes), the folding/averaging symmetry
machinery, the canonical Dirichlet energy, a reproducible random-walk Monte
Carlo engine, and quantitative checks of the expected scaling behavior:
volume doubling, exit times like r^2, resistance scaling, the elliptic
Harnack inequality, two-sided Gaussian heat-kernel bounds, and the
one-dimensionality of the invariant conductance space.
"""

__version__ = "0.1.0"

from .core import (
    Cell,
    HalfFace,
    JSequence,
    LaaksoPointN,
    WormholeSchedule,
    canonicalize,
    cells_at_level,
    d_of,
    half_faces_of,
    hausdorff_dimension,
    wormhole_levels,
)
from .graph import (
    ApproxGraph,
    QuadraticForm,
    ball,
    build_graph,
    default_form,
    effective_resistance,
    energy,
    geodesic_distance,
    laplacian_apply,
    measure_of,
    mgug_of,
)
from .folding import CellIsometry, cell_isometries, phi_map, phi_point, theta
from .spectral import (
    BesovReport,
    SpectralData,
    TimeScaling,
    besov_norm,
    eigendecompose,
    fit_hk_bounds,
    heat_kernel,
    ondiag_slope,
)
from .verify import (
    CheckReport,
    InvariantFormSpace,
    box_counting_dimension,
    check_ehi,
    check_res,
    check_vd,
    hilbert_distance,
    invariant_form,
    invariant_form_dimension,
    run_all,
    theta_commutation,
)
from .walker import (
    CouplingResult,
    WalkConfig,
    WalkPath,
    couple,
    couple_sweep,
    exit_time,
    hit_before_exit,
    hit_halfface,
    reflected_path,
    step_walk,
)
