"""One-bit compressed sensing over multiscale manifold models."""

__version__ = "0.1.0"

from .covertree import CoverTree, beam_descend, build_cover_tree, verify_axioms
from .datasets import load_cloud, load_mnist, sample_sphere, save_cloud
from .errors import (
    ConfigError,
    DegenerateCellWarning,
    DegenerateInputError,
    DimensionError,
    DomainError,
    EmptyInputError,
    FormatError,
    InfeasibleCellError,
    InfeasibleError,
    ScaleTruncatedWarning,
)
from .estimators import MultiscaleManifoldModel, OneBitDecoder, OneBitEncoder
from .gmra import (
    Gmra,
    GmraLevel,
    PointCloud,
    assign_cells,
    audit_gmra,
    build_gmra,
    fit_cell,
    load_gmra,
    nearest_center,
    nearest_centers,
    project,
    projection_errors,
    save_gmra,
)
from .harness import ExperimentConfig, ResultRow, read_csv, run_experiment, write_csv
from .measure import (
    MeasurementEnsemble,
    geodesic_distance,
    hamming_distance,
    load_ensemble,
    measurement_distance,
    quantize,
    quantize_rows,
    save_ensemble,
    tessellation_uniformity,
)
from .recovery import (
    CenterSignCache,
    FeasibleCap,
    RecoveryResult,
    cap_contains,
    make_cap,
    oms,
    oms_simple,
    recover_center_only,
    select_center,
    solve_linear_on_cap,
    solve_linear_on_disk,
    solve_plus_on_cap,
)
from .width import (
    ManifoldMeta,
    WidthEstimate,
    check_union_width,
    estimate_width,
    finite_set_sampler,
    finite_width_screen,
    level_set_sampler,
    riemannian_width_bound,
    subspace_sphere_sampler,
    union_sampler,
)
