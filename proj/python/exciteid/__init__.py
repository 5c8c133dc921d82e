"""Excitation trajectory design and dynamic parameter identification."""

from ._core import (  # noqa: F401
    BaseProjection,
    ConfigError,
    DegenerateError,
    DimensionError,
    Error,
    KinematicChain,
    MissingArtifactError,
    ParseError,
    base_projection,
    condition_number,
    convex_hull_vertices,
    ee_position,
    fit_mfpee,
    load_urdf,
    nominal_params,
    parse_urdf,
    project,
    regressor,
    rnea,
    run_stage,
    solve_bvls,
    stage_names,
    std_param_labels,
    td_filter,
)

__version__ = "0.1.0"
