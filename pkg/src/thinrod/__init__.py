"""Bending-torsion models of thin elastic rods.

Effective 1D stiffness densities from 3D elastic tensors by
cross-sectional relaxation, stationary points of the scaled 3D thin-rod
energy and of the 1D limit energy, and the diagnostics tying the two
together across a thickness ladder.
"""

__version__ = "0.1.0"

from .material import (
    DensityDiagnostics,
    ElasticMaterialField,
    IsotropicTensor,
    MaterialRegion,
    density_gradient,
    density_value,
    quadratic_form_value,
    taylor_residual,
)
from .rod1d import (
    CurvatureField,
    LoadSpec,
    RodState,
    frame_integrate,
    limit_energy,
    minimize_limit_energy,
    stationarity_residual_1d,
)
from .rod3d import (
    DeformationField,
    PrismMesh,
    energy_3d,
    first_variation_3d,
    minimize_3d,
    rest_state,
    scaled_gradient,
    scaled_gradients,
)
from .xsection import (
    CrossSectionMesh,
    EffectiveStiffness,
    StiffnessTable,
    WarpingField,
    bmin,
    center_and_normalize,
    corrector_solve,
    effective_stiffness,
    generate_mesh,
)

__all__ = [
    "CrossSectionMesh",
    "CurvatureField",
    "DeformationField",
    "DensityDiagnostics",
    "EffectiveStiffness",
    "ElasticMaterialField",
    "IsotropicTensor",
    "LoadSpec",
    "MaterialRegion",
    "PrismMesh",
    "RodState",
    "StiffnessTable",
    "WarpingField",
    "bmin",
    "center_and_normalize",
    "corrector_solve",
    "density_gradient",
    "density_value",
    "effective_stiffness",
    "energy_3d",
    "first_variation_3d",
    "frame_integrate",
    "generate_mesh",
    "limit_energy",
    "minimize_3d",
    "minimize_limit_energy",
    "quadratic_form_value",
    "rest_state",
    "scaled_gradient",
    "scaled_gradients",
    "stationarity_residual_1d",
    "taylor_residual",
]
