# Copyright 2024 The amvuq Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import importlib.metadata

from . import internal as internal
from ._bench import (
    BenchmarkConfig as BenchmarkConfig,
    generate_synthetic as generate_synthetic,
)
from ._chain import (
    ChainConfig as ChainConfig,
    ChainRun as ChainRun,
    epe_trace as epe_trace,
    run_chain as run_chain,
    run_chains as run_chains,
    sample_chain as sample_chain,
    SampleSummary as SampleSummary,
    summarise_samples as summarise_samples,
    tune_step_size as tune_step_size,
)
from ._evaluate import (
    chebyshev_bound as chebyshev_bound,
    constraint_residual as constraint_residual,
    criteria_suite as criteria_suite,
    epe as epe,
    EpeReport as EpeReport,
    ExpectedErrorMap as ExpectedErrorMap,
    ObservableSet as ObservableSet,
    WeightMap as WeightMap,
    weights_power as weights_power,
    weights_sparse as weights_sparse,
    weights_uniform as weights_uniform,
)
from ._fbm import (
    fbm_cov_apply as fbm_cov_apply,
    fbm_kernel as fbm_kernel,
    fbm_prec_apply as fbm_prec_apply,
    fbm_sample as fbm_sample,
    fbm_sqrt_apply as fbm_sqrt_apply,
    FbmOperator as FbmOperator,
    frequency_grid as frequency_grid,
)
from ._grid import (
    DisplacementField as DisplacementField,
    ImageStack as ImageStack,
    ObservationMask as ObservationMask,
    ObservationSet as ObservationSet,
    pack_state as pack_state,
    PixelGrid as PixelGrid,
    residual as residual,
    ResidualVector as ResidualVector,
    StateVector as StateVector,
    unpack_state as unpack_state,
)
from ._io import (
    FieldFormatError as FieldFormatError,
    load_dataset as load_dataset,
    read_config as read_config,
    read_epe_csv as read_epe_csv,
    read_error_map as read_error_map,
    read_field as read_field,
    read_mask as read_mask,
    read_state as read_state,
    save_dataset as save_dataset,
    write_config as write_config,
    write_epe_csv as write_epe_csv,
    write_error_map as write_error_map,
    write_field as write_field,
    write_mask as write_mask,
    write_state as write_state,
    write_summary as write_summary,
)
from ._laplace import (
    assemble_hessian as assemble_hessian,
    laplace_error_map as laplace_error_map,
    local_evd as local_evd,
    LocalEvd as LocalEvd,
    screening_radius as screening_radius,
    SparseHessian as SparseHessian,
)
from ._map import (
    estimate_map as estimate_map,
    MapDiagnostics as MapDiagnostics,
    OptimConfig as OptimConfig,
)
from ._mcmc import (
    AbstractSampler as AbstractSampler,
    ChainState as ChainState,
    mh_accept as mh_accept,
)
from ._minimise import AbstractMinimiser as AbstractMinimiser, minimise as minimise
from ._misc import max_norm as max_norm, two_norm as two_norm
from ._posterior import (
    default_init as default_init,
    EnergyValue as EnergyValue,
    gibbs_energy as gibbs_energy,
    GibbsPosterior as GibbsPosterior,
    gradient as gradient,
    likelihood_energy as likelihood_energy,
    likelihood_gradient as likelihood_gradient,
    ModelParams as ModelParams,
    prior_energy as prior_energy,
    rescale_sample as rescale_sample,
    tempered_energy as tempered_energy,
    tempered_gradient as tempered_gradient,
)
from ._potential import (
    AbstractPotential as AbstractPotential,
    FunctionPotential as FunctionPotential,
    GaussianPotential as GaussianPotential,
    TemperedPotential as TemperedPotential,
)
from ._preconditioner import (
    AbstractPreconditioner as AbstractPreconditioner,
    DensePreconditioner as DensePreconditioner,
    FbmPreconditioner as FbmPreconditioner,
    IdentityPreconditioner as IdentityPreconditioner,
)
from ._sampler import (
    HMC as HMC,
    kinetic_energy as kinetic_energy,
    leapfrog as leapfrog,
    MALA as MALA,
    mala_log_ratio as mala_log_ratio,
    RandomWalk as RandomWalk,
    rw_propose as rw_propose,
)
from ._search import (
    AbstractDescent as AbstractDescent,
    AbstractSearch as AbstractSearch,
    Evaluation as Evaluation,
)
from ._solution import RESULTS as RESULTS, Solution as Solution
from ._solver import (
    LBFGS as LBFGS,
    LimitedMemoryDescent as LimitedMemoryDescent,
    StrongWolfe as StrongWolfe,
)
from ._spline import (
    bspline_analysis as bspline_analysis,
    bspline_synthesis as bspline_synthesis,
    interpolate_adjoint as interpolate_adjoint,
    spline_gradient as spline_gradient,
    SplineCoeffs as SplineCoeffs,
    warp as warp,
    warp_adjoint_image as warp_adjoint_image,
    warp_image as warp_image,
    warp_spatial_derivs as warp_spatial_derivs,
)
from ._wavelet import WaveletBasis as WaveletBasis


__version__ = importlib.metadata.version("amvuq")
