"""cvbreed: homodyne-heralded breeding of cat/comb states and a CHSH test."""

from .errors import GridError, GuardError, SimulationError, TailError
from .qgrid import (
    DensityKernel,
    QuadratureGrid,
    WaveFunction,
    fidelity,
    inner,
    kernel_to_momentum,
    make_grid,
    mean_photon,
    to_momentum,
    to_position,
)
from .states import (
    CatParams,
    CombParams,
    FGParams,
    comb,
    fg_reference,
    fock,
    squeezed_cat,
    squeezed_cat_shifted,
)
from .optics import (
    HeraldOutcome,
    HeraldWindow,
    LossChannel,
    annihilate,
    herald_comb_identity_check,
    herald_mix,
    lossy_joint_distribution,
    squeeze,
)
from .breeding import (
    BreedingPlan,
    FidelityFit,
    ResourceLedger,
    Schedule,
    breed_cat,
    breed_comb,
    breed_n,
    cat_plan,
    fit_nearest_comb,
    fit_nearest_scs,
    optimize_schedule,
)
from .bell import (
    BellConfig,
    Binning,
    CHSHResult,
    HeraldedEnsemble,
    ModulationParams,
    ProductSumState,
    SubtractionConfig,
    chsh,
    chsh_via_joint,
    delocalized_subtract,
    find_crossing,
    loss_sweep,
    modulation_stage,
    pipeline_success,
    run_pipeline,
    sign_binning,
    standard_config,
)

__version__ = "0.1.0"
