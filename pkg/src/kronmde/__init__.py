"""Matrix Dyson equation tools for Kronecker random matrices."""

__version__ = "0.1.0"

from .errors import (
    ContractError,
    ConvergenceError,
    DimensionError,
    KronMdeError,
    ModelValidationError,
    PositivityError,
    SingularityError,
)
from .mde import EtaSchedule, MdeSolution, SolverOptions, solve_at, solve_continuation
from .model import (
    HermitianDysonData,
    KroneckerModel,
    VarianceProfile,
    hermitian_dyson_data,
    hermitize,
    load_model,
    make_model,
    save_model,
    validate,
)
from .presets import PRESETS, preset
from .spectrum import (
    ScanOptions,
    ZetaGrid,
    dist0_selfconsistent,
    dos_curve,
    estimate_support,
    example_oracle,
    pseudospectrum,
    rho_at,
    support_bracket,
)
