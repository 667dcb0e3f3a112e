"""Self-interacting sequential point process models for gaze-like fixation sequences."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    EmptyInput,
    EmptySequence,
    Family,
    FixationSequence,
    GazeWalkError,
    ModelSpec,
    RngSpec,
    Window,
    derive_rng,
    read_sequences_csv,
    validate_sequence,
    write_sequences_csv,
)
from .geometry import ball_union_area, convex_hull, delayed_recurrence, hull_area  # noqa: E402
from .heterogeneity import SaliencyMap, constant_map, estimate_saliency, load_raster, save_raster  # noqa: E402
from .inference import (  # noqa: E402
    BootstrapCI,
    FitResult,
    bootstrap_ci,
    fit_profile,
    fit_table1,
    loglik_adapted,
    loglik_binomial,
    loglik_random_walk,
    loglik_rejection_ball,
    loglik_rejection_hull,
    loglik_rejection_recurrence,
    loglik_table1,
)
from .kernels import KernelParams, kernel_norm_const, sample_kernel  # noqa: E402
from .models import HistoryState, transition_logpdf, transition_norm_const  # noqa: E402
from .quadrature import QuadratureGrid  # noqa: E402
from .simulate import SimulationConfig, simulate, simulate_batch, synthetic_config, synthetic_model  # noqa: E402
from .summaries import (  # noqa: E402
    EnvelopeBand,
    Statistic,
    SummaryCurve,
    band_exceedance,
    ball_coverage_curve,
    cumulative_recurrence_curve,
    envelope,
    hull_coverage_curve,
    scanpath_length_curve,
)
