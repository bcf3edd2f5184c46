"""Extreme first-passage statistics of N random walkers on hierarchical graphs."""

__version__ = "0.1.0"

from .graphs import (  # noqa: E402
    BetheSpec,
    CometSpec,
    HeadGraph,
    InvalidModelError,
    LeakyLoopSpec,
    build_bethe,
    build_clique_head,
    build_comet,
    build_leaky_loop,
    validate,
)
from .fpt import (  # noqa: E402
    FptDistribution,
    bethe_fpt,
    brute_force_fpt,
    comet_fpt,
    exit_time_pmf,
    fpt,
    leaky_loop_fpt,
)
from .evt import (  # noqa: E402
    EntropicProfile,
    ExtremeQuery,
    F_from_pmf,
    F_leaky_closed,
    extreme_hit_prob,
    extreme_tail_exact,
    mean_asymptotic,
    mean_exact,
    moment_asymptotic,
    n_for_lambda,
    tail_asymptotic,
)
from .mc import McConfig, McResult, run_trials  # noqa: E402
from .diagnostics import RegimeReport, bethe_ratio_slope, classify, diagnose  # noqa: E402
