"""Interval-observer based output feedback: decomposition, framers, synthesis.

The pipeline, end to end:

1. ``decomp`` splits slope-bounded nonlinearities into a linear part plus a
   sign-stable remainder whose two-argument extension brackets the original
   map over boxes.
2. ``observer`` propagates interval enclosures (framers) of the plant state
   through measurements.
3. ``controller`` feeds the enclosure -- not the unknown state -- back
   through a dynamic gain set.
4. ``synthesis`` stacks enclosure errors, bounds, and controller state into
   one nonnegative comparison system and designs the gains by semidefinite
   programming, with an independent certificate check on the result.
5. ``config``/``cli`` wire it to YAML model files and a console tool.
"""

from .matops import IntervalVec, abs_mat, neg_part, pos_part, sign_mat, spectral_radius
from .decomp import (
    JssDecomposition,
    NonlinearMap,
    Term,
    bounding_matrix,
    eval_decomposition,
    is_sign_stable,
    regularize_bounding,
    remainder_decompose,
    vertex_selectors,
)
from .plant import SystemModel, Trajectory, noise_streams, output_of, plant_step, sample_noise, simulate
from .observer import (
    DecompPair,
    comparison_matrix,
    decompose_model,
    framer_error_step,
    framer_step,
    search_observer_gain,
    verify_observer_gain,
)
from .controller import (
    ClosedLoopState,
    ClosedLoopTrajectory,
    ControllerGains,
    closed_loop_error_step,
    closed_loop_step,
    controller_step,
    run_closed_loop,
)
from .sdp import ConicProgram, LmiSpec, Var, cvxpy_solve, solve_conic
from .synthesis import (
    ComparisonSystem,
    SdpProblem,
    SdpSolution,
    SynthesisResult,
    assemble_sdp,
    attenuation_check,
    build_comparison,
    certify_gains,
    recover_gains,
    solve_sdp,
    synthesize,
    verify_certified_gains,
)
from .config import (
    ConfigError,
    ModelConfig,
    canonical_dict,
    dump_config,
    list_bundled,
    load_bundled,
    load_gains,
    parse_config,
    parse_config_text,
    save_gains,
)

__version__ = "0.1.0"

__all__ = [
    "IntervalVec", "abs_mat", "neg_part", "pos_part", "sign_mat", "spectral_radius",
    "JssDecomposition", "NonlinearMap", "Term", "bounding_matrix", "eval_decomposition",
    "is_sign_stable", "regularize_bounding", "remainder_decompose", "vertex_selectors",
    "SystemModel", "Trajectory", "noise_streams", "output_of", "plant_step",
    "sample_noise", "simulate",
    "DecompPair", "comparison_matrix", "decompose_model", "framer_error_step",
    "framer_step", "search_observer_gain", "verify_observer_gain",
    "ClosedLoopState", "ClosedLoopTrajectory", "ControllerGains",
    "closed_loop_error_step", "closed_loop_step", "controller_step", "run_closed_loop",
    "ConicProgram", "LmiSpec", "Var", "cvxpy_solve", "solve_conic",
    "ComparisonSystem", "SdpProblem", "SdpSolution", "SynthesisResult",
    "assemble_sdp", "attenuation_check", "build_comparison", "certify_gains",
    "recover_gains", "solve_sdp", "synthesize", "verify_certified_gains",
    "ConfigError", "ModelConfig", "canonical_dict", "dump_config", "list_bundled",
    "load_bundled", "load_gains", "parse_config", "parse_config_text", "save_gains",
]
