"""AFDM integrated sensing: range and Doppler estimation over Nakagami-m channels."""

__version__ = "0.1.0"

from .afdm import AfdmConfig, build_daft_matrix, daft, idaft  # noqa: E402
from .baseline import RssMeasurement, rss_nakagami_range  # noqa: E402
from .channel import PathSet, generate_paths, make_pathset, synthesize_received  # noqa: E402
from .crb import CrbInputs, build_upsilon, crb, fim  # noqa: E402
from .ec import EcState, ec_loop, ec_r_step, ec_s_step  # noqa: E402
from .estimator import EstimatorOptions, Priors, SensingEstimate, estimate  # noqa: E402
from .scenario import ScenarioConfig  # noqa: E402
from .sensing import build_S, linearize, linearized_model  # noqa: E402

__all__ = [
    "AfdmConfig", "build_daft_matrix", "daft", "idaft",
    "RssMeasurement", "rss_nakagami_range",
    "PathSet", "generate_paths", "make_pathset", "synthesize_received",
    "CrbInputs", "build_upsilon", "crb", "fim",
    "EcState", "ec_loop", "ec_r_step", "ec_s_step",
    "EstimatorOptions", "Priors", "SensingEstimate", "estimate",
    "ScenarioConfig",
    "build_S", "linearize", "linearized_model",
]
