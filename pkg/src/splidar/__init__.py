"""Single-photon LiDAR estimation: photon-timestamp simulation, maximum-likelihood
depth and reflectivity estimators, and Cramér-Rao bounds."""

__version__ = "0.1.0"

from .crlb import CrlbReport, crlb_count, crlb_report, crlb_timestamp, verify_bound_ordering
from .estimators import (BracketNotFound, EstimateReport, SolverConfig, depth_mle_known_alpha,
                         depth_sample_mean, joint_mle, reflectivity_count_mle,
                         reflectivity_mle_known_tau)
from .experiments import SweepSpec, reconstruct_frames, run_sweep
from .model import (AcquisitionConfig, PixelScene, PulseShape, SceneGrid, flux_at, pulse_value,
                    sbr, scene_from_constraints, total_energy)
from .simulator import (FrameStack, TimestampDraw, sample_count, sample_first_photon,
                        sample_timestamps, simulate_frames)

__all__ = [
    "AcquisitionConfig", "BracketNotFound", "CrlbReport", "EstimateReport", "FrameStack",
    "PixelScene", "PulseShape", "SceneGrid", "SolverConfig", "SweepSpec", "TimestampDraw",
    "crlb_count", "crlb_report", "crlb_timestamp", "depth_mle_known_alpha", "depth_sample_mean",
    "flux_at", "joint_mle", "pulse_value", "reconstruct_frames", "reflectivity_count_mle",
    "reflectivity_mle_known_tau", "run_sweep", "sample_count", "sample_first_photon",
    "sample_timestamps", "sbr", "scene_from_constraints", "simulate_frames", "total_energy",
    "verify_bound_ordering",
]
