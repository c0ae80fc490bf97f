"""Tactile shape completion: geometry, touch simulation, metrics and the SDF decoder."""

from ._touchsdf import (
    Decoder,
    ExperimentConfig,
    Mesh,
    SensorSpec,
    TouchSdfError,
    load_latents,
    load_mesh,
    marching_cubes,
    metrics,
    normalize_mesh,
    pipeline,
    sample_surface,
    sdf_dataset,
    shapes,
    signed_distance,
    touch,
)

__all__ = [
    "Decoder",
    "ExperimentConfig",
    "Mesh",
    "SensorSpec",
    "TouchSdfError",
    "load_latents",
    "load_mesh",
    "marching_cubes",
    "metrics",
    "normalize_mesh",
    "pipeline",
    "sample_surface",
    "sdf_dataset",
    "shapes",
    "signed_distance",
    "touch",
]
