"""specbench: a spectral-calibration benchmark engine.

Library surface: dataset ingestion with SPXY splits, leak-free
preprocessing pipelines, PLS/PLS-DA/Ridge calibrators, a subprocess bridge
for external models, the two-phase preprocessing search, robustness
metrics, and database-level rank statistics. The ``specbench`` CLI drives
batch benchmarks from a manifest.
"""

from ._kernels import IMPLEMENTATION as kernel_implementation
from .dataset import BenchmarkManifest, Dataset, load_dataset, load_manifest, resolve_split
from .preproc import PipelineSpec, StepSpec, apply_pipeline, fit_pipeline, parse_pipeline
from .search import SearchSession, run_search, tpe_suggest

__version__ = "0.1.0"

__all__ = [
    "BenchmarkManifest",
    "Dataset",
    "PipelineSpec",
    "SearchSession",
    "StepSpec",
    "apply_pipeline",
    "fit_pipeline",
    "kernel_implementation",
    "load_dataset",
    "load_manifest",
    "parse_pipeline",
    "resolve_split",
    "run_search",
    "tpe_suggest",
]
