"""Scalable prototype selection for dissimilarity-space classification."""

__version__ = "0.1.0"

from .dataset import Dataset, SplitSpec, generate_blobs, load_csv, save_csv, split
from .dissim import CachedProvider, Measure, OnDemandProvider, PrecomputedProvider, dist, dist_block, precompute
from .dspace import PrototypeSet, classify_1nn, classify_ldc, embed, error_rate
from .fitness import FitnessContext, fitness_mst, fitness_supervised, fitness_supervised_lsh
from .ga import GaParams, Individual, run_ga
from .baselines import select_fft, select_forward, select_kcentres, select_random
from .hashing import PivotTable, approx_nearest_prototype, encode, train_pivots

__all__ = [
    "CachedProvider", "Dataset", "FitnessContext", "GaParams", "Individual", "Measure",
    "OnDemandProvider", "PivotTable", "PrecomputedProvider", "PrototypeSet", "SplitSpec",
    "approx_nearest_prototype", "classify_1nn", "classify_ldc", "dist", "dist_block",
    "embed", "encode", "error_rate", "fitness_mst", "fitness_supervised",
    "fitness_supervised_lsh", "generate_blobs", "load_csv", "precompute", "run_ga",
    "save_csv", "select_fft", "select_forward", "select_kcentres", "select_random",
    "split", "train_pivots",
]
