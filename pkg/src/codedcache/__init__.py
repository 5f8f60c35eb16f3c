"""Coded caching with random demands: placement, coded delivery, rate bounds."""
from .analysis import (RateBound, lfu_rate, mbar, mtilde_theorem1, optimize_rap, psi,
                       rate_upper_bound, rho_matrix, search_mtilde, theorem1_bound,
                       uniform_rate)
from .delivery import (Coloring, ConflictGraph, MulticastCode, build_conflict_graph, decode,
                       delivery_rate, encode, exact_chromatic, greedy_color)
from .model import (DemandRealization, InvalidParameterError, PopularityDist, SystemParams,
                    sample_demands, zipf)
from .placement import (CacheConfig, CachingDist, fill_caches, lfu_dist, random_lfu_dist,
                        uniform_dist)
from .sim import ExperimentResult, ExperimentSpec, run_experiment, sweep

__version__ = "0.1.0"
