"""Monte-Carlo experiments: placement, demands, coloring, decoding, statistics."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis, delivery
from .model import (InvalidParameterError, PopularityDist, SystemParams,
                    sample_demands, zipf)
from .placement import (CacheConfig, CachingDist, fill_caches, lfu_dist,
                        random_lfu_dist, uniform_dist)

__all__ = [
    "POLICIES",
    "ExperimentSpec",
    "ExperimentResult",
    "TrialOutcome",
    "resolve_policy",
    "run_trial",
    "run_experiment",
    "analytic_row",
    "sweep",
    "DEFAULT_MAX_VERTICES",
]

POLICIES = ("auto", "rap", "random_lfu", "lfu", "uniform", "naive")
SWEEP_AXES = ("M", "n", "m", "alpha", "B")
DEFAULT_MAX_VERTICES = 2_000_000
MAX_VERTICES_ENV = "CODEDCACHE_MAX_VERTICES"


def _default_cap() -> int:
    return int(os.environ.get(MAX_VERTICES_ENV, DEFAULT_MAX_VERTICES))


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one Monte-Carlo experiment.

    ``alpha`` and ``q`` are alternatives: an explicit ``q`` wins.
    ``m_tilde=None`` under ``random_lfu`` selects the cutoff by search.
    """

    params: SystemParams
    alpha: float | None = 0.0
    q: tuple[float, ...] | None = None
    policy: str = "random_lfu"
    m_tilde: int | None = None
    trials: int = 200
    placement: str = "fixed"
    coloring: str = "degree"
    restarts: int = 20
    verify_decode: bool = True
    payload_bytes: int = 32
    max_vertices: int = field(default_factory=_default_cap)
    workers: int = 1

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise InvalidParameterError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.trials < 1:
            raise InvalidParameterError("trials must be >= 1")
        if self.placement not in ("fresh", "fixed"):
            raise InvalidParameterError("placement must be 'fresh' or 'fixed'")
        if self.coloring not in delivery.COLORING_POLICIES:
            raise InvalidParameterError(f"unknown coloring {self.coloring!r}")
        if self.q is None and self.alpha is None:
            raise InvalidParameterError("give either alpha or q")
        if self.q is not None and len(self.q) != self.params.m:
            raise InvalidParameterError(f"q has {len(self.q)} entries, m={self.params.m}")

    def popularity(self) -> PopularityDist:
        if self.q is not None:
            return PopularityDist(np.asarray(self.q, dtype=float))
        return zipf(self.params.m, self.alpha)


@dataclass
class ExperimentResult:
    mean_rate: float
    std: float
    ci95: float
    rub: float
    decode_passes: int
    trials: int
    m_tilde: int | None
    p: np.ndarray
    rates: np.ndarray
    colors: np.ndarray
    wall_clock: float = 0.0

    @property
    def decode_pass_rate(self) -> float:
        return self.decode_passes / self.trials


@dataclass(frozen=True)
class TrialOutcome:
    rate: float
    K: int
    distinct: int
    decoded: bool


def resolve_policy(spec: ExperimentSpec, q: PopularityDist) -> tuple[CachingDist, int | None, float]:
    """Caching distribution, chosen cutoff and analytic bound for the experiment's policy.

    ``"auto"`` means RAP for libraries of at most four files and searched
    random LFU otherwise.
    """
    prm = spec.params
    n, m, M = prm.n, prm.m, prm.M
    if spec.policy == "naive" or M == 0:
        return CachingDist(np.full(m, 1.0 / m), 0.0), None, analysis.mbar(q, n)
    policy = spec.policy
    if policy == "auto":
        policy = "rap" if m <= 4 else "random_lfu"
    if policy == "rap":
        p, rub = analysis.optimize_rap(q, n, m, M)
        return p, None, rub
    if policy == "lfu":
        p, mt = lfu_dist(m, M), math.ceil(M)
    elif policy == "uniform":
        p, mt = uniform_dist(m, M), m
    else:
        mt = spec.m_tilde if spec.m_tilde is not None else analysis.search_mtilde(q, n, m, M)[0]
        p = random_lfu_dist(m, M, mt)
    return p, mt, analysis.rate_upper_bound(p, q, n).rub


def _verify(caches: CacheConfig, demands, g, coloring, payload_bytes: int, seed) -> bool:
    prm = caches.params
    gen = np.random.default_rng(seed)
    blob = gen.integers(0, 256, size=(prm.m, prm.B, payload_bytes), dtype=np.uint8)
    library = {(f + 1, b + 1): blob[f, b].tobytes() for f in range(prm.m) for b in range(prm.B)}
    code = delivery.encode(g, coloring, library)
    for u in range(prm.n):
        f = int(demands.d[u])
        try:
            got = delivery.decode(u, code, caches, demands, library)
        except delivery.DecodeError:
            return False
        missing = [b for b in range(1, prm.B + 1) if not caches.has(u, f, b)]
        if sorted(got) != [(f, b) for b in missing]:
            return False
        if any(got[(f, b)] != library[(f, b)] for b in missing):
            return False
    return True


def run_trial(caches: CacheConfig, q: PopularityDist, seed: np.random.SeedSequence,
              spec: ExperimentSpec) -> TrialOutcome:
    """One demand draw against fixed caches: color, rate, optional decode check."""
    demand_ss, color_ss, payload_ss = seed.spawn(3)
    prm = caches.params
    demands = sample_demands(q, prm.n, np.random.default_rng(demand_ss))
    g = delivery.build_conflict_graph(caches, demands, max_vertices=spec.max_vertices)
    coloring = delivery.greedy_color(g, spec.coloring, restarts=spec.restarts,
                                     rng=np.random.default_rng(color_ss))
    rate = delivery.delivery_rate(g, coloring, demands, prm.B)
    ok = _verify(caches, demands, g, coloring, spec.payload_bytes, payload_ss) \
        if spec.verify_decode else True
    return TrialOutcome(rate, coloring.K, demands.distinct(), ok)


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Average the delivery rate over ``spec.trials`` independent trials.

    Trial ``t`` draws from the ``t``-th child of ``SeedSequence(seed)``, so
    results do not depend on ``workers``.  With ``placement='fixed'`` one
    placement (from a dedicated child stream) serves every trial and the
    confidence interval is conditional on it.

    Raises
    ------
    delivery.SizeLimitError
        When ``n * B`` exceeds ``spec.max_vertices``.
    """
    t0 = time.perf_counter()
    prm = spec.params
    if prm.n * prm.B > spec.max_vertices:
        raise delivery.SizeLimitError(
            f"n*B = {prm.n}*{prm.B} = {prm.n * prm.B} vertices exceeds cap {spec.max_vertices}")
    q = spec.popularity()
    p, mt, rub = resolve_policy(spec, q)
    place_prm = replace(prm, M=0.0) if spec.policy == "naive" else prm

    root = np.random.SeedSequence(prm.seed)
    fixed_ss, trials_ss = root.spawn(2)
    trial_seeds = trials_ss.spawn(spec.trials)
    fixed = fill_caches(p, place_prm, fixed_ss) if spec.placement == "fixed" else None

    def one(ts: np.random.SeedSequence) -> TrialOutcome:
        place_ss, rest = ts.spawn(2)
        caches = fixed if fixed is not None else fill_caches(p, place_prm, place_ss)
        return run_trial(caches, q, rest, spec)

    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as ex:
            outcomes = list(ex.map(one, trial_seeds))
    else:
        outcomes = [one(ts) for ts in trial_seeds]

    rates = np.array([o.rate for o in outcomes])
    mean = math.fsum(rates) / rates.size
    std = math.sqrt(math.fsum((rates - mean) ** 2) / (rates.size - 1)) if rates.size > 1 else 0.0
    return ExperimentResult(
        mean_rate=mean,
        std=std,
        ci95=1.96 * std / math.sqrt(rates.size),
        rub=rub,
        decode_passes=sum(o.decoded for o in outcomes),
        trials=spec.trials,
        m_tilde=mt,
        p=np.asarray(p.p),
        rates=rates,
        colors=np.array([o.K for o in outcomes]),
        wall_clock=time.perf_counter() - t0,
    )


def _with_axis(spec: ExperimentSpec, axis: str, value) -> ExperimentSpec:
    prm = spec.params
    if axis == "M":
        return replace(spec, params=replace(prm, M=float(value)))
    if axis == "n":
        return replace(spec, params=replace(prm, n=int(value)))
    if axis == "B":
        return replace(spec, params=replace(prm, B=int(value)))
    if axis == "m":
        if spec.q is not None:
            raise InvalidParameterError("cannot sweep m with an explicit q")
        return replace(spec, params=replace(prm, m=int(value)))
    if axis == "alpha":
        if spec.q is not None:
            raise InvalidParameterError("cannot sweep alpha with an explicit q")
        return replace(spec, alpha=float(value))
    raise InvalidParameterError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def analytic_row(spec: ExperimentSpec) -> dict:
    """Analytic columns for one parameter point under the experiment's policy."""
    prm = spec.params
    q = spec.popularity()
    n, m, M = prm.n, prm.m, prm.M
    policy = spec.policy
    if policy == "auto":
        policy = "rap" if m <= 4 else "random_lfu"
    mb = analysis.mbar(q, n)
    row = {"policy": policy, "m_tilde": None, "rub": mb, "psi": float(n), "mbar": mb,
           "lfu_rate": analysis.lfu_rate(q, n, M), "uniform_rub": analysis.uniform_rate(q, n, M),
           "p": None}
    if M == 0 or policy == "naive":
        return row
    p, mt, _ = resolve_policy(spec, q)
    bound = analysis.rate_upper_bound(p, q, n)
    row.update(m_tilde=mt, rub=bound.rub, psi=bound.psi, p=np.asarray(p.p).tolist())
    return row


def sweep(spec: ExperimentSpec, axis: str, values, simulate: bool = True) -> list[dict]:
    """Analytic (and optionally simulated) rows, one per axis value."""
    rows = []
    for v in values:
        point = _with_axis(spec, axis, v)
        row = {"axis": axis, "value": v, **analytic_row(point)}
        if simulate:
            res = run_experiment(point)
            row.update(mean_rate=res.mean_rate, ci95=res.ci95,
                       decode_pass_rate=res.decode_pass_rate, trials=res.trials,
                       B=point.params.B, sim_rub=res.rub)
        rows.append(row)
    return rows
