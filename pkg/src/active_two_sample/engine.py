"""Sequential test loop: active (epsilon-greedy), passive (pinned source) and oracle.

All three share one slot loop that runs many independent trials in lockstep
as numpy arrays. Every trial owns a ``numpy.random.Generator`` and consumes
exactly three uniforms per slot ``(selection, x1, x2)``, so a trial's path
depends only on its own generator, never on which other trials share the
batch or on how the stream is chunked.

Per slot ``t``, in this order:

1. draw the source ``delta_t`` (active mode only),
2. sample the pair from that source,
3. payoff ``v`` from the source's witness *before* its update,
4. read the bet ``lambda_t`` *before* the ONS update,
5. log-wealth ``+= log(1 + lambda_t v)``,
6. ONS update of the bet,
7. OGA update of the chosen source's witness,
8. record ``v`` in the selector's running averages,

then stop once log-wealth reaches ``log(1/alpha)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_alpha, check_positive, check_positive_int
from .analysis import population_summary
from .betting import ons_arrays, ons_sign_value
from .exceptions import ConfigError
from .features import feature_maps_for, oga_step, regret_from_sums
from .selection import compute_C, draw_index, epsilon_schedule, leader_index, selection_probabilities

_CHUNK = 256


@dataclass
class RunConfig:
    alpha: float = 0.05
    horizon: int = 10_000
    seed: int = 0
    features: dict | None = None
    L: float | None = None
    C_override: float | None = None
    ons_sign: str = "ascent"
    keep_history: bool = False
    stop_at_rejection: bool = True

    def __post_init__(self):
        check_alpha(self.alpha)
        check_positive_int(self.horizon, "horizon")
        check_positive_int(self.seed, "seed", minimum=0)
        ons_sign_value(self.ons_sign)
        if self.L is not None:
            check_positive(self.L, "L")
        if self.C_override is not None:
            check_positive(self.C_override, "C_override")

    @property
    def threshold(self) -> float:
        return math.log(1.0 / self.alpha)

    def exploration_constant(self, K: int) -> float:
        if self.C_override is not None:
            return float(self.C_override)
        if self.L is not None:
            return compute_C(K, self.L)[0]
        if K == 1:
            return 1.0
        raise ConfigError("either L or C_override must be set to fix the exploration constant")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "horizon": self.horizon, "seed": self.seed,
            "features": self.features, "L": self.L, "C_override": self.C_override,
            "ons_sign": self.ons_sign, "keep_history": self.keep_history,
            "stop_at_rejection": self.stop_at_rejection,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        unknown = doc.keys() - cls.__dataclass_fields__.keys()
        if unknown:
            raise ConfigError(f"run: unknown field(s) {sorted(unknown)}")
        return cls(**doc)


@dataclass
class Trace:
    """Per-slot record of one trial; index ``i`` is slot ``t = i + 1``."""

    source: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    eps: np.ndarray
    log_wealth: np.ndarray
    leader: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    witness: np.ndarray

    def __len__(self):
        return len(self.v)


@dataclass
class TrialResult:
    stopped: bool
    tau: int | None
    horizon: int
    log_wealth: float
    counts: list
    means: list
    regrets: list
    seed: int | None = None
    trace: Trace | None = field(default=None, repr=False)

    @property
    def slots(self) -> int:
        """Slots actually played: ``tau`` if stopped, else the horizon."""
        return self.tau if self.stopped else self.horizon


@dataclass
class BatchOutput:
    results: list
    bucket_edges: list | None = None
    selection_counts: np.ndarray | None = None


def trial_seed(base_seed: int, i: int) -> int:
    """Seed of trial ``i``: a 63-bit integer from ``SeedSequence(base_seed, spawn_key=(i,))``."""
    state = np.random.SeedSequence(base_seed, spawn_key=(i,)).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def _as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    return np.random.default_rng(rng), rng


def simulate(scenario, cfg: RunConfig, rngs, mode="active", fixed_k=None, trace=False,
             bucket_edges=None, fmaps=None, population=None) -> BatchOutput:
    """Run one trial per entry of ``rngs`` (generators or integer seeds).

    ``mode`` is ``"active"``, ``"passive"`` (needs ``fixed_k``) or ``"oracle"``.
    ``bucket_edges`` (increasing slot numbers starting at 1) turns on
    aggregated per-source selection counts over ``[edge_i, edge_{i+1})``.
    """
    if mode not in ("active", "passive", "oracle"):
        raise ConfigError(f"mode must be active, passive or oracle, got {mode!r}")
    K = scenario.K
    if mode == "passive":
        if fixed_k is None or not 0 <= int(fixed_k) < K:
            raise ConfigError(f"passive mode needs a source index in [0, {K}), got {fixed_k!r}")
        fixed_k = int(fixed_k)
    fmaps = fmaps if fmaps is not None else feature_maps_for(scenario, cfg.features)
    dims = [f.dim for f in fmaps]
    d = max(dims)
    C = cfg.exploration_constant(K) if mode == "active" else 1.0
    sign = ons_sign_value(cfg.ons_sign)
    T = cfg.horizon
    threshold = cfg.threshold

    pairs = [_as_generator(r) for r in rngs]
    gens = [g for g, _ in pairs]
    seeds = [s for _, s in pairs]
    n = len(gens)

    W = np.zeros((n, K, d))
    lam = np.zeros(n)
    a = np.ones(n)
    if mode == "oracle":
        pop = population if population is not None else population_summary(scenario, fmaps=fmaps)
        fixed_k = pop.a_star
        g_star = pop.witnesses[fixed_k].weights
        W[:, fixed_k, :g_star.size] = g_star
        lam[:] = pop.lambda_star
    S = np.zeros((n, K, d))
    E = np.zeros((n, K))  # earned payoff sums: the predictor's e and the selector's running sums
    N = np.zeros((n, K), dtype=np.int64)
    ell = np.zeros(n)
    ids = np.arange(n)

    tr = None
    if trace:
        tr = {
            "source": np.zeros((n, T), dtype=np.int64), "v": np.zeros((n, T)), "lam": np.zeros((n, T)),
            "eps": np.zeros((n, T)), "log_wealth": np.zeros((n, T)), "leader": np.zeros((n, T), dtype=np.int64),
            "x1": np.zeros((n, T)), "x2": np.zeros((n, T)), "witness": np.zeros((n, T, d)),
        }
    edges = None
    sel_counts = None
    if bucket_edges is not None:
        edges = np.asarray(bucket_edges, dtype=np.int64)
        sel_counts = np.zeros((len(edges), K), dtype=np.int64)

    final = {}

    def retire(mask, t_now, stopped):
        for row in np.flatnonzero(mask):
            i = ids[row]
            counts = N[row].tolist()
            means = [None if c == 0 else float(E[row, k] / c) for k, c in enumerate(counts)]
            regrets = regret_from_sums(S[row], E[row]).tolist()
            final[i] = TrialResult(bool(stopped), int(t_now) if stopped else None, T, float(ell[row]),
                                   counts, means, regrets, seeds[i])

    t = 0
    while t < T and ids.size:
        m = min(_CHUNK, T - t)
        U = np.stack([gens[i].random((m, 3)) for i in ids])
        for j in range(m):
            t += 1
            rows = np.arange(ids.size)
            eps = epsilon_schedule(t, C) if mode == "active" else 0.0
            if mode == "active" and K > 1:
                if tr is not None:
                    tr["leader"][ids, t - 1] = leader_index(E, N)
                p = selection_probabilities(E, N, eps)
                delta = draw_index(p, U[:, j, 0])
            else:
                delta = np.full(ids.size, 0 if mode == "active" else fixed_k, dtype=np.int64)
                if tr is not None:
                    tr["leader"][ids, t - 1] = delta
            dphi = np.zeros((ids.size, d))
            x1 = np.zeros(ids.size)
            x2 = np.zeros(ids.size)
            for k in range(K):
                sel = delta == k
                if not sel.any():
                    continue
                x1[sel], x2[sel] = scenario.sources[k].from_uniform(U[sel, j, 1], U[sel, j, 2])
                dphi[sel, :dims[k]] = fmaps[k].transform(x1[sel]) - fmaps[k].transform(x2[sel])
            w_pre = W[rows, delta]
            v = np.einsum("ij,ij->i", w_pre, dphi)
            lam_t = lam
            ell = ell + np.log1p(lam_t * v)
            if tr is not None:
                for key, val in (("source", delta), ("v", v), ("lam", lam_t), ("eps", eps), ("log_wealth", ell),
                                 ("x1", x1), ("x2", x2)):
                    tr[key][ids, t - 1] = val
                tr["witness"][ids, t - 1] = w_pre
            cnt = N[rows, delta] + 1
            if mode != "oracle":
                lam, a = ons_arrays(lam_t, a, v, sign)
                W[rows, delta] = oga_step(w_pre, dphi, cnt)
            S[rows, delta] += dphi
            E[rows, delta] += v
            N[rows, delta] = cnt
            if sel_counts is not None:
                b = np.searchsorted(edges, t, side="right") - 1
                if b >= 0:
                    sel_counts[b] += np.bincount(delta, minlength=K)
            if cfg.stop_at_rejection:
                hit = ell >= threshold
                if hit.any():
                    retire(hit, t, True)
                    keep = ~hit
                    ids, U = ids[keep], U[keep]
                    W, S, E, N, ell, lam, a = W[keep], S[keep], E[keep], N[keep], ell[keep], lam[keep], a[keep]
                    if not ids.size:
                        break
    retire(np.ones(ids.size, dtype=bool), T, False)

    results = [final[i] for i in range(n)]
    if tr is not None:
        for i, res in enumerate(results):
            L_i = res.slots
            res.trace = Trace(**{key: (arr[i, :L_i].copy()) for key, arr in tr.items()})
    return BatchOutput(results, None if edges is None else edges.tolist(), sel_counts)


def _single(scenario, cfg, rng, **kw) -> TrialResult:
    rng = cfg.seed if rng is None else rng
    return simulate(scenario, cfg, [rng], trace=cfg.keep_history, **kw).results[0]


def run_active(scenario, cfg: RunConfig, rng=None) -> TrialResult:
    """One trial of the active test. ``rng`` is a Generator or seed; defaults to ``cfg.seed``."""
    return _single(scenario, cfg, rng, mode="active")


def run_passive(scenario, fixed_k: int, cfg: RunConfig, rng=None) -> TrialResult:
    """The same test with every slot pinned to source ``fixed_k`` (0-based)."""
    return _single(scenario, cfg, rng, mode="passive", fixed_k=fixed_k)


def run_oracle(scenario, cfg: RunConfig, rng=None, population=None) -> TrialResult:
    """Constant-bet test on the best source with the population witness and Kelly bet."""
    return _single(scenario, cfg, rng, mode="oracle", population=population)


def oracle_wealth_path(v_stream, lam, alpha):
    """Log-wealth of a constant bet on a given payoff stream and its first passage.

    Returns ``(log_wealth_path, tau)`` with ``tau = None`` if the threshold
    is never reached.
    """
    ell = np.cumsum(np.log1p(lam * np.asarray(v_stream, dtype=float)))
    hit = np.flatnonzero(ell >= math.log(1.0 / alpha))
    return ell, (int(hit[0]) + 1 if hit.size else None)
