"""Synthetic multi-dataset generator.

Builds a community partition, a degree-corrected block-model network over the
predictors, a covariance matrix from the weighted network, an overlap-structured
coefficient panel and the responses. Every random draw comes from a substream
keyed by ``(replicate, purpose)`` under one root seed, so replicates can be
generated in any order (or in parallel) with identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .core import CommunityPartition, MultiDataset

PURPOSES = {
    "partition": 0,
    "degrees": 1,
    "network": 2,
    "weights": 3,
    "effects": 4,
    "design": 5,
    "noise": 6,
}

CORRELATION_KINDS = ("structured", "unstructured", "independence")
COEFFICIENT_RULES = ("constant_half", "uniform_02_1", "stage_graded")


def substream(seed: int, replicate: int, purpose: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate), PURPOSES[purpose]))
    return np.random.Generator(np.random.PCG64(ss))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class NetworkSpec:
    gamma: float = 2.5
    mean_degree: float = 10.0
    q_within_range: tuple[float, float] = (0.3, 0.5)
    q_between: float = 0.02
    weight_within_range: tuple[float, float] = (0.5, 1.0)
    weight_between_range: tuple[float, float] = (0.2, 0.5)
    d_min: int = 3

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("power-law exponent must exceed 1")
        if not self.mean_degree >= 1:
            raise ValueError("mean degree must be at least 1")
        for name in ("q_within_range", "weight_within_range", "weight_between_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is not ordered")

    def d_max(self, p: int) -> int:
        return max(self.d_min, math.isqrt(int(self.mean_degree * p)))


@dataclass(frozen=True)
class EffectScheme:
    r: int = 100
    rho: tuple[float, float, float] = (0.4, 0.1, 0.5)
    coefficient_rule: str = "constant_half"

    def __post_init__(self):
        if any(x < 0 for x in self.rho) or abs(sum(self.rho) - 1.0) > 1e-12:
            raise ValueError(f"overlap proportions {self.rho} must be non-negative and sum to 1")
        if self.coefficient_rule not in COEFFICIENT_RULES:
            raise ValueError(f"unknown coefficient rule {self.coefficient_rule!r}")
        if self.r < 0:
            raise ValueError("r must be non-negative")


@dataclass(frozen=True)
class SimScenario:
    p: int = 1000
    K: int = 3
    n: int = 200
    L: int = 50
    network: NetworkSpec = field(default_factory=NetworkSpec)
    correlation: str = "structured"
    effects: EffectScheme = field(default_factory=EffectScheme)
    model: str = "lr"
    seed: int = 0
    rescale_unit_diagonal: bool = False

    def __post_init__(self):
        if self.correlation not in CORRELATION_KINDS:
            raise ValueError(f"unknown correlation kind {self.correlation!r}")
        if self.model not in ("lr", "logit"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.effects.r > self.p:
            raise ValueError("r cannot exceed p")
        if self.K != 3 and (self.effects.rho[1] > 0 or self.effects.coefficient_rule == "stage_graded"):
            raise ValueError("half-overlapping communities and stage-graded coefficients need K = 3")


@dataclass
class CorrelationModel:
    kind: str
    matrix: np.ndarray
    raw: np.ndarray | None = None
    lambda_min: float | None = None


@dataclass
class SimReplicate:
    data: MultiDataset
    partition: CommunityPartition
    panel: np.ndarray
    labels: np.ndarray
    correlation: CorrelationModel
    edges: np.ndarray


def community_size_bounds(p: int, L: int) -> tuple[int, int]:
    return -(-3 * p // (4 * L)), (5 * p) // (4 * L)


def assign_communities(p: int, L: int, seed=None) -> CommunityPartition:
    """Contiguous communities with sizes in ``[ceil(3p/4L), floor(5p/4L)]`` summing to p."""
    if L < 1:
        raise ValueError("need at least one community")
    lo, hi = community_size_bounds(p, L)
    if L == 1:
        lo = hi = p
    if not (lo >= 1 and L * lo <= p <= L * hi):
        raise ValueError(f"cannot split p={p} into L={L} communities of size {lo}..{hi}")
    rng = _rng(seed)
    sizes = rng.integers(lo, hi + 1, size=L)
    i = 0
    while sizes.sum() != p:
        if sizes.sum() > p and sizes[i] > lo:
            sizes[i] -= 1
        elif sizes.sum() < p and sizes[i] < hi:
            sizes[i] += 1
        i = (i + 1) % L
    return CommunityPartition.from_sizes(sizes)


def degree_distribution(p: int, spec: NetworkSpec) -> tuple[np.ndarray, np.ndarray]:
    support = np.arange(spec.d_min, spec.d_max(p) + 1)
    w = support.astype(float) ** (-spec.gamma)
    return support, w / w.sum()


def sample_degrees(p: int, spec: NetworkSpec, seed=None, size: int | None = None) -> np.ndarray:
    """Discrete power law ``P(d) ~ d^-gamma`` on ``[d_min, floor(sqrt(<d> p))]``.

    ``size`` defaults to ``p`` (one degree per node).
    """
    support, prob = degree_distribution(p, spec)
    return _rng(seed).choice(support, size=p if size is None else size, p=prob)


def community_affinity(L: int, spec: NetworkSpec, seed=None) -> np.ndarray:
    q = np.full((L, L), spec.q_between)
    lo, hi = spec.q_within_range
    q[np.diag_indices(L)] = _rng(seed).uniform(lo, hi, size=L)
    return q


def edge_probabilities(partition: CommunityPartition, degrees: np.ndarray, q: np.ndarray,
                       mean_degree: float) -> np.ndarray:
    """``p_ij = <d> p d_i d_j q_{m_i m_j} / Z`` clamped at 1; Z sums over all (i, j)."""
    m = partition.assignment
    d = np.asarray(degrees, dtype=float)
    W = np.outer(d, d) * q[np.ix_(m, m)]
    Z = W.sum()
    return np.minimum(mean_degree * partition.p * W / Z, 1.0)


def build_network(partition: CommunityPartition, degrees: np.ndarray, spec: NetworkSpec,
                  seed=None, q: np.ndarray | None = None) -> np.ndarray:
    """Sample an undirected simple graph; returns an ``E x 2`` array with ``i < j``."""
    rng = _rng(seed)
    if q is None:
        q = community_affinity(partition.L, spec, rng)
    P = edge_probabilities(partition, degrees, q, spec.mean_degree)
    iu, ju = np.triu_indices(partition.p, k=1)
    hit = rng.random(iu.size) < P[iu, ju]
    return np.column_stack([iu[hit], ju[hit]])


def shift_to_floor(S0: np.ndarray) -> tuple[np.ndarray, float]:
    """Shift the spectrum so the smallest eigenvalue is exactly ``1/p``."""
    p = S0.shape[0]
    lam_min = float(np.linalg.eigvalsh(S0)[0])
    return S0 - (lam_min - 1.0 / p) * np.eye(p), lam_min


def correlation_matrix(kind: str, partition: CommunityPartition, edges: np.ndarray | None,
                       spec: NetworkSpec = NetworkSpec(), seed=None,
                       rescale_unit_diagonal: bool = False) -> CorrelationModel:
    p = partition.p
    if kind == "independence":
        return CorrelationModel(kind, np.eye(p))
    rng = _rng(seed)
    if kind == "structured":
        if edges is None:
            raise ValueError("structured correlation needs an edge list")
        edges = np.asarray(edges, dtype=int).reshape(-1, 2)
        i, j = edges[:, 0], edges[:, 1]
        same = partition.assignment[i] == partition.assignment[j]
        w = np.where(
            same,
            rng.uniform(*spec.weight_within_range, size=len(edges)),
            rng.uniform(*spec.weight_between_range, size=len(edges)),
        )
        S0 = np.zeros((p, p))
        S0[i, j] = w
        S0[j, i] = w
    elif kind == "unstructured":
        iu, ju = np.triu_indices(p, k=1)
        S0 = np.zeros((p, p))
        S0[iu, ju] = rng.uniform(0.2, 1.0, size=iu.size)
        S0 = S0 + S0.T
    else:
        raise ValueError(f"unknown correlation kind {kind!r}")
    np.fill_diagonal(S0, 1.0)
    S, lam_min = shift_to_floor(S0)
    if rescale_unit_diagonal:
        S = S / S[0, 0]
    return CorrelationModel(kind, S, S0, lam_min)


def _allocate(r: int, capacity: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Spread r units round-robin over communities in random order, respecting capacity."""
    if capacity.sum() < r:
        raise ValueError(f"cannot place r={r} effects: community capacity is {int(capacity.sum())}")
    order = rng.permutation(capacity.size)
    counts = np.zeros(capacity.size, dtype=int)
    left = r
    while left:
        for l in order:
            if left and counts[l] < capacity[l]:
                counts[l] += 1
                left -= 1
    return counts


def gen_effects(partition: CommunityPartition, scheme: EffectScheme, K: int = 3,
                seed=None) -> tuple[np.ndarray, np.ndarray]:
    """True ``p x K`` coefficient panel and ``L x (K-1)`` commonality labels.

    Communities are split into all-, half- and non-overlapping categories with
    counts ``floor(rho * L)`` (remainder to non-overlapping). Each dataset gets
    ``c_l`` important predictors in community ``l``:

    * all-overlapping: the same positions and values in every dataset;
    * half-overlapping (K = 3): dataset 2 holds ``c_l`` positions; the first
      ``ceil(c_l/2)`` are shared (same values) with dataset 1 and the rest with
      dataset 3; datasets 1 and 3 fill up with their own positions;
    * non-overlapping: disjoint positions in every dataset.

    A label is True when the two adjacent blocks are bitwise equal.
    """
    rng = _rng(seed)
    rho_a, rho_h, _ = scheme.rho
    rule = scheme.coefficient_rule
    if K != 3 and (rho_h > 0 or rule == "stage_graded"):
        raise ValueError("half-overlapping communities and stage-graded coefficients need K = 3")
    L = partition.L
    n_a = int(math.floor(rho_a * L + 1e-9))
    n_h = int(math.floor(rho_h * L + 1e-9))
    category = np.full(L, 2)
    perm = rng.permutation(L)
    category[perm[:n_a]] = 0
    category[perm[n_a:n_a + n_h]] = 1

    sizes = np.asarray(partition.sizes)
    capacity = np.where(category == 0, sizes, np.where(category == 1, sizes // 2, sizes // K))
    counts = _allocate(scheme.r, capacity, rng)

    def draw(kind: str, size: int) -> np.ndarray:
        if rule == "constant_half":
            return np.full(size, 0.5)
        if rule == "uniform_02_1":
            return rng.uniform(0.2, 1.0, size)
        lo, hi = {"first": (0.1, 0.3), "middle": (0.4, 0.7), "last": (0.8, 1.0)}[kind]
        return rng.uniform(lo, hi, size)

    panel = np.zeros((partition.p, K))
    for l, members in enumerate(partition.groups):
        c = counts[l]
        if c == 0:
            continue
        pos = members[rng.permutation(members.size)]
        if category[l] == 0:
            idx = pos[:c]
            panel[idx, :] = draw("middle", c)[:, None]
        elif category[l] == 1:
            core = pos[:c]
            h = -(-c // 2)
            own1 = pos[c:c + c // 2]
            own3 = pos[c + c // 2:2 * c]
            vals = draw("middle", c)
            panel[core, 1] = vals
            panel[core[:h], 0] = vals[:h]
            panel[core[h:], 2] = vals[h:]
            panel[own1, 0] = draw("first", own1.size)
            panel[own3, 2] = draw("last", own3.size)
        else:
            for k in range(K):
                idx = pos[k * c:(k + 1) * c]
                kind = "middle" if K != 3 else ("first", "middle", "last")[k]
                panel[idx, k] = draw(kind, c)
    labels = commonality_labels(panel, partition)
    return panel, labels


def commonality_labels(panel: np.ndarray, partition: CommunityPartition) -> np.ndarray:
    K = panel.shape[1]
    out = np.zeros((partition.L, K - 1), dtype=bool)
    for l, g in enumerate(partition.groups):
        for k in range(K - 1):
            out[l, k] = np.array_equal(panel[g, k], panel[g, k + 1])
    return out


def gen_design(corr: CorrelationModel, n: list[int], seed=None) -> list[np.ndarray]:
    """Draw ``X^k`` with i.i.d. rows from ``N(0, Sigma)``."""
    rng = _rng(seed)
    p = corr.matrix.shape[0]
    if corr.kind == "independence":
        return [rng.standard_normal((nk, p)) for nk in n]
    C = np.linalg.cholesky(corr.matrix)
    return [rng.standard_normal((nk, p)) @ C.T for nk in n]


def gen_responses(X: list[np.ndarray], panel: np.ndarray, model: str = "lr",
                  seed=None) -> MultiDataset:
    """Linear responses with N(0, 1) noise, or Bernoulli draws through the logit link."""
    rng = _rng(seed)
    ys = []
    for k, Xk in enumerate(X):
        lin = Xk @ panel[:, k]
        if model == "lr":
            ys.append(lin + rng.standard_normal(Xk.shape[0]))
        elif model == "logit":
            ys.append((rng.random(Xk.shape[0]) < special.expit(lin)).astype(float))
        else:
            raise ValueError(f"unknown model {model!r}")
    return MultiDataset(X, ys)


def simulate(scenario: SimScenario, replicate: int = 0) -> SimReplicate:
    """Generate one replicate; a pure function of ``(scenario, replicate)``."""
    s = scenario

    def rs(purpose):
        return substream(s.seed, replicate, purpose)

    partition = assign_communities(s.p, s.L, rs("partition"))
    edges = np.zeros((0, 2), dtype=int)
    if s.correlation == "structured":
        degrees = sample_degrees(s.p, s.network, rs("degrees"))
        edges = build_network(partition, degrees, s.network, rs("network"))
    corr = correlation_matrix(s.correlation, partition, edges, s.network, rs("weights"),
                              s.rescale_unit_diagonal)
    panel, labels = gen_effects(partition, s.effects, s.K, rs("effects"))
    X = gen_design(corr, [s.n] * s.K, rs("design"))
    data = gen_responses(X, panel, s.model, rs("noise"))
    return SimReplicate(data, partition, panel, labels, corr, edges)
