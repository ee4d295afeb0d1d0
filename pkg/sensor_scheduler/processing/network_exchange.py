"""Balanced measurement exchange between sensing nodes through a relay.

The relay picks K triplets (dst, src, meas): local measurement `meas` of node `src`
is delivered to node `dst`. The utility u(S) = f(S) + gamma * g(S) adds to the
network-wide MSE reduction f a balance term g(S) = sum_i log(1 + |O_i| / |L_i|)
that rewards spreading the deliveries across nodes.
"""
import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from .curvature import CurvatureReport, EXACT, curvature_from_gains
from .errors import InfeasibleBudgetError, InstanceTooLargeError, InvalidParamsError, InvalidTripletError
from .scheduler import batch_information_gain, information_gain, rank_one_downdate
from .state_space import filtered_covariance, selection_matrix, spd_inverse, symmetrize, validate_spd

logger = logging.getLogger(__name__)

BRUTE_FORCE_CAP = 2_000_000
CURVATURE_CAP = 12


class ExchangeTriplet(NamedTuple):
    dst: int
    src: int
    meas: int


@dataclass(frozen=True)
class SensingNode:
    H: np.ndarray        # local observation rows, one per measurement in L_i
    sigma: float
    F_inv: np.ndarray    # inverse Fisher matrix before (or during) the exchange
    received: int = 0

    @property
    def local_size(self) -> int:
        return self.H.shape[0]

    @property
    def mse(self) -> float:
        return float(np.trace(self.F_inv))


@dataclass(frozen=True)
class ExchangeNetwork:
    nodes: Tuple[SensingNode, ...]
    A_dyn: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        if not self.nodes:
            raise InvalidParamsError("network needs at least one node")
        nodes = []
        for i, node in enumerate(self.nodes):
            H = np.atleast_2d(np.asarray(node.H, dtype=float))
            if H.shape[0] < 1:
                raise InvalidParamsError(f"node {i} has no local measurements")
            if not node.sigma > 0:
                raise InvalidParamsError(f"node {i} noise std must be positive, got {node.sigma}")
            F_inv = validate_spd(node.F_inv, f"F_inv of node {i}")
            if H.shape[1] != F_inv.shape[0]:
                raise InvalidParamsError(f"node {i} observation rows have length {H.shape[1]}, state dimension is {F_inv.shape[0]}")
            if nodes and F_inv.shape != nodes[0].F_inv.shape:
                raise InvalidParamsError(f"node {i} has state dimension {F_inv.shape[0]}, "
                                         f"node 0 has {nodes[0].F_inv.shape[0]}")
            nodes.append(replace(node, H=H, F_inv=F_inv))
        dim = nodes[0].F_inv.shape
        A_dyn = np.asarray(self.A_dyn, dtype=float)
        if A_dyn.shape != dim:
            raise InvalidParamsError(f"A_dyn has shape {A_dyn.shape}, expected {dim}")
        Q = validate_spd(self.Q, "Q")
        if Q.shape != dim:
            raise InvalidParamsError(f"Q has shape {Q.shape}, expected {dim}")
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "A_dyn", A_dyn)
        object.__setattr__(self, "Q", Q)

    @staticmethod
    def _unchecked(nodes, A_dyn, Q) -> "ExchangeNetwork":
        # internal updates keep already-validated matrices
        network = object.__new__(ExchangeNetwork)
        object.__setattr__(network, "nodes", tuple(nodes))
        object.__setattr__(network, "A_dyn", A_dyn)
        object.__setattr__(network, "Q", Q)
        return network

    @property
    def m_nodes(self) -> int:
        return len(self.nodes)

    @property
    def state_dim(self) -> int:
        return self.nodes[0].F_inv.shape[0]

    @property
    def local_sizes(self) -> Tuple[int, ...]:
        return tuple(node.local_size for node in self.nodes)

    @property
    def received_counts(self) -> Tuple[int, ...]:
        return tuple(node.received for node in self.nodes)

    def row(self, triplet: ExchangeTriplet) -> np.ndarray:
        return self.nodes[triplet.src].H[triplet.meas]

    @staticmethod
    def from_priors(H_list: Sequence[np.ndarray], sigmas: Sequence[float],
                    P_pred_list: Sequence[np.ndarray], A_dyn, Q) -> "ExchangeNetwork":
        """Nodes whose F_{i,t}^{-1} fuses the prediction P_{i,t-1} with the local measurements."""
        if not len(H_list) == len(sigmas) == len(P_pred_list):
            raise InvalidParamsError("H_list, sigmas and P_pred_list must have one entry per node")
        nodes = tuple(SensingNode(H=np.asarray(H, dtype=float), sigma=float(sigma),
                                  F_inv=filtered_covariance(P, H, sigma))
                      for H, sigma, P in zip(H_list, sigmas, P_pred_list))
        return ExchangeNetwork(nodes=nodes, A_dyn=A_dyn, Q=Q)


@dataclass(frozen=True)
class ExchangeSchedule:
    triplets: Tuple[ExchangeTriplet, ...]
    gamma: float
    K: int
    utility: float
    per_node_mse: Tuple[float, ...]
    network_after: ExchangeNetwork
    truncated: bool = False


def _check_triplet(network: ExchangeNetwork, triplet: ExchangeTriplet):
    dst, src, meas = triplet
    m = network.m_nodes
    if not (0 <= dst < m and 0 <= src < m):
        raise InvalidTripletError(f"{triplet}: node index out of range for {m} nodes")
    if dst == src:
        raise InvalidTripletError(f"{triplet}: a node cannot receive its own measurement")
    if not 0 <= meas < network.nodes[src].local_size:
        raise InvalidTripletError(f"{triplet}: node {src} has {network.nodes[src].local_size} local measurements")


def admissible_triplets(network: ExchangeNetwork) -> List[ExchangeTriplet]:
    """All (dst, src, meas) with dst != src and meas < |L_src|, in lexicographic order."""
    return [ExchangeTriplet(dst, src, meas)
            for dst in range(network.m_nodes)
            for src in range(network.m_nodes) if src != dst
            for meas in range(network.nodes[src].local_size)]


def g_marginal(counts: Sequence[int], local_sizes: Sequence[int], dst: int) -> float:
    """log(1 + 1 / (|O_dst| + |L_dst|))."""
    if local_sizes[dst] < 1:
        raise InvalidParamsError(f"node {dst} needs at least one local measurement")
    return math.log1p(1.0 / (counts[dst] + local_sizes[dst]))


def f_marginal(network: ExchangeNetwork, triplet: ExchangeTriplet) -> float:
    triplet = ExchangeTriplet(*triplet)
    _check_triplet(network, triplet)
    return information_gain(network.nodes[triplet.dst].F_inv, network.row(triplet),
                            network.nodes[triplet.src].sigma**2)


def _check_gamma(gamma: float):
    if not gamma >= 0:
        raise InvalidParamsError(f"regularization gamma must be non-negative, got {gamma}")


def utility_marginal(network: ExchangeNetwork, triplet: ExchangeTriplet, gamma: float) -> float:
    _check_gamma(gamma)
    triplet = ExchangeTriplet(*triplet)
    f = f_marginal(network, triplet)
    return f + gamma * g_marginal(network.received_counts, network.local_sizes, triplet.dst)


def deliver(network: ExchangeNetwork, triplet: ExchangeTriplet) -> ExchangeNetwork:
    """Fold one delivered measurement into the receiving node's inverse Fisher matrix."""
    triplet = ExchangeTriplet(*triplet)
    _check_triplet(network, triplet)
    node = network.nodes[triplet.dst]
    F_inv = rank_one_downdate(node.F_inv, network.row(triplet), network.nodes[triplet.src].sigma**2)
    nodes = list(network.nodes)
    nodes[triplet.dst] = replace(node, F_inv=F_inv, received=node.received + 1)
    return ExchangeNetwork._unchecked(nodes, network.A_dyn, network.Q)


def _received_after(network: ExchangeNetwork, triplets) -> List[List[ExchangeTriplet]]:
    inbox = [[] for _ in range(network.m_nodes)]
    for t in triplets:
        inbox[t.dst].append(t)
    return inbox


def _node_inverses(network: ExchangeNetwork, inbox) -> List[np.ndarray]:
    """Per-node inverse Fisher matrices after delivering `inbox`, by direct inversion."""
    inverses = []
    for node, received in zip(network.nodes, inbox):
        if not received:
            inverses.append(node.F_inv)
            continue
        F = spd_inverse(node.F_inv)
        for t in received:
            h = network.row(t)
            F = F + np.outer(h, h) / network.nodes[t.src].sigma**2
        inverses.append(spd_inverse(symmetrize(F)))
    return inverses


def utility(network: ExchangeNetwork, triplets: Sequence[ExchangeTriplet], gamma: float) -> float:
    """u(S) = f(S) + gamma g(S) from scratch, relative to the network's current state."""
    _check_gamma(gamma)
    triplets = [ExchangeTriplet(*t) for t in triplets]
    if len(set(triplets)) != len(triplets):
        raise InvalidTripletError("a triplet may be delivered only once")
    for t in triplets:
        _check_triplet(network, t)
    inbox = _received_after(network, triplets)
    inverses = _node_inverses(network, inbox)
    f = sum(node.mse - float(np.trace(F_inv)) for node, F_inv in zip(network.nodes, inverses))
    g = sum(math.log1p(len(received) / (node.local_size + node.received))
            for node, received in zip(network.nodes, inbox))
    return f + gamma * g


def greedy_exchange(network: ExchangeNetwork, K: int, gamma: float, seed: Optional[int] = None) -> ExchangeSchedule:
    """Greedy relay schedule of K deliveries; deterministic, `seed` is ignored."""
    _check_gamma(gamma)
    if K < 1:
        raise InfeasibleBudgetError(f"exchange budget K must be positive, got {K}")
    candidates = admissible_triplets(network)
    if not candidates:
        raise InfeasibleBudgetError("network has no admissible triplets")
    truncated = K > len(candidates)
    if truncated:
        logger.warning("budget K=%d exceeds the %d admissible triplets, truncating", K, len(candidates))

    dst = np.array([t.dst for t in candidates])
    rows = np.array([network.row(t) for t in candidates])
    noise = np.array([network.nodes[t.src].sigma**2 for t in candidates])
    by_dst = [np.flatnonzero(dst == d) for d in range(network.m_nodes)]

    f_gain = np.empty(len(candidates))
    for d, idx in enumerate(by_dst):
        f_gain[idx] = batch_information_gain(network.nodes[d].F_inv, rows[idx], noise[idx])
    taken = np.zeros(len(candidates), dtype=bool)

    chosen, total = [], 0.0
    for _ in range(min(K, len(candidates))):
        g_gain = np.array([g_marginal(network.received_counts, network.local_sizes, d)
                           for d in range(network.m_nodes)])
        util = np.where(taken, -np.inf, f_gain + gamma * g_gain[dst])
        # first maximum -> lexicographically smallest triplet on ties
        best = int(np.argmax(util))
        triplet = candidates[best]
        total += float(util[best])
        chosen.append(triplet)
        taken[best] = True
        network = deliver(network, triplet)
        idx = by_dst[triplet.dst]
        f_gain[idx] = batch_information_gain(network.nodes[triplet.dst].F_inv, rows[idx], noise[idx])
        logger.debug("delivered %s (utility gain %.6g)", triplet, util[best])

    return ExchangeSchedule(triplets=tuple(chosen), gamma=float(gamma), K=K, utility=total,
                            per_node_mse=tuple(node.mse for node in network.nodes),
                            network_after=network, truncated=truncated)


def brute_force_exchange(network: ExchangeNetwork, K: int, gamma: float,
                         cap: int = BRUTE_FORCE_CAP) -> ExchangeSchedule:
    """Exhaustive maximizer of u over K-subsets of admissible triplets."""
    _check_gamma(gamma)
    candidates = admissible_triplets(network)
    size = min(K, len(candidates))
    if size < 1:
        raise InfeasibleBudgetError(f"exchange budget K must be positive, got {K}")
    total = math.comb(len(candidates), size)
    if total > cap:
        raise InstanceTooLargeError(f"{total} candidate schedules exceeds the cap of {cap}")

    best, best_value = None, -np.inf
    for subset in itertools.combinations(candidates, size):
        value = utility(network, subset, gamma)
        if value > best_value:
            best, best_value = subset, value
    after = network
    for t in best:
        after = deliver(after, t)
    return ExchangeSchedule(triplets=tuple(best), gamma=float(gamma), K=K, utility=best_value,
                            per_node_mse=tuple(node.mse for node in after.nodes),
                            network_after=after, truncated=K > len(candidates))


def exact_utility_curvature(network: ExchangeNetwork, gamma: float, cap: int = CURVATURE_CAP) -> CurvatureReport:
    """Element-wise curvature of u over the admissible triplets (exhaustive)."""
    _check_gamma(gamma)
    candidates = admissible_triplets(network)
    N = len(candidates)
    if N > cap:
        raise InstanceTooLargeError(f"{N} admissible triplets exceeds the curvature cap of {cap}")
    if N < 2:
        raise InvalidParamsError("curvature needs at least two admissible triplets")

    gains = np.full((1 << N, N), np.nan)
    for mask in range(1 << N):
        members = [candidates[i] for i in range(N) if mask >> i & 1]
        inbox = _received_after(network, members)
        inverses = _node_inverses(network, inbox)
        counts = [node.received + len(r) for node, r in zip(network.nodes, inbox)]
        for i, t in enumerate(candidates):
            if mask >> i & 1:
                continue
            gains[mask, i] = (information_gain(inverses[t.dst], network.row(t), network.nodes[t.src].sigma**2)
                              + gamma * g_marginal(counts, network.local_sizes, t.dst))
    C_l, skipped = curvature_from_gains(gains)
    C_max = float(np.nanmax(C_l)) if np.any(np.isfinite(C_l)) else math.nan
    return CurvatureReport(C_l=C_l, C_max=C_max, mode=EXACT, skipped=skipped)


@dataclass(frozen=True)
class Proposition1Result:
    condition_holds: bool
    bound: float
    lambda_M: float
    lambda_m: float


def proposition1_bound(network: ExchangeNetwork, H_stacked=None) -> Proposition1Result:
    """Curvature bound (2 lambda_M / lambda_m)^3, applicable when the stacked observations are weak enough."""
    sigmas = np.array([node.sigma for node in network.nodes])
    if not np.allclose(sigmas, sigmas[0], rtol=1e-12, atol=0.0):
        raise InvalidParamsError("the curvature bound assumes a common measurement noise across nodes")
    if H_stacked is None:
        H_stacked = np.vstack([node.H for node in network.nodes])
    H_stacked = np.asarray(H_stacked, dtype=float)

    # eigenvalues of F_i are reciprocals of those of F_i^{-1}
    spectra = [la.eigvalsh(node.F_inv) for node in network.nodes]
    lambda_M = max(1.0 / s[0] for s in spectra)
    lambda_m = min(1.0 / s[-1] for s in spectra)
    strength = la.eigvalsh(H_stacked.T @ H_stacked)[-1] / sigmas[0]**2
    holds = bool(strength <= lambda_M)
    if not holds:
        logger.info("curvature condition fails: %.4g > lambda_M=%.4g", strength, lambda_M)
    return Proposition1Result(condition_holds=holds, bound=(2.0 * lambda_M / lambda_m)**3,
                              lambda_M=lambda_M, lambda_m=lambda_m)


@dataclass(frozen=True)
class BalanceMetrics:
    total_mse: float
    pairwise_mse_distance_sum: float
    per_node_mse: Tuple[float, ...]


def balance_metrics(network_after: ExchangeNetwork) -> BalanceMetrics:
    mse = np.array([node.mse for node in network_after.nodes])
    pairwise = float(sum(abs(a - b) for a, b in itertools.combinations(mse, 2)))
    return BalanceMetrics(total_mse=float(mse.sum()), pairwise_mse_distance_sum=pairwise,
                          per_node_mse=tuple(float(v) for v in mse))


def _predict(P: np.ndarray, A_dyn: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return symmetrize(A_dyn @ P @ A_dyn.T + Q)


def advance(network_after: ExchangeNetwork, H_next: Optional[Sequence[np.ndarray]] = None) -> ExchangeNetwork:
    """Next step: P_{i,t} = A P_{L_i u O_i} A^T + Q, then fuse the next local measurements."""
    if H_next is None:
        H_next = [node.H for node in network_after.nodes]
    predictions = [_predict(node.F_inv, network_after.A_dyn, network_after.Q) for node in network_after.nodes]
    return ExchangeNetwork.from_priors(H_next, [node.sigma for node in network_after.nodes],
                                       predictions, network_after.A_dyn, network_after.Q)


def random_observations(rng: np.random.Generator, state_dim: int, ranks: Sequence[int]) -> List[np.ndarray]:
    """Partial observation matrices selecting `rank` random state components per node."""
    return [selection_matrix(rng, state_dim, r) for r in ranks]


@dataclass(frozen=True)
class ExchangeRun:
    per_node_mse: np.ndarray      # (T, m_nodes), after the exchange at each step
    total_mse: np.ndarray
    pairwise_mse: np.ndarray
    utility: np.ndarray


def simulate_exchange(H_list: Sequence[np.ndarray], sigmas: Sequence[float], A_dyn, Q, Sigma_x,
                      K: int, gamma: float, T: int) -> ExchangeRun:
    """Run the relay for T steps; K = 0 means local filtering only."""
    if T < 1:
        raise InvalidParamsError(f"horizon must be at least 1, got {T}")
    A_dyn = np.asarray(A_dyn, dtype=float)
    Q = np.asarray(Q, dtype=float)
    prior = _predict(validate_spd(Sigma_x, "Sigma_x"), A_dyn, Q)
    network = ExchangeNetwork.from_priors(H_list, sigmas, [prior] * len(H_list), A_dyn, Q)

    per_node, util = [], []
    for _ in range(T):
        if K > 0:
            schedule = greedy_exchange(network, K, gamma)
            after, value = schedule.network_after, schedule.utility
        else:
            after, value = network, 0.0
        per_node.append([node.mse for node in after.nodes])
        util.append(value)
        network = advance(after)

    per_node = np.array(per_node)
    pairwise = np.array([sum(abs(a - b) for a, b in itertools.combinations(row, 2)) for row in per_node])
    return ExchangeRun(per_node_mse=per_node, total_mse=per_node.sum(axis=1),
                       pairwise_mse=pairwise, utility=np.array(util))


__all__ = [
    "ExchangeTriplet", "SensingNode", "ExchangeNetwork", "ExchangeSchedule", "ExchangeRun",
    "Proposition1Result", "BalanceMetrics",
    "admissible_triplets", "g_marginal", "f_marginal", "utility_marginal", "utility",
    "deliver", "greedy_exchange", "brute_force_exchange", "exact_utility_curvature",
    "proposition1_bound", "balance_metrics", "advance", "random_observations", "simulate_exchange",
]
