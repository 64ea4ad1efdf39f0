"""Single-layer factorizers: NMF, Semi-NMF, GNMF, WSF and WSF-MA.

All objectives use the half squared Frobenius norm so that the graph terms
enter the multiplicative ratios as ``lambda * H W`` (numerator) and
``lambda * H D`` (denominator):

    C(Z, H) = 1/2 ||X - Z H||_F^2 + 1/2 sum_i lambda_i Tr(H L_i H^T)

With ``L_i = D_i - W_i`` the gradient in ``H`` is
``Z^T Z H - Z^T X + sum_i lambda_i (H D_i - H W_i)``; splitting every term by
sign and placing the negative parts in the numerator gives the WSF update,
which for a single graph is the one-layer case of the Deep WSF rule.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import InvalidInputError, NumericError
from .numerics import as_matrix, nndsvd_init, pinv, pos_neg_split, svd_seminmf_init

log = logging.getLogger(__name__)

INITS = ("auto", "nndsvd", "svd_seminmf", "random")


@dataclass(frozen=True)
class TrainConfig:
    """Iteration control shared by every training routine.

    ``step`` is only used by gradient-based (nonlinear) fine-tuning.
    """

    max_iters: int = 1000
    kappa: float = 1e-6
    eta: float = 0.5
    init: str = "auto"
    seed: int = 0
    step: float = 1e-3

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if not self.kappa > 0:
            raise InvalidInputError("kappa must be > 0")
        if not 0 < self.eta <= 1:
            raise InvalidInputError("eta must lie in (0, 1]")
        if self.init not in INITS:
            raise InvalidInputError(f"init must be one of {INITS}, got {self.init!r}")
        if not self.step > 0:
            raise InvalidInputError("step must be > 0")

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class TrainReport:
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


@dataclass(frozen=True)
class FactorPair:
    Z: np.ndarray
    H: np.ndarray


def stop_rule(previous, current, kappa):
    """``E_{i-1} - E_i <= kappa * max(1, E_{i-1})``."""
    return previous - current <= kappa * max(1.0, previous)


def _check_k(X, k):
    p, n = X.shape
    if not (1 <= k <= min(p, n)):
        raise InvalidInputError(f"k={k} out of range [1, {min(p, n)}] for a {p}x{n} matrix")


def random_init(X, k, seed, nonneg_z=False):
    """Seeded random start: ``Z`` standard normal (uniform if ``nonneg_z``), ``H`` uniform(0, 1)."""
    rng = np.random.default_rng(seed)
    p, n = X.shape
    Z = rng.uniform(size=(p, k)) if nonneg_z else rng.standard_normal((p, k))
    return Z, rng.uniform(size=(k, n))


def initialize(X, k, cfg, nonneg=False):
    init = cfg.init
    if init == "auto":
        init = "nndsvd" if nonneg else "svd_seminmf"
    if init == "nndsvd":
        return nndsvd_init(X, k)
    if init == "svd_seminmf":
        return svd_seminmf_init(X, k)
    return random_init(X, k, cfg.seed, nonneg_z=nonneg)


def aggregate_graphs(graphs, lambdas, n):
    """Collapse ``sum_i lambda_i W_i`` and ``sum_i lambda_i d_i``.

    Returns ``(None, None)`` when there are no graphs.
    """
    if graphs is None:
        graphs = []
    if lambdas is None:
        lambdas = []
    graphs, lambdas = list(graphs), list(lambdas)
    if len(graphs) != len(lambdas):
        raise InvalidInputError(f"{len(graphs)} graphs but {len(lambdas)} lambdas")
    if not graphs:
        return None, None
    W = np.zeros((n, n))
    d = np.zeros(n)
    for graph, lam in zip(graphs, lambdas):
        if lam < 0:
            raise InvalidInputError("regularization weights must be >= 0")
        if graph is None:
            continue
        if graph.n != n:
            raise InvalidInputError(f"graph has {graph.n} nodes, data has {n} samples")
        W += lam * graph.W
        d += lam * graph.degree
    return W, d


def graph_penalty(H, W, d):
    """``Tr(H (diag(d) - W) H^T)`` for aggregated graph terms."""
    if W is None:
        return 0.0
    return float(np.sum(H * (H * d)) - np.sum(H * (H @ W)))


def half_sq_residual(X, R):
    return 0.5 * float(np.sum((X - R) ** 2))


def seminmf_h_step(A, X, H, eta, W=None, d=None, AtX=None):
    """Multiplicative Semi-NMF update of ``H`` for the model ``X ~ A H``.

    Optional aggregated graph terms add ``H W`` to the numerator and
    ``H diag(d)`` to the denominator.
    """
    B = A.T @ X if AtX is None else AtX
    G = pos_neg_split(A.T @ A)
    reg_num = None if W is None else H @ W
    reg_den = None if d is None else H * d
    return _kernels.mu_update(H, B, G.pos @ H, G.neg @ H, reg_num, reg_den, eta)


def _finite_or_raise(it, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite values during training", iteration=it)


def _seminmf_family(X, k, graphs, lambdas, cfg, init):
    X = as_matrix(X, "X")
    _check_k(X, k)
    cfg = cfg or TrainConfig()
    W, d = aggregate_graphs(graphs, lambdas, X.shape[1])
    Z, H = initialize(X, k, cfg) if init is None else (np.array(init[0], float), np.array(init[1], float))
    if H.shape != (k, X.shape[1]) or np.any(H < 0):
        raise InvalidInputError("initial H must be nonnegative with shape (k, n)")

    def objective(Z, H):
        return half_sq_residual(X, Z @ H) + 0.5 * graph_penalty(H, W, d)

    report = TrainReport([objective(Z, H)])
    for it in range(1, cfg.max_iters + 1):
        Z = X @ pinv(H)
        H = seminmf_h_step(Z, X, H, cfg.eta, W, d)
        _finite_or_raise(it, Z, H)
        if np.any(H < 0):
            raise NumericError("H left the nonnegative orthant", iteration=it)
        report.objective_trace.append(objective(Z, H))
        report.iterations = it
        if stop_rule(report.objective_trace[-2], report.objective_trace[-1], cfg.kappa):
            report.converged = True
            break
    log.debug("semi-nmf family: %d iterations, objective %.6g",
              report.iterations, report.objective_trace[-1])
    return FactorPair(Z, H), report


def semi_nmf(X, k, cfg=None, init=None):
    """Semi-NMF ``X ~ Z H`` with ``H >= 0`` (Ding et al. updates).

    Parameters
    ----------
    X : array_like, shape (p, n)
    k : int
        Number of components.
    cfg : TrainConfig, optional
    init : tuple of (Z0, H0), optional
        Explicit starting point; overrides ``cfg.init``.

    Returns
    -------
    FactorPair, TrainReport
    """
    return _seminmf_family(X, k, None, None, cfg, init)


def wsf(X, k, graph, lam, cfg=None, init=None):
    """Weakly-supervised Semi-NMF with one attribute graph."""
    return _seminmf_family(X, k, [graph], [lam], cfg, init)


def wsf_ma(X, k, graphs, lambdas, cfg=None, init=None):
    """WSF with several attribute graphs regularizing the same ``H``."""
    graphs, lambdas = list(graphs), list(lambdas)
    if not graphs:
        raise InvalidInputError("wsf_ma needs at least one graph")
    if len(graphs) != len(lambdas):
        raise InvalidInputError(f"{len(graphs)} graphs but {len(lambdas)} lambdas")
    return _seminmf_family(X, k, graphs, lambdas, cfg, init)


def _nmf_family(X, k, graph, lam, cfg, init):
    X = as_matrix(X, "X")
    if np.any(X < 0):
        raise InvalidInputError("NMF requires a nonnegative X")
    _check_k(X, k)
    cfg = cfg or TrainConfig()
    W, d = aggregate_graphs([] if graph is None else [graph], [] if graph is None else [lam], X.shape[1])
    Z, H = initialize(X, k, cfg, nonneg=True) if init is None else (np.array(init[0], float), np.array(init[1], float))
    if np.any(Z < 0) or np.any(H < 0):
        raise InvalidInputError("NMF initial factors must be nonnegative")

    def objective(Z, H):
        return half_sq_residual(X, Z @ H) + 0.5 * graph_penalty(H, W, d)

    zeros_z, zeros_h = np.zeros((k, X.shape[0])), np.zeros_like(H)
    report = TrainReport([objective(Z, H)])
    for it in range(1, cfg.max_iters + 1):
        HHt = H @ H.T
        Z = _kernels.mu_update(Z.T, H @ X.T, HHt @ Z.T, zeros_z, None, None, 1.0).T
        reg_num = None if W is None else H @ W
        reg_den = None if d is None else H * d
        H = _kernels.mu_update(H, Z.T @ X, (Z.T @ Z) @ H, zeros_h, reg_num, reg_den, 1.0)
        _finite_or_raise(it, Z, H)
        report.objective_trace.append(objective(Z, H))
        report.iterations = it
        if stop_rule(report.objective_trace[-2], report.objective_trace[-1], cfg.kappa):
            report.converged = True
            break
    return FactorPair(Z, H), report


def nmf_mul(X, k, cfg=None, init=None):
    """Lee-Seung multiplicative NMF (exponent 1, ``cfg.eta`` ignored)."""
    return _nmf_family(X, k, None, 0.0, cfg, init)


def gnmf(X, k, graph, lam, cfg=None, init=None):
    """Graph-regularized NMF (Cai et al.) with ``lam * Tr(H L H^T) / 2`` penalty."""
    if lam < 0:
        raise InvalidInputError("lambda must be >= 0")
    return _nmf_family(X, k, graph, lam, cfg, init)
