"""Deep Semi-NMF and Deep WSF.

A model with ``m`` layers approximates

    X ~ Z_1 g(Z_2 g(... g(Z_m H_m)))

where every ``Z_i`` is mixed-sign and ``H_m >= 0``. The implicit layer
features are ``H_{i-1} = g(Z_i H_i)``; with ``g`` the identity the model is
the linear Deep Semi-NMF and intermediate ``H_i`` are kept as explicit,
multiplicatively updated variables.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericError, ShapeError
from .numerics import as_matrix, pinv
from .shallow import (
    TrainConfig,
    TrainReport,
    graph_penalty,
    half_sq_residual,
    seminmf_h_step,
    semi_nmf,
    stop_rule,
    wsf,
)

log = logging.getLogger(__name__)

STANH_ALPHA = 1.7159
STANH_BETA = 2.0 / 3.0
KINDS = ("identity", "stanh", "square")


@dataclass(frozen=True)
class Nonlinearity:
    """Elementwise activation with derivative and clipped inverse."""

    kind: str = "identity"
    alpha: float = STANH_ALPHA
    beta: float = STANH_BETA
    delta: float = 1e-7

    def __post_init__(self):
        kind = {"sq": "square", "linear": "identity"}.get(self.kind, self.kind)
        if kind not in KINDS:
            raise InvalidInputError(f"unknown nonlinearity {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)

    @property
    def is_identity(self):
        return self.kind == "identity"

    def __call__(self, x):
        if self.kind == "identity":
            return x
        if self.kind == "stanh":
            return self.alpha * np.tanh(self.beta * x)
        return x * x

    def grad(self, x):
        if self.kind == "identity":
            return np.ones_like(x)
        if self.kind == "stanh":
            t = np.tanh(self.beta * x)
            return self.alpha * self.beta * (1.0 - t * t)
        return 2.0 * x

    def inverse(self, y):
        """Return ``(g^-1(y), clipped)``; out-of-range arguments are clipped first."""
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "identity":
            return y.copy(), False
        if self.kind == "stanh":
            bound = self.alpha - self.delta
            clipped = bool(np.any(np.abs(y) > bound))
            yc = np.clip(y, -bound, bound)
            return np.arctanh(yc / self.alpha) / self.beta, clipped
        clipped = bool(np.any(y < 0))
        return np.sqrt(np.maximum(y, 0.0)), clipped

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "stanh":
            d.update(alpha=self.alpha, beta=self.beta, delta=self.delta)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


IDENTITY = Nonlinearity("identity")


def as_nonlinearity(g):
    if g is None:
        return IDENTITY
    if isinstance(g, Nonlinearity):
        return g
    return Nonlinearity(str(g))


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DeepModel:
    """Weights ``Z_1..Z_m``, features ``H_1..H_m`` and the activation ``g``.

    Arrays are copied and made read-only on construction.
    """

    Z: tuple
    H: tuple
    g: Nonlinearity = field(default=IDENTITY)

    def __post_init__(self):
        Z = tuple(_frozen(z) for z in self.Z)
        H = tuple(_frozen(h) for h in self.H)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "g", as_nonlinearity(self.g))
        if len(Z) < 1 or len(Z) != len(H):
            raise ShapeError(f"need m >= 1 layers with matching Z/H lists, got {len(Z)} and {len(H)}")
        n = H[-1].shape[1]
        for i, (z, h) in enumerate(zip(Z, H), start=1):
            if z.ndim != 2 or h.ndim != 2:
                raise ShapeError(f"layer {i}: factors must be 2-D")
            if z.shape[1] != h.shape[0]:
                raise ShapeError(f"layer {i}: Z has {z.shape[1]} columns but H has {h.shape[0]} rows")
            if h.shape[1] != n:
                raise ShapeError(f"layer {i}: H has {h.shape[1]} samples, expected {n}")
            if i > 1 and Z[i - 2].shape[1] != z.shape[0]:
                raise ShapeError(f"layer {i}: Z has {z.shape[0]} rows, previous layer width is {Z[i - 2].shape[1]}")
        if np.any(H[-1] < 0):
            raise InvalidInputError("top-layer features H_m must be nonnegative")
        # stanh can produce negative intermediate features; only H_m is constrained then
        if self.g.kind != "stanh" and any(np.any(h < 0) for h in H[:-1]):
            raise InvalidInputError("intermediate features must be nonnegative")

    @property
    def m(self):
        return len(self.Z)

    @property
    def layer_sizes(self):
        return [z.shape[1] for z in self.Z]

    @property
    def n_features(self):
        return self.Z[0].shape[0]

    @property
    def n_samples(self):
        return self.H[-1].shape[1]


def forward(Zs, Hm, g):
    """Implicit features ``[H~_1, ..., H~_m]`` and pre-activations ``A_i = Z_i H~_i``.

    ``pre[i]`` is ``None`` for the first layer, whose product is not passed
    through ``g``.
    """
    m = len(Zs)
    Ht = [None] * m
    pre = [None] * m
    Ht[m - 1] = Hm
    for i in range(m - 1, 0, -1):
        pre[i] = Zs[i] @ Ht[i]
        Ht[i - 1] = g(pre[i])
    return Ht, pre


def _check_x(model, X):
    X = as_matrix(X, "X")
    if X.shape != (model.n_features, model.n_samples):
        raise ShapeError(f"X has shape {X.shape}, model expects {(model.n_features, model.n_samples)}")
    return X


def reconstruct(model):
    Ht, _ = forward(model.Z, model.H[-1], model.g)
    return model.Z[0] @ Ht[0]


def deep_cost(model, X):
    """``1/2 ||X - Z_1 g(Z_2 g(... g(Z_m H_m)))||_F^2``."""
    X = _check_x(model, X)
    return half_sq_residual(X, reconstruct(model))


def _layer_graphs(graphs, lambdas, m, n):
    """Per-layer ``(lambda W, lambda d)`` pairs, ``(None, None)`` where unused."""
    if graphs is None and lambdas is None:
        return [(None, None)] * m
    graphs = list(graphs) if graphs is not None else [None] * m
    lambdas = list(lambdas) if lambdas is not None else [0.0] * m
    if len(graphs) != m or len(lambdas) != m:
        raise InvalidInputError(f"need one graph and one lambda per layer ({m}), "
                                f"got {len(graphs)} and {len(lambdas)}")
    out = []
    for graph, lam in zip(graphs, lambdas):
        if lam < 0:
            raise InvalidInputError("regularization weights must be >= 0")
        if graph is None:
            out.append((None, None))
            continue
        if graph.n != n:
            raise InvalidInputError(f"graph has {graph.n} nodes, data has {n} samples")
        out.append((lam * graph.W, lam * graph.degree))
    return out


def deep_objective(model, X, graphs=None, lambdas=None):
    """Deep cost plus ``1/2 sum_i lambda_i Tr(H~_i L_i H~_i^T)`` on the implicit features."""
    X = _check_x(model, X)
    terms = _layer_graphs(graphs, lambdas, model.m, model.n_samples)
    Ht, _ = forward(model.Z, model.H[-1], model.g)
    cost = half_sq_residual(X, model.Z[0] @ Ht[0])
    return cost + 0.5 * sum(graph_penalty(h, W, d) for h, (W, d) in zip(Ht, terms))


@dataclass
class DeepGradient:
    dZ: list
    dH: np.ndarray
    objective: float


def _objective_and_grad(Zs, Hm, X, g, terms, want_grad=True):
    Ht, pre = forward(Zs, Hm, g)
    R = Zs[0] @ Ht[0] - X
    obj = 0.5 * float(np.sum(R * R))
    obj += 0.5 * sum(graph_penalty(h, W, d) for h, (W, d) in zip(Ht, terms))
    if not want_grad:
        return obj, None, None
    m = len(Zs)
    dZ = [None] * m

    def lap(h, W, d):
        return 0.0 if W is None else h * d - h @ W

    G = Zs[0].T @ R + lap(Ht[0], *terms[0])
    dZ[0] = R @ Ht[0].T
    for i in range(1, m):
        delta = G * g.grad(pre[i])
        dZ[i] = delta @ Ht[i].T
        G = Zs[i].T @ delta + lap(Ht[i], *terms[i])
    return obj, dZ, G


def grad_deep(model, X, graphs=None, lambdas=None):
    """Gradients of the (optionally graph-regularized) deep objective.

    Returns a :class:`DeepGradient` with ``dZ[i] = dC/dZ_{i+1}`` and
    ``dH = dC/dH_m``. Graph terms act on the implicit features ``H~_i``;
    their gradient ``lambda_i H~_i L_i`` uses the Laplacian on the right
    because features are stored as (components x samples).
    """
    X = _check_x(model, X)
    terms = _layer_graphs(graphs, lambdas, model.m, model.n_samples)
    obj, dZ, dH = _objective_and_grad(list(model.Z), model.H[-1], X, model.g, terms)
    return DeepGradient(dZ, dH, obj)


def pretrain(X, layer_sizes, cfg=None, g=None, graphs=None, lambdas=None):
    """Greedy layer-wise initialization.

    Layer ``i`` factorizes the previous layer's features with Semi-NMF (or
    WSF when a graph is given for that layer). With a non-identity ``g`` the
    features are first mapped through ``g^-1`` so that
    ``H_{i-1} ~ g(Z_i H_i)`` holds at the start of fine-tuning.
    """
    X = as_matrix(X, "X")
    cfg = cfg or TrainConfig()
    g = as_nonlinearity(g)
    sizes = [int(k) for k in layer_sizes]
    if not sizes:
        raise InvalidInputError("layer_sizes must be non-empty")
    if any(b > a for a, b in zip(sizes, sizes[1:])):
        warnings.warn(f"layer sizes {sizes} are not non-increasing", stacklevel=2)
    terms_given = graphs is not None
    if terms_given:
        graphs, lambdas = list(graphs), list(lambdas)
        if len(graphs) != len(sizes) or len(lambdas) != len(sizes):
            raise InvalidInputError("need one graph and one lambda per layer")

    Zs, Hs = [], []
    inp = X
    for i, k in enumerate(sizes):
        if k > inp.shape[0]:
            raise InvalidInputError(f"layer {i + 1} width {k} exceeds its input dimension {inp.shape[0]}")
        if i > 0 and not g.is_identity:
            inp, _ = g.inverse(inp)
        layer_cfg = cfg.replace(seed=cfg.seed + i)
        if terms_given and graphs[i] is not None:
            f, _ = wsf(inp, k, graphs[i], lambdas[i], layer_cfg)
        else:
            f, _ = semi_nmf(inp, k, layer_cfg)
        Zs.append(f.Z)
        Hs.append(f.H)
        inp = f.H
    return DeepModel(Zs, Hs, g)


def _finetune_multiplicative(model, X, cfg, graphs=None, lambdas=None):
    X = _check_x(model, X)
    m = model.m
    terms = _layer_graphs(graphs, lambdas, m, model.n_samples)
    Zs = [np.array(z) for z in model.Z]
    Hs = [np.array(h) for h in model.H]

    def objective():
        Ht, _ = forward(Zs, Hs[-1], model.g)
        cost = half_sq_residual(X, Zs[0] @ Ht[0])
        return cost + 0.5 * sum(graph_penalty(h, W, d) for h, (W, d) in zip(Hs, terms))

    report = TrainReport([objective()])
    for it in range(1, cfg.max_iters + 1):
        Ht, _ = forward(Zs, Hs[-1], model.g)
        Psi = None
        for i in range(m):
            if Psi is None:
                Zs[i] = X @ pinv(Ht[i])
                A = Zs[i]
            else:
                Zs[i] = (pinv(Psi) @ X) @ pinv(Ht[i])
                A = Psi @ Zs[i]
            W, d = terms[i]
            Hs[i] = seminmf_h_step(A, X, Hs[i], cfg.eta, W, d)
            if not (np.all(np.isfinite(Zs[i])) and np.all(np.isfinite(Hs[i]))):
                raise NumericError(f"non-finite values in layer {i + 1}", iteration=it)
            if np.any(Hs[i] < 0):
                raise NumericError(f"H_{i + 1} left the nonnegative orthant", iteration=it)
            Psi = A
        report.objective_trace.append(objective())
        report.iterations = it
        if stop_rule(report.objective_trace[-2], report.objective_trace[-1], cfg.kappa):
            report.converged = True
            break
    return DeepModel(Zs, Hs, model.g), report


def finetune_linear(model, X, cfg=None):
    """Alternating fine-tuning of a linear Deep Semi-NMF.

    Each sweep visits layers ``1..m``: ``Z_i <- Psi^+ X H~_i^+`` with
    ``Psi = Z_1 ... Z_{i-1}``, then ``H_i`` takes the multiplicative
    Semi-NMF step for the model ``X ~ (Psi Z_i) H_i``.
    """
    if not model.g.is_identity:
        raise InvalidInputError("finetune_linear needs an identity nonlinearity; use finetune_nonlinear")
    return _finetune_multiplicative(model, X, cfg or TrainConfig())


def _refresh_intermediate(Zs, Hm, g):
    Ht, _ = forward(Zs, Hm, g)
    if g.is_identity:
        Ht = [np.maximum(h, 0.0) for h in Ht[:-1]] + [Ht[-1]]
    return Ht


def finetune_nonlinear(model, X, cfg=None, graphs=None, lambdas=None):
    """Accelerated projected gradient on ``{Z_1..Z_m, H_m}``.

    Nesterov/FISTA momentum with a backtracking (halving) step that starts
    from ``cfg.step``. ``H_m`` is projected onto the nonnegative orthant
    after every step. When an extrapolated step fails to improve on the
    current iterate the momentum is reset and a plain gradient step is
    taken, so the recorded objective never increases.
    """
    cfg = cfg or TrainConfig()
    X = _check_x(model, X)
    g = model.g
    m = model.m
    terms = _layer_graphs(graphs, lambdas, m, model.n_samples)

    def evaluate(params, want_grad=True):
        return _objective_and_grad(params[:m], params[m], X, g, terms, want_grad)

    x = [np.array(z) for z in model.Z] + [np.array(model.H[-1])]
    fx, _, _ = evaluate(x, want_grad=False)
    y, t = x, 1.0
    step = cfg.step
    report = TrainReport([fx])
    restarts_in_row = 0
    for it in range(1, cfg.max_iters + 1):
        fy, dZ, dH = evaluate(y)
        grads = dZ + [dH]
        for _ in range(60):
            cand = [a - step * ga for a, ga in zip(y, grads)]
            cand[m] = np.maximum(cand[m], 0.0)
            fc, _, _ = evaluate(cand, want_grad=False)
            diff = [c - a for c, a in zip(cand, y)]
            bound = fy + sum(float(np.sum(ga * dd)) for ga, dd in zip(grads, diff)) \
                + sum(float(np.sum(dd * dd)) for dd in diff) / (2.0 * step)
            if np.isfinite(fc) and fc <= bound:
                break
            step *= 0.5
        else:
            raise NumericError("step size underflow; try a smaller initial step", iteration=it)

        if fc > fx:
            restarts_in_row += 1
            if restarts_in_row >= 50:
                raise NumericError("objective keeps increasing; try a smaller initial step", iteration=it)
            y, t = x, 1.0
            continue
        restarts_in_row = 0
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        mom = (t - 1.0) / t_next
        y = [c + mom * (c - a) for c, a in zip(cand, x)]
        x, t = cand, t_next
        prev, fx = fx, fc
        report.objective_trace.append(fx)
        report.iterations = it
        if stop_rule(prev, fx, cfg.kappa):
            report.converged = True
            break

    Zs, Hm = x[:m], x[m]
    Ht = _refresh_intermediate(Zs, Hm, g)
    return DeepModel(Zs, Ht, g), report


def finetune(model, X, cfg=None, graphs=None, lambdas=None):
    """Dispatch to multiplicative (identity ``g``) or gradient fine-tuning."""
    cfg = cfg or TrainConfig()
    if model.g.is_identity:
        return _finetune_multiplicative(model, X, cfg, graphs, lambdas)
    return finetune_nonlinear(model, X, cfg, graphs, lambdas)


def deep_seminmf(X, layer_sizes, cfg=None, g=None):
    """Unsupervised Deep Semi-NMF: greedy pretraining then fine-tuning."""
    cfg = cfg or TrainConfig()
    model = pretrain(X, layer_sizes, cfg, g)
    return finetune(model, X, cfg)


def train_deep_wsf(X, layer_sizes, graphs, lambdas, cfg=None, g=None):
    """Deep WSF: per-layer WSF pretraining, then regularized fine-tuning.

    ``graphs[i]`` supervises layer ``i + 1`` with weight ``lambdas[i]``;
    ``None`` or a zero weight leaves that layer unsupervised.
    """
    cfg = cfg or TrainConfig()
    graphs, lambdas = list(graphs), list(lambdas)
    if not (len(graphs) == len(lambdas) == len(layer_sizes)):
        raise InvalidInputError(f"{len(layer_sizes)} layers need as many graphs and lambdas, "
                                f"got {len(graphs)} and {len(lambdas)}")
    model = pretrain(X, layer_sizes, cfg, g, graphs, lambdas)
    return finetune(model, X, cfg, graphs, lambdas)


def transfer_init(source, X_target, cfg=None):
    """Start a model on new data from another model's weights.

    All ``Z_i`` are copied; every layer's features are obtained by
    nonnegative out-of-sample projection of ``X_target``.
    """
    from .project import project_nls

    X_target = as_matrix(X_target, "X_target")
    if X_target.shape[0] != source.n_features:
        raise InvalidInputError(f"target has {X_target.shape[0]} features, source model expects {source.n_features}")
    proj = project_nls(source, X_target, cfg)
    Hm = proj.features[-1]
    if source.g.is_identity:
        Hs = [np.asarray(h) for h in proj.features]
    else:
        Hs = _refresh_intermediate(list(source.Z), Hm, source.g)
    return DeepModel(source.Z, Hs, source.g)
