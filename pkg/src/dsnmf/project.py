"""Out-of-sample projection into every layer of a trained model.

``x_star`` may be a single sample of shape ``(p,)`` or a batch ``(p, N)``;
columns of a batch are projected independently.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import InvalidInputError
from .numerics import pinv
from .shallow import TrainConfig, seminmf_h_step

PROJECTION_CFG = TrainConfig(max_iters=5000, kappa=1e-12)
INIT_FLOOR = 1e-8


@dataclass
class ProjectionResult:
    """Per-layer features for the projected samples.

    ``features[l]`` has shape ``(k_{l+1},)`` for a single sample or
    ``(k_{l+1}, N)`` for a batch. ``residual`` is the Frobenius norm of the
    reconstruction error at ``layer`` (1-based).
    """

    features: list
    method: str
    layer: int
    residual: float
    clipped: list = field(default_factory=list)
    converged: bool = True


def _as_samples(model, x_star):
    x = np.asarray(x_star, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != model.n_features:
        raise InvalidInputError(f"samples must have {model.n_features} features, got shape {np.shape(x_star)}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("samples contain non-finite entries")
    return x, single


def _layer(model, layer):
    layer = model.m if layer is None else int(layer)
    if not 1 <= layer <= model.m:
        raise InvalidInputError(f"layer must be in [1, {model.m}]")
    return layer


def _chain(Zs):
    P = Zs[0]
    for z in Zs[1:]:
        P = P @ z
    return P


def decode(model, h, layer):
    """Reconstruct samples from layer-``layer`` features ``h`` (2-D)."""
    g = model.g
    out = h
    for i in range(layer - 1, 0, -1):
        out = g(model.Z[i] @ out)
    return model.Z[0] @ out


def _residual(model, x, h, layer):
    return float(np.linalg.norm(x - decode(model, h, layer)))


def _pinv_features(model, x):
    feats, clipped = [], []
    if model.g.is_identity:
        P = None
        for z in model.Z:
            P = z if P is None else P @ z
            feats.append(pinv(P) @ x)
            clipped.append(False)
        return feats, clipped
    h = pinv(model.Z[0]) @ x
    feats.append(h)
    clipped.append(False)
    for z in model.Z[1:]:
        pre, was_clipped = model.g.inverse(h)
        h = pinv(z) @ pre
        feats.append(h)
        clipped.append(was_clipped)
    return feats, clipped


def _wrap(feats, single):
    return [f[:, 0] for f in feats] if single else feats


def project_pinv(model, x_star, layer=None):
    """Basis-reconstruction projection (may return negative features).

    Linear models use ``[Z_1 ... Z_l]^+ x``; nonlinear models invert layer by
    layer, ``h_l = Z_l^+ g^-1(h_{l-1})``, clipping arguments outside the
    range of ``g`` and flagging the affected layers in ``clipped``.
    """
    x, single = _as_samples(model, x_star)
    layer = _layer(model, layer)
    feats, clipped = _pinv_features(model, x)
    res = _residual(model, x, feats[layer - 1], layer)
    return ProjectionResult(_wrap(feats, single), "pinv", layer, res, clipped)


def _nls_linear(A, x, h, cfg):
    # column-wise multiplicative updates; each column stops on its own rule
    AtX = A.T @ x
    err = 0.5 * np.sum((x - A @ h) ** 2, axis=0)
    active = np.ones(x.shape[1], dtype=bool)
    for _ in range(cfg.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        h_new = seminmf_h_step(A, x[:, idx], h[:, idx], cfg.eta, AtX=AtX[:, idx])
        e_new = 0.5 * np.sum((x[:, idx] - A @ h_new) ** 2, axis=0)
        h[:, idx] = h_new
        done = err[idx] - e_new <= cfg.kappa * np.maximum(1.0, err[idx])
        err[idx] = e_new
        active[idx[done]] = False
    return h, not active.any()


def _nls_exact(A, x):
    # Lawson-Hanson active set, column by column
    h = np.empty((A.shape[1], x.shape[1]))
    for j in range(x.shape[1]):
        try:
            h[:, j] = nnls(A, x[:, j], maxiter=50 * A.shape[1])[0]
        except RuntimeError:
            return h, False
    return h, True


def _nls_nonlinear(model, x, h, layer, cfg):
    from .deep import forward

    Zs = list(model.Z[:layer])
    g = model.g

    def f_and_grad(hm):
        Ht, pre = forward(Zs, hm, g)
        R = Zs[0] @ Ht[0] - x
        G = Zs[0].T @ R
        for i in range(1, layer):
            G = Zs[i].T @ (G * g.grad(pre[i]))
        return 0.5 * float(np.sum(R * R)), G

    def f(hm):
        Ht, _ = forward(Zs, hm, g)
        return 0.5 * float(np.sum((Zs[0] @ Ht[0] - x) ** 2))

    fx = f(h)
    y, t, step = h, 1.0, cfg.step
    for _ in range(cfg.max_iters):
        fy, grad = f_and_grad(y)
        for _ in range(60):
            cand = np.maximum(y - step * grad, 0.0)
            d = cand - y
            fc = f(cand)
            if fc <= fy + float(np.sum(grad * d)) + float(np.sum(d * d)) / (2.0 * step):
                break
            step *= 0.5
        if fc > fx:
            y, t = h, 1.0
            continue
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        y = cand + ((t - 1.0) / t_next) * (cand - h)
        h, t = cand, t_next
        prev, fx = fx, fc
        if prev - fx <= cfg.kappa * max(1.0, prev):
            return h, True
    return h, False


def project_nls(model, x_star, cfg=None, layer=None, solver="nnls"):
    """Nonnegative projection with all weights frozen.

    For each layer ``l`` solve ``min_h ||x - Z_1 g(... g(Z_l h))||`` subject
    to ``h >= 0``. Nonlinear models run projected accelerated gradient from
    the clipped pseudo-inverse features.

    For linear models ``solver`` picks how the convex problem is solved:
    ``"nnls"`` (default) is an exact active-set solve, ``"mu"`` iterates the
    multiplicative Semi-NMF update from the clipped pseudo-inverse start.
    The multiplicative update is slow to move coordinates that start near
    zero, so it can stop well short of the optimum within ``cfg.max_iters``.
    """
    if solver not in ("nnls", "mu"):
        raise InvalidInputError(f"solver must be 'nnls' or 'mu', got {solver!r}")
    cfg = cfg or PROJECTION_CFG
    x, single = _as_samples(model, x_star)
    layer = _layer(model, layer)
    init, clipped = _pinv_features(model, x)
    feats, converged = [], True
    for l in range(1, model.m + 1):
        h0 = np.maximum(init[l - 1], INIT_FLOOR)
        if model.g.is_identity and solver == "nnls":
            h, ok = _nls_exact(_chain(model.Z[:l]), x)
        elif model.g.is_identity:
            h, ok = _nls_linear(_chain(model.Z[:l]), x, h0, cfg)
        else:
            h, ok = _nls_nonlinear(model, x, h0, l, cfg)
        feats.append(h)
        converged = converged and ok
    res = _residual(model, x, feats[layer - 1], layer)
    return ProjectionResult(_wrap(feats, single), "nls", layer, res, clipped, converged)
