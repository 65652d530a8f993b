"""Hyperboloid (Lorentz) model geometry with curvature parameter K.

Points live in ambient Minkowski space R^{d+1} and satisfy <x, x>_L = -K with
x_0 > 0; the sectional curvature is -1/K. Every function accepts batched
inputs (leading dimensions broadcast, last dimension is the ambient one) and
returns float64 torch tensors, so the same code serves the property tests,
the public API and the differentiable training path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

EPS = 1e-12
MAX_NORM_SCALE = 40.0
TANGENT_TOL = 1e-8


class DimensionError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass
class Diagnostics:
    """Counters surfaced in training diagnostics."""

    clamp_events: int = 0

    def reset(self) -> None:
        self.clamp_events = 0


DIAGNOSTICS = Diagnostics()


def curvature(K) -> float:
    K = float(K)
    if not (K > 0) or not math.isfinite(K):
        raise ValueError(f"curvature K must be a positive finite real, got {K}")
    return K


def _t(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if x.dtype == torch.float64 else x.to(torch.float64)
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _max_norm(K: float, max_norm: float | None) -> float:
    return MAX_NORM_SCALE * math.sqrt(K) if max_norm is None else max_norm


def _clamp_norm(n: torch.Tensor, bound: float) -> torch.Tensor:
    over = n > bound
    if bool(over.any()):
        DIAGNOSTICS.clamp_events += int(over.sum())
        n = torch.clamp(n, max=bound)
    return n


def minkowski_inner(u, v, keepdim: bool = False) -> torch.Tensor:
    """-u_0 v_0 + sum_{i>=1} u_i v_i over the last axis."""
    u, v = _t(u), _t(v)
    if u.shape[-1] != v.shape[-1]:
        raise DimensionError(f"length mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    if u.shape[-1] < 2:
        raise DimensionError("Minkowski vectors need at least 2 coordinates")
    prod = u * v
    res = prod[..., 1:].sum(-1) - prod[..., 0]
    return res.unsqueeze(-1) if keepdim else res


def minkowski_norm(v, keepdim: bool = False) -> torch.Tensor:
    return torch.sqrt(torch.clamp(minkowski_inner(v, v, keepdim), min=0.0))


def origin(K, d: int) -> torch.Tensor:
    K = curvature(K)
    if d < 1:
        raise DimensionError("dimension must be >= 1")
    o = torch.zeros(d + 1, dtype=torch.float64)
    o[0] = math.sqrt(K)
    return o


def membership_error(x, K) -> torch.Tensor:
    """|<x,x>_L + K| scaled by max(1, x_0^2) to stay meaningful far from the origin."""
    x = _t(x)
    scale = torch.clamp(x[..., 0] ** 2, min=1.0)
    return (minkowski_inner(x, x) + K).abs() / scale


def tangency_error(x, v) -> torch.Tensor:
    x, v = _t(x), _t(v)
    scale = torch.clamp(x.norm(dim=-1) * v.norm(dim=-1), min=1.0)
    return minkowski_inner(x, v).abs() / scale


def project(x, K) -> torch.Tensor:
    """Recompute x_0 from the spatial part so that <x,x>_L = -K."""
    x = _t(x)
    xs = x[..., 1:]
    x0 = torch.sqrt(K + (xs * xs).sum(-1, keepdim=True))
    return torch.cat([x0, xs], dim=-1)


def project_tangent_origin(u) -> torch.Tensor:
    u = _t(u)
    return torch.cat([torch.zeros_like(u[..., :1]), u[..., 1:]], dim=-1)


def exp_map(x, v, K, max_norm: float | None = None, check: bool = True) -> torch.Tensor:
    """Map tangent vector v at x onto the hyperboloid."""
    K = curvature(K)
    x, v = _t(x), _t(v)
    if x.shape[-1] != v.shape[-1]:
        raise DimensionError(f"point/tangent length mismatch: {x.shape[-1]} vs {v.shape[-1]}")
    if check and bool((tangency_error(x, v) > TANGENT_TOL).any()):
        raise DomainError("v is not tangent at x")
    sqrtK = math.sqrt(K)
    sq = minkowski_inner(v, v, keepdim=True)
    n_safe = torch.sqrt(torch.clamp(sq, min=EPS * EPS))
    n_eff = _clamp_norm(n_safe, _max_norm(K, max_norm))
    r = n_eff / sqrtK
    res = torch.cosh(r) * x + sqrtK * torch.sinh(r) * v / n_safe
    small = torch.sqrt(torch.clamp(sq, min=0.0)) < EPS
    # below EPS: first-order expansion, which is x itself for v = 0
    res = torch.where(small, x + v, res)
    return project(res, K)


def _alpha_minus_one(x, y, K: float) -> torch.Tensor:
    """-<x,y>_L / K - 1, from whichever of two equivalent forms is better conditioned.

    Close points: the chord |y - x|_L^2 / 2K. Distant points: the inner product.
    """
    diff = y - x
    chord_sq = torch.clamp(minkowski_inner(diff, diff, keepdim=True), min=0.0)
    alpha = -minkowski_inner(x, y, keepdim=True) / K
    return torch.where(alpha > 2.0, alpha - 1.0, chord_sq / (2.0 * K))


def distance(x, y, K) -> torch.Tensor:
    """Geodesic distance sqrt(K) arcosh(-<x,y>_L / K), argument clamped to >= 1."""
    K = curvature(K)
    x, y = _t(x), _t(y)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"length mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    am1 = torch.clamp(_alpha_minus_one(x, y, K), min=0.0)
    # arcosh(1 + a) = 2 asinh(sqrt(a / 2)), exact near a = 0
    return (2.0 * math.sqrt(K) * torch.asinh(torch.sqrt(am1 / 2.0))).squeeze(-1)


def log_map(x, y, K) -> torch.Tensor:
    """Tangent vector at x pointing to y with Minkowski norm distance(x, y)."""
    K = curvature(K)
    x, y = _t(x), _t(y)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"length mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    am1 = torch.clamp(_alpha_minus_one(x, y, K), min=0.0)
    # u = y + <x,y>_L x / K = (y - x) - (alpha - 1) x
    u = (y - x) - am1 * x
    t = 2.0 * torch.asinh(torch.sqrt(am1 / 2.0))  # distance / sqrt(K)
    t_safe = torch.clamp(t, min=EPS)
    coef = t_safe / torch.sinh(t_safe)  # distance / |u|_L
    res = coef * u
    return torch.where(t * math.sqrt(K) < EPS, torch.zeros_like(res), res)


def parallel_transport(x, y, v, K) -> torch.Tensor:
    """Transport v from T_x to T_y along the geodesic.

    Uses v + <y,v>_L / (K - <x,y>_L) (x + y); the denominator is at least 2K
    so the map is smooth everywhere, including x = y.
    """
    K = curvature(K)
    x, y, v = _t(x), _t(y), _t(v)
    coef = minkowski_inner(y, v, keepdim=True) / (K - minkowski_inner(x, y, keepdim=True))
    return v + coef * (x + y)


def transport_from_origin(y, v, K) -> torch.Tensor:
    """parallel_transport(o, y, v) specialised to the origin o = (sqrt K, 0, ..., 0)."""
    K = curvature(K)
    y, v = _t(y), _t(v)
    sqrtK = math.sqrt(K)
    coef = minkowski_inner(y, v, keepdim=True) / (K + sqrtK * y[..., :1])
    o_plus_y = torch.cat([y[..., :1] + sqrtK, y[..., 1:]], dim=-1)
    return v + coef * o_plus_y


def exp_origin(u, K, max_norm: float | None = None) -> torch.Tensor:
    """exp at the origin; the first coordinate of u is ignored (it is 0 for tangent vectors)."""
    K = curvature(K)
    u = _t(u)
    sqrtK = math.sqrt(K)
    us = u[..., 1:]
    n = us.norm(dim=-1, keepdim=True)
    n_safe = torch.clamp(n, min=EPS)
    n_eff = _clamp_norm(n_safe, _max_norm(K, max_norm))
    s = sqrtK * torch.sinh(n_eff / sqrtK) / n_safe * us
    s = torch.where(n < EPS, us, s)
    return project(torch.cat([torch.zeros_like(u[..., :1]), s], dim=-1), K)


def log_origin(y, K) -> torch.Tensor:
    """log at the origin, returned with an exact zero first coordinate."""
    K = curvature(K)
    y = _t(y)
    sqrtK = math.sqrt(K)
    ys = y[..., 1:]
    n = ys.norm(dim=-1, keepdim=True)
    n_safe = torch.clamp(n, min=EPS)
    coef = sqrtK * torch.asinh(n_safe / sqrtK) / n_safe
    s = torch.where(n < EPS, ys, coef * ys)
    return torch.cat([torch.zeros_like(y[..., :1]), s], dim=-1)


def lift_feature(x_E, K) -> torch.Tensor:
    """Treat (0, x_E) as a tangent vector at the origin and map it onto the hyperboloid."""
    x_E = _t(x_E)
    if not bool(torch.isfinite(x_E).all()):
        raise DomainError("attribute vector has non-finite entries")
    return exp_origin(torch.nn.functional.pad(x_E, (1, 0)), K)


def lift_matvec(W, X_E, K, max_norm: float | None = None) -> torch.Tensor:
    """mobius_matvec(W, lift_feature(X_E)) without materialising the lifted points.

    log_o of a lifted row is (0, x) with the norm clamp applied, so only the spatial columns of W
    matter and the clamp factor can be applied after the product. No finiteness check.
    """
    K = curvature(K)
    W, X_E = _t(W), _t(X_E)
    if W.shape[-1] != X_E.shape[-1] + 1:
        raise DimensionError(f"W has {W.shape[-1]} columns, attributes have {X_E.shape[-1]} entries")
    n = X_E.norm(dim=-1, keepdim=True)
    n_safe = torch.clamp(n, min=EPS)
    scale = _clamp_norm(n_safe, _max_norm(K, max_norm)) / n_safe
    U = (X_E @ W[..., 1:].transpose(-1, -2)) * scale
    return exp_origin(project_tangent_origin(U), K)


def mobius_matvec(W, H, K) -> torch.Tensor:
    """exp_o(W log_o(h)) per row; W is (d_out+1) x (d_in+1) acting on ambient tangent coords."""
    W, H = _t(W), _t(H)
    if W.shape[-1] != H.shape[-1]:
        raise DimensionError(f"W has {W.shape[-1]} columns, points have {H.shape[-1]} coordinates")
    u = log_origin(H, K) @ W.transpose(-1, -2)
    return exp_origin(project_tangent_origin(u), K)


def mobius_add_bias(H, b, K) -> torch.Tensor:
    """exp_h(P_{o->h}(b)) per row; b is a tangent vector at the origin."""
    H, b = _t(H), _t(b)
    if b.shape[-1] != H.shape[-1]:
        raise DimensionError(f"bias length {b.shape[-1]} vs point length {H.shape[-1]}")
    v = transport_from_origin(H, project_tangent_origin(b), K)
    return exp_map(H, v, K, check=False)
