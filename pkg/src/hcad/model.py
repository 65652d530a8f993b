"""Hyperbolic GCN encoder, tangent decoder, mean readout and bilinear discriminator."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from . import __version__
from .graph import AttributedGraph, normalize_dense_or_sparse
from .manifold import (
    DimensionError,
    curvature,
    exp_origin,
    lift_matvec,
    log_origin,
    mobius_add_bias,
    mobius_matvec,
    project_tangent_origin,
)
from .sampler import InstancePair

MODES = ("full", "no_decoder", "euclidean")
CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    num_layers: int = 1
    dropout: float = 0.0
    curvature: float = 2.5
    mode: str = "full"

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        curvature(self.curvature)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class Batch:
    X_sub: torch.Tensor  # (B, c, d)
    A_norm: torch.Tensor  # (B, c, c)
    x_target: torch.Tensor  # (B, d)
    labels: torch.Tensor  # (B,) pair polarity, 1 positive / 0 negative

    def __len__(self):
        return self.labels.shape[0]


def collate(pairs: Sequence[InstancePair], g: AttributedGraph) -> Batch:
    X_sub = np.stack([p.X_sub for p in pairs])
    A_norm = normalize_dense_or_sparse(np.stack([p.A_sub for p in pairs]))
    targets = np.fromiter((p.target for p in pairs), dtype=np.int64, count=len(pairs))
    labels = np.fromiter((p.polarity for p in pairs), dtype=np.float64, count=len(pairs))
    return Batch(
        torch.from_numpy(X_sub),
        torch.from_numpy(A_norm),
        torch.from_numpy(g.X[targets].copy()),
        torch.from_numpy(labels),
    )


def _dropout(x: torch.Tensor, p: float, generator: torch.Generator | None) -> torch.Tensor:
    if p == 0.0:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype) >= p
    return x * keep / (1.0 - p)


def hgcn_layer(H, Adj, W, b, K, dropout: float = 0.0, training: bool = False,
               generator: torch.Generator | None = None, trace: list | None = None,
               lift: bool = False) -> torch.Tensor:
    """One hyperbolic graph convolution: Mobius linear + bias, tangent aggregation, ReLU, exp_o.

    With lift=True the rows of H are raw attribute vectors, lifted to the hyperboloid first.
    """
    if Adj.shape[-1] != H.shape[-2] or Adj.shape[-2] != Adj.shape[-1]:
        raise DimensionError(f"adjacency {tuple(Adj.shape)} does not match {H.shape[-2]} rows")
    H = lift_matvec(W, H, K) if lift else mobius_matvec(W, H, K)
    H = mobius_add_bias(H, b, K)
    agg = Adj @ log_origin(H, K)
    if trace is not None:
        trace.append(agg)
    act = torch.relu(agg)
    if training:
        act = _dropout(act, dropout, generator)
    return exp_origin(act, K)


def euclidean_layer(H, Adj, W, b, dropout: float = 0.0, training: bool = False,
                    generator: torch.Generator | None = None, trace: list | None = None) -> torch.Tensor:
    """ReLU(Adj H W + b) on the same ambient parameter shapes (first coordinate pinned to 0)."""
    pre = project_tangent_origin(Adj @ (H @ W.transpose(-1, -2)) + b)
    if trace is not None:
        trace.append(pre)
    act = torch.relu(pre)
    if training:
        act = _dropout(act, dropout, generator)
    return act


def decode_tangent(H, W, b, K) -> torch.Tensor:
    """W log_o(h) + b per row."""
    return log_origin(H, K) @ W.transpose(-1, -2) + b


def readout(E: torch.Tensor) -> torch.Tensor:
    """Mean over the node axis (second to last)."""
    if E.shape[-2] < 1:
        raise ValueError("readout needs at least one row")
    return E.mean(dim=-2)


def discriminate(target_emb, subgraph_emb, M) -> torch.Tensor:
    """logistic(t^T M s), batched over leading dimensions."""
    return torch.sigmoid(bilinear_logit(target_emb, subgraph_emb, M))


def bilinear_logit(target_emb, subgraph_emb, M) -> torch.Tensor:
    if target_emb.shape[-1] != M.shape[-2] or subgraph_emb.shape[-1] != M.shape[-1]:
        raise DimensionError("embedding lengths do not match the bilinear matrix")
    return ((target_emb @ M) * subgraph_emb).sum(-1)


class HCADModel(nn.Module):
    """Contrastive discriminator scoring (target node, subgraph) agreement."""

    def __init__(self, in_dim: int, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.in_dim = in_dim
        self.cfg = cfg
        self.seed = seed
        h = cfg.hidden_dim
        gen = torch.Generator().manual_seed(seed)

        def uniform(shape, fan_in):
            bound = 1.0 / math.sqrt(fan_in)
            return nn.Parameter((torch.rand(shape, generator=gen, dtype=torch.float64) * 2 - 1) * bound)

        self.weights = nn.ParameterList()
        self.biases = nn.ParameterList()
        d_in = in_dim
        for _ in range(cfg.num_layers):
            self.weights.append(uniform((h + 1, d_in + 1), d_in))
            self.biases.append(uniform((h + 1,), d_in))
            d_in = h
        self.dec_W = uniform((h, h + 1), h)
        self.dec_b = uniform((h,), h)
        disc_dim = h + 1 if cfg.mode == "no_decoder" else h
        self.M = uniform((disc_dim, disc_dim), disc_dim)

    @property
    def K(self) -> float:
        return self.cfg.curvature

    def named_tensors(self) -> dict[str, torch.Tensor]:
        return dict(self.named_parameters())

    # encoder ---------------------------------------------------------------

    def encode(self, X, A_norm, training: bool = False, generator=None, trace=None) -> torch.Tensor:
        """Rows of X (attributes) to encoder output: hyperboloid points, or Euclidean in ablation."""
        if self.cfg.mode == "euclidean":
            H = nn.functional.pad(X, (1, 0))
            for W, b in zip(self.weights, self.biases):
                H = euclidean_layer(H, A_norm, W, b, self.cfg.dropout, training, generator, trace)
            return H
        H = X
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            H = hgcn_layer(H, A_norm, W, b, self.K, self.cfg.dropout, training, generator, trace,
                           lift=i == 0)
        return H

    def decode(self, H) -> torch.Tensor:
        if self.cfg.mode == "euclidean":
            return H @ self.dec_W.transpose(-1, -2) + self.dec_b
        if self.cfg.mode == "no_decoder":
            return H
        return decode_tangent(H, self.dec_W, self.dec_b, self.K)

    def encode_subgraph(self, X_sub, A_norm, training=False, generator=None, trace=None) -> torch.Tensor:
        return readout(self.decode(self.encode(X_sub, A_norm, training, generator, trace)))

    def encode_target(self, x, training=False, generator=None, trace=None) -> torch.Tensor:
        """Target as a one-node subgraph with its unmasked attributes and Adj = [[1]]."""
        x = torch.as_tensor(x, dtype=torch.float64)
        X = x.unsqueeze(-2)
        A = torch.ones(X.shape[:-2] + (1, 1), dtype=torch.float64)
        return self.decode(self.encode(X, A, training, generator, trace)).squeeze(-2)

    def logits(self, batch: Batch, training: bool = False, generator=None, trace=None) -> torch.Tensor:
        s = self.encode_subgraph(batch.X_sub, batch.A_norm, training, generator, trace)
        t = self.encode_target(batch.x_target, training, generator, trace)
        return bilinear_logit(t, s, self.M)

    def forward(self, batch: Batch, training: bool = False, generator=None, trace=None) -> torch.Tensor:
        return torch.sigmoid(self.logits(batch, training, generator, trace))

    # persistence -------------------------------------------------------------

    def save(self, path, extra: dict | None = None) -> None:
        meta = {
            "format": CHECKPOINT_FORMAT,
            "code_version": __version__,
            "in_dim": self.in_dim,
            "seed": self.seed,
            "model_config": asdict(self.cfg),
            "init": "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))",
        }
        if extra:
            meta.update(extra)
        arrays = {name: t.detach().cpu().numpy() for name, t in self.named_parameters()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path) -> tuple["HCADModel", dict]:
        with np.load(Path(path), allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
            model = cls(meta["in_dim"], ModelConfig(**meta["model_config"]), meta["seed"])
            with torch.no_grad():
                for name, p in model.named_parameters():
                    p.copy_(torch.from_numpy(data[name]))
        return model, meta
