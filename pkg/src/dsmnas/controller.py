"""Joint global/local policy over the subspace graph.

The global step pools the message-passing features of all K subspace nodes,
runs one LSTM step and picks a node. The local steps start from that node's
features and its center embedding and emit M (position, code) edits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import Tape, Tensor
from .search_space import Modification, SearchSpaceSpec
from .subspace_graph import SubspaceGraph

GRAPH_MODES = ("gnn", "pointwise")


@dataclass
class PolicySample:
    subspace: int
    modification: Modification
    log_prob: Tensor
    entropy: Tensor
    num_terms: int
    tape: Tape
    leaves: dict


def init_params(spec: SearchSpaceSpec, num_subspaces: int, rng: np.random.Generator,
                embed_dim: int = 8, hidden: int = 64) -> nn.ParamStore:
    """All controller weights drawn from U(-0.1, 0.1) in a fixed order."""
    n = spec.num_positions
    arch_dim = n * embed_dim
    shapes = {}
    for i, size in enumerate(spec.sizes):
        shapes[f"embed/{i}"] = (size, embed_dim)
    for layer, in_dim in ((1, arch_dim), (2, hidden)):
        shapes[f"gnn{layer}/self_w"] = (hidden, in_dim)
        shapes[f"gnn{layer}/self_b"] = (hidden,)
        shapes[f"gnn{layer}/nbr_w"] = (hidden, in_dim)
        shapes[f"gnn{layer}/edge_w"] = (hidden, arch_dim)
    shapes["lstm/w"] = (4 * hidden, 2 * hidden)
    shapes["lstm/b"] = (4 * hidden,)
    shapes["global/w"] = (num_subspaces, hidden)
    shapes["global/b"] = (num_subspaces,)
    shapes["local_init/w"] = (hidden, hidden + arch_dim)
    shapes["local_init/b"] = (hidden,)
    shapes["local_start"] = (hidden,)
    shapes["position/w"] = (n, hidden)
    shapes["position/b"] = (n,)
    shapes["position_in"] = (n, hidden)
    for i, size in enumerate(spec.sizes):
        shapes[f"op/{i}/w"] = (size, hidden)
        shapes[f"op/{i}/b"] = (size,)
        shapes[f"op_in/{i}"] = (size, hidden)
    store = nn.ParamStore()
    for name, shape in shapes.items():
        store.add(name, rng.uniform(-0.1, 0.1, size=shape))
    return store


class Controller:
    def __init__(self, spec: SearchSpaceSpec, num_subspaces: int, rng: np.random.Generator,
                 embed_dim: int = 8, hidden: int = 64, graph_mode: str = "gnn"):
        if graph_mode not in GRAPH_MODES:
            raise ValueError(f"graph_mode must be one of {GRAPH_MODES}")
        self.spec = spec
        self.num_subspaces = num_subspaces
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.graph_mode = graph_mode
        self.store = init_params(spec, num_subspaces, rng, embed_dim, hidden)

    # -- pieces ----------------------------------------------------------

    def embed_architecture(self, P: dict, arch) -> Tensor:
        """Concatenation of per-position code embeddings, in position order."""
        idx = self.spec.to_index(arch)
        return nn.gather_concat([P[f"embed/{i}"] for i in range(len(idx))], idx)

    def edge_feature(self, P: dict, from_arch, to_arch) -> Tensor:
        return nn.sub(self.embed_architecture(P, to_arch), self.embed_architecture(P, from_arch))

    def gnn_forward(self, P: dict, graph: SubspaceGraph, embeddings=None) -> list:
        """Two rounds of relu(W_self x + b + mean_in(W_nbr x_src + W_edge e)).

        ``e`` is the edge feature embed(dst) - embed(src); node features in
        the second round are first-round outputs while edge features stay
        the architecture-embedding differences. Nodes without incoming edges
        get a zero aggregate. The mean of the W_edge terms is computed as
        W_edge applied to the mean edge feature (same value, fewer ops).
        """
        if embeddings is None:
            embeddings = [self.embed_architecture(P, c) for c in graph.centers]
        feats = embeddings
        incoming = [graph.incoming(j) for j in range(len(graph))]
        use_graph = self.graph_mode == "gnn"
        mean_edge = {}
        if use_graph:
            for j, srcs in enumerate(incoming):
                if srcs:
                    mean_edge[j] = nn.stack_mean([self._edge(embeddings, i, j) for i in srcs])
        for layer in (1, 2):
            w_self, b_self = P[f"gnn{layer}/self_w"], P[f"gnn{layer}/self_b"]
            out = []
            if use_graph:
                w_nbr, w_edge = P[f"gnn{layer}/nbr_w"], P[f"gnn{layer}/edge_w"]
                nbr = [nn.matmul(w_nbr, x) for x in feats]
            for j, x in enumerate(feats):
                pre = nn.add(nn.matmul(w_self, x), b_self)
                if use_graph and incoming[j]:
                    msg = nn.add(nn.stack_mean([nbr[i] for i in incoming[j]]), nn.matmul(w_edge, mean_edge[j]))
                    pre = nn.add(pre, msg)
                out.append(nn.relu(pre))
            feats = out
        return feats

    @staticmethod
    def _edge(embeddings, src, dst):
        return nn.sub(embeddings[dst], embeddings[src])

    # -- sampling --------------------------------------------------------

    def sample(self, graph: SubspaceGraph, radius: int, rng: np.random.Generator,
               forced: tuple | None = None) -> PolicySample:
        """Sample a subspace and an M-step modification on a fresh tape.

        ``forced=(subspace, [(position, code), ...])`` scores the given
        decisions instead of drawing them.
        """
        if len(graph) != self.num_subspaces:
            raise ValueError(f"controller built for K={self.num_subspaces}, graph has {len(graph)} nodes")
        tape = Tape()
        P = tape.watch(self.store.params)
        k, steps, logps, ents = self.forward(P, graph, radius, rng, forced)
        return PolicySample(
            subspace=k,
            modification=Modification(tuple(steps)),
            log_prob=nn.add_n(logps),
            entropy=nn.add_n(ents),
            num_terms=len(logps),
            tape=tape,
            leaves=P,
        )

    def forward(self, P: dict, graph: SubspaceGraph, radius: int, rng: np.random.Generator,
                forced: tuple | None = None) -> tuple:
        """(subspace, steps, log-prob terms, entropy terms) under parameters ``P``."""
        H = self.hidden
        embeddings = [self.embed_architecture(P, c) for c in graph.centers]
        feats = self.gnn_forward(P, graph, embeddings)

        zeros = Tensor(np.zeros(H))
        h, c = nn.recurrent_cell(nn.stack_mean(feats), zeros, zeros, P["lstm/w"], P["lstm/b"])
        logits = nn.dense(h, P["global/w"], P["global/b"])
        k, logp, ent = nn.categorical_sample(logits, rng, forced[0] if forced else None)
        logps, ents = [logp], [ent]

        h = nn.tanh(nn.dense(nn.concat([feats[k], embeddings[k]]), P["local_init/w"], P["local_init/b"]))
        c = zeros
        x = P["local_start"]
        steps = []
        for m in range(radius):
            h, c = nn.recurrent_cell(x, h, c, P["lstm/w"], P["lstm/b"])
            pos_logits = nn.dense(h, P["position/w"], P["position/b"])
            fpos = forced[1][m][0] if forced else None
            pos, logp, ent = nn.categorical_sample(pos_logits, rng, fpos)
            logps.append(logp)
            ents.append(ent)
            op_logits = nn.dense(h, P[f"op/{pos}/w"], P[f"op/{pos}/b"])
            fop = self.spec.index_of(pos, forced[1][m][1]) if forced else None
            op, logp, ent = nn.categorical_sample(op_logits, rng, fop)
            logps.append(logp)
            ents.append(ent)
            steps.append((pos, self.spec.candidates[pos][op]))
            x = nn.add(nn.take(P["position_in"], pos), nn.take(P[f"op_in/{pos}"], op))
        return k, steps, logps, ents

    def sample_batch(self, graph: SubspaceGraph, radius: int, rng: np.random.Generator, n: int) -> list:
        """``n`` forward-only draws as (subspace, Modification, log_prob) triples.

        Same distribution as :meth:`sample` without building a tape, so it
        is only good for inspection, never for training.
        """
        P = self.store.params
        H = self.hidden
        feats = [f.value for f in self.gnn_forward(Tape().watch(P), graph)]
        embeds = [self.embed_architecture(P, c).value for c in graph.centers]

        def lstm(x, h, c):
            z = np.concatenate([x, h], axis=1) @ P["lstm/w"].T + P["lstm/b"]
            sig = lambda v: 0.5 * (1.0 + np.tanh(0.5 * v))
            i, f, g, o = sig(z[:, :H]), sig(z[:, H:2 * H]), np.tanh(z[:, 2 * H:3 * H]), sig(z[:, 3 * H:])
            c = f * c + i * g
            return o * np.tanh(c), c

        def draw(logits):
            logits = logits - logits.max(axis=1, keepdims=True)
            logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
            cdf = np.cumsum(np.exp(logp), axis=1)
            u = rng.random(len(logits))[:, None] * cdf[:, -1:]
            idx = np.minimum((u >= cdf).sum(axis=1), logits.shape[1] - 1)
            return idx, logp[np.arange(len(idx)), idx]

        zero = np.zeros((1, H))
        h, _ = lstm(np.mean(feats, axis=0)[None, :], zero, zero)
        glogits = h @ P["global/w"].T + P["global/b"]
        ks, logps = draw(np.repeat(glogits, n, axis=0))
        init = np.tanh(np.stack([np.concatenate([f, e]) for f, e in zip(feats, embeds)]) @ P["local_init/w"].T
                       + P["local_init/b"])
        h, c = init[ks], np.zeros((n, H))
        x = np.repeat(P["local_start"][None, :], n, axis=0)
        positions, codes = np.zeros((n, radius), dtype=int), np.zeros((n, radius), dtype=int)
        for m in range(radius):
            h, c = lstm(x, h, c)
            pos, lp = draw(h @ P["position/w"].T + P["position/b"])
            logps = logps + lp
            ops = np.zeros(n, dtype=int)
            for p in np.unique(pos):
                rows = np.flatnonzero(pos == p)
                op, lp = draw(h[rows] @ P[f"op/{p}/w"].T + P[f"op/{p}/b"])
                ops[rows] = op
                logps[rows] += lp
                codes[rows, m] = np.asarray(self.spec.candidates[p])[op]
            positions[:, m] = pos
            x = P["position_in"][pos] + np.stack([P[f"op_in/{p}"][o] for p, o in zip(pos, ops)])
        return [(int(ks[r]), Modification(tuple(zip(positions[r].tolist(), codes[r].tolist()))), float(logps[r]))
                for r in range(n)]

    def describe(self) -> str:
        lines = [f"controller graph_mode={self.graph_mode} K={self.num_subspaces} "
                 f"L={self.spec.num_positions} embed_dim={self.embed_dim} hidden={self.hidden}"]
        for name, value in self.store.params.items():
            lines.append(f"  {name:<16} {'x'.join(str(d) for d in value.shape)}")
        lines.append(f"  total parameters: {self.store.num_parameters()}")
        return "\n".join(lines)


def sample_policy(controller: Controller, graph: SubspaceGraph, radius: int,
                  rng: np.random.Generator) -> PolicySample:
    return controller.sample(graph, radius, rng)
