"""Learned power allocators: the unrolled-WMMSE network and a GNN baseline.

The unrolled model (wugnn) runs K layers, each built around one WMMSE sweep
carried on coordinate 0 of the per-node u/w/v states. The closed-form u, w,
and v updates are evaluated edge-wise on the raw channel gains (the same
formulas the iterative solver applies row by row), and each result is
rescaled by a bounded learned correction (1 + gate * tanh(s)) whose signal
s is the first output column of the layer's message-passing or local block.
The remaining state coordinates are free hidden channels written by the
same blocks. Correction gates start at zero, so a freshly initialized
network reproduces K truncated solver sweeps exactly; training only moves
it away from the algorithm where doing so raises the objective. The v
scalar is clamped to [0, sqrt(p_max)] in every layer, which keeps the final
readout feasible for any parameter values and any network size.

The baseline (gnn_baseline) is a generic message-passing network of similar
capacity without the algorithm-shaped structure, ending in a sigmoid
projection onto the power budget.

Training differentiates the layered forward through the tape in
``autodiff``. ``Model.forward_graph`` instead runs a plain-numpy twin of
the same computation for evaluation and timing; it applies the identical
operations in the identical order, so its outputs match the taped pass bit
for bit without paying tape overhead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .channel import InterferenceGraph, NetworkInstance, normalize_features
from .errors import ConfigError
from .nn import MlpSpec, init_params, mlp_forward

MODEL_KINDS = ("wugnn", "gnn_baseline")

NODE_FEATURE_DIM = 3

GATE_SUFFIXES = ("u_gate", "w_gate", "v_gate")

# floor on 1 - u*h*v before inversion; the solver treats a non-positive
# remainder as a hard error, but corrected u values can wander, so the
# network saturates w there instead of failing
_W_REM_FLOOR = 1e-3

# additive guard on the v-update denominator; plays the role of the
# solver's degenerate-denominator branch (the quotient blows up and the
# clamp turns it into full power)
_V_DEN_GUARD = 1e-12


def _mlp(in_width: int, hidden: int, out_width: int) -> MlpSpec:
    # tanh, not relu: sum aggregation feeds combine inputs that grow with
    # node degree, and bounded hidden units keep every MLP output near the
    # scale of its last-layer weights. With relu the states compound across
    # layers until the output sigmoid underflows to exactly 0 at init
    # (measured at n=10 already), which kills every gradient.
    return MlpSpec(layer_widths=(in_width, hidden, out_width), activation="tanh")


@dataclass(frozen=True)
class GnnModuleSpec:
    """One aggregation block: a message MLP and a combine MLP (sum pooling)."""

    message: MlpSpec
    combine: MlpSpec

    def to_dict(self) -> dict:
        return {"message": self.message.to_dict(), "combine": self.combine.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "GnnModuleSpec":
        return cls(message=MlpSpec.from_dict(d["message"]), combine=MlpSpec.from_dict(d["combine"]))


@dataclass(frozen=True)
class WugnnSpec:
    """K unrolled solver sweeps, the first few driven by learned blocks.

    The first ``corrected_layers`` sweeps each run gnn_u -> mlp_w -> gnn_v
    over hidden_dim-wide per-node u/w/v states. Coordinate 0 of each state
    carries the actual scalar solver estimate, updated in closed form and
    rescaled by a gated correction read from the matching block's first
    output column; the remaining coordinates are free hidden channels
    written by the block. Each block owns one scalar correction gate, so an
    unshared stack has three gates per corrected layer. The remaining
    ``k_layers - corrected_layers`` sweeps apply the bare closed-form
    updates to the scalar chain: the blocks learn to jump-start the
    iteration, and the tail polishes their output the way the solver
    itself would.
    """

    k_layers: int
    hidden_dim: int
    gnn_u: GnnModuleSpec
    mlp_w: MlpSpec
    gnn_v: GnnModuleSpec
    corrected_layers: int = 3
    share_across_layers: bool = False

    def __post_init__(self):
        if self.k_layers < 1:
            raise ConfigError(f"k_layers must be >= 1, got {self.k_layers}")
        if not 1 <= self.corrected_layers <= self.k_layers:
            raise ConfigError(
                f"corrected_layers must be in [1, k_layers], got {self.corrected_layers}"
            )
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        h = self.hidden_dim
        checks = [
            ("gnn_u.message", self.gnn_u.message, h + 1, h),
            ("gnn_u.combine", self.gnn_u.combine, NODE_FEATURE_DIM + 2 * h, h),
            ("mlp_w", self.mlp_w, NODE_FEATURE_DIM + 2 * h, h),
            ("gnn_v.message", self.gnn_v.message, 2 * h + 1, h),
            ("gnn_v.combine", self.gnn_v.combine, NODE_FEATURE_DIM + 3 * h, h),
        ]
        for name, spec, want_in, want_out in checks:
            got_in, got_out = spec.layer_widths[0], spec.layer_widths[-1]
            if (got_in, got_out) != (want_in, want_out):
                raise ConfigError(
                    f"{name} must map {want_in} -> {want_out}, got {got_in} -> {got_out}"
                )

    @classmethod
    def default(cls, k_layers: int = 15, hidden_dim: int = 8, mlp_hidden: int = 16,
                corrected_layers: int = None, share_across_layers: bool = False) -> "WugnnSpec":
        h = hidden_dim
        if corrected_layers is None:
            corrected_layers = min(3, k_layers)
        return cls(
            k_layers=k_layers,
            hidden_dim=h,
            gnn_u=GnnModuleSpec(
                message=_mlp(h + 1, mlp_hidden, h),
                combine=_mlp(NODE_FEATURE_DIM + 2 * h, mlp_hidden, h),
            ),
            mlp_w=_mlp(NODE_FEATURE_DIM + 2 * h, mlp_hidden, h),
            gnn_v=GnnModuleSpec(
                message=_mlp(2 * h + 1, mlp_hidden, h),
                combine=_mlp(NODE_FEATURE_DIM + 3 * h, mlp_hidden, h),
            ),
            corrected_layers=corrected_layers,
            share_across_layers=share_across_layers,
        )

    def layer_prefixes(self) -> list:
        """Parameter prefixes for the corrected layers; the tail owns none."""
        if self.share_across_layers:
            return ["shared/"] * self.corrected_layers
        return [f"layer{k}/" for k in range(self.corrected_layers)]

    def named_mlps(self) -> list:
        """(prefix, spec) pairs covering every parameterized block once."""
        out = []
        for prefix in dict.fromkeys(self.layer_prefixes()):
            out.extend(
                [
                    (prefix + "u_msg/", self.gnn_u.message),
                    (prefix + "u_comb/", self.gnn_u.combine),
                    (prefix + "w/", self.mlp_w),
                    (prefix + "v_msg/", self.gnn_v.message),
                    (prefix + "v_comb/", self.gnn_v.combine),
                ]
            )
        return out

    def gate_names(self) -> list:
        """Correction-gate parameter names, one per block per stored layer."""
        return [
            prefix + suffix
            for prefix in dict.fromkeys(self.layer_prefixes())
            for suffix in GATE_SUFFIXES
        ]

    def n_params(self) -> int:
        return sum(spec.n_params() for _, spec in self.named_mlps()) + len(self.gate_names())

    def to_dict(self) -> dict:
        return {
            "k_layers": self.k_layers,
            "corrected_layers": self.corrected_layers,
            "hidden_dim": self.hidden_dim,
            "gnn_u": self.gnn_u.to_dict(),
            "mlp_w": self.mlp_w.to_dict(),
            "gnn_v": self.gnn_v.to_dict(),
            "share_across_layers": self.share_across_layers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WugnnSpec":
        return cls(
            k_layers=d["k_layers"],
            corrected_layers=d["corrected_layers"],
            hidden_dim=d["hidden_dim"],
            gnn_u=GnnModuleSpec.from_dict(d["gnn_u"]),
            mlp_w=MlpSpec.from_dict(d["mlp_w"]),
            gnn_v=GnnModuleSpec.from_dict(d["gnn_v"]),
            share_across_layers=d["share_across_layers"],
        )


@dataclass(frozen=True)
class GnnBaselineSpec:
    """Generic message passing: shared message/update MLPs per round, readout."""

    rounds: int
    hidden_dim: int
    message: MlpSpec
    update: MlpSpec
    readout: MlpSpec

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        h = self.hidden_dim
        checks = [
            ("message", self.message, h + 1, h),
            ("update", self.update, NODE_FEATURE_DIM + 2 * h, h),
            ("readout", self.readout, h, 1),
        ]
        for name, spec, want_in, want_out in checks:
            got_in, got_out = spec.layer_widths[0], spec.layer_widths[-1]
            if (got_in, got_out) != (want_in, want_out):
                raise ConfigError(
                    f"{name} must map {want_in} -> {want_out}, got {got_in} -> {got_out}"
                )

    @classmethod
    def default(cls, rounds: int = 3, hidden_dim: int = 32, mlp_hidden: int = 32) -> "GnnBaselineSpec":
        h = hidden_dim
        return cls(
            rounds=rounds,
            hidden_dim=h,
            message=_mlp(h + 1, mlp_hidden, h),
            update=_mlp(NODE_FEATURE_DIM + 2 * h, mlp_hidden, h),
            readout=_mlp(h, mlp_hidden, 1),
        )

    def named_mlps(self) -> list:
        return [("msg/", self.message), ("upd/", self.update), ("readout/", self.readout)]

    def n_params(self) -> int:
        return sum(spec.n_params() for _, spec in self.named_mlps())

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "hidden_dim": self.hidden_dim,
            "message": self.message.to_dict(),
            "update": self.update.to_dict(),
            "readout": self.readout.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GnnBaselineSpec":
        return cls(
            rounds=d["rounds"],
            hidden_dim=d["hidden_dim"],
            message=MlpSpec.from_dict(d["message"]),
            update=MlpSpec.from_dict(d["update"]),
            readout=MlpSpec.from_dict(d["readout"]),
        )


def project_power(raw, p_max: float):
    """Map unconstrained scores into (0, sqrt(p_max)) via a scaled sigmoid."""
    if not p_max > 0:
        raise ValueError(f"p_max must be > 0, got {p_max}")
    scale = np.sqrt(p_max)
    if isinstance(raw, ad.Tensor):
        return ad.mul(ad.sigmoid(raw), ad.Tensor(np.asarray(scale)))
    x = np.asarray(raw, dtype=np.float64)
    ex = np.exp(-np.abs(x))
    sig = np.where(x >= 0.0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return scale * sig


def _model_constants(graph: InterferenceGraph):
    # normalized copies feed the network; adjacency is shared as-is
    normed = normalize_features(graph)
    node_feat = ad.Tensor(normed.node_features)
    edge_gain = ad.Tensor(normed.edge_features)
    return node_feat, edge_gain, graph.edge_src, graph.edge_dst


def _param(params: dict, name: str):
    try:
        return params[name]
    except KeyError:
        raise ValueError(f"missing parameter {name!r}") from None


def _gate(params: dict, name: str):
    gate = _param(params, name)
    if gate.data.shape != (1,):
        raise ValueError(f"gate {name!r} must have shape (1,), got {gate.data.shape}")
    return gate


def _gnn_block(params, module: GnnModuleSpec, prefix, msg_inputs, combine_locals, agg_index, n_nodes):
    messages = mlp_forward(params, module.message, ad.concat_cols(msg_inputs), prefix=prefix[0])
    # sum aggregation, then signed log compression of the sum: the sum's
    # magnitude grows with node degree, and without compression a model
    # trained at one network size feeds the combine MLP far-out-of-range
    # inputs at larger sizes, saturating it into a state where every node
    # looks alike. symlog is bijective, so no interference-total
    # information is lost.
    agg = ad.symlog(ad.scatter_add_rows(messages, agg_index, n_nodes))
    return mlp_forward(params, module.combine, ad.concat_cols(combine_locals + [agg]), prefix=prefix[1])


def gnn_u_step(params, spec: WugnnSpec, prefix: str, node_feat, edge_gain, src, dst, state):
    """Update signal for the u state from incoming-edge messages (interference received)."""
    u_state, w_state, v_state = state
    return _gnn_block(
        params,
        spec.gnn_u,
        (prefix + "u_msg/", prefix + "u_comb/"),
        [ad.gather_rows(v_state, src), edge_gain],
        [node_feat, v_state],
        dst,
        node_feat.data.shape[0],
    )


def mlp_w_step(params, spec: WugnnSpec, prefix: str, node_feat, state):
    """Update signal for the w state from node-local information only."""
    u_state, w_state, v_state = state
    return mlp_forward(
        params,
        spec.mlp_w,
        ad.concat_cols([node_feat, u_state, v_state]),
        prefix=prefix + "w/",
    )


def gnn_v_step(params, spec: WugnnSpec, prefix: str, node_feat, edge_gain, src, dst, state):
    """Update signal for the v state from outgoing-edge messages (interference caused)."""
    u_state, w_state, v_state = state
    return _gnn_block(
        params,
        spec.gnn_v,
        (prefix + "v_msg/", prefix + "v_comb/"),
        [ad.gather_rows(u_state, dst), ad.gather_rows(w_state, dst), edge_gain],
        [node_feat, u_state, w_state],
        src,
        node_feat.data.shape[0],
    )


def wugnn_amplitudes(params: dict, spec: WugnnSpec, graph: InterferenceGraph, p_max: float) -> ad.Tensor:
    """Tape-aware forward pass: raw graph in, (n, 1) feasible amplitudes out.

    Coordinate 0 of each state runs the closed-form u/w/v updates on the raw
    gains, vectorized over edges: the interference sums that the solver
    forms row by row become a gather, an edge-wise product, and a
    scatter-add (own terms enter separately because the graph stores no
    self-edges). In the corrected layers every update is rescaled by
    (1 + gate * tanh(s)) with s the matching block's first output column;
    the remaining sweeps run the bare updates on the scalar chain. With all
    gates at zero the result equals k_layers truncated solver sweeps from
    the half-power start. The v scalar is clamped to the budget each sweep,
    so the final column is feasible for any parameter values.
    """
    n = graph.n_nodes
    h = spec.hidden_dim
    node_feat, edge_gain, src, dst = _model_constants(graph)
    # raw quantities drive the closed-form updates; the normalized copies
    # above feed only the learned blocks
    h_dir = ad.Tensor(graph.node_features[:, 0:1])
    h_dir2 = ad.Tensor(graph.node_features[:, 0:1] ** 2)
    noise = ad.Tensor(graph.node_features[:, 1:2])
    gain2 = ad.Tensor(graph.edge_features**2)
    one = ad.Tensor(np.asarray(1.0))
    neg = ad.Tensor(np.asarray(-1.0))
    guard = ad.Tensor(np.asarray(_V_DEN_GUARD))
    vmax = float(np.sqrt(p_max))

    def exact_u(v):
        v_src = ad.gather_rows(v, src)
        den = ad.add(
            ad.add(noise, ad.mul(h_dir2, ad.mul(v, v))),
            ad.scatter_add_rows(ad.mul(gain2, ad.mul(v_src, v_src)), dst, n),
        )
        return ad.div(ad.mul(h_dir, v), den)

    def exact_w(u, v):
        rem = ad.add(one, ad.mul(neg, ad.mul(u, ad.mul(h_dir, v))))
        return ad.div(one, ad.clamp(rem, _W_REM_FLOOR, np.inf))

    def exact_v(u, w):
        u2w = ad.mul(ad.mul(u, u), w)
        den = ad.add(
            ad.scatter_add_rows(ad.mul(gain2, ad.gather_rows(u2w, dst)), src, n),
            ad.mul(h_dir2, u2w),
        )
        return ad.div(ad.mul(ad.mul(u, w), h_dir), ad.add(den, guard))

    def corrected(exact, gate, signal):
        factor = ad.add(one, ad.mul(gate, ad.tanh(ad.slice_cols(signal, 0, 1))))
        return ad.mul(exact, factor)

    u_state = ad.Tensor(np.zeros((n, h)))
    w_state = ad.Tensor(np.zeros((n, h)))
    v0 = np.zeros((n, h))
    v0[:, 0] = np.sqrt(p_max / 2.0)  # the solver's half-power start
    v_state = ad.Tensor(v0)
    for prefix in spec.layer_prefixes():
        y = gnn_u_step(
            params, spec, prefix, node_feat, edge_gain, src, dst, (u_state, w_state, v_state)
        )
        v = ad.slice_cols(v_state, 0, 1)
        u = corrected(exact_u(v), _gate(params, prefix + "u_gate"), y)
        u_state = ad.concat_cols([u, ad.slice_cols(y, 1, h)])

        z = mlp_w_step(params, spec, prefix, node_feat, (u_state, w_state, v_state))
        w = corrected(exact_w(u, v), _gate(params, prefix + "w_gate"), z)
        w_state = ad.concat_cols([w, ad.slice_cols(z, 1, h)])

        t = gnn_v_step(
            params, spec, prefix, node_feat, edge_gain, src, dst, (u_state, w_state, v_state)
        )
        v_new = ad.clamp(corrected(exact_v(u, w), _gate(params, prefix + "v_gate"), t), 0.0, vmax)
        v_state = ad.concat_cols([v_new, ad.slice_cols(t, 1, h)])

    v = ad.slice_cols(v_state, 0, 1)
    for _ in range(spec.k_layers - spec.corrected_layers):
        u = exact_u(v)
        w = exact_w(u, v)
        v = ad.clamp(exact_v(u, w), 0.0, vmax)
    return v


def gnn_baseline_amplitudes(params: dict, spec: GnnBaselineSpec, graph: InterferenceGraph, p_max: float) -> ad.Tensor:
    """Tape-aware forward pass of the generic message-passing baseline."""
    n = graph.n_nodes
    node_feat, edge_gain, src, dst = _model_constants(graph)
    state = ad.Tensor(np.zeros((n, spec.hidden_dim)))
    for _ in range(spec.rounds):
        messages = mlp_forward(
            params,
            spec.message,
            ad.concat_cols([ad.gather_rows(state, src), edge_gain]),
            prefix="msg/",
        )
        agg = ad.symlog(ad.scatter_add_rows(messages, dst, n))
        state = mlp_forward(
            params,
            spec.update,
            ad.concat_cols([node_feat, state, agg]),
            prefix="upd/",
        )
    raw = mlp_forward(params, spec.readout, state, prefix="readout/")
    return project_power(raw, p_max)


# Plain-numpy twins of the taped forwards. Same operations, same order,
# same dtypes, so outputs are bit-identical to the taped passes (asserted
# in tests); inference skips the tape bookkeeping entirely.

_NP_ACTIVATIONS = {
    "relu": lambda x: np.where(x > 0.0, x, 0.0),
    "tanh": np.tanh,
    "sigmoid": lambda x: np.where(
        x >= 0.0,
        1.0 / (1.0 + np.exp(-np.abs(x))),
        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))),
    ),
    "identity": lambda x: x,
}


def _symlog_np(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.log1p(np.abs(x))


def _mlp_np(params: dict, spec: MlpSpec, x: np.ndarray, prefix: str = "") -> np.ndarray:
    h = x
    for layer in range(spec.n_layers):
        weight = _param(params, f"{prefix}W{layer}").data
        bias = _param(params, f"{prefix}b{layer}").data
        expected = (spec.layer_widths[layer], spec.layer_widths[layer + 1])
        if weight.shape != expected or bias.shape != expected[1:]:
            raise ValueError(f"parameter shapes do not match spec at layer {layer}")
        h = h @ weight + bias
        last = layer == spec.n_layers - 1
        h = _NP_ACTIVATIONS[spec.output_activation if last else spec.activation](h)
    return h


def _segment_plan(index: np.ndarray, out_rows: int):
    """Reusable sort plan for summing edge rows into node rows.

    The grouping depends only on the index array, which is fixed for a
    given graph, so the argsort is paid once per forward pass instead of
    once per aggregation. The sum itself replays the exact reduction that
    ``autodiff`` applies, keeping both forwards bit-identical.
    """
    if index.size == 0:
        return None
    order = np.argsort(index, kind="stable")
    sorted_index = index[order]
    starts = np.flatnonzero(np.r_[True, sorted_index[1:] != sorted_index[:-1]])
    return order, starts, sorted_index[starts], out_rows


def _planned_segment_sum(rows: np.ndarray, plan) -> np.ndarray:
    if plan is None:
        raise ValueError("empty-graph plan cannot aggregate rows")
    order, starts, ids, out_rows = plan
    out = np.zeros((out_rows, rows.shape[1]))
    out[ids] = np.add.reduceat(rows[order], starts, axis=0)
    return out


def _gnn_block_np(params, module: GnnModuleSpec, prefix, msg_inputs, combine_locals, agg_plan, n_nodes):
    messages = _mlp_np(params, module.message, np.concatenate(msg_inputs, axis=1), prefix=prefix[0])
    if agg_plan is None:
        agg = np.zeros((n_nodes, module.message.layer_widths[-1]))
    else:
        agg = _symlog_np(_planned_segment_sum(messages, agg_plan))
    return _mlp_np(params, module.combine, np.concatenate(combine_locals + [agg], axis=1), prefix=prefix[1])


def _wugnn_np(params: dict, spec: WugnnSpec, graph: InterferenceGraph, p_max: float) -> np.ndarray:
    n = graph.n_nodes
    h = spec.hidden_dim
    normed = normalize_features(graph)
    node_feat = normed.node_features
    edge_gain = normed.edge_features
    src, dst = graph.edge_src, graph.edge_dst
    dst_plan = _segment_plan(dst, n)
    src_plan = _segment_plan(src, n)
    h_dir = graph.node_features[:, 0:1]
    h_dir2 = graph.node_features[:, 0:1] ** 2
    noise = graph.node_features[:, 1:2]
    gain2 = graph.edge_features**2
    vmax = float(np.sqrt(p_max))

    def seg_sum(rows, plan):
        if plan is None:
            return np.zeros((n, rows.shape[1]))
        return _planned_segment_sum(rows, plan)

    def exact_u(v):
        v_src = v[src]
        den = (noise + h_dir2 * (v * v)) + seg_sum(gain2 * (v_src * v_src), dst_plan)
        return (h_dir * v) / den

    def exact_w(u, v):
        rem = 1.0 - u * (h_dir * v)
        return 1.0 / np.clip(rem, _W_REM_FLOOR, np.inf)

    def exact_v(u, w):
        u2w = (u * u) * w
        den = seg_sum(gain2 * u2w[dst], src_plan) + h_dir2 * u2w
        return ((u * w) * h_dir) / (den + _V_DEN_GUARD)

    def corrected(exact, gate_name, signal):
        gate = _gate(params, gate_name).data
        return exact * (1.0 + gate * np.tanh(signal[:, 0:1]))

    u_state = np.zeros((n, h))
    w_state = np.zeros((n, h))
    v0 = np.zeros((n, h))
    v0[:, 0] = np.sqrt(p_max / 2.0)
    v_state = v0
    for prefix in spec.layer_prefixes():
        y = _gnn_block_np(
            params,
            spec.gnn_u,
            (prefix + "u_msg/", prefix + "u_comb/"),
            [v_state[src], edge_gain],
            [node_feat, v_state],
            dst_plan,
            n,
        )
        v = v_state[:, 0:1]
        u = corrected(exact_u(v), prefix + "u_gate", y)
        u_state = np.concatenate([u, y[:, 1:]], axis=1)

        z = _mlp_np(
            params,
            spec.mlp_w,
            np.concatenate([node_feat, u_state, v_state], axis=1),
            prefix=prefix + "w/",
        )
        w = corrected(exact_w(u, v), prefix + "w_gate", z)
        w_state = np.concatenate([w, z[:, 1:]], axis=1)

        t = _gnn_block_np(
            params,
            spec.gnn_v,
            (prefix + "v_msg/", prefix + "v_comb/"),
            [u_state[dst], w_state[dst], edge_gain],
            [node_feat, u_state, w_state],
            src_plan,
            n,
        )
        v_new = np.clip(corrected(exact_v(u, w), prefix + "v_gate", t), 0.0, vmax)
        v_state = np.concatenate([v_new, t[:, 1:]], axis=1)

    v = v_state[:, 0:1]
    for _ in range(spec.k_layers - spec.corrected_layers):
        u = exact_u(v)
        w = exact_w(u, v)
        v = np.clip(exact_v(u, w), 0.0, vmax)
    return v


def _gnn_baseline_np(params: dict, spec: GnnBaselineSpec, graph: InterferenceGraph, p_max: float) -> np.ndarray:
    n = graph.n_nodes
    normed = normalize_features(graph)
    node_feat = normed.node_features
    edge_gain = normed.edge_features
    src, dst = graph.edge_src, graph.edge_dst
    dst_plan = _segment_plan(dst, n)
    state = np.zeros((n, spec.hidden_dim))
    for _ in range(spec.rounds):
        messages = _mlp_np(
            params, spec.message, np.concatenate([state[src], edge_gain], axis=1), prefix="msg/"
        )
        if dst_plan is None:
            agg = np.zeros((n, spec.message.layer_widths[-1]))
        else:
            agg = _symlog_np(_planned_segment_sum(messages, dst_plan))
        state = _mlp_np(
            params, spec.update, np.concatenate([node_feat, state, agg], axis=1), prefix="upd/"
        )
    raw = _mlp_np(params, spec.readout, state, prefix="readout/")
    return project_power(raw, p_max)


@dataclass(frozen=True)
class Model:
    """Uniform handle over both allocator kinds for training and evaluation."""

    kind: str
    spec: object

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        expected = WugnnSpec if self.kind == "wugnn" else GnnBaselineSpec
        if not isinstance(self.spec, expected):
            raise ConfigError(f"{self.kind} needs a {expected.__name__}")

    @classmethod
    def default(cls, kind: str) -> "Model":
        if kind == "wugnn":
            return cls(kind=kind, spec=WugnnSpec.default())
        if kind == "gnn_baseline":
            return cls(kind=kind, spec=GnnBaselineSpec.default())
        raise ConfigError(f"unknown model kind {kind!r}")

    def init(self, seed: int) -> dict:
        """Fresh parameters; one child seed per MLP block, so deterministic.

        Correction gates start at exactly zero, which makes a fresh unrolled
        network equal to truncated solver sweeps until training opens them.
        """
        blocks = self.spec.named_mlps()
        child_seeds = np.random.SeedSequence(seed).generate_state(len(blocks))
        params = {}
        for (prefix, mlp_spec), child in zip(blocks, child_seeds):
            params.update(init_params(mlp_spec, seed=int(child), prefix=prefix))
        if self.kind == "wugnn":
            for name in self.spec.gate_names():
                params[name] = ad.Tensor(np.zeros(1), requires_grad=True)
        return params

    def n_params(self) -> int:
        return self.spec.n_params()

    def amplitudes(self, params: dict, graph: InterferenceGraph, p_max: float) -> ad.Tensor:
        if self.kind == "wugnn":
            return wugnn_amplitudes(params, self.spec, graph, p_max)
        return gnn_baseline_amplitudes(params, self.spec, graph, p_max)

    def forward_graph(self, params: dict, graph: InterferenceGraph, instance: NetworkInstance) -> np.ndarray:
        """Inference forward on plain arrays, bit-identical to ``amplitudes``."""
        if graph.n_nodes != instance.n:
            raise ValueError(
                f"graph has {graph.n_nodes} nodes but instance has {instance.n}"
            )
        if self.kind == "wugnn":
            return _wugnn_np(params, self.spec, graph, instance.p_max).reshape(-1)
        return _gnn_baseline_np(params, self.spec, graph, instance.p_max).reshape(-1)

    def to_meta(self) -> dict:
        return {"kind": self.kind, "spec": self.spec.to_dict()}

    @classmethod
    def from_meta(cls, meta: dict) -> "Model":
        kind = meta["kind"]
        if kind == "wugnn":
            return cls(kind=kind, spec=WugnnSpec.from_dict(meta["spec"]))
        if kind == "gnn_baseline":
            return cls(kind=kind, spec=GnnBaselineSpec.from_dict(meta["spec"]))
        raise ConfigError(f"unknown model kind {kind!r}")


def wugnn_forward(params: dict, spec: WugnnSpec, graph: InterferenceGraph, instance: NetworkInstance) -> np.ndarray:
    """Allocate power for one instance; returns feasible amplitudes (n,)."""
    return Model(kind="wugnn", spec=spec).forward_graph(params, graph, instance)


def gnn_baseline_forward(params: dict, spec: GnnBaselineSpec, graph: InterferenceGraph, instance: NetworkInstance) -> np.ndarray:
    """Baseline allocation for one instance; returns feasible amplitudes (n,)."""
    return Model(kind="gnn_baseline", spec=spec).forward_graph(params, graph, instance)
