"""Graph-ODE layers and model assembly.

All node states are row-major: X has one row per node, and weight matrices
act by right-multiplication, so the antisymmetric graph-wise field reads

    dX/dt = sigma(X (W - W^T) + (Ahat + Ahat^T) X Vhat + beta (At - At^T) X (Z + Z^T))

with Ahat the symmetrically normalized adjacency and At the random-walk
adjacency.  Forward Euler with step eps subtracts gamma from the diagonal of
the weight term.  The A-DGN layer is the beta=0 special case with the plain
neighbor-sum (or GCN) operator in place of Ahat + Ahat^T.

The Hamiltonian layers keep state (p, q), each of width d/2, and advance with
the explicit symplectic Euler scheme: p moves first under -grad_q H (optionally
dampened and forced), then q moves under +grad_p H at the new p.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .autodiff import ACTIVATIONS, Activation, ParamStore, Tape, Tensor, forward_mlp, init_mlp
from .graphs import Graph

__all__ = [
    "GraphBatch",
    "LearnedOperators",
    "ModelConfig",
    "MODEL_KINDS",
    "adgn_forward",
    "build_operators",
    "core_forward",
    "gcn_forward",
    "hamiltonian_energy",
    "heat_diffusion_forward",
    "init_model",
    "make_batch",
    "model_forward",
    "model_loss",
    "phdgn_forward",
    "swan_forward",
    "swan_learn_operators",
]

MODEL_KINDS = (
    "adgn",
    "swan",
    "swan-learn",
    "swan-ne",
    "swan-learn-ne",
    "hdgn",
    "phdgn",
    "heat",
    "gcn",
)

DAMPENING_KINDS = ("none", "param", "param_plus", "mlp4_relu", "dgn_relu")
FORCE_KINDS = ("none", "mlp4_sin", "dgn_tanh")


class NumericOverflow(FloatingPointError):
    def __init__(self, layer: int):
        super().__init__(f"non-finite state at layer {layer}")
        self.layer = layer


@dataclass(frozen=True)
class ModelConfig:
    """Flat hyperparameter record covering every model kind.

    Fields irrelevant to a kind are ignored by its forward.  ``hidden`` is the
    embedding width d (must be even for hdgn/phdgn), ``layers`` the number of
    shared-weight Euler steps L.
    """

    kind: str
    d_in: int
    d_out: int
    task: str = "node"  # node | graph
    hidden: int = 8
    layers: int = 1
    eps: float = 0.1
    gamma: float = 0.0
    beta: float = 1.0
    agg: str = "simple"  # simple | gcn   (adgn; also phdgn via agg_p/agg_q)
    act: str = "tanh"
    dampening: str = "none"
    force: str = "none"
    readout_input: str = "pq"  # p | q | pq
    agg_p: str = "simple"
    agg_q: str = "simple"
    encoder_hidden: int = 1  # hidden layers in encoder/readout MLPs

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.task not in ("node", "graph"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.layers < 0:
            raise ValueError("layers must be non-negative")
        if self.kind in ("hdgn", "phdgn") and self.hidden % 2:
            raise ValueError("hamiltonian state width must be even")
        if self.dampening not in DAMPENING_KINDS:
            raise ValueError(f"unknown dampening {self.dampening!r}")
        if self.force not in FORCE_KINDS:
            raise ValueError(f"unknown force {self.force!r}")

    @property
    def activation(self) -> Activation:
        return ACTIVATIONS[self.act]

    @property
    def swan_learned(self) -> bool:
        return self.kind in ("swan-learn", "swan-learn-ne")

    @property
    def swan_enforce_antisym(self) -> bool:
        return self.kind in ("swan", "swan-learn")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


# ---------------------------------------------------------------------------
# graph operators (constant per graph, sparse)


def build_operators(g: Graph) -> dict:
    """Sparse shift operators shared by all layer kinds.

    Degree-zero rows stay zero under normalization (zero-row policy).
    """
    n = g.n
    if g.n_edges:
        rows, cols = g.edges[:, 0], g.edges[:, 1]
        a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    else:
        a = sp.csr_matrix((n, n))
    deg = np.asarray(a.sum(axis=1)).reshape(-1)
    with np.errstate(divide="ignore"):
        dinv = np.where(deg > 0, 1.0 / np.maximum(deg, 1), 0.0)
    dis = np.sqrt(dinv)
    d_is = sp.diags(dis)
    ahat = d_is @ a @ d_is
    atil = sp.diags(dinv) @ a
    eye = sp.identity(n, format="csr")
    # GCN operator: self-loops added, hat-degree = deg + 1
    dh = 1.0 / np.sqrt(deg + 1.0)
    dh_m = sp.diags(dh)
    gcn = dh_m @ (a + eye) @ dh_m
    gcn_off = gcn.copy().tolil()
    gcn_off.setdiag(0.0)
    ops = {
        "n": n,
        "adj": a.tocsr(),
        "hat": ahat.tocsr(),
        "tilde": atil.tocsr(),
        "hat_sym": (ahat + ahat.T).tocsr(),
        "tilde_anti": (atil - atil.T).tocsr(),
        "lap_sym": (sp.diags((deg > 0).astype(float)) - ahat).tocsr(),
        "gcn": gcn.tocsr(),
        "gcn_offdiag": gcn_off.tocsr(),
        "edges": g.edges,
    }
    return ops


def _agg_op(ops: dict, kind: str):
    if kind == "simple":
        return ops["adj"]
    if kind == "gcn":
        return ops["gcn"]
    raise ValueError(f"unknown aggregation {kind!r}")


def _check_finite(x: np.ndarray, layer: int) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericOverflow(layer)


# ---------------------------------------------------------------------------
# A-DGN


def adgn_forward(
    tape: Tape,
    params: ParamStore,
    ops: dict,
    x0: Tensor,
    cfg: ModelConfig,
    traj: list | None = None,
) -> Tensor:
    """L shared-weight Euler steps of X + eps*sigma(X(W-W^T-gI) + S X V + b)."""
    act = cfg.activation
    s = _agg_op(ops, cfg.agg)
    w = tape.antisym(tape.leaf(params["core.w"]))
    wg = tape.sub(w, tape.constant(cfg.gamma * np.eye(cfg.hidden)))
    v = tape.leaf(params["core.v"])
    b = tape.leaf(params["core.b"])
    x = x0
    if traj is not None:
        traj.append(x)
    for layer in range(cfg.layers):
        pre = tape.add_bias(
            tape.add(tape.matmul(x, wg), tape.const_mm(s, tape.matmul(x, v))), b
        )
        x = tape.add(x, tape.scale(tape.act(pre, act), cfg.eps))
        _check_finite(x.value, layer + 1)
        if traj is not None:
            traj.append(x)
    return x


# ---------------------------------------------------------------------------
# SWAN


@dataclass
class LearnedOperators:
    """Edge-weighted operators produced by the SWAN-learn edge network.

    ``w_hat``/``w_tilde`` hold per-edge scalar weights of
    Ahat_F = D_F^{-1/2} F D_F^{-1/2} and At_F = D_F^{-1} F, where F carries the
    learned edge weights and D_F its column-sum degrees.
    """

    rows: np.ndarray
    cols: np.ndarray
    n: int
    w_hat: Tensor
    w_tilde: Tensor

    def _apply(self, tape: Tape, w: Tensor, x: Tensor, out_idx, in_idx) -> Tensor:
        gathered = tape.gather_rows(x, in_idx)
        return tape.segment_sum(tape.mul_colvec(gathered, w), out_idx, self.n)

    def apply_hat_sym(self, tape: Tape, x: Tensor) -> Tensor:
        """(Ahat_F + Ahat_F^T) X."""
        fwd = self._apply(tape, self.w_hat, x, self.rows, self.cols)
        rev = self._apply(tape, self.w_hat, x, self.cols, self.rows)
        return tape.add(fwd, rev)

    def apply_tilde_anti(self, tape: Tape, x: Tensor) -> Tensor:
        """(At_F - At_F^T) X."""
        fwd = self._apply(tape, self.w_tilde, x, self.rows, self.cols)
        rev = self._apply(tape, self.w_tilde, x, self.cols, self.rows)
        return tape.sub(fwd, rev)

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Materialize (Ahat_F, At_F) as dense matrices (no gradients)."""
        hat = np.zeros((self.n, self.n))
        til = np.zeros((self.n, self.n))
        np.add.at(hat, (self.rows, self.cols), self.w_hat.value)
        np.add.at(til, (self.rows, self.cols), self.w_tilde.value)
        return hat, til


def swan_learn_operators(
    tape: Tape, params: ParamStore, ops: dict, x0: Tensor
) -> LearnedOperators:
    """Edge-weight network: f_emb = relu(K2 tanh(K1 [x_u | x_v])), weight =
    mean(f_emb), normalized by column-sum degrees (zero sums give zero rows)."""
    edges = ops["edges"]
    n = ops["n"]
    rows, cols = edges[:, 0], edges[:, 1]
    k1 = tape.leaf(params["edge.k1"])
    k2 = tape.leaf(params["edge.k2"])
    f_in = tape.concat_cols(tape.gather_rows(x0, rows), tape.gather_rows(x0, cols))
    h = tape.act(tape.matmul(f_in, k1), ACTIVATIONS["tanh"])
    f_emb = tape.act(tape.matmul(h, k2), ACTIVATIONS["relu"])
    f = tape.scale(tape.sum_cols(f_emb), 1.0 / f_emb.value.shape[1])
    col_deg = tape.segment_sum(f, cols, n)
    dinv = tape.rinv_safe(col_deg)
    dis = tape.rsqrt_safe(col_deg)
    w_hat = tape.mul(tape.mul(f, tape.gather_rows(dis, rows)), tape.gather_rows(dis, cols))
    w_tilde = tape.mul(f, tape.gather_rows(dinv, rows))
    return LearnedOperators(rows, cols, n, w_hat, w_tilde)


def swan_forward(
    tape: Tape,
    params: ParamStore,
    ops: dict,
    x0: Tensor,
    cfg: ModelConfig,
    traj: list | None = None,
    learned: LearnedOperators | None = None,
    hat_sym=None,
    tilde_anti=None,
) -> Tensor:
    """L Euler steps of the graph-wise antisymmetric field (module docstring).

    Learned-operator variants take ``learned`` (built once per graph from the
    encoder output); fixed variants use the graph's normalized adjacencies or
    the explicit ``hat_sym``/``tilde_anti`` overrides.
    """
    act = cfg.activation
    w = tape.antisym(tape.leaf(params["core.w"]))
    wg = tape.sub(w, tape.constant(cfg.gamma * np.eye(cfg.hidden)))
    vraw = tape.leaf(params["core.v"])
    v = tape.antisym(vraw) if cfg.swan_enforce_antisym else vraw
    z = tape.sym(tape.leaf(params["core.z"]))
    b = tape.leaf(params["core.b"])
    if cfg.swan_learned and learned is None:
        learned = swan_learn_operators(tape, params, ops, x0)
    if learned is None:
        hs = ops["hat_sym"] if hat_sym is None else hat_sym
        ta = ops["tilde_anti"] if tilde_anti is None else tilde_anti
        apply_hat = lambda t, x: t.const_mm(hs, x)
        apply_tilde = lambda t, x: t.const_mm(ta, x)
    else:
        apply_hat = learned.apply_hat_sym
        apply_tilde = learned.apply_tilde_anti
    x = x0
    if traj is not None:
        traj.append(x)
    for layer in range(cfg.layers):
        t1 = tape.matmul(x, wg)
        t2 = apply_hat(tape, tape.matmul(x, v))
        pre = tape.add(t1, t2)
        if cfg.beta != 0.0:
            t3 = tape.scale(apply_tilde(tape, tape.matmul(x, z)), cfg.beta)
            pre = tape.add(pre, t3)
        pre = tape.add_bias(pre, b)
        x = tape.add(x, tape.scale(tape.act(pre, act), cfg.eps))
        _check_finite(x.value, layer + 1)
        if traj is not None:
            traj.append(x)
    return x


# ---------------------------------------------------------------------------
# H-DGN / PH-DGN


def _ham_pre(tape, s, state: Tensor, w: Tensor, v: Tensor, b: Tensor) -> Tensor:
    """Pre-activation W x_u + sum_{v in N(u)} V x_v + b for all nodes."""
    return tape.add_bias(
        tape.add(
            tape.matmul(state, tape.transpose(w)),
            tape.const_mm(s, tape.matmul(state, tape.transpose(v))),
        ),
        b,
    )


def _ham_grad(tape, s, state: Tensor, w: Tensor, v: Tensor, b: Tensor, act) -> Tensor:
    """Gradient of H w.r.t. ``state``: sigma(pre) W + S^T sigma(pre) V."""
    sig = tape.act(_ham_pre(tape, s, state, w, v, b), act)
    return tape.add(tape.matmul(sig, w), tape.const_mm(s.T, tape.matmul(sig, v)))


def _dampening(tape, params, ops, cfg, q: Tensor) -> Tensor | None:
    """Per-node diagonal dampening vector D_u(q), or None."""
    kind = cfg.dampening
    if kind == "none":
        return None
    if kind in ("param", "param_plus"):
        w = tape.leaf(params["damp.w"])
        return tape.act(w, ACTIVATIONS["relu"]) if kind == "param_plus" else w
    if kind == "mlp4_relu":
        return forward_mlp(
            tape, params, "damp", 4, ACTIVATIONS["relu"], q, final_activation=True
        )
    # dgn_relu: one neighbor-sum layer over q
    wd = tape.leaf(params["damp.w0"])
    vd = tape.leaf(params["damp.v0"])
    bd = tape.leaf(params["damp.b0"])
    pre = tape.add_bias(
        tape.add(tape.matmul(q, wd), tape.const_mm(ops["adj"], tape.matmul(q, vd))), bd
    )
    return tape.act(pre, ACTIVATIONS["relu"])


def _force(tape, params, ops, cfg, q: Tensor, t: float) -> Tensor | None:
    """External force F_u(q, t) with t appended as an input coordinate."""
    kind = cfg.force
    if kind == "none":
        return None
    t_col = tape.constant(np.full((q.value.shape[0], 1), t))
    u = tape.concat_cols(q, t_col)
    if kind == "mlp4_sin":
        return forward_mlp(tape, params, "force", 4, ACTIVATIONS["sin"], u)
    # dgn_tanh: one neighbor-sum layer over [q | t]
    wf = tape.leaf(params["force.w0"])
    vf = tape.leaf(params["force.v0"])
    bf = tape.leaf(params["force.b0"])
    pre = tape.add_bias(
        tape.add(tape.matmul(u, wf), tape.const_mm(ops["adj"], tape.matmul(u, vf))), bf
    )
    return tape.act(pre, ACTIVATIONS["tanh"])


def phdgn_forward(
    tape: Tape,
    params: ParamStore,
    ops: dict,
    x0: Tensor,
    cfg: ModelConfig,
    traj: list | None = None,
) -> Tensor:
    """Symplectic Euler steps of the (port-)Hamiltonian node dynamics.

    Per step: z = grad_q H; dampening rescales z per node, force adds
    F(q, l*eps); p <- p - eps*z; then q <- q + eps * grad_p H(p_new, q).
    The neighbor sum excludes the node itself (operators have zero diagonal).
    """
    act = cfg.activation
    h = cfg.hidden // 2
    sp_op = ops["adj"] if cfg.agg_p == "simple" else ops["gcn_offdiag"]
    sq_op = ops["adj"] if cfg.agg_q == "simple" else ops["gcn_offdiag"]
    wp, wq = tape.leaf(params["core.wp"]), tape.leaf(params["core.wq"])
    vp, vq = tape.leaf(params["core.vp"]), tape.leaf(params["core.vq"])
    bp, bq = tape.leaf(params["core.bp"]), tape.leaf(params["core.bq"])
    def record_state(p, q):
        # keep the concatenated state on the differentiation path so
        # backward sensitivity traces see per-layer adjoints
        cat = tape.concat_cols(p, q)
        traj.append(cat)
        return tape.slice_cols(cat, 0, h), tape.slice_cols(cat, h, 2 * h)

    p = tape.slice_cols(x0, 0, h)
    q = tape.slice_cols(x0, h, 2 * h)
    if traj is not None:
        p, q = record_state(p, q)
    for layer in range(cfg.layers):
        z = _ham_grad(tape, sq_op, q, wq, vq, bq, act)
        d = _dampening(tape, params, ops, cfg, q)
        if d is not None:
            z = tape.mul_rowvec(z, d) if d.value.ndim == 1 else tape.mul(z, d)
        f = _force(tape, params, ops, cfg, q, layer * cfg.eps)
        if f is not None:
            z = tape.add(z, f)
        p = tape.sub(p, tape.scale(z, cfg.eps))
        gp = _ham_grad(tape, sp_op, p, wp, vp, bp, act)
        q = tape.add(q, tape.scale(gp, cfg.eps))
        _check_finite(p.value, layer + 1)
        _check_finite(q.value, layer + 1)
        if traj is not None:
            p, q = record_state(p, q)
    return tape.concat_cols(p, q)


def hamiltonian_energy(
    p: np.ndarray, q: np.ndarray, ops: dict, params: ParamStore, cfg: ModelConfig
) -> float:
    """H = sum_u 1^T sigma_tilde(W x_u + sum_{v in N(u)} V x_v + b), evaluated
    blockwise on (p, q) with the activation's antiderivative."""
    anti = cfg.activation.antiderivative
    if anti is None:
        raise ValueError(f"activation {cfg.act!r} has no antiderivative")
    sp_op = ops["adj"] if cfg.agg_p == "simple" else ops["gcn_offdiag"]
    sq_op = ops["adj"] if cfg.agg_q == "simple" else ops["gcn_offdiag"]
    total = 0.0
    for state, s, wn, vn, bn in (
        (p, sp_op, "core.wp", "core.vp", "core.bp"),
        (q, sq_op, "core.wq", "core.vq", "core.bq"),
    ):
        w, v, b = params[wn].value, params[vn].value, params[bn].value
        pre = state @ w.T + s @ state @ v.T + b
        total += float(anti(pre).sum())
    return total


# ---------------------------------------------------------------------------
# baselines


def heat_diffusion_forward(
    tape: Tape, ops: dict, x0: Tensor, eps: float, layers: int, traj: list | None = None
) -> Tensor:
    """Linear heat steps X <- X - eps * L_sym X."""
    x = x0
    if traj is not None:
        traj.append(x)
    lap = ops["lap_sym"]
    for layer in range(layers):
        x = tape.sub(x, tape.scale(tape.const_mm(lap, x), eps))
        _check_finite(x.value, layer + 1)
        if traj is not None:
            traj.append(x)
    return x


def gcn_forward(
    tape: Tape,
    params: ParamStore,
    ops: dict,
    x0: Tensor,
    cfg: ModelConfig,
    traj: list | None = None,
) -> Tensor:
    """Weight-shared diffusion-style baseline: X <- sigma(Ahat_gcn X W + b)."""
    act = cfg.activation
    w = tape.leaf(params["core.w"])
    b = tape.leaf(params["core.b"])
    x = x0
    if traj is not None:
        traj.append(x)
    for layer in range(cfg.layers):
        x = tape.act(tape.add_bias(tape.const_mm(ops["gcn"], tape.matmul(x, w)), b), act)
        _check_finite(x.value, layer + 1)
        if traj is not None:
            traj.append(x)
    return x


# ---------------------------------------------------------------------------
# model assembly


def init_model(cfg: ModelConfig, seed: int) -> ParamStore:
    """Parameter store for encoder + core + readout, uniform fan-in init."""
    rng = np.random.default_rng(seed)
    params = ParamStore()
    d = cfg.hidden
    enc_dims = [cfg.d_in] + [d] * cfg.encoder_hidden + [d]
    init_mlp(params, "enc", enc_dims, rng)
    h = d // 2

    def mat(*shape):
        bound = 1.0 / math.sqrt(shape[0])
        return rng.uniform(-bound, bound, size=shape)

    if cfg.kind in ("adgn",):
        params.add("core.w", mat(d, d))
        params.add("core.v", mat(d, d))
        params.add("core.b", mat(d))
    elif cfg.kind.startswith("swan"):
        params.add("core.w", mat(d, d))
        params.add("core.v", mat(d, d))
        params.add("core.z", mat(d, d))
        params.add("core.b", mat(d))
        if cfg.swan_learned:
            params.add("edge.k1", mat(2 * d, d))
            params.add("edge.k2", mat(d, d))
    elif cfg.kind in ("hdgn", "phdgn"):
        for name in ("wp", "wq", "vp", "vq"):
            params.add(f"core.{name}", mat(h, h))
        params.add("core.bp", mat(h))
        params.add("core.bq", mat(h))
        if cfg.kind == "phdgn":
            if cfg.dampening in ("param", "param_plus"):
                params.add("damp.w", mat(h))
            elif cfg.dampening == "mlp4_relu":
                init_mlp(params, "damp", [h] * 5, rng)
            elif cfg.dampening == "dgn_relu":
                params.add("damp.w0", mat(h, h))
                params.add("damp.v0", mat(h, h))
                params.add("damp.b0", mat(h))
            if cfg.force == "mlp4_sin":
                init_mlp(params, "force", [h + 1] * 4 + [h], rng)
            elif cfg.force == "dgn_tanh":
                params.add("force.w0", mat(h + 1, h))
                params.add("force.v0", mat(h + 1, h))
                params.add("force.b0", mat(h))
    elif cfg.kind == "gcn":
        params.add("core.w", mat(d, d))
        params.add("core.b", mat(d))
    elif cfg.kind == "heat":
        pass  # parameter-free core
    if cfg.kind in ("hdgn", "phdgn") and cfg.readout_input in ("p", "q"):
        ro_in = h
    else:
        ro_in = d
    ro_dims = [ro_in] + [d] * cfg.encoder_hidden + [cfg.d_out]
    init_mlp(params, "ro", ro_dims, rng)
    return params


def core_forward(
    tape: Tape,
    params: ParamStore,
    ops: dict,
    x0: Tensor,
    cfg: ModelConfig,
    traj: list | None = None,
) -> Tensor:
    if cfg.kind == "adgn":
        return adgn_forward(tape, params, ops, x0, cfg, traj)
    if cfg.kind.startswith("swan"):
        return swan_forward(tape, params, ops, x0, cfg, traj)
    if cfg.kind in ("hdgn", "phdgn"):
        return phdgn_forward(tape, params, ops, x0, cfg, traj)
    if cfg.kind == "heat":
        return heat_diffusion_forward(tape, ops, x0, cfg.eps, cfg.layers, traj)
    if cfg.kind == "gcn":
        return gcn_forward(tape, params, ops, x0, cfg, traj)
    raise ValueError(cfg.kind)


def model_forward(
    tape: Tape,
    params: ParamStore,
    cfg: ModelConfig,
    ops: dict,
    x: np.ndarray,
    pool=None,
) -> Tensor:
    """encoder -> core -> (optional mean pool) -> readout."""
    x0 = tape.act(
        forward_mlp(tape, params, "enc", cfg.encoder_hidden + 1, cfg.activation, tape.constant(x)),
        cfg.activation,
    )
    h = core_forward(tape, params, ops, x0, cfg)
    if cfg.kind in ("hdgn", "phdgn") and cfg.readout_input != "pq":
        half = cfg.hidden // 2
        h = tape.slice_cols(h, 0, half) if cfg.readout_input == "p" else tape.slice_cols(h, half, 2 * half)
    if cfg.task == "graph":
        if pool is None:
            pool = np.full((1, h.value.shape[0]), 1.0 / h.value.shape[0])
        h = tape.const_mm(pool, h)
    return forward_mlp(tape, params, "ro", cfg.encoder_hidden + 1, cfg.activation, h)


def model_loss(
    tape: Tape, pred: Tensor, target: np.ndarray, mask: np.ndarray | None = None
) -> Tensor:
    """Mean squared error over unmasked entries."""
    target = np.asarray(target, dtype=float).reshape(pred.value.shape)
    diff = tape.sub(pred, tape.constant(target))
    sq = tape.mul(diff, diff)
    if mask is not None:
        m = np.asarray(mask, dtype=float).reshape(-1)
        sq = tape.mul_colvec(sq, tape.constant(m))
        count = float(m.sum()) * target.shape[1]
    else:
        count = float(target.size)
    return tape.scale(tape.sum(sq), 1.0 / count)


# ---------------------------------------------------------------------------
# batching


@dataclass
class GraphBatch:
    """Several graphs merged into one block-diagonal graph.

    ``pool`` is the (G, N) sparse row-mean matrix for graph-level readout;
    ``targets`` stacks node targets (N, d_t) or graph targets (G, d_t).
    """

    graph: Graph
    ops: dict
    n_graphs: int
    targets: np.ndarray
    mask: np.ndarray | None
    pool: sp.spmatrix | None
    node_graph: np.ndarray = field(default=None)


def save_checkpoint(path: str, cfg: ModelConfig, params: ParamStore) -> None:
    """Model checkpoint: JSON of the config record plus named parameters."""
    import json

    obj = {
        "config": cfg.to_dict(),
        "params": {k: p.value.tolist() for k, p in params.items()},
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)


def load_checkpoint(path: str) -> tuple[ModelConfig, ParamStore]:
    import json

    with open(path) as fh:
        obj = json.load(fh)
    cfg = ModelConfig.from_dict(obj["config"])
    params = ParamStore()
    for name, value in sorted(obj["params"].items()):
        params.add(name, np.array(value, dtype=float))
    return cfg, params


def make_batch(graphs: list[Graph], targets: list[np.ndarray], task: str,
               masks: list[np.ndarray] | None = None) -> GraphBatch:
    offsets = np.cumsum([0] + [g.n for g in graphs])
    n_total = int(offsets[-1])
    edge_blocks = [g.edges + off for g, off in zip(graphs, offsets[:-1]) if g.n_edges]
    edges = np.concatenate(edge_blocks) if edge_blocks else np.zeros((0, 2), dtype=np.int64)
    x = np.concatenate([g.x for g in graphs])
    merged = Graph(n_total, edges, True, x)
    node_graph = np.concatenate(
        [np.full(g.n, i, dtype=np.int64) for i, g in enumerate(graphs)]
    )
    pool = None
    if task == "graph":
        weights = np.concatenate([np.full(g.n, 1.0 / g.n) for g in graphs])
        pool = sp.csr_matrix(
            (weights, (node_graph, np.arange(n_total))), shape=(len(graphs), n_total)
        )
    if task == "graph":
        tgt = np.stack([np.atleast_1d(np.asarray(t, dtype=float)) for t in targets])
    else:
        tgt = np.concatenate([np.asarray(t, dtype=float).reshape(g.n, -1)
                              for g, t in zip(graphs, targets)])
    mask = None
    if masks is not None and any(m is not None for m in masks):
        mask = np.concatenate(
            [np.ones(g.n, bool) if m is None else np.asarray(m, bool)
             for g, m in zip(graphs, masks)]
        )
    return GraphBatch(merged, build_operators(merged), len(graphs), tgt, mask, pool, node_graph)
