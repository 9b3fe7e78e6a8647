"""Executable checks of the layer theory: Jacobian assembly and spectra,
backward sensitivity traces, propagation-rate curves, Jacobian drift,
divergence of the Hamiltonian field, and the sensitivity upper bound.

Vectorization is column-major throughout, matching vec(AXB) = kron(B^T, A) vec(X).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import ParamStore, Tape, Tensor
from .graphs import Graph
from .layers import (
    LearnedOperators,
    ModelConfig,
    build_operators,
    core_forward,
    hamiltonian_energy,
    heat_diffusion_forward,
    phdgn_forward,
    swan_forward,
    swan_learn_operators,
)
from .linalg import eig_general, expm, fro_norm, kron, spectral_norm, vec

__all__ = [
    "DiagnosticsReport",
    "SensitivityBoundParams",
    "assemble_swan_jacobian",
    "bsm_trace",
    "energy_trace",
    "fd_field_jacobian",
    "hamiltonian_divergence",
    "hamiltonian_field",
    "jacobian_drift",
    "max_re_eig",
    "measured_sensitivity",
    "propagation_rate",
    "sensitivity_upper_bound",
    "swan_field",
    "swan_ne_eig_radius",
    "swan_sensitivity_params",
]


@dataclass
class DiagnosticsReport:
    max_re_eig: float | None = None
    eigenvalues: list | None = None
    bsm_per_layer: list | None = None  # [(layer, norm)]
    energy_trace: list | None = None  # [(t, H)]
    jacobian_drift: list | None = None
    rate_curve: list | None = None  # [(t, frobenius norm)]
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        obj = asdict(self)
        if obj["eigenvalues"] is not None:
            obj["eigenvalues"] = [[float(z.real), float(z.imag)] for z in self.eigenvalues]
        return json.dumps(obj, sort_keys=True, indent=1)


# ---------------------------------------------------------------------------
# SWAN Jacobian


def _swan_matrices(params: ParamStore, cfg: ModelConfig):
    """Weight matrices of the continuous field (gamma enters only at the
    Euler discretization, not here)."""
    w = params["core.w"].value
    v = params["core.v"].value
    z = params["core.z"].value
    vh = (v - v.T) if cfg.swan_enforce_antisym else v
    return w - w.T, vh, z + z.T


def _swan_operator_mats(params: ParamStore, cfg: ModelConfig, ops: dict, x0: np.ndarray):
    """Dense (Ahat + Ahat^T, At - At^T), fixed or learned from x0."""
    if cfg.swan_learned:
        tape = Tape(record=False)
        lo = swan_learn_operators(tape, params, ops, Tensor(x0))
        hat, til = lo.dense()
        return hat + hat.T, til - til.T
    return ops["hat_sym"].toarray(), ops["tilde_anti"].toarray()


def swan_field(params: ParamStore, cfg: ModelConfig, ops: dict, x: np.ndarray,
               hat_sym: np.ndarray | None = None, tilde_anti: np.ndarray | None = None,
               x0: np.ndarray | None = None) -> np.ndarray:
    """The continuous vector field F(X) whose Euler steps swan_forward takes."""
    wg, vh, zs = _swan_matrices(params, cfg)
    b = params["core.b"].value
    if hat_sym is None or tilde_anti is None:
        hat_sym, tilde_anti = _swan_operator_mats(
            params, cfg, ops, x if x0 is None else x0
        )
    pre = x @ wg + hat_sym @ x @ vh + cfg.beta * (tilde_anti @ x @ zs) + b
    return cfg.activation.f(pre)


def assemble_swan_jacobian(
    g: Graph | dict,
    x: np.ndarray,
    params: ParamStore,
    cfg: ModelConfig,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(M1, M2) with J = diag(M1) @ M2 the Jacobian of the graph-wise field.

    M2 = (W-W^T)^T x I + Vhat^T x (Ahat+Ahat^T) + beta (Z+Z^T)^T x (At-At^T)
    (Kronecker products); M1 is sigma' at the pre-activation, column-major.
    For learned-operator variants the operators are built from ``x0``
    (defaults to ``x``).
    """
    ops = g if isinstance(g, dict) else build_operators(g)
    n = ops["n"]
    wg, vh, zs = _swan_matrices(params, cfg)
    b = params["core.b"].value
    hat_sym, tilde_anti = _swan_operator_mats(params, cfg, ops, x if x0 is None else x0)
    m2 = (
        kron(wg.T, np.eye(n))
        + kron(vh.T, hat_sym)
        + cfg.beta * kron(zs.T, tilde_anti)
    )
    pre = x @ wg + hat_sym @ x @ vh + cfg.beta * (tilde_anti @ x @ zs) + b
    m1 = vec(cfg.activation.df(pre))
    return m1, m2


def fd_field_jacobian(field, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a field in vec(X) coordinates."""
    n, d = x.shape
    jac = np.zeros((n * d, n * d))
    xv = vec(x).copy()
    for j in range(n * d):
        xp, xm = xv.copy(), xv.copy()
        xp[j] += h
        xm[j] -= h
        fp = vec(field(xp.reshape(n, d, order="F").copy()))
        fm = vec(field(xm.reshape(n, d, order="F").copy()))
        jac[:, j] = (fp - fm) / (2.0 * h)
    return jac


# ---------------------------------------------------------------------------
# backward sensitivity


def bsm_trace(
    params: ParamStore,
    cfg: ModelConfig,
    ops: dict,
    x0: np.ndarray,
    node: int,
    norm: str = "spectral",
) -> list[tuple[int, float]]:
    """Per-layer norms of the d x d block d x_u^L / d x_u^l.

    One backward replay per output coordinate of node u, seeding a unit
    adjoint on that coordinate of the final state.
    """
    d = x0.shape[1]
    tape = Tape()
    traj: list[Tensor] = []
    out = core_forward(tape, params, ops, Tensor(x0), cfg, traj=traj)
    blocks = [np.zeros((d, d)) for _ in traj]
    for i in range(d):
        seed = np.zeros_like(out.value)
        seed[node, i] = 1.0
        for state in traj:
            state.grad = None  # the input tensor is not on the tape
        tape.backward(out, seed=seed, replay=True)
        for layer, state in enumerate(traj):
            if state.grad is not None:
                blocks[layer][i, :] = state.grad[node]
    out_trace = []
    for layer, block in enumerate(blocks):
        val = spectral_norm(block) if norm == "spectral" else fro_norm(block)
        out_trace.append((layer, float(val)))
    return out_trace


# ---------------------------------------------------------------------------
# propagation rate and drift


def propagation_rate(
    field_kind: str,
    g: Graph,
    params: ParamStore | None,
    cfg: ModelConfig | None,
    t_max: float,
    steps: int,
) -> list[tuple[float, float]]:
    """||d vec X(t) / d vec X(0)||_F on a uniform time grid.

    "swan-linear": e^{tJ} with J the assembled (identity activation) Jacobian.
    "heat": e^{-tL} per feature column; the full-state norm is sqrt(d)*||e^{-tL}||_F.
    """
    ops = build_operators(g)
    ts = np.linspace(0.0, t_max, steps + 1)
    if field_kind == "swan-linear":
        assert params is not None and cfg is not None
        x = np.zeros((g.n, cfg.hidden))
        m1, m2 = assemble_swan_jacobian(ops, x, params, cfg)
        jac = np.diag(m1) @ m2
        return [(float(t), fro_norm(expm(jac, t))) for t in ts]
    if field_kind == "heat":
        lap = ops["lap_sym"].toarray()
        d = cfg.hidden if cfg is not None else 1
        return [(float(t), float(np.sqrt(d)) * fro_norm(expm(-lap, t))) for t in ts]
    raise ValueError(f"unknown field kind {field_kind!r}")


def jacobian_drift(
    params: ParamStore, cfg: ModelConfig, ops: dict, x0: np.ndarray
) -> list[float]:
    """Relative Frobenius change of the per-layer Jacobian along a trajectory.

    Defined for swan variants and the gcn baseline (state-dependent Jacobians
    through the activation); starts at the second transition.
    """
    tape = Tape(record=False)
    traj: list[Tensor] = []
    core_forward(tape, params, ops, Tensor(x0), cfg, traj=traj)
    n = ops["n"]
    jacs = []
    if cfg.kind.startswith("swan"):
        for state in traj[:-1]:
            m1, m2 = assemble_swan_jacobian(ops, state.value, params, cfg, x0=x0)
            jacs.append(np.diag(m1) @ m2)
    elif cfg.kind == "gcn":
        w = params["core.w"].value
        b = params["core.b"].value
        ghat = ops["gcn"].toarray()
        m2 = kron(w.T, ghat)
        for state in traj[:-1]:
            pre = ghat @ state.value @ w + b
            jacs.append(np.diag(vec(cfg.activation.df(pre))) @ m2)
    elif cfg.kind == "heat":
        lap = ops["lap_sym"].toarray()
        d = x0.shape[1]
        jacs = [kron(np.eye(d), -lap) for _ in traj[:-1]]
    else:
        raise ValueError(f"jacobian_drift not defined for kind {cfg.kind!r}")
    drifts = []
    for prev, cur in zip(jacs, jacs[1:]):
        denom = fro_norm(prev)
        drifts.append(float(fro_norm(cur - prev) / denom) if denom > 0 else 0.0)
    return drifts


# ---------------------------------------------------------------------------
# Hamiltonian checks


def energy_trace(
    params: ParamStore, cfg: ModelConfig, ops: dict, x0: np.ndarray
) -> list[tuple[float, float]]:
    """(t, H) along the symplectic trajectory, t = l * eps."""
    tape = Tape(record=False)
    traj: list[Tensor] = []
    phdgn_forward(tape, params, ops, Tensor(x0), cfg, traj=traj)
    h = cfg.hidden // 2
    out = []
    for layer, state in enumerate(traj):
        p, q = state.value[:, :h], state.value[:, h:]
        out.append((layer * cfg.eps, hamiltonian_energy(p, q, ops, params, cfg)))
    return out


def hamiltonian_field(
    params: ParamStore, cfg: ModelConfig, ops: dict, x: np.ndarray
) -> np.ndarray:
    """Continuous H-DGN field (dp/dt, dq/dt) = (-grad_q H, +grad_p H)."""
    h = cfg.hidden // 2
    p, q = x[:, :h], x[:, h:]
    act = cfg.activation
    sp_op = ops["adj"] if cfg.agg_p == "simple" else ops["gcn_offdiag"]
    sq_op = ops["adj"] if cfg.agg_q == "simple" else ops["gcn_offdiag"]
    wp, vp, bp = params["core.wp"].value, params["core.vp"].value, params["core.bp"].value
    wq, vq, bq = params["core.wq"].value, params["core.vq"].value, params["core.bq"].value
    sq = act.f(q @ wq.T + sq_op @ q @ vq.T + bq)
    grad_q = sq @ wq + sq_op.T @ sq @ vq
    sp_ = act.f(p @ wp.T + sp_op @ p @ vp.T + bp)
    grad_p = sp_ @ wp + sp_op.T @ sp_ @ vp
    return np.concatenate([-grad_q, grad_p], axis=1)


def hamiltonian_divergence(
    params: ParamStore, cfg: ModelConfig, ops: dict, x: np.ndarray, h: float = 1e-5
) -> float:
    """Numerical divergence of the H-DGN field at state x (central differences
    over every state coordinate); zero for a volume-preserving flow."""
    div = 0.0
    flat = x.copy()
    n, d = x.shape
    for u in range(n):
        for j in range(d):
            orig = flat[u, j]
            flat[u, j] = orig + h
            fp = hamiltonian_field(params, cfg, ops, flat)[u, j]
            flat[u, j] = orig - h
            fm = hamiltonian_field(params, cfg, ops, flat)[u, j]
            flat[u, j] = orig
            div += (fp - fm) / (2.0 * h)
    return float(div)


# ---------------------------------------------------------------------------
# sensitivity bound


@dataclass(frozen=True)
class SensitivityBoundParams:
    c_sigma: float  # activation Lipschitz constant
    w: float  # max |weight entry|
    p: int  # embedding dim
    c_r: float  # residual-term weight
    c_a: float  # aggregation-term weight
    c_b: float  # antisymmetric-term weight
    beta: float

    def __post_init__(self):
        for name in ("c_sigma", "w", "c_r", "c_a", "c_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def swan_sensitivity_params(
    params: ParamStore, cfg: ModelConfig, g: Graph
) -> SensitivityBoundParams:
    """Constants making the sensitivity bound valid for the Euler layer.

    Per step the (v,u) block of the layer Jacobian is bounded in spectral
    norm by c_sigma*w*p * (c_r [v=u] + c_a A_vu + |beta| c_b |S|_vu) with
    w the largest weight entry, p the width, c_r = 1/(c_sigma*w*p) + eps
    (identity residual plus the self term), c_a = eps * max-entry(Ahat+Ahat^T),
    c_b = eps; composing steps gives the matrix-power form.
    """
    wg, vh, zs = _swan_matrices(params, cfg)
    wg = wg - cfg.gamma * np.eye(cfg.hidden)
    w = max(np.abs(wg).max(), np.abs(vh).max(), np.abs(zs).max(), 1e-12)
    p = cfg.hidden
    c_sigma = cfg.activation.lipschitz
    ops = build_operators(g)
    m_a = float(np.abs(ops["hat_sym"].toarray()).max()) if g.n_edges else 0.0
    return SensitivityBoundParams(
        c_sigma=c_sigma,
        w=w,
        p=p,
        c_r=1.0 / (c_sigma * w * p) + cfg.eps,
        c_a=cfg.eps * m_a,
        c_b=cfg.eps,
        beta=cfg.beta,
    )


def sensitivity_upper_bound(
    bound: SensitivityBoundParams, g: Graph, n_layers: int, u: int, v: int
) -> float:
    """(c_sigma w p)^l ((c_r I + c_a A + |beta| c_b |S|)^l)_{vu} with A the
    adjacency and S = At - At^T (entrywise absolute value)."""
    ops = build_operators(g)
    a = ops["adj"].toarray()
    s_abs = np.abs(ops["tilde_anti"].toarray())
    o = bound.c_r * np.eye(g.n) + bound.c_a * a + abs(bound.beta) * bound.c_b * s_abs
    return float(
        (bound.c_sigma * bound.w * bound.p) ** n_layers
        * np.linalg.matrix_power(o, n_layers)[v, u]
    )


def measured_sensitivity(
    params: ParamStore,
    cfg: ModelConfig,
    ops: dict,
    x0: np.ndarray,
    u: int,
    v: int,
) -> float:
    """Spectral norm of d x_v^L / d x_u^0 via one backward pass per coordinate."""
    d = x0.shape[1]
    tape = Tape()
    x0_t = Tensor(x0)
    out = core_forward(tape, params, ops, x0_t, cfg)
    block = np.zeros((d, d))
    for i in range(d):
        seed = np.zeros_like(out.value)
        seed[v, i] = 1.0
        x0_t.grad = None  # the input tensor is not on the tape
        tape.backward(out, seed=seed, replay=True)
        if x0_t.grad is not None:
            block[i, :] = x0_t.grad[u]
    return spectral_norm(block)


def swan_ne_eig_radius(params: ParamStore, ops: dict) -> float:
    """Eigenvalue real-part radius for the unconstrained-V variants.

    M2 is an antisymmetric matrix plus the symmetric perturbation
    sym(V)^T kron (Ahat+Ahat^T); both are normal, so every real part is
    bounded by ||sym(V)||_2 * ||Ahat+Ahat^T||_2."""
    v = params["core.v"].value
    return spectral_norm(0.5 * (v + v.T)) * spectral_norm(ops["hat_sym"].toarray())


def max_re_eig(m: np.ndarray) -> tuple[float, np.ndarray]:
    ev = eig_general(m)
    return float(np.max(np.abs(ev.real))) if len(ev) else 0.0, ev
