"""Networked-LTI dynamics: Kronecker closed loop, failure simulation, jumps.

A network couples N copies of one subsystem (A, B, C, Gamma) over a digraph,
giving the stacked closed loop  I_N (x) A + G (x) B Gamma C.  A link failure
at t_f swaps that matrix for the one of the mutated graph while the state is
carried over continuously, so output derivatives (not outputs) jump at t_f.

Two routes to the jump are provided and kept strictly apart so each can
check the other:

* ``jump_oracle``      - brute difference of one-sided derivatives from the
                         pre/post closed-loop matrices; knows nothing about
                         graph distances or Markov parameters.
* ``theoretical_jump`` - closed-form prediction: first jump at order
                         r * (dist + 1) with value
                         -g_ij [G^dist]_pi (M_r Gamma)^(dist+1) C x_j(t_f),
                         where M_r is the first nonzero Markov parameter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .graph import Digraph, INFINITE, distances, walk_matrix

#: absolute tolerance below which a Markov parameter counts as zero
NONZERO_ATOL = 1e-12


class DegenerateModelError(ValueError):
    """Raised when every Markov parameter C A^(k-1) B, k <= d, vanishes."""


class SubsystemModel:
    """Matrices (A, B, C, Gamma) of one node's dynamics.

    A is d x d, B is d x m, C is o x d and the inner coupling Gamma is
    m x o, so Gamma maps neighbor outputs into the input channels.
    Construction fails if the model has no well-defined relative degree.
    """

    __slots__ = ("A", "B", "C", "Gamma", "_r")

    def __init__(self, A, B, C, Gamma):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
        d = self.A.shape[0]
        if self.A.shape != (d, d):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != d:
            raise ValueError(f"B must have {d} rows, got {self.B.shape}")
        if self.C.shape[1] != d:
            raise ValueError(f"C must have {d} columns, got {self.C.shape}")
        if self.Gamma.shape != (self.B.shape[1], self.C.shape[0]):
            raise ValueError(
                f"Gamma must be {self.B.shape[1]}x{self.C.shape[0]} (inputs x outputs), "
                f"got {self.Gamma.shape}")
        self._r = None
        self._r = relative_degree(self)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def o(self) -> int:
        return self.C.shape[0]

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist(),
                "C": self.C.tolist(), "Gamma": self.Gamma.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "SubsystemModel":
        return cls(data["A"], data["B"], data["C"], data["Gamma"])

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "SubsystemModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def markov_parameter(model: SubsystemModel, k: int) -> np.ndarray:
    """k-th Markov parameter C A^(k-1) B (the s^-k series coefficient of H)."""
    if k < 1:
        raise ValueError(f"Markov parameter index must be >= 1, got {k}")
    return model.C @ np.linalg.matrix_power(model.A, k - 1) @ model.B


def relative_degree(model: SubsystemModel) -> int:
    """Least k with C A^(k-1) B nonzero (any entry above 1e-12).

    By Cayley-Hamilton no index beyond d can be the first nonzero one, so
    a model whose first d Markov parameters all vanish is rejected.
    """
    if model._r is not None:
        return model._r
    for k in range(1, model.d + 1):
        if np.abs(markov_parameter(model, k)).max() > NONZERO_ATOL:
            return k
    raise DegenerateModelError(
        f"all Markov parameters up to k={model.d} vanish; relative degree undefined")


def q_matrix(model: SubsystemModel, dist: int) -> np.ndarray:
    """Leading coefficient (M_r Gamma)^(dist+1) of [H(s) Gamma]^(dist+1).

    Equals the large-s limit of s^(r (dist+1)) [H(s) Gamma]^(dist+1); may be
    the zero matrix when M_r Gamma is nilpotent even though M_r is not.
    """
    if dist < 0:
        raise ValueError(f"dist must be >= 0, got {dist}")
    m_r = markov_parameter(model, relative_degree(model))
    return np.linalg.matrix_power(m_r @ model.Gamma, dist + 1)


def closed_loop(g: Digraph, model: SubsystemModel) -> np.ndarray:
    """Stacked closed-loop matrix I_N (x) A + G (x) B Gamma C."""
    coupling = model.B @ model.Gamma @ model.C
    return np.kron(np.eye(g.n_nodes), model.A) + np.kron(g.adjacency(), coupling)


class NetworkSystem:
    """A digraph plus one subsystem model, with the closed loop assembled."""

    __slots__ = ("graph", "model", "closed_loop")

    def __init__(self, graph: Digraph, model: SubsystemModel):
        self.graph = graph
        self.model = model
        self.closed_loop = closed_loop(graph, model)

    def remove_edge(self, label: int) -> "NetworkSystem":
        """System after the given link fails (closed loop reassembled)."""
        return NetworkSystem(self.graph.remove_edge(label), self.model)

    @property
    def n_states(self) -> int:
        return self.graph.n_nodes * self.model.d

    def output_matrix(self) -> np.ndarray:
        return np.kron(np.eye(self.graph.n_nodes), self.model.C)


@dataclass(frozen=True)
class FailureEvent:
    """Link `edge` (by label) drops out at time `time`."""

    edge: int
    time: float


class ExogenousInput:
    """Smooth per-node drive w(t); zero, polynomial or sinusoid.

    All three kinds are infinitely differentiable, as the jump analysis
    requires.  Parameter arrays are indexed (node, input channel, ...).
    """

    def __init__(self, kind: str, **params):
        if kind not in ("zero", "polynomial", "sinusoid"):
            raise ValueError(f"unknown input kind {kind!r}")
        self.kind = kind
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}

    @classmethod
    def zero(cls) -> "ExogenousInput":
        return cls("zero")

    @classmethod
    def polynomial(cls, coeffs) -> "ExogenousInput":
        """w_i,ch(t) = sum_k coeffs[i, ch, k] t^k; coeffs shaped (N, m, K)."""
        return cls("polynomial", coeffs=coeffs)

    @classmethod
    def sinusoid(cls, amplitude, frequency, phase) -> "ExogenousInput":
        """w_i,ch(t) = amplitude * sin(2 pi frequency t + phase), each (N, m)."""
        return cls("sinusoid", amplitude=amplitude, frequency=frequency, phase=phase)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def stacked(self, t: float, n_nodes: int, m: int) -> np.ndarray:
        """Stacked input vector in R^(N m) at time t."""
        if self.kind == "zero":
            return np.zeros(n_nodes * m)
        if self.kind == "polynomial":
            coeffs = self.params["coeffs"]
            if coeffs.shape[:2] != (n_nodes, m):
                raise ValueError(f"coeffs must be ({n_nodes},{m},K), got {coeffs.shape}")
            powers = t ** np.arange(coeffs.shape[2])
            return (coeffs @ powers).reshape(-1)
        amp, freq, phase = (self.params[k] for k in ("amplitude", "frequency", "phase"))
        if amp.shape != (n_nodes, m):
            raise ValueError(f"amplitude must be ({n_nodes},{m}), got {amp.shape}")
        return (amp * np.sin(2.0 * np.pi * freq * t + phase)).reshape(-1)


@dataclass(frozen=True)
class TraceSegment:
    """Sample range [start, stop] governed by one closed-loop matrix."""

    start: int
    stop: int
    matrix: np.ndarray
    graph: Digraph


@dataclass
class SimulationTrace:
    """Sampled stacked trajectory with its failure schedule and segments.

    The state is continuous across failures: the boundary sample belongs to
    both neighboring segments and only derivatives change there.
    """

    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    schedule: tuple[FailureEvent, ...]
    segments: tuple[TraceSegment, ...]
    n_nodes: int
    state_dim: int
    output_dim: int
    c_matrix: np.ndarray
    autonomous: bool = True

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def output_of(self, p: int) -> np.ndarray:
        """Samples of y_p, shaped (n_samples, o)."""
        o = self.output_dim
        return self.outputs[:, (p - 1) * o : p * o]

    def state_of(self, i: int) -> np.ndarray:
        d = self.state_dim
        return self.states[:, (i - 1) * d : i * d]

    def segment_at(self, index: int, side: str) -> TraceSegment:
        """Segment governing the samples just left/right of `index`."""
        if side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        for seg in self.segments:
            if side == "left" and seg.start < index <= seg.stop:
                return seg
            if side == "right" and seg.start <= index < seg.stop:
                return seg
        # index at the very first (left) or last (right) sample
        return self.segments[0] if side == "left" else self.segments[-1]

    def to_csv(self, path: str | Path):
        """Write `t,x_1_1..x_N_d,y_1_1..y_N_o` rows with 17 significant digits."""
        n, d, o = self.n_nodes, self.state_dim, self.output_dim
        header = (["t"]
                  + [f"x_{i}_{l}" for i in range(1, n + 1) for l in range(1, d + 1)]
                  + [f"y_{i}_{c}" for i in range(1, n + 1) for c in range(1, o + 1)])
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row_t, row_x, row_y in zip(self.times, self.states, self.outputs):
                cells = [f"{row_t:.17g}"]
                cells += [f"{v:.17g}" for v in row_x]
                cells += [f"{v:.17g}" for v in row_y]
                fh.write(",".join(cells) + "\n")


def _snap_schedule(schedule: Sequence[FailureEvent], t0: float, dt: float,
                   n_steps: int) -> list[tuple[int, FailureEvent]]:
    """Snap failure times to grid indices, validating the spacing rules."""
    snapped = []
    for ev in schedule:
        idx = int(round((ev.time - t0) / dt))
        if abs(ev.time - (t0 + idx * dt)) > dt / 2 + 1e-12 * max(1.0, abs(ev.time)):
            raise ValueError(f"failure time {ev.time} not alignable to the grid")
        if not 0 < idx < n_steps:
            raise ValueError(f"failure time {ev.time} must fall strictly inside the horizon")
        snapped.append((idx, FailureEvent(ev.edge, t0 + idx * dt)))
    snapped.sort(key=lambda pair: pair[0])
    if len({idx for idx, _ in snapped}) != len(snapped):
        raise ValueError("failure times collide on the sample grid")
    return snapped


def _rk4_step(A: np.ndarray, b_stack: np.ndarray, w: ExogenousInput,
              n_nodes: int, m: int, t: float, x: np.ndarray, h: float) -> np.ndarray:
    def f(tt, xx):
        return A @ xx + b_stack @ w.stacked(tt, n_nodes, m)

    k1 = f(t, x)
    k2 = f(t + h / 2, x + h / 2 * k1)
    k3 = f(t + h / 2, x + h / 2 * k2)
    k4 = f(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate(sys: NetworkSystem, x0, t0: float, t_end: float, dt: float,
             schedule: Sequence[FailureEvent] = (),
             w: ExogenousInput | None = None) -> SimulationTrace:
    """Piecewise-exact simulation of the network with scheduled link failures.

    Failure times are snapped to the sample grid.  With w = zero each
    failure-free segment is propagated by the matrix exponential (one expm
    per segment, exact up to expm accuracy); with a nonzero smooth w a
    fixed-step RK4 integrator is used instead, with 10x substep refinement
    on the steps adjacent to each failure time.

    Parameters
    ----------
    sys : network to simulate (defines the pre-failure closed loop).
    x0 : initial stacked state in R^(N d).
    t0, t_end, dt : uniform sample grid; t_end > t0, dt > 0.
    schedule : FailureEvents with distinct grid-aligned times in (t0, t_end).
    w : exogenous input; None means zero.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if t_end <= t0:
        raise ValueError(f"need t_end > t0, got [{t0}, {t_end}]")
    n_steps = int(round((t_end - t0) / dt))
    if n_steps < 1:
        raise ValueError("horizon shorter than one step")
    times = t0 + dt * np.arange(n_steps + 1)

    if w is None:
        w = ExogenousInput.zero()
    snapped = _snap_schedule(schedule, t0, dt, n_steps)

    # Segment boundaries and the graph in force on each segment.
    boundaries = [0] + [idx for idx, _ in snapped] + [n_steps]
    graphs = [sys.graph]
    for _, ev in snapped:
        graphs.append(graphs[-1].remove_edge(ev.edge))
    matrices = [sys.closed_loop] + [closed_loop(g, sys.model) for g in graphs[1:]]

    nd = sys.n_states
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (nd,):
        raise ValueError(f"x0 must have {nd} entries, got {x0.shape}")

    states = np.empty((n_steps + 1, nd))
    states[0] = x0
    refine_steps = {idx - 1 for idx, _ in snapped} | {idx for idx, _ in snapped}
    b_stack = np.kron(np.eye(sys.graph.n_nodes), sys.model.B)

    for seg in range(len(matrices)):
        a, b = boundaries[seg], boundaries[seg + 1]
        A = matrices[seg]
        if w.is_zero:
            phi = expm(A * dt)
            for n in range(a, b):
                states[n + 1] = phi @ states[n]
        else:
            for n in range(a, b):
                sub = 10 if n in refine_steps else 1
                h = dt / sub
                x = states[n]
                for sstep in range(sub):
                    x = _rk4_step(A, b_stack, w, sys.graph.n_nodes, sys.model.m,
                                  times[n] + sstep * h, x, h)
                states[n + 1] = x

    outputs = states @ np.kron(np.eye(sys.graph.n_nodes), sys.model.C).T
    segments = tuple(
        TraceSegment(boundaries[s], boundaries[s + 1], matrices[s], graphs[s])
        for s in range(len(matrices)))
    return SimulationTrace(times=times, states=states, outputs=outputs,
                           schedule=tuple(ev for _, ev in snapped), segments=segments,
                           n_nodes=sys.graph.n_nodes, state_dim=sys.model.d,
                           output_dim=sys.model.o, c_matrix=sys.model.C.copy(),
                           autonomous=w.is_zero)


def one_sided_derivative(sys_pre: NetworkSystem, sys_post: NetworkSystem,
                         x_tf, p: int, k: int, side: str) -> np.ndarray:
    """Exact one-sided k-th derivative of y_p at the failure time (w = zero).

    The left limit uses the pre-failure closed loop, the right limit the
    post-failure one: d^k y_p / dt^k = (e_p (x) C) A_side^k x(t_f).
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if k < 0:
        raise ValueError(f"derivative order must be >= 0, got {k}")
    A = sys_pre.closed_loop if side == "left" else sys_post.closed_loop
    v = np.asarray(x_tf, dtype=float).reshape(-1)
    for _ in range(k):
        v = A @ v
    d = sys_pre.model.d
    return sys_pre.model.C @ v[(p - 1) * d : p * d]


def jump_oracle(sys_pre: NetworkSystem, sys_post: NetworkSystem,
                x_tf, p: int, k: int) -> np.ndarray:
    """Jump of the k-th output derivative at node p, straight from matrices.

    Returns (e_p (x) C)(A_post^k - A_pre^k) x(t_f) with no reference to the
    closed-form prediction; serves as the independent check of it.
    """
    x = np.asarray(x_tf, dtype=float).reshape(-1)
    v_pre = x.copy()
    v_post = x.copy()
    for _ in range(k):
        v_pre = sys_pre.closed_loop @ v_pre
        v_post = sys_post.closed_loop @ v_post
    d = sys_pre.model.d
    diff = v_post - v_pre
    return sys_pre.model.C @ diff[(p - 1) * d : p * d]


@dataclass(frozen=True)
class JumpPrediction:
    """Predicted first jump order and value at one sensor, or unobservable.

    `order` and `value` are reported separately: the order is purely
    structural while the value can still vanish (nilpotent M_r Gamma or an
    unlucky x(t_f)), which means a silent failure at the predicted order.
    """

    observable: bool
    order: int | None
    value: np.ndarray | None


def theoretical_jump(g: Digraph, model: SubsystemModel, edge: int, p: int,
                     x_tf) -> JumpPrediction:
    """Closed-form (order, value) of the first derivative jump at sensor p.

    For the failed edge (j -> i) with weight g_ij and dist = dist(i, p) in
    the pre-failure graph:

        order = r (dist + 1)
        value = -g_ij [G^dist]_pi (M_r Gamma)^(dist+1) C x_j(t_f)

    When no directed i -> p path exists the failure never shows at p and an
    unobservable prediction is returned.
    """
    e = g.edge(edge)
    dist = distances(g)[e.head, p]
    if dist is INFINITE:
        return JumpPrediction(observable=False, order=None, value=None)
    r = relative_degree(model)
    order = r * (dist + 1)
    walk = walk_matrix(g, dist)[p - 1, e.head - 1]
    d = model.d
    x = np.asarray(x_tf, dtype=float).reshape(-1)
    x_j = x[(e.tail - 1) * d : e.tail * d]
    value = -e.weight * walk * (q_matrix(model, dist) @ (model.C @ x_j))
    return JumpPrediction(observable=True, order=order, value=value)


def fault_replicant_check(sys: NetworkSystem, edge: int, x0, t_f: float,
                          horizon: float, dt: float = 0.01) -> float:
    """Max-norm gap between a faulty run and the replicant-driven healthy run.

    Side A simulates the failure by graph mutation.  Side B keeps the
    faultless network and injects the fault-replicant feedback
    f(t) = -g_ij (e_i e_j^T (x) Gamma C) x(t) from t_f on, folded into the
    propagation matrix as the closed-loop correction
    -g_ij (e_i e_j^T (x) B Gamma C).  The two must agree to integration
    accuracy; a failure time outside (0, horizon) leaves both runs healthy.
    """
    inside = 0.0 < t_f < horizon
    schedule = [FailureEvent(edge, t_f)] if inside else []
    faulty = simulate(sys, x0, 0.0, horizon, dt, schedule)

    e = sys.graph.edge(edge)
    n = sys.graph.n_nodes
    sel = np.zeros((n, n))
    sel[e.head - 1, e.tail - 1] = 1.0
    correction = -e.weight * np.kron(sel, sys.model.B @ sys.model.Gamma @ sys.model.C)

    n_steps = len(faulty.times) - 1
    switch = int(round((t_f - 0.0) / dt)) if inside else n_steps
    states = np.empty_like(faulty.states)
    states[0] = np.asarray(x0, dtype=float).reshape(-1)
    phi_healthy = expm(sys.closed_loop * dt)
    for i in range(min(switch, n_steps)):
        states[i + 1] = phi_healthy @ states[i]
    if inside:
        phi_replicant = expm((sys.closed_loop + correction) * dt)
        for i in range(switch, n_steps):
            states[i + 1] = phi_replicant @ states[i]
    return float(np.abs(faulty.states - states).max())
