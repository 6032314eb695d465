"""Iterate engines for decentralized consensus optimization.

All engines drive the same primal-dual mathematics from different angles:

* ``DadmmEngine`` -- the decoupled per-agent generalized D-ADMM updates.
* ``DadmmMatrixEngine`` -- the same iterates computed centrally through the
  incidence operators; exists as an oracle and tracks the arc-space dual
  explicitly.
* ``FullAdmmEngine`` -- the three-block generalized ADMM with the edge
  variables and the full multiplier kept around.
* ``ExactMMEngine`` / ``ApproxMMEngine`` -- the (approximated) method of
  multipliers on the penalized reformulation; the exact variant is a
  centralized reference only.
* ``PextraEngine`` -- mixing-matrix iterates with an O(1)-memory running sum
  in place of the full history sum.
* ``GeneralUVEngine`` -- the general two-matrix form that subsumes the
  classical incidence assignment.

Proximal perturbations are restricted to P = diag(pi) (x) I_p with pi >= 0,
which is what decoupling and the contraction certificate cover; indefinite
perturbations are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis as _analysis
from . import denselin, objective
from .errors import ConditionViolation, GammaTooSmall, OmegaOutOfRange
from .netgraph import NetworkGraph, arc_matrices, incidence_operators
from .tolerances import DEFAULT

ETA_SUP = 0.5 * (1.0 + math.sqrt(5.0))


@dataclass(frozen=True)
class AdmmParams:
    """Penalty rho > 0, relaxation eta in (0, (1+sqrt 5)/2), per-agent
    proximal weights pi_i >= 0 (scalar broadcasts), subproblem tolerance."""

    rho: float
    eta: float
    pi: float | tuple[float, ...] = 0.0
    subproblem_tol: float = DEFAULT.subproblem

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not 0 < self.eta < ETA_SUP:
            raise ValueError(f"eta must lie in (0, {ETA_SUP:.6f}), got {self.eta}")

    def pi_vector(self, n: int) -> np.ndarray:
        if np.isscalar(self.pi):
            vec = np.full(n, float(self.pi))
        else:
            vec = np.asarray(self.pi, dtype=float)
            if vec.shape != (n,):
                raise ValueError(f"pi must be scalar or length {n}")
        if np.any(vec < 0):
            raise ValueError(
                "indefinite proximal perturbations are not supported: pi_i >= 0 required"
            )
        return vec


@dataclass
class AdmmState:
    x: np.ndarray
    phi: np.ndarray
    k: int = 0
    alpha: np.ndarray | None = None


@dataclass
class FullAdmmState:
    x: np.ndarray
    z: np.ndarray
    lam: np.ndarray  # stacked [alpha; beta], length 2 m p
    k: int = 0

    @property
    def alpha(self) -> np.ndarray:
        return self.lam[: self.lam.shape[0] // 2]

    @property
    def beta(self) -> np.ndarray:
        return self.lam[self.lam.shape[0] // 2:]


@dataclass
class MMState:
    x: np.ndarray
    nu: np.ndarray
    k: int = 0


@dataclass
class PextraState:
    x: np.ndarray
    running_sum: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class PextraParams:
    """Step size xi > 0 plus the symmetric mixing pair at graph level."""

    xi: float
    w: np.ndarray = field(repr=False)
    w_tilde: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.xi <= 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        for mat in (self.w, self.w_tilde):
            if np.max(np.abs(mat - mat.T)) > 1e-12:
                raise ValueError("mixing matrices must be symmetric")


@dataclass(frozen=True)
class TraceRow:
    """Uniform per-round snapshot: iterate and its dual aggregate."""

    k: int
    x: np.ndarray
    phi: np.ndarray


def _lift_apply(base: np.ndarray, x: np.ndarray, p: int) -> np.ndarray:
    return (base @ x.reshape(-1, p)).ravel()


def _repeat_diag(values: np.ndarray, p: int) -> np.ndarray:
    return np.repeat(np.asarray(values, dtype=float), p)


class _StationarySolver:
    """argmin f(x) + linear'x + 0.5 x'Kx for a fixed K.

    When every component is quadratic the overall Hessian is constant, so its
    inverse is computed once (through the package Cholesky) and each solve is
    a single matmul; otherwise each solve runs damped Newton.
    """

    def __init__(self, components, quad: np.ndarray, tol: float):
        self.components = components
        self.quad = quad
        self.tol = tol
        terms = objective.stacked_quadratic_terms(components)
        if terms is not None:
            big_q, big_b = terms
            self._inverse = denselin.spd_inverse(denselin.SymMatrix(big_q + quad))
            self._b = big_b
        else:
            self._inverse = None
            self._b = None

    def solve(self, linear: np.ndarray, x_start: np.ndarray) -> np.ndarray:
        if self._inverse is not None:
            return self._inverse @ (-(self._b + linear))
        return objective.minimize_composite(
            self.components, linear, self.quad, x_start, self.tol
        )


# -- decoupled per-agent generalized D-ADMM -------------------------------------

class DadmmEngine:
    """Per-agent D-ADMM: local proximal solves plus neighbor-difference dual
    steps. Neighbor sums always accumulate in ascending agent id so that runs
    are reproducible and bit-compatible with the simulated network."""

    def __init__(self, graph: NetworkGraph, components, params: AdmmParams,
                 agent_order=None):
        if len(components) != graph.n:
            raise ValueError("one component per agent required")
        self.graph = graph
        self.components = list(components)
        self.params = params
        self.pi = params.pi_vector(graph.n)
        self.degrees = np.array([graph.degree(i) for i in range(1, graph.n + 1)], dtype=float)
        self.order = tuple(agent_order) if agent_order is not None else tuple(range(1, graph.n + 1))
        if sorted(self.order) != list(range(1, graph.n + 1)):
            raise ValueError("agent_order must be a permutation of 1..n")

    def init(self, x0=None, alpha0_mode: str = "zero", seed=None, alpha0=None) -> AdmmState:
        return dadmm_init(self.graph, self.components, self.params,
                          x0=x0, alpha0_mode=alpha0_mode, seed=seed, alpha0=alpha0)

    def step(self, state: AdmmState) -> AdmmState:
        g, p = self.graph, self.graph.p
        rho, eta = self.params.rho, self.params.eta
        x, phi = state.x, state.phi
        new_x = np.empty_like(x)
        for i in self.order:
            sl = slice((i - 1) * p, i * p)
            acc = np.zeros(p)
            for j in g.neighbor_ids(i):
                acc = acc + (x[sl] + x[(j - 1) * p: j * p])
            c = phi[sl] - rho * acc
            new_x[sl] = objective.local_subproblem(
                self.components[i - 1], c, rho * self.degrees[i - 1],
                self.pi[i - 1], x[sl], self.params.subproblem_tol,
            )
        new_phi = np.array(phi)
        for i in self.order:
            sl = slice((i - 1) * p, i * p)
            acc = np.zeros(p)
            for j in g.neighbor_ids(i):
                acc = acc + (new_x[sl] - new_x[(j - 1) * p: j * p])
            new_phi[sl] = phi[sl] + eta * rho * acc
        return AdmmState(x=new_x, phi=new_phi, k=state.k + 1)

    def snapshot(self, state: AdmmState) -> TraceRow:
        return TraceRow(state.k, state.x, state.phi)


class DadmmMatrixEngine:
    """Operator-form D-ADMM oracle; tracks the arc-space dual explicitly."""

    def __init__(self, graph: NetworkGraph, components, params: AdmmParams):
        self.graph = graph
        self.components = list(components)
        self.params = params
        self.e_o, self.e_u, self.deg, self.lap = incidence_operators(graph)
        pi = params.pi_vector(graph.n)
        self.quad_diag = _repeat_diag(
            params.rho * np.diag(self.deg.base) + pi, graph.p
        )
        self.p_diag = _repeat_diag(pi, graph.p)
        self._solver = _StationarySolver(
            self.components, np.diag(self.quad_diag), params.subproblem_tol
        )

    def init(self, x0=None, alpha0_mode: str = "zero", seed=None, alpha0=None) -> AdmmState:
        return dadmm_init(self.graph, self.components, self.params,
                          x0=x0, alpha0_mode=alpha0_mode, seed=seed, alpha0=alpha0)

    def step(self, state: AdmmState) -> AdmmState:
        rho, eta = self.params.rho, self.params.eta
        x = state.x
        linear = (
            state.phi
            - 0.5 * rho * self.e_u.apply_transpose(self.e_u.apply(x))
            - self.p_diag * x
        )
        new_x = self._solver.solve(linear, x)
        if state.alpha is None:
            new_phi = state.phi + 0.5 * eta * rho * self.lap.apply(new_x)
            return AdmmState(x=new_x, phi=new_phi, k=state.k + 1)
        new_alpha = state.alpha + 0.5 * eta * rho * self.e_o.apply(new_x)
        new_phi = self.e_o.apply_transpose(new_alpha)
        return AdmmState(x=new_x, phi=new_phi, k=state.k + 1, alpha=new_alpha)

    def snapshot(self, state: AdmmState) -> TraceRow:
        return TraceRow(state.k, state.x, state.phi)


def dadmm_init(graph: NetworkGraph, components, params: AdmmParams,
               x0=None, alpha0_mode: str = "zero", seed=None, alpha0=None) -> AdmmState:
    """Initial state with the dual confined to the column space of E_o.

    alpha0_mode "zero" starts from the origin; "random-in-colspace" draws a
    standard-normal arc vector and projects it onto range(E_o) (seeded, hence
    reproducible). An explicit alpha0 takes precedence over the mode.
    """
    e_o = incidence_operators(graph)[0]
    npx = graph.n * graph.p
    x = np.zeros(npx) if x0 is None else np.array(x0, dtype=float)
    if alpha0 is not None:
        alpha = np.array(alpha0, dtype=float)
    elif alpha0_mode == "zero":
        alpha = np.zeros(graph.m * graph.p)
    elif alpha0_mode == "random-in-colspace":
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal(graph.m * graph.p)
        alpha = denselin.min_norm_solve(e_o.materialize(), e_o.apply_transpose(raw))
    else:
        raise ValueError(f"unknown alpha0_mode {alpha0_mode!r}")
    return AdmmState(x=x, phi=e_o.apply_transpose(alpha), k=0, alpha=alpha)


def dadmm_step(state: AdmmState, graph: NetworkGraph, components,
               params: AdmmParams) -> AdmmState:
    return DadmmEngine(graph, components, params).step(state)


def dadmm_matrix_step(state: AdmmState, graph: NetworkGraph, components,
                      params: AdmmParams) -> AdmmState:
    return DadmmMatrixEngine(graph, components, params).step(state)


# -- full three-block generalized ADMM -------------------------------------------

class FullAdmmEngine:
    """Three-block generalized ADMM with explicit edge variables and the full
    stacked multiplier; the z-minimization is closed form."""

    def __init__(self, graph: NetworkGraph, components, params: AdmmParams):
        self.graph = graph
        self.components = list(components)
        self.params = params
        self.a_src, self.a_dst = arc_matrices(graph)
        self.e_o, self.e_u, self.deg, _ = incidence_operators(graph)
        pi = params.pi_vector(graph.n)
        self.p_diag = _repeat_diag(pi, graph.p)
        quad_diag = _repeat_diag(params.rho * np.diag(self.deg.base) + pi, graph.p)
        self._solver = _StationarySolver(
            self.components, np.diag(quad_diag), params.subproblem_tol
        )

    def init(self, x0=None, alpha0=None) -> FullAdmmState:
        npx = self.graph.n * self.graph.p
        mpx = self.graph.m * self.graph.p
        x = np.zeros(npx) if x0 is None else np.array(x0, dtype=float)
        alpha = np.zeros(mpx) if alpha0 is None else np.array(alpha0, dtype=float)
        z = 0.5 * self.e_u.apply(x)
        return FullAdmmState(x=x, z=z, lam=np.concatenate([alpha, -alpha]), k=0)

    def step(self, state: FullAdmmState) -> FullAdmmState:
        rho, eta = self.params.rho, self.params.eta
        alpha, beta = state.alpha, state.beta
        linear = (
            self.a_src.apply_transpose(alpha)
            + self.a_dst.apply_transpose(beta)
            - rho * self.e_u.apply_transpose(state.z)
            - self.p_diag * state.x
        )
        new_x = self._solver.solve(linear, state.x)
        new_z = (alpha + beta) / (2.0 * rho) + 0.5 * self.e_u.apply(new_x)
        new_alpha = alpha + eta * rho * (self.a_src.apply(new_x) - new_z)
        new_beta = beta + eta * rho * (self.a_dst.apply(new_x) - new_z)
        return FullAdmmState(
            x=new_x, z=new_z, lam=np.concatenate([new_alpha, new_beta]), k=state.k + 1
        )

    def snapshot(self, state: FullAdmmState) -> TraceRow:
        return TraceRow(state.k, state.x, self.e_o.apply_transpose(state.alpha))


def full_admm_step(state: FullAdmmState, graph: NetworkGraph, components,
                   params: AdmmParams) -> FullAdmmState:
    return FullAdmmEngine(graph, components, params).step(state)


# -- method of multipliers: exact and approximated ---------------------------------

class ExactMMEngine:
    """Exact method of multipliers on the penalized reformulation. The primal
    minimization couples all agents through the incidence Gram matrix, so this
    engine is a centralized reference only."""

    def __init__(self, graph: NetworkGraph, components, params: AdmmParams,
                 solve_tol: float = DEFAULT.central_solve):
        if not 0 < params.eta < 1:
            raise ValueError("exact method of multipliers requires eta in (0,1)")
        self.graph = graph
        self.components = list(components)
        self.params = params
        self.e_o, _, _, self.lap = incidence_operators(graph)
        quad = 0.5 * params.rho * self.lap.materialize()
        self._solver = _StationarySolver(self.components, quad, solve_tol)

    def init(self, x0=None, nu0=None) -> MMState:
        npx = self.graph.n * self.graph.p
        mpx = self.graph.m * self.graph.p
        x = np.zeros(npx) if x0 is None else np.array(x0, dtype=float)
        nu = np.zeros(mpx) if nu0 is None else np.array(nu0, dtype=float)
        return MMState(x=x, nu=nu, k=0)

    def step(self, state: MMState) -> MMState:
        rho, eta = self.params.rho, self.params.eta
        root_eta = math.sqrt(eta)
        linear = self.e_o.apply_transpose(root_eta * state.nu)
        new_x = self._solver.solve(linear, state.x)
        new_nu = state.nu + root_eta * 0.5 * rho * self.e_o.apply(new_x)
        return MMState(x=new_x, nu=new_nu, k=state.k + 1)

    def snapshot(self, state: MMState) -> TraceRow:
        scaled = math.sqrt(self.params.eta) * state.nu
        return TraceRow(state.k, state.x, self.e_o.apply_transpose(scaled))


class ApproxMMEngine:
    """Method of multipliers with the coupling term majorized by a diagonal.

    With epsilon = 1/rho the x-iterates coincide with generalized D-ADMM. The
    majorization Gamma = 2D + 2 eps P >= E_o^T E_o is verified once at setup.
    """

    def __init__(self, graph: NetworkGraph, components, params: AdmmParams,
                 epsilon: float):
        if epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
        self.graph = graph
        self.components = list(components)
        self.params = params
        self.epsilon = float(epsilon)
        self.e_o, _, self.deg, self.lap = incidence_operators(graph)
        pi = params.pi_vector(graph.n)
        gamma_base = 2.0 * self.deg.base + 2.0 * self.epsilon * np.diag(pi)
        eigvals, _ = denselin.sym_eigen(gamma_base - self.lap.base)
        if eigvals[0] < -1e-9:
            raise GammaTooSmall(
                f"majorization fails: min eig(Gamma - E_o'E_o) = {eigvals[0]:.3e}"
            )
        self.majorizer_diag = _repeat_diag(
            params.rho * (np.diag(self.deg.base) + self.epsilon * pi), graph.p
        )
        self._solver = _StationarySolver(
            self.components, np.diag(self.majorizer_diag), params.subproblem_tol
        )

    def init(self, x0=None, nu0=None) -> MMState:
        npx = self.graph.n * self.graph.p
        mpx = self.graph.m * self.graph.p
        x = np.zeros(npx) if x0 is None else np.array(x0, dtype=float)
        nu = np.zeros(mpx) if nu0 is None else np.array(nu0, dtype=float)
        return MMState(x=x, nu=nu, k=0)

    def step(self, state: MMState) -> MMState:
        rho, eta = self.params.rho, self.params.eta
        root_eta = math.sqrt(eta)
        x = state.x
        linear = (
            self.e_o.apply_transpose(root_eta * state.nu)
            + 0.5 * rho * self.lap.apply(x)
            - self.majorizer_diag * x
        )
        new_x = self._solver.solve(linear, x)
        new_nu = state.nu + root_eta * 0.5 * rho * self.e_o.apply(new_x)
        return MMState(x=new_x, nu=new_nu, k=state.k + 1)

    def snapshot(self, state: MMState) -> TraceRow:
        scaled = math.sqrt(self.params.eta) * state.nu
        return TraceRow(state.k, state.x, self.e_o.apply_transpose(scaled))


def mm_exact_step(state: MMState, graph: NetworkGraph, components,
                  params: AdmmParams) -> MMState:
    return ExactMMEngine(graph, components, params).step(state)


def mm_approx_step(state: MMState, graph: NetworkGraph, components,
                   params: AdmmParams, epsilon: float) -> MMState:
    return ApproxMMEngine(graph, components, params, epsilon).step(state)


# -- P-EXTRA -----------------------------------------------------------------------

def pextra_mixing(graph: NetworkGraph, xi: float, rho: float, eta: float):
    """Mixing pair W = I - (xi rho / 2) L, W~ = I - (xi rho / 2)(1 - eta) L."""
    if xi <= 0 or rho <= 0:
        raise ValueError("xi and rho must be positive")
    lap = incidence_operators(graph)[3].base
    eye = np.eye(graph.n)
    w = eye - 0.5 * xi * rho * lap
    w_tilde = eye - 0.5 * xi * rho * (1.0 - eta) * lap
    return w, w_tilde


def pextra_overshoot_mixing(graph: NetworkGraph, xi: float, rho: float, omega: float):
    """Overshooting pair: the relaxation is pushed to omega in [0.5, 1).

    At omega = 0.5 the pair sits exactly on the spectral boundary
    (I + W)/2 = W~; beyond it the spectral condition fails by construction,
    which is the point.
    """
    if not 0.5 <= omega < 1.0:
        raise OmegaOutOfRange(f"omega must lie in [0.5, 1), got {omega}")
    return pextra_mixing(graph, xi, rho, omega)


def theorem2_pi(graph: NetworkGraph, xi: float, rho: float) -> tuple[float, ...]:
    """Proximal weights pi_i = 1/xi - rho d_i making D-ADMM match P-EXTRA.

    Requires xi * rho <= 1 / max_i d_i so every weight stays nonnegative.
    """
    if xi <= 0 or rho <= 0:
        raise ValueError("xi and rho must be positive")
    pi = tuple(1.0 / xi - rho * graph.degree(i) for i in range(1, graph.n + 1))
    if min(pi) < 0:
        dmax = max(graph.degree(i) for i in range(1, graph.n + 1))
        raise ValueError(
            f"xi*rho = {xi * rho:.6g} exceeds 1/max_i d_i = {1.0 / dmax:.6g}; "
            "proximal weights would be negative"
        )
    return pi


class PextraEngine:
    """Mixing-matrix iterates; the history sum is kept as a running sum
    (identical mathematics, O(1) memory)."""

    def __init__(self, graph: NetworkGraph, components, pextra: PextraParams,
                 subproblem_tol: float = DEFAULT.subproblem):
        self.graph = graph
        self.components = list(components)
        self.pextra = pextra
        if pextra.w.shape != (graph.n, graph.n) or pextra.w_tilde.shape != (graph.n, graph.n):
            raise ValueError("mixing matrices must be n x n at graph level")
        for mat in (pextra.w, pextra.w_tilde):
            for i in range(1, graph.n + 1):
                for j in range(1, graph.n + 1):
                    if i != j and j not in graph.neighbor_ids(i) and mat[i - 1, j - 1] != 0.0:
                        raise ValueError(
                            f"mixing entry ({i},{j}) nonzero without an arc"
                        )
        self.diff = pextra.w - pextra.w_tilde
        self.tol = subproblem_tol

    def init(self, x0=None) -> PextraState:
        npx = self.graph.n * self.graph.p
        x = np.zeros(npx) if x0 is None else np.array(x0, dtype=float)
        running = _lift_apply(self.diff, x, self.graph.p)
        return PextraState(x=x, running_sum=running, k=0)

    def step(self, state: PextraState) -> PextraState:
        p = self.graph.p
        xi = self.pextra.xi
        target = _lift_apply(self.pextra.w, state.x, p) + state.running_sum
        new_x = np.empty_like(state.x)
        for i in range(1, self.graph.n + 1):
            sl = slice((i - 1) * p, i * p)
            new_x[sl] = objective.local_subproblem(
                self.components[i - 1], -target[sl] / xi, 1.0 / xi, 0.0,
                state.x[sl], self.tol,
            )
        new_running = state.running_sum + _lift_apply(self.diff, new_x, p)
        return PextraState(x=new_x, running_sum=new_running, k=state.k + 1)

    def phi_view(self, state: PextraState) -> np.ndarray:
        """The D-ADMM dual aggregate implied by the running sum."""
        return -state.running_sum / self.pextra.xi

    def snapshot(self, state: PextraState) -> TraceRow:
        return TraceRow(state.k, state.x, self.phi_view(state))


def pextra_step(state: PextraState, graph: NetworkGraph, components,
                pextra: PextraParams) -> PextraState:
    return PextraEngine(graph, components, pextra).step(state)


# -- general two-matrix formulation ---------------------------------------------------

class GeneralUVEngine:
    """D-ADMM driven by a general (U, V, Dbar) triple at graph level.

    The triple must satisfy the nullspace/complementarity/distributable
    conditions; they are checked once at construction.
    """

    def __init__(self, graph: NetworkGraph, u: np.ndarray, v: np.ndarray,
                 dbar: np.ndarray, components, params: AdmmParams):
        report = _analysis.check_uv_conditions(u, v, dbar, graph)
        if not report.all_pass:
            raise ConditionViolation(f"U/V conditions failed: {report.failures()}")
        self.graph = graph
        self.components = list(components)
        self.params = params
        self.u = np.asarray(u, dtype=float)
        self.v = np.asarray(v, dtype=float)
        dbar_diag = np.diag(np.asarray(dbar, dtype=float))
        pi = params.pi_vector(graph.n)
        self.p_diag = _repeat_diag(pi, graph.p)
        quad_diag = _repeat_diag(params.rho * dbar_diag + pi, graph.p)
        self._solver = _StationarySolver(
            self.components, np.diag(quad_diag), params.subproblem_tol
        )

    def init(self, x0=None, phi0=None) -> AdmmState:
        npx = self.graph.n * self.graph.p
        x = np.zeros(npx) if x0 is None else np.array(x0, dtype=float)
        phi = np.zeros(npx) if phi0 is None else np.array(phi0, dtype=float)
        return AdmmState(x=x, phi=phi, k=0)

    def step(self, state: AdmmState) -> AdmmState:
        rho, eta = self.params.rho, self.params.eta
        p = self.graph.p
        linear = (
            state.phi
            - 0.5 * rho * _lift_apply(self.u, state.x, p)
            - self.p_diag * state.x
        )
        new_x = self._solver.solve(linear, state.x)
        new_phi = state.phi + 0.5 * eta * rho * _lift_apply(self.v, new_x, p)
        return AdmmState(x=new_x, phi=new_phi, k=state.k + 1)

    def snapshot(self, state: AdmmState) -> TraceRow:
        return TraceRow(state.k, state.x, state.phi)


def general_dadmm_step(state: AdmmState, u, v, dbar, graph: NetworkGraph,
                       components, params: AdmmParams) -> AdmmState:
    return GeneralUVEngine(graph, u, v, dbar, components, params).step(state)
