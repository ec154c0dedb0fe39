"""Damped Gauss-Newton (Levenberg-Marquardt) with Schur elimination of per-pixel depths.

Variables split into a dense block (pose twists, scale/shift pairs) and a
diagonal block (one inverse depth per pixel).  Depths are eliminated first,
the reduced camera system is solved by Cholesky, then depths are recovered.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Generic, Iterable, List, Optional, Sequence, Set, Tuple, TypeVar

import numpy as np
import numpy.typing as npt
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from splatfusion.config import TrackingConfig
from splatfusion.errors import OptimizerStalledError
from splatfusion.geometry import Pose, retract
from splatfusion.tracking.graph import FactorGraph, FlowEdge
from splatfusion.tracking.residuals import EdgeResiduals, edge_residuals

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]
State = TypeVar("State")

MIN_INV_DEPTH = 1e-6
_DIAG_FLOOR = 1e-9
_MIN_DAMPING = 1e-9
_STATIONARY_RTOL = 1e-12


@dataclass
class NormalEquations:
    """Gauss-Newton system H dx = -g split into block/point parts."""

    H_pp: ArrayF
    g_p: ArrayF
    H_pd: ArrayF
    H_dd: ArrayF
    g_d: ArrayF
    cost: float = 0.0

    @classmethod
    def zeros(cls, n_block: int, n_point: int) -> "NormalEquations":
        return cls(
            H_pp=np.zeros((n_block, n_block)),
            g_p=np.zeros(n_block),
            H_pd=np.zeros((n_block, n_point)),
            H_dd=np.zeros(n_point),
            g_d=np.zeros(n_point),
        )

    def add(
        self,
        error: ArrayF,
        blocks: Sequence[Tuple[int, ArrayF]] = (),
        point_index: Optional[npt.NDArray[np.intp]] = None,
        point_jac: Optional[ArrayF] = None,
    ) -> None:
        """
        Accumulate whitened residual rows.

        Args:
            error: (M, k) whitened residuals
            blocks: (offset, (M, k, b) Jacobian) for each dense variable block
            point_index: (M,) point-variable index per row; -1 means fixed.
                Indices must be unique within one call.
            point_jac: (M, k) Jacobian w.r.t. the row's point variable
        """
        self.cost += float(np.sum(error**2))
        for off, A in blocks:
            b = A.shape[-1]
            self.g_p[off : off + b] += np.einsum("mkb,mk->b", A, error)
            for off2, A2 in blocks:
                b2 = A2.shape[-1]
                self.H_pp[off : off + b, off2 : off2 + b2] += np.einsum("mka,mkb->ab", A, A2)

        if point_index is None or point_jac is None:
            return
        sel = point_index >= 0
        if not np.any(sel):
            return
        idx = point_index[sel]
        a = point_jac[sel]
        e = error[sel]
        self.H_dd[idx] += np.sum(a * a, axis=1)
        self.g_d[idx] += np.sum(a * e, axis=1)
        for off, A in blocks:
            b = A.shape[-1]
            self.H_pd[off : off + b, idx] += np.einsum("mkb,mk->bm", A[sel], a)


def solve_damped(neq: NormalEquations, damping: float) -> Tuple[ArrayF, ArrayF]:
    """
    Solve (H + damping * diag(H)) dx = -g by Schur complement on the depth block.

    Raises:
        LinAlgError: if the reduced system is not positive definite
    """
    Hdd = neq.H_dd + damping * np.maximum(neq.H_dd, _DIAG_FLOOR)
    n_block = neq.g_p.shape[0]
    if n_block == 0:
        return np.zeros(0), -neq.g_d / Hdd

    Hpp = neq.H_pp.copy()
    diag = np.diag(Hpp).copy()
    Hpp[np.diag_indices_from(Hpp)] += damping * np.maximum(diag, _DIAG_FLOOR)

    scaled = neq.H_pd / Hdd
    S = Hpp - scaled @ neq.H_pd.T
    rhs = -neq.g_p + scaled @ neq.g_d
    S = 0.5 * (S + S.T)
    factor = cho_factor(S)
    dp = cho_solve(factor, rhs)
    dd = (-neq.g_d - neq.H_pd.T @ dp) / Hdd
    if not (np.all(np.isfinite(dp)) and np.all(np.isfinite(dd))):
        raise LinAlgError("non-finite step")
    return dp, dd


@dataclass
class SolveSummary:
    """Outcome of one Levenberg-Marquardt run."""

    label: str
    initial_cost: float
    final_cost: float
    iterations: int = 0
    accepted_steps: int = 0
    rejected_steps: int = 0
    final_damping: float = 0.0
    converged: bool = False
    cost_history: List[float] = field(default_factory=list)
    # (before, after) of each accepted step over the rows it was linearized on
    step_costs: List[Tuple[float, float]] = field(default_factory=list)


class LeastSquaresProblem(ABC, Generic[State]):
    """A nonlinear least-squares problem exposed to the LM driver."""

    label = "problem"

    @abstractmethod
    def initial_state(self) -> State:
        """Current variable values."""

    @abstractmethod
    def cost(self, state: State) -> float:
        """Total whitened cost at state."""

    @abstractmethod
    def linearize(self, state: State) -> NormalEquations:
        """Normal equations at state."""

    @abstractmethod
    def retract(self, state: State, dp: ArrayF, dd: ArrayF) -> State:
        """Apply a step, returning a new state."""

    def post_accept(self, state: State) -> State:
        """Hook run on each accepted state (gauge restoration)."""
        return state

    def step_cost(self, state: State) -> float:
        """
        Cost of a candidate over the residual rows active at the last `linearize`.

        Problems whose residual rows switch on and off with the state override
        this so a step is judged on the rows it was computed from.
        """
        return self.cost(state)

    @abstractmethod
    def commit(self, state: State) -> None:
        """Write the final state back to its owner."""


def levenberg_marquardt(
    problem: LeastSquaresProblem[State],
    config: TrackingConfig,
    max_iters: Optional[int] = None,
) -> SolveSummary:
    """
    Minimize a problem by damped Gauss-Newton.

    A step is accepted when the cost over the linearization's residual rows
    does not increase; damping is divided by 10 on acceptance and multiplied
    by 10 on rejection or a singular system.  When no damped step descends
    before the damping ceiling the current state is a local minimum and the
    run stops there.

    Raises:
        OptimizerStalledError: normal equations stayed singular past config.max_damping
    """
    max_iters = config.gn_iters if max_iters is None else max_iters
    state = problem.initial_state()
    cost = problem.cost(state)
    summary = SolveSummary(
        label=problem.label, initial_cost=cost, final_cost=cost, cost_history=[cost]
    )
    damping = config.damping

    for it in range(max_iters):
        summary.iterations = it + 1
        if cost <= 1e-24:
            summary.converged = True
            break
        neq = problem.linearize(state)
        reference = problem.step_cost(state)
        accepted = False
        while True:
            try:
                dp, dd = solve_damped(neq, damping)
            except LinAlgError:
                damping *= 10.0
                logger.debug(f"{problem.label}: singular system, damping -> {damping:.1e}")
                if damping > config.max_damping:
                    raise OptimizerStalledError(
                        f"{problem.label}: singular normal equations at damping {damping:.1e}"
                    ) from None
                continue

            step_size = max(
                float(np.max(np.abs(dp), initial=0.0)), float(np.max(np.abs(dd), initial=0.0))
            )
            if step_size < 1e-15:
                summary.converged = True
                break

            candidate = problem.retract(state, dp, dd)
            new_cost = problem.step_cost(candidate)
            if np.isfinite(new_cost) and new_cost <= reference:
                state = problem.post_accept(candidate)
                previous = cost
                cost = problem.cost(state)
                summary.accepted_steps += 1
                summary.cost_history.append(cost)
                summary.step_costs.append((reference, new_cost))
                damping = max(damping / 10.0, _MIN_DAMPING)
                accepted = True
                logger.debug(
                    f"{problem.label}: iter {it} cost {previous:.6e} -> {cost:.6e} "
                    f"(damping {damping:.1e})"
                )
                if reference - new_cost <= config.convergence_tol * max(reference, 1e-30):
                    summary.converged = True
                break

            summary.rejected_steps += 1
            if np.isfinite(new_cost) and new_cost <= reference * (1.0 + _STATIONARY_RTOL) + 1e-30:
                summary.converged = True
                break
            damping *= 10.0
            if damping > config.max_damping:
                logger.debug(
                    f"{problem.label}: no descent step up to damping {config.max_damping:.1e} "
                    f"(cost {cost:.6e}), stopping"
                )
                damping = config.max_damping
                break

        if summary.converged or not accepted:
            break

    summary.final_cost = cost
    summary.final_damping = damping
    problem.commit(state)
    logger.debug(
        f"{problem.label}: {summary.initial_cost:.6e} -> {summary.final_cost:.6e} in "
        f"{summary.iterations} iters ({summary.accepted_steps} accepted)"
    )
    return summary


def frozen_edge_cost(
    terms: Iterable[Tuple[EdgeResiduals, ArrayF, npt.NDArray[np.bool_]]],
) -> float:
    """
    Whitened squared residual sum over fixed row sets.

    Args:
        terms: (residuals evaluated with `support`, whitened error, support) per edge

    Returns:
        The cost, or inf once a supported row falls behind its camera
    """
    total = 0.0
    for res, error, support in terms:
        if np.any(support & ~res.valid):
            return float("inf")
        total += float(np.sum(error**2))
    return total


# ---------------------------------------------------------------------------
# Geometric bundle adjustment over a keyframe subset
# ---------------------------------------------------------------------------


@dataclass
class GeometricState:
    poses: Dict[int, Pose]
    inv_depths: Dict[int, ArrayF]


class GeometricProblem(LeastSquaresProblem[GeometricState]):
    """
    Flow reprojection cost over `edges`, free poses `free_poses` and free depths
    of `free_depths` keyframes.

    With `hold_scale` the mean inverse depth over observed pixels of the
    free-depth keyframes is pulled back to its starting value after each
    accepted step, by a similarity about the camera centre of `scale_anchor`.
    The reprojection cost is invariant under this map.
    """

    label = "window"

    def __init__(
        self,
        graph: FactorGraph,
        ids: Sequence[int],
        edges: Sequence[FlowEdge],
        free_poses: Sequence[int],
        free_depths: Sequence[int],
        hold_scale: bool = False,
        scale_anchor: Optional[int] = None,
        label: str = "window",
    ):
        self.graph = graph
        self.ids = list(ids)
        self.edges = list(edges)
        self.free_poses = [k for k in self.ids if k in set(free_poses)]
        self.free_depths = [k for k in self.ids if k in set(free_depths)]
        self.label = label
        self.pose_offset = {k: 6 * n for n, k in enumerate(self.free_poses)}
        npix = graph.camera.num_pixels
        self.depth_offset = {k: npix * n for n, k in enumerate(self.free_depths)}
        self.n_block = 6 * len(self.free_poses)
        self.n_point = npix * len(self.free_depths)
        self.hold_scale = hold_scale and bool(self.free_depths)
        self.scale_anchor = scale_anchor
        self._support: List[npt.NDArray[np.bool_]] = []
        if self.hold_scale:
            kf = graph.keyframe(scale_anchor) if scale_anchor is not None else None
            if kf is None:
                raise ValueError("hold_scale requires a scale_anchor keyframe")
            self._start_depths = {k: graph.keyframe(k).inv_depth.copy() for k in self.free_depths}

    def _observed(self, state: GeometricState) -> Dict[int, npt.NDArray[np.bool_]]:
        """Pixels of each free-depth keyframe seen through at least one outgoing edge."""
        npix = self.graph.camera.num_pixels
        seen = {k: np.zeros(npix, dtype=bool) for k in self.free_depths}
        for edge in self.edges:
            if edge.src in seen:
                res, _, _ = self._edge_terms(state, edge, False)
                seen[edge.src] |= res.valid
        if not any(mask.any() for mask in seen.values()):
            return {k: np.ones(npix, dtype=bool) for k in self.free_depths}
        return seen

    def _mean_inv_depth(
        self, depths: Dict[int, ArrayF], seen: Dict[int, npt.NDArray[np.bool_]]
    ) -> float:
        return float(
            np.mean(np.concatenate([depths[k].ravel()[seen[k]] for k in self.free_depths]))
        )

    def initial_state(self) -> GeometricState:
        return GeometricState(
            poses={k: self.graph.keyframe(k).pose for k in self.ids},
            inv_depths={k: self.graph.keyframe(k).inv_depth for k in self.ids},
        )

    def _edge_terms(
        self,
        state: GeometricState,
        edge: FlowEdge,
        jac: bool,
        support: Optional[npt.NDArray[np.bool_]] = None,
    ):
        res = edge_residuals(
            self.graph.camera,
            state.poses[edge.src],
            state.poses[edge.dst],
            state.inv_depths[edge.src],
            edge,
            with_jacobians=jac,
            support=support,
        )
        W = edge.sqrt_information
        error = np.einsum("pij,pj->pi", W, res.residual)
        return res, W, error

    def cost(self, state: GeometricState) -> float:
        total = 0.0
        for edge in self.edges:
            _, _, error = self._edge_terms(state, edge, False)
            total += float(np.sum(error**2))
        return total

    def step_cost(self, state: GeometricState) -> float:
        if len(self._support) != len(self.edges):
            return self.cost(state)
        terms = []
        for edge, rows in zip(self.edges, self._support):
            res, _, error = self._edge_terms(state, edge, False, rows)
            terms.append((res, error, rows))
        return frozen_edge_cost(terms)

    def linearize(self, state: GeometricState) -> NormalEquations:
        neq = NormalEquations.zeros(self.n_block, self.n_point)
        npix = self.graph.camera.num_pixels
        pixel_ids = np.arange(npix)
        self._support = []
        for edge in self.edges:
            res, W, error = self._edge_terms(state, edge, True)
            self._support.append(res.valid)
            rows = np.flatnonzero(res.valid)
            if rows.size == 0:
                continue
            e = error[rows]
            Wr = W[rows]
            blocks = []
            if edge.src in self.pose_offset:
                blocks.append((self.pose_offset[edge.src], Wr @ res.jac_src[rows]))
            if edge.dst in self.pose_offset:
                blocks.append((self.pose_offset[edge.dst], Wr @ res.jac_dst[rows]))
            point_index = None
            point_jac = None
            if edge.src in self.depth_offset:
                point_index = self.depth_offset[edge.src] + pixel_ids[rows]
                point_jac = np.einsum("pij,pj->pi", Wr, res.jac_depth[rows])
            neq.add(e, blocks, point_index, point_jac)
        return neq

    def retract(self, state: GeometricState, dp: ArrayF, dd: ArrayF) -> GeometricState:
        poses = dict(state.poses)
        for k, off in self.pose_offset.items():
            poses[k] = retract(poses[k], dp[off : off + 6])
        depths = dict(state.inv_depths)
        shape = self.graph.camera.shape
        npix = self.graph.camera.num_pixels
        for k, off in self.depth_offset.items():
            step = dd[off : off + npix].reshape(shape)
            depths[k] = np.maximum(depths[k] + step, MIN_INV_DEPTH)
        return GeometricState(poses, depths)

    def post_accept(self, state: GeometricState) -> GeometricState:
        if not self.hold_scale:
            return state
        seen = self._observed(state)
        s = self._mean_inv_depth(state.inv_depths, seen) / self._mean_inv_depth(
            self._start_depths, seen
        )
        if s == 1.0:
            return state
        c0 = state.poses[self.scale_anchor].translation  # type: ignore[index]
        poses = dict(state.poses)
        for k in self.free_poses:
            p = poses[k]
            poses[k] = Pose(p.rotation, c0 + s * (p.translation - c0))
        depths = dict(state.inv_depths)
        for k in self.free_depths:
            depths[k] = depths[k] / s
        return GeometricState(poses, depths)

    def commit(self, state: GeometricState) -> None:
        for k in self.free_poses:
            self.graph.keyframe(k).pose = state.poses[k]
        for k in self.free_depths:
            self.graph.keyframe(k).inv_depth = state.inv_depths[k]


def optimize_keyframes(
    graph: FactorGraph,
    ids: Sequence[int],
    fixed_poses: Set[int],
    config: TrackingConfig,
    edges: Optional[Sequence[FlowEdge]] = None,
    motion_only: bool = False,
    structure_only: bool = False,
    hold_scale: Optional[bool] = None,
    max_iters: Optional[int] = None,
    label: str = "ba",
) -> SolveSummary:
    """
    Bundle-adjust poses and inverse depths of `ids` over the edges among them.

    Args:
        graph: Factor graph, updated in place
        ids: Participating keyframes
        fixed_poses: Keyframes whose pose is held constant (gauge)
        config: Solver settings
        edges: Edge subset; defaults to every edge with both ends in ids
        motion_only: Hold all depths
        structure_only: Hold all poses
        hold_scale: Keep the mean inverse depth; defaults to True exactly when
            one pose is fixed and poses and depths are both free
        max_iters: Override config.gn_iters

    Returns:
        SolveSummary
    """
    if motion_only and structure_only:
        raise ValueError("motion_only and structure_only are mutually exclusive")
    ids = list(ids)
    edges = graph.edges_within(ids) if edges is None else list(edges)
    free_poses = [] if structure_only else [k for k in ids if k not in fixed_poses]
    free_depths = [] if motion_only else ids
    fixed_in_set = [k for k in ids if k in fixed_poses]
    if hold_scale is None:
        hold_scale = (
            not motion_only and not structure_only and len(fixed_in_set) == 1 and bool(free_poses)
        )
    anchor = fixed_in_set[0] if fixed_in_set else ids[0]
    problem = GeometricProblem(
        graph,
        ids,
        edges,
        free_poses,
        free_depths,
        hold_scale=hold_scale,
        scale_anchor=anchor,
        label=label,
    )
    return levenberg_marquardt(problem, config, max_iters=max_iters)


def optimize_window(
    graph: FactorGraph,
    config: TrackingConfig,
    motion_only: bool = False,
    structure_only: bool = False,
    max_iters: Optional[int] = None,
) -> SolveSummary:
    """
    Damped Gauss-Newton on the flow reprojection cost over the active window.

    The first window pose is held fixed. Poses and inverse depths of the window
    keyframes are updated in place.

    Raises:
        ValueError: fewer than 2 window keyframes or no edge inside the window
        OptimizerStalledError: damping ceiling exceeded
    """
    window = graph.window
    if len(window) < 2:
        raise ValueError(f"optimize_window needs >= 2 keyframes, window has {len(window)}")
    edges = graph.edges_within(window)
    if not edges:
        raise ValueError("optimize_window needs at least one edge inside the window")
    summary = optimize_keyframes(
        graph,
        window,
        {window[0]},
        config,
        edges=edges,
        motion_only=motion_only,
        structure_only=structure_only,
        max_iters=max_iters,
        label="window",
    )
    logger.debug(
        f"Window {window[0]}..{window[-1]}: cost {summary.initial_cost:.4e} -> "
        f"{summary.final_cost:.4e}"
    )
    return summary
