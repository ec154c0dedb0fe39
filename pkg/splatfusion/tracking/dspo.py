"""Disparity, scale and pose optimization over the active window.

Each round alternates two damped Gauss-Newton stages:
  1. flow reprojection cost over window poses and all window inverse depths;
  2. prior-regularized cost over high-error inverse depths and per-keyframe
     (scale, shift), poses fixed:
        E = geometric + alpha1 * sum_high (d - d_prior)^2
                      + alpha2 * sum_low  (d - d_prior)^2,
     with d_prior = scale / mono_prior + shift and low-error depths held fixed.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import numpy.typing as npt

from splatfusion.config import TrackingConfig
from splatfusion.tracking.graph import ErrorClass, FactorGraph, Keyframe
from splatfusion.tracking.residuals import edge_residuals, geometric_cost
from splatfusion.tracking.solver import (
    MIN_INV_DEPTH,
    LeastSquaresProblem,
    NormalEquations,
    SolveSummary,
    frozen_edge_cost,
    levenberg_marquardt,
    optimize_window,
)

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]

MIN_SCALE = 1e-9
DEGENERATE_VARIANCE = 1e-12


def should_insert_keyframe(flow_field: ArrayF, config: TrackingConfig) -> bool:
    """
    Keyframe gate: mean flow magnitude over valid pixels strictly above the threshold.

    Args:
        flow_field: (H, W, 2) displacement relative to the last keyframe; NaN marks invalid
        config: Tracking settings (kf_flow_threshold)
    """
    flow = np.asarray(flow_field, dtype=np.float64).reshape(-1, 2)
    if flow.shape[0] == 0:
        raise ValueError("Flow field is empty")
    valid = np.all(np.isfinite(flow), axis=1)
    if not np.any(valid):
        return False
    mean_mag = float(np.mean(np.linalg.norm(flow[valid], axis=1)))
    return mean_mag > config.kf_flow_threshold


def classify_depth_errors(
    graph: FactorGraph,
    kf_id: int,
    counts: npt.ArrayLike,
    config: TrackingConfig,
) -> npt.NDArray[np.uint8]:
    """
    Label each pixel low-error when its consistency count exceeds the threshold.

    Args:
        graph: Factor graph; the keyframe's error_class is updated
        kf_id: Keyframe to classify
        counts: (H, W) consistency counts, or a ConfidenceMap exposing `.counts`
        config: Tracking settings (consistency_threshold)

    Returns:
        (H, W) uint8 grid of ErrorClass values
    """
    grid = np.asarray(getattr(counts, "counts", counts))
    kf = graph.keyframe(kf_id)
    if grid.shape != kf.shape:
        raise ValueError(f"Count grid {grid.shape} does not match keyframe {kf.shape}")
    labels = np.where(grid > config.consistency_threshold, ErrorClass.LOW, ErrorClass.HIGH)
    labels = labels.astype(np.uint8)
    kf.error_class = labels
    logger.debug(
        f"Keyframe {kf_id}: {int((labels == ErrorClass.LOW).sum())} low-error / "
        f"{labels.size} pixels"
    )
    return labels


@dataclass
class ScaleShiftFit:
    """Least-squares alignment d_low ~ scale / mono_prior + shift."""

    scale: float
    shift: float
    num_pixels: int
    degenerate: bool = False


def fit_scale_shift(kf: Keyframe) -> ScaleShiftFit:
    """
    Closed-form fit of (scale, shift) over the keyframe's low-error pixels.

    Falls back to scale 1 and shift mean(d_low) - mean(1/mono_prior), flagged
    degenerate, when the prior's variance over the set is below 1e-12 or the
    fitted scale is not positive.
    """
    mask = kf.low_error_mask()
    if int(mask.sum()) < 2:
        logger.warning(f"Keyframe {kf.id}: fewer than 2 low-error pixels, fitting on all pixels")
        mask = np.ones(kf.shape, dtype=bool)
    x = 1.0 / kf.mono_prior[mask]
    y = kf.inv_depth[mask]
    x_mean = float(np.mean(x))
    y_mean = float(np.mean(y))
    xc = x - x_mean
    var_x = float(np.mean(xc * xc))
    n = int(x.size)
    if var_x >= DEGENERATE_VARIANCE:
        scale = float(np.mean(xc * (y - y_mean))) / var_x
        if scale > 0:
            return ScaleShiftFit(scale, y_mean - scale * x_mean, n)
    logger.warning(
        f"Keyframe {kf.id}: degenerate scale/shift fit (prior variance {var_x:.3e}), "
        f"using scale=1"
    )
    return ScaleShiftFit(1.0, y_mean - x_mean, n, degenerate=True)


def initialize_scale_shift(kf: Keyframe) -> ScaleShiftFit:
    """Fit and store (scale, shift) on the keyframe."""
    fit = fit_scale_shift(kf)
    kf.scale = fit.scale
    kf.shift = fit.shift
    kf.scale_initialized = True
    return fit


@dataclass
class DSPOObjective:
    """Terms of the prior-regularized window objective."""

    geometric: float
    high_prior: float
    low_prior: float

    @property
    def total(self) -> float:
        return self.geometric + self.high_prior + self.low_prior


def _aligned_ids(graph: FactorGraph, ids: Sequence[int]) -> List[int]:
    return [k for k in ids if graph.keyframe(k).scale_initialized]


def dspo_objective(
    graph: FactorGraph, config: TrackingConfig, ids: Optional[Sequence[int]] = None
) -> DSPOObjective:
    """Evaluate each term of the prior-regularized objective over the window."""
    ids = graph.window if ids is None else list(ids)
    geometric = geometric_cost(graph, graph.edges_within(ids))
    high = 0.0
    low = 0.0
    for k in _aligned_ids(graph, ids):
        kf = graph.keyframe(k)
        diff = kf.inv_depth - kf.aligned_prior_inv_depth()
        low_mask = kf.low_error_mask()
        high += config.alpha1 * float(np.sum(diff[~low_mask] ** 2))
        low += config.alpha2 * float(np.sum(diff[low_mask] ** 2))
    return DSPOObjective(geometric, high, low)


@dataclass
class AlignmentState:
    inv_depths: Dict[int, ArrayF]
    scale: Dict[int, float]
    shift: Dict[int, float]


class PriorAlignmentProblem(LeastSquaresProblem[AlignmentState]):
    """Stage 2: high-error depths and per-keyframe (scale, shift); poses fixed."""

    label = "prior-alignment"

    def __init__(self, graph: FactorGraph, ids: Sequence[int], config: TrackingConfig):
        self.graph = graph
        self.config = config
        self.ids = list(ids)
        self.edges = graph.edges_within(self.ids)
        self.aligned = _aligned_ids(graph, self.ids)
        self.block_offset = {k: 2 * n for n, k in enumerate(self.aligned)}

        # One variable per high-error pixel of each window keyframe
        npix = graph.camera.num_pixels
        self.var_index: Dict[int, npt.NDArray[np.intp]] = {}
        self.high_rows: Dict[int, npt.NDArray[np.intp]] = {}
        offset = 0
        for k in self.ids:
            high = ~graph.keyframe(k).low_error_mask().ravel()
            rows = np.flatnonzero(high)
            index = np.full(npix, -1, dtype=np.intp)
            index[rows] = offset + np.arange(rows.size)
            offset += rows.size
            self.var_index[k] = index
            self.high_rows[k] = rows
        self.n_point = offset
        self.n_block = 2 * len(self.aligned)
        self._support: List[npt.NDArray[np.bool_]] = []

    def initial_state(self) -> AlignmentState:
        return AlignmentState(
            inv_depths={k: self.graph.keyframe(k).inv_depth for k in self.ids},
            scale={k: self.graph.keyframe(k).scale for k in self.aligned},
            shift={k: self.graph.keyframe(k).shift for k in self.aligned},
        )

    def _geometric_terms(
        self,
        state: AlignmentState,
        jac: bool,
        support: Optional[List[npt.NDArray[np.bool_]]] = None,
    ):
        for n, edge in enumerate(self.edges):
            src = self.graph.keyframe(edge.src)
            dst = self.graph.keyframe(edge.dst)
            res = edge_residuals(
                self.graph.camera,
                src.pose,
                dst.pose,
                state.inv_depths[edge.src],
                edge,
                jac,
                support=None if support is None else support[n],
            )
            W = edge.sqrt_information
            yield edge, res, W, np.einsum("pij,pj->pi", W, res.residual)

    def _prior_terms(self, state: AlignmentState, k: int):
        """Yield (weight, rows, residual, inv_mono) for the high and low sets."""
        kf = self.graph.keyframe(k)
        inv_mono = (1.0 / kf.mono_prior).ravel()
        d = state.inv_depths[k].ravel()
        diff = d - (state.scale[k] * inv_mono + state.shift[k])
        low = kf.low_error_mask().ravel()
        high_rows = np.flatnonzero(~low)
        low_rows = np.flatnonzero(low)
        yield self.config.alpha1, high_rows, diff[high_rows], inv_mono[high_rows]
        yield self.config.alpha2, low_rows, diff[low_rows], inv_mono[low_rows]

    def _prior_cost(self, state: AlignmentState) -> float:
        total = 0.0
        for k in self.aligned:
            for weight, _, diff, _ in self._prior_terms(state, k):
                total += weight * float(np.sum(diff**2))
        return total

    def cost(self, state: AlignmentState) -> float:
        total = 0.0
        for *_, error in self._geometric_terms(state, False):
            total += float(np.sum(error**2))
        return total + self._prior_cost(state)

    def step_cost(self, state: AlignmentState) -> float:
        if len(self._support) != len(self.edges):
            return self.cost(state)
        terms = [
            (res, error, rows)
            for (_, res, _, error), rows in zip(
                self._geometric_terms(state, False, self._support), self._support
            )
        ]
        return frozen_edge_cost(terms) + self._prior_cost(state)

    def linearize(self, state: AlignmentState) -> NormalEquations:
        neq = NormalEquations.zeros(self.n_block, self.n_point)
        self._support = []
        for edge, res, W, error in self._geometric_terms(state, True):
            self._support.append(res.valid)
            rows = np.flatnonzero(res.valid)
            if rows.size == 0:
                continue
            point_jac = np.einsum("pij,pj->pi", W[rows], res.jac_depth[rows])
            neq.add(error[rows], (), self.var_index[edge.src][rows], point_jac)

        for k in self.aligned:
            off = self.block_offset[k]
            for n, (weight, rows, diff, inv_mono) in enumerate(self._prior_terms(state, k)):
                if rows.size == 0:
                    continue
                w = np.sqrt(weight)
                error = (w * diff)[:, None]
                A = np.empty((rows.size, 1, 2))
                A[:, 0, 0] = -w * inv_mono
                A[:, 0, 1] = -w
                if n == 0:
                    neq.add(error, [(off, A)], self.var_index[k][rows], np.full((rows.size, 1), w))
                else:
                    neq.add(error, [(off, A)])
        return neq

    def retract(self, state: AlignmentState, dp: ArrayF, dd: ArrayF) -> AlignmentState:
        depths = dict(state.inv_depths)
        for k in self.ids:
            rows = self.high_rows[k]
            if rows.size == 0:
                continue
            flat = depths[k].ravel().copy()
            flat[rows] = np.maximum(flat[rows] + dd[self.var_index[k][rows]], MIN_INV_DEPTH)
            depths[k] = flat.reshape(depths[k].shape)
        scale = dict(state.scale)
        shift = dict(state.shift)
        for k, off in self.block_offset.items():
            scale[k] = max(scale[k] + float(dp[off]), MIN_SCALE)
            shift[k] = shift[k] + float(dp[off + 1])
        return AlignmentState(depths, scale, shift)

    def commit(self, state: AlignmentState) -> None:
        for k in self.ids:
            self.graph.keyframe(k).inv_depth = state.inv_depths[k]
        for k in self.aligned:
            kf = self.graph.keyframe(k)
            kf.scale = state.scale[k]
            kf.shift = state.shift[k]


def refine_prior_alignment(
    graph: FactorGraph, config: TrackingConfig, ids: Optional[Sequence[int]] = None
) -> SolveSummary:
    """Run the prior-regularized stage once over the window (poses fixed)."""
    ids = graph.window if ids is None else list(ids)
    problem = PriorAlignmentProblem(graph, ids, config)
    if problem.n_block == 0 and problem.n_point == 0:
        logger.debug("Prior alignment: no free variables")
        state = problem.initial_state()
        cost = problem.cost(state)
        return SolveSummary(problem.label, cost, cost, converged=True, cost_history=[cost])
    return levenberg_marquardt(problem, config)


@dataclass
class DSPOResult:
    """Per-round solver summaries and the final (scale, shift) per keyframe."""

    rounds: List[Dict[str, SolveSummary]] = field(default_factory=list)
    scale: Dict[int, float] = field(default_factory=dict)
    shift: Dict[int, float] = field(default_factory=dict)
    objective: Optional[DSPOObjective] = None


def dspo_refine(
    graph: FactorGraph,
    config: TrackingConfig,
    include_geometric_stage: bool = True,
) -> DSPOResult:
    """
    Alternate window bundle adjustment with prior-regularized refinement.

    Requires error classes and an initial (scale, shift) on the window
    keyframes that take part in the prior terms.

    Args:
        graph: Factor graph, updated in place
        config: Tracking settings (dspo_rounds, gn_iters, alpha1, alpha2)
        include_geometric_stage: Run the pose+depth stage before each prior stage

    Returns:
        DSPOResult
    """
    result = DSPOResult()
    window = graph.window
    for r in range(config.dspo_rounds):
        summaries: Dict[str, SolveSummary] = {}
        if include_geometric_stage and len(window) >= 2 and graph.edges_within(window):
            summaries["window"] = optimize_window(graph, config)
        summaries["prior"] = refine_prior_alignment(graph, config, window)
        result.rounds.append(summaries)
        logger.debug(
            f"DSPO round {r}: prior cost {summaries['prior'].initial_cost:.4e} -> "
            f"{summaries['prior'].final_cost:.4e}"
        )
    for k in _aligned_ids(graph, window):
        kf = graph.keyframe(k)
        result.scale[k] = kf.scale
        result.shift[k] = kf.shift
    result.objective = dspo_objective(graph, config, window)
    return result
