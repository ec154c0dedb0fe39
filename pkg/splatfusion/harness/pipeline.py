"""End-to-end run: tracking, fusion, mapping, backend, metrics and artifacts."""

import contextlib
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Set, Union

import numpy as np

from splatfusion.backend import BackendResult, changed_poses, run_backend
from splatfusion.config import Config
from splatfusion.errors import EmptyMaskError, StageError
from splatfusion.fusion import (
    ConfidenceMap,
    ProxyDepth,
    compute_weights,
    consistency_counts,
    fuse_keyframe,
)
from splatfusion.geometry import Pose
from splatfusion.gsmap import (
    FinalizeMessage,
    GaussianMap,
    KeyframeMessage,
    Mapper,
    PoseUpdateMessage,
    export_point_cloud,
    map_size_bytes,
    render,
    save_map,
)
from splatfusion.harness import dataset_io
from splatfusion.harness.metrics import (
    NEAR_RANGE,
    PSNR_CAP,
    AteResult,
    ate,
    depth_l1,
    psnr,
    reconstruction_metrics,
    ssim,
)
from splatfusion.harness.report import RunReport, plot_confidence, plot_trajectory
from splatfusion.harness.scenarios import get_scenario
from splatfusion.harness.simulate import SyntheticSequence, generate_sequence
from splatfusion.harness.worker import MappingWorker
from splatfusion.tracking import (
    FactorGraph,
    Keyframe,
    classify_depth_errors,
    dspo_refine,
    initialize_scale_shift,
    optimize_window,
    should_insert_keyframe,
)
from splatfusion.utils.timing import StageTimer

logger = logging.getLogger(__name__)

SANITY_TOL = 1e-9


@dataclass
class PipelineResult:
    """Report plus the in-memory state a caller may want to inspect."""

    report: RunReport
    sequence: SyntheticSequence
    graph: FactorGraph
    gmap: GaussianMap
    estimate: List[Pose]
    tracked_estimate: List[Pose] = field(default_factory=list)
    proxies: Dict[int, ProxyDepth] = field(default_factory=dict)
    backend: List[BackendResult] = field(default_factory=list)
    output_dir: Optional[Path] = None


@contextmanager
def _stage(timer: StageTimer, name: str) -> Iterator[None]:
    """Time a stage and tag any failure inside it with the stage name."""
    with timer.stage(name):
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, f"{type(e).__name__}: {e}", e) from e


class Pipeline:
    """
    Drives one synthetic sequence through the full system.

    Tracking runs on the caller's thread; the Gaussian map is maintained by a
    MappingWorker fed with keyframe, pose-update and finalize messages.
    """

    def __init__(self, config: Config, sequence: SyntheticSequence):
        self.config = config
        self.sequence = sequence
        self.camera = sequence.camera
        self.graph = FactorGraph(self.camera, window_size=config.tracking.window_size)
        self.mapper = Mapper(
            self.camera,
            config.map_loss,
            config.map_optimizer,
            supervision_window=config.tracking.window_size,
        )
        self.worker = MappingWorker(self.mapper, sequential=config.pipeline.sequential)
        self.timer = StageTimer()
        self.proxies: Dict[int, ProxyDepth] = {}
        self.confidences: Dict[int, ConfidenceMap] = {}
        self.backend_results: List[BackendResult] = []
        self._pre_backend: Dict[int, Pose] = {}
        self._mapped: Set[int] = set()
        self._since_backend = 0

    # ------------------------------------------------------------------
    # Tracking
    # ------------------------------------------------------------------

    def _is_keyframe(self, index: int) -> bool:
        if not self.graph.order:
            return True
        last = self.graph.order[-1]
        flow = self.sequence.flow_field(last, index)
        return should_insert_keyframe(flow, self.config.tracking)

    def _insert_keyframe(self, index: int) -> Keyframe:
        frame = self.sequence.frames[index]
        if self.graph.order:
            last = self.graph.order[-1]
            pose = self.sequence.initial_pose(last, index, self.graph.keyframe(last).pose)
        else:
            pose = frame.gt_pose
        kf = Keyframe(
            id=index,
            pose=pose,
            image=frame.image,
            inv_depth=frame.init_inv_depth,
            mono_prior=frame.mono_prior,
            frame_index=index,
            timestamp=frame.timestamp,
        )
        predecessors = self.graph.order[-self.config.pipeline.neighbors_per_keyframe :]
        self.graph.add_keyframe(kf)
        for p in predecessors:
            self.graph.add_edge(self.sequence.flow_edge(p, index))
            self.graph.add_edge(self.sequence.flow_edge(index, p))
        return kf

    def _score(
        self, kf_ids: List[int], neighbors: Optional[Dict[int, List[int]]] = None
    ) -> Dict[int, ConfidenceMap]:
        """Consistency counts and the resulting weights per keyframe."""
        fusion = self.config.fusion
        counts = consistency_counts(
            self.graph, kf_ids, fusion, neighbors, n_jobs=self.config.pipeline.consistency_jobs
        )
        maps = {}
        for k, c in counts.items():
            if self.config.pipeline.fusion_enabled:
                maps[k] = compute_weights(c, fusion)
            else:
                maps[k] = ConfidenceMap.multiview_only(c.shape)
                maps[k].counts = np.asarray(c, dtype=np.int32)
        return maps

    def _track(self, kf: Keyframe) -> None:
        tracking = self.config.tracking
        window = self.graph.window
        if len(window) >= 2 and self.graph.edges_within(window):
            optimize_window(self.graph, tracking)

        for k, conf in self._score(window).items():
            classify_depth_errors(self.graph, k, conf.counts, tracking)
            keyframe = self.graph.keyframe(k)
            if not keyframe.scale_initialized:
                fit = initialize_scale_shift(keyframe)
                logger.debug(f"Keyframe {k}: scale={fit.scale:.4f} shift={fit.shift:.4f}")

        result = dspo_refine(self.graph, tracking)
        if result.objective is not None:
            logger.debug(f"Keyframe {kf.id}: DSPO objective {result.objective.total:.4e}")

    def _fuse(self, kf_id: int, conf: ConfidenceMap) -> ProxyDepth:
        proxy = fuse_keyframe(self.graph.keyframe(kf_id), conf)
        self.proxies[kf_id] = proxy
        self.confidences[kf_id] = conf
        return proxy

    # ------------------------------------------------------------------
    # Mapping messages
    # ------------------------------------------------------------------

    def _forward_pose_changes(self, before: Dict[int, Pose]) -> None:
        """Send pose corrections of already-mapped keyframes to the mapper."""
        updates = changed_poses(
            {k: p for k, p in before.items() if k in self._mapped}, self.graph.poses()
        )
        if updates:
            self.worker.submit(PoseUpdateMessage(updates))

    def _run_backend(self) -> None:
        before = self.graph.poses()
        for k, pose in before.items():
            self._pre_backend.setdefault(k, pose)
        result = run_backend(
            self.graph,
            self.config.tracking,
            self.config.loop_closure,
            provider=lambda i, j: self.sequence.flow_edge(i, j, loop=True),
            loop_closure=self.config.pipeline.loop_closure_enabled,
            local_radius=self.config.pipeline.local_ba_radius,
        )
        self.backend_results.append(result)
        self._since_backend = 0
        logger.info(
            f"Backend pass after {len(self.graph)} keyframes: {len(result.loops)} loops, "
            f"{len(result.updates)} poses moved"
        )
        with _stage(self.timer, "mapping"):
            self._forward_pose_changes(before)

    def _finalize(self) -> None:
        neighbors = {
            k: [n for n in self.graph.neighborhood(k) if n != k] for k in self.graph.order
        }
        frames = {}
        for k, conf in self._score(list(self.graph.order), neighbors).items():
            proxy = self._fuse(k, conf)
            frames[k] = (self.graph.keyframe(k).pose, proxy.depth)
        with _stage(self.timer, "mapping"):
            self.worker.submit(FinalizeMessage(frames))
            self.worker.stop()

    # ------------------------------------------------------------------
    # Driver
    # ------------------------------------------------------------------

    def process(self) -> None:
        """Run every frame, the backend passes and the final map refinement."""
        self.worker.start()
        try:
            for index in range(len(self.sequence)):
                with _stage(self.timer, "tracking"):
                    if not self._is_keyframe(index):
                        continue
                    before = self.graph.poses()
                    kf = self._insert_keyframe(index)
                    self._track(kf)
                with _stage(self.timer, "fusion"):
                    conf = self._score([kf.id])[kf.id]
                    proxy = self._fuse(kf.id, conf)
                with _stage(self.timer, "mapping"):
                    self._forward_pose_changes(before)
                    self.worker.submit(KeyframeMessage(kf.snapshot(), proxy))
                    self._mapped.add(kf.id)
                logger.info(
                    f"Keyframe {kf.id} ({len(self.graph)} total): "
                    f"{int(proxy.weights.counts.astype(bool).sum())} consistent pixels"
                )

                self._since_backend += 1
                if self._since_backend >= self.config.pipeline.ba_every:
                    with _stage(self.timer, "backend"):
                        self._run_backend()

            if self._since_backend and len(self.graph) >= 2:
                with _stage(self.timer, "backend"):
                    self._run_backend()
            with _stage(self.timer, "finalize"):
                self._finalize()
        except BaseException:
            with contextlib.suppress(Exception):
                self.worker.stop(timeout=5.0)
            raise

    def estimated_trajectory(self) -> List[Pose]:
        """Keyframe poses, with other frames chained from the preceding keyframe."""
        return self._chain(self.graph.poses())

    def tracked_trajectory(self) -> List[Pose]:
        """As estimated_trajectory, with each keyframe as it stood before its first backend pass."""
        poses = dict(self.graph.poses())
        poses.update({k: p for k, p in self._pre_backend.items() if k in poses})
        return self._chain(poses)

    def _chain(self, keyframe_poses: Dict[int, Pose]) -> List[Pose]:
        poses: List[Pose] = []
        last: Optional[int] = None
        for index in range(len(self.sequence)):
            if index in keyframe_poses:
                last = index
                poses.append(keyframe_poses[index])
            elif last is None:
                poses.append(self.sequence.frames[index].gt_pose)
            else:
                poses.append(self.sequence.initial_pose(last, index, keyframe_poses[last]))
        return poses


def _check_metric_sanity(sequence: SyntheticSequence) -> None:
    """Self-comparisons must hit the metrics' ideal values."""
    frame = sequence.frames[0]
    gt = sequence.gt_poses
    checks = {
        "psnr(a, a)": psnr(frame.image, frame.image) == PSNR_CAP,
        "ssim(a, a)": abs(ssim(frame.image, frame.image) - 1.0) < SANITY_TOL,
        "depth_l1(gt, gt)": depth_l1(frame.gt_depth, frame.gt_depth) == 0.0,
    }
    if len(gt) >= 3:
        checks["ate(gt, gt)"] = ate(gt, gt).rmse < SANITY_TOL
    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        raise StageError("metrics", f"metric sanity checks failed: {failed}")


def _mean_or_nan(values: List[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def _mean_or_none(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def _evaluate(
    pipe: Pipeline, gmap: GaussianMap, traj: AteResult, tracked: AteResult
) -> RunReport:
    seq = pipe.sequence
    cfg = pipe.config.pipeline
    camera = pipe.camera

    overall, near, rendered_l1, psnrs, ssims = [], [], [], [], []
    for k in pipe.graph.order:
        frame = seq.frames[k]
        proxy = pipe.proxies[k]
        overall.append(depth_l1(proxy.depth, frame.gt_depth))
        try:
            near.append(depth_l1(proxy.depth, frame.gt_depth, max_range=NEAR_RANGE))
        except EmptyMaskError:
            logger.debug(f"Keyframe {k}: no ground truth within {NEAR_RANGE} m")

        out = render(gmap, camera, pipe.graph.keyframe(k).pose)
        psnrs.append(psnr(np.clip(out.color, 0.0, 1.0), frame.image))
        ssims.append(ssim(np.clip(out.color, 0.0, 1.0), frame.image))
        try:
            rendered_l1.append(depth_l1(out.normalized_depth(), frame.gt_depth))
        except EmptyMaskError:
            logger.warning(f"Keyframe {k}: rendered depth empty")

    gt_points = seq.scene.sample_surface_points(
        camera, [seq.frames[k].gt_pose for k in pipe.graph.order]
    )
    recon = reconstruction_metrics(traj.alignment.apply(gmap.means), gt_points)
    frontend = ate(seq.frontend_poses, seq.gt_poses, cfg.ate_alignment)

    total = pipe.timer.total
    return RunReport(
        scene=seq.spec.name,
        seed=seq.spec.seed,
        num_frames=len(seq),
        num_keyframes=len(pipe.graph),
        num_loops=sum(len(r.loops) for r in pipe.backend_results),
        ate_rmse=traj.rmse,
        ate_mean=traj.mean,
        ate_median=traj.median,
        ate_rmse_frontend=frontend.rmse,
        ate_rmse_tracked=tracked.rmse,
        depth_l1_overall=_mean_or_nan(overall),
        depth_l1_near=_mean_or_none(near),
        render_depth_l1=_mean_or_none(rendered_l1),
        psnr=_mean_or_nan(psnrs),
        ssim=_mean_or_nan(ssims),
        accuracy=recon.accuracy,
        completion=recon.completion,
        completion_ratio=recon.completion_ratio,
        chamfer_l1=recon.chamfer_l1,
        gaussian_count=len(gmap),
        map_size_mb=map_size_bytes(len(gmap)) / 1e6,
        fps=len(seq) / total if total > 0 else 0.0,
        total_seconds=total,
        timings=pipe.timer.totals,
    )


def _write_artifacts(pipe: Pipeline, result: PipelineResult, traj: AteResult, out: Path) -> None:
    seq = pipe.sequence
    dataset_io.write_report_json(out / "report.json", result.report.to_dict())
    dataset_io.write_tum(
        out / "trajectory.txt", [f.timestamp for f in seq.frames], result.estimate
    )
    for k in pipe.graph.order:
        name = f"{k:06d}"
        proxy = pipe.proxies[k]
        dataset_io.write_depth_png(out / "proxy_depth" / f"{name}.png", proxy.depth)
        dataset_io.write_raw_f32(out / "proxy_depth" / f"{name}.f32", proxy.depth)
        conf = pipe.confidences[k]
        dataset_io.write_confidence(out / "confidence", k, conf.counts, conf.w_mv)
        plot_confidence(out / "confidence" / f"{name}_wmv.png", conf.w_mv, f"Keyframe {k}")

        view = render(result.gmap, pipe.camera, pipe.graph.keyframe(k).pose)
        dataset_io.write_png(out / "renders" / f"{name}.png", np.clip(view.color, 0.0, 1.0))
        dataset_io.write_depth_png(out / "renders" / f"{name}_depth.png", view.normalized_depth())

    save_map(result.gmap, out / "map.cspl")
    export_point_cloud(result.gmap, out / "map_points.txt")
    dataset_io.write_camera_yaml(out / "camera.yaml", pipe.camera)
    plot_trajectory(
        out / "trajectory.png",
        seq.gt_poses,
        result.estimate,
        frontend=seq.frontend_poses,
        alignment=traj.alignment,
    )
    logger.info(f"Artifacts written to {out}")


def run_pipeline(
    config: Config,
    sequence: Optional[SyntheticSequence] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> PipelineResult:
    """
    Run the full system on a synthetic sequence and evaluate it.

    Args:
        config: Validated configuration
        sequence: Sequence to process; built from config.pipeline.scene/seed when None
        output_dir: Artifact directory; defaults to config.pipeline.output_dir

    Returns:
        PipelineResult holding the RunReport

    Raises:
        StageError: tagged with the failing stage
    """
    name = config.pipeline.scene if sequence is None else sequence.spec.name
    logger.info(f"Running pipeline on '{name}' (seed={config.pipeline.seed})")

    setup_timer = StageTimer()
    with _stage(setup_timer, "simulate"):
        if sequence is None:
            scene, spec = get_scenario(config.pipeline.scene, config.pipeline.seed)
            sequence = generate_sequence(scene, spec)

    pipe = Pipeline(config, sequence)
    pipe.timer.add("simulate", setup_timer.total)
    pipe.process()

    with _stage(pipe.timer, "metrics"):
        _check_metric_sanity(sequence)
        gmap = pipe.mapper.gmap
        estimate = pipe.estimated_trajectory()
        tracked_estimate = pipe.tracked_trajectory()
        traj = ate(estimate, sequence.gt_poses, config.pipeline.ate_alignment)
        tracked = ate(tracked_estimate, sequence.gt_poses, config.pipeline.ate_alignment)
        report = _evaluate(pipe, gmap, traj, tracked)
        bad = report.non_finite()
        if bad:
            raise StageError("metrics", f"non-finite metrics: {bad}")

    result = PipelineResult(
        report=report,
        sequence=sequence,
        graph=pipe.graph,
        gmap=gmap,
        estimate=estimate,
        tracked_estimate=tracked_estimate,
        proxies=dict(pipe.proxies),
        backend=list(pipe.backend_results),
    )

    if config.pipeline.write_artifacts:
        out = Path(output_dir or config.pipeline.output_dir)
        with _stage(pipe.timer, "artifacts"):
            _write_artifacts(pipe, result, traj, out)
        result.output_dir = out

    logger.info(
        f"Pipeline finished: ATE {report.ate_rmse * 100:.2f} cm, depth L1 "
        f"{report.depth_l1_overall:.4f} m, PSNR {report.psnr:.2f} dB, "
        f"{report.gaussian_count} Gaussians"
    )
    return result
