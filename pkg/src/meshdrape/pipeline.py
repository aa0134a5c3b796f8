"""End-to-end drape session: normalization, initial deformation, the
alternating optimization loop, pause/edit/resume and result extraction.

A session is a plain state machine; callers (CLI, service) drive it by
calling step() repeatedly. Everything is deterministic given the inputs,
the config and the seed: per-iteration sampling streams are keyed by
(seed, iteration), so an interrupted run continues exactly like an
uninterrupted one.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from . import neural, objective
from .deform import CorrespondenceSet, DeformError, initial_deformation
from .geometry import (GeometryError, SurfaceMesh, TargetShape,
                       normalize_to_unit_cube, sample_barycentric,
                       triangle_areas)
from .metrics import MetricConfig, evaluate_transfer
from .neural import EncoderState, EncodingBasis, Network
from .objective import LossConfig, LossReport, SourceStructure, select_step_loss


class SessionError(RuntimeError):
    pass


@dataclass
class DrapeConfig:
    iterations: int = 1500
    seed: int = 0
    encoder_mode: str = "progressive"
    encoder_blocks: int = 6
    encoder_reveal_iters: int = 1000
    net_layers: int = 4
    net_width: int = 256
    learning_rate: float = 5e-4
    arap_iterations: int = 20
    snapshot_stride: int = 50
    loss: LossConfig = field(default_factory=LossConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.encoder_reveal_iters > self.iterations:
            raise ValueError("encoder_reveal_iters must not exceed iterations")

    @classmethod
    def from_dict(cls, doc):
        """Accepts nested sections ({"encoder": {"mode": ...}}) or dotted
        keys ("encoder.mode"). Unknown keys are rejected."""
        flat = {}

        def flatten(prefix, node):
            if isinstance(node, dict):
                for k, v in node.items():
                    flatten(f"{prefix}.{k}" if prefix else str(k), v)
            else:
                flat[prefix] = node

        flatten("", doc or {})
        rename = {
            "encoder.mode": "encoder_mode",
            "encoder.blocks": "encoder_blocks",
            "encoder.reveal_iters": "encoder_reveal_iters",
            "net.layers": "net_layers",
            "net.width": "net_width",
            "arap.iterations": "arap_iterations",
            "snapshot.stride": "snapshot_stride",
            "loss.lambda_before": ("loss", "lambda_before"),
            "loss.lambda_after": ("loss", "lambda_after"),
            "loss.lambda_switch_iter": ("loss", "lambda_switch_iter"),
            "loss.chamfer_samples": ("loss", "chamfer_samples"),
            "loss.angle": ("loss", "angle"),
            "loss.area_kl": ("loss", "area_kl"),
            "loss.quality": ("loss", "quality"),
            "loss.chamfer": ("loss", "chamfer"),
            "loss.correspondence": ("loss", "correspondence"),
            "metric.tau": ("metric", "tau"),
            "metric.w_a": ("metric", "w_a"),
            "metric.sample_count": ("metric", "sample_count"),
            "metric.seed": ("metric", "seed"),
        }
        kwargs = {}
        loss_kwargs, metric_kwargs = {}, {}
        for key, value in flat.items():
            if key in ("iterations", "seed", "learning_rate"):
                kwargs[key] = value
            elif key in rename:
                dest = rename[key]
                if isinstance(dest, tuple):
                    (loss_kwargs if dest[0] == "loss" else metric_kwargs)[dest[1]] = value
                else:
                    kwargs[dest] = value
            else:
                raise ValueError(f"unknown config key {key!r}")
        if loss_kwargs:
            kwargs["loss"] = LossConfig(**loss_kwargs)
        if metric_kwargs:
            kwargs["metric"] = MetricConfig(**metric_kwargs)
        return cls(**kwargs)


IDLE, RUNNING, PAUSED, DONE, FAILED = "idle", "running", "paused", "done", "failed"


class DrapeSession:
    """Holds the full optimization state. Use create_session() to build."""

    def __init__(self, source: SurfaceMesh, target: TargetShape,
                 corr: CorrespondenceSet, config: DrapeConfig):
        if target is None or len(target.canonical_points) == 0:
            raise GeometryError("empty target")
        self.config = config
        self.source = source
        self.target = target
        self.src_norm, self.src_tf = normalize_to_unit_cube(source)
        self.tgt_norm, self.tgt_tf = normalize_to_unit_cube(target)
        self.corr = self._normalize_corr(corr)
        self.initial = initial_deformation(self.src_norm, self.tgt_norm, self.corr,
                                           arap_iterations=config.arap_iterations)
        self.src_struct = SourceStructure(self.src_norm)
        self.encoder = EncoderState(mode=config.encoder_mode,
                                    blocks=config.encoder_blocks,
                                    reveal_iters=config.encoder_reveal_iters)
        self.basis = EncodingBasis(self.initial.vertices, self.encoder)
        self.initial_t = torch.as_tensor(self.initial.vertices)
        torch.manual_seed(config.seed)
        self.net = Network(self.encoder.width, width=config.net_width,
                           hidden_layers=config.net_layers, seed=config.seed)
        self.optimizer = neural.make_optimizer(self.net, lr=config.learning_rate)
        self.t = 0
        self.status = IDLE
        self.loss_history: list[LossReport] = []
        self.snapshots: list[dict] = []
        self.failure: str | None = None

    # -- correspondences ----------------------------------------------------

    def _normalize_corr(self, corr):
        """Original-frame pairs -> normalized frame, snapped onto the target."""
        if corr is None or len(corr) == 0:
            return CorrespondenceSet.empty()
        bad = [int(i) for i in corr.source_ids
               if i < 0 or i >= self.source.vertex_count]
        if bad:
            raise DeformError(f"correspondence references invalid vertex {bad[0]}")
        return corr.transformed(self.tgt_tf).snapped(self.tgt_norm)

    # -- stepping -----------------------------------------------------------

    def deformed_vertices(self, requires_grad=False):
        """Current deformed positions: initial deformation + net offsets."""
        t_mask = min(self.t, self.config.iterations)
        feats = self.basis.features(t_mask)
        if requires_grad:
            offsets = self.net(feats)
        else:
            with torch.no_grad():
                offsets = self.net(feats)
        return self.initial_t + offsets

    def current_vertices(self):
        return self.deformed_vertices().detach().numpy()

    def step(self):
        if self.status not in (IDLE, RUNNING, PAUSED):
            raise SessionError(f"cannot step a session in status {self.status!r}")
        if self.t >= self.config.iterations:
            raise SessionError("iteration budget exhausted")
        self.status = RUNNING
        t = self.t
        cfg = self.config.loss
        feats = self.basis.features(t)
        vhat = self.initial_t + self.net(feats)
        kind, weight = select_step_loss(t, cfg)
        if kind == "distance":
            total, comps = self._distance_loss(vhat, t)
        else:
            total, comps = objective.structural_loss(self.src_struct, vhat, cfg)
        loss = weight * total
        if not torch.isfinite(loss):
            self.status = FAILED
            self.failure = f"non-finite loss at iteration {t}"
            raise SessionError(self.failure)
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.loss_history.append(LossReport(
            iteration=t, kind=kind,
            terms={k: float(v.detach()) for k, v in comps.items()},
            total=float(loss.detach())))
        self.t = t + 1
        if t % self.config.snapshot_stride == 0 or self.t == self.config.iterations:
            self.snapshots.append({"t": self.t,
                                   "vertices": self.current_vertices(),
                                   "loss": float(loss.detach()), "kind": kind})
        if self.t == self.config.iterations:
            self.status = DONE
        return self

    def _distance_loss(self, vhat, t):
        cfg = self.config.loss
        rng = np.random.default_rng([self.config.seed, t])
        det = vhat.detach().numpy()
        areas = triangle_areas(det, self.src_norm.triangles)
        mesh_view = self.src_norm.with_vertices(det)
        tri_ids, bary = sample_barycentric(mesh_view, cfg.chamfer_samples, rng,
                                           areas=areas)
        tgt_pts = self.tgt_norm.sample_points(cfg.chamfer_samples, rng)
        return objective.distance_loss(
            vhat, self.src_norm.triangles, tri_ids, bary, tgt_pts,
            self.corr.source_ids, self.corr.target_points, cfg)

    def total_loss(self, seed_tag=0):
        """Full objective (distance + lambda * structural) at the current
        state, for regression checks; uses its own sampling stream."""
        with torch.no_grad():
            vhat = self.deformed_vertices()
            d, _ = self._distance_loss(vhat, seed_tag)
            s, _ = objective.structural_loss(self.src_struct, vhat, self.config.loss)
            lam = self.config.loss.lam(min(self.t, self.config.iterations - 1))
            return float(d + lam * s)

    # -- control ------------------------------------------------------------

    def pause(self):
        if self.status != RUNNING:
            raise SessionError(f"cannot pause from status {self.status!r}")
        self.status = PAUSED
        return self

    def resume(self):
        if self.status != PAUSED:
            raise SessionError(f"cannot resume from status {self.status!r}")
        self.status = RUNNING
        return self

    def update_correspondences(self, corr: CorrespondenceSet):
        """Swap the correspondence set used by the distance loss. Does not
        recompute the initial deformation nor reset the network."""
        if self.status != PAUSED:
            raise SessionError("correspondence edits require a paused session")
        self.corr = self._normalize_corr(corr)
        return self

    # -- results ------------------------------------------------------------

    def extract_result(self, allow_partial=True):
        """(mesh in the original target frame, TransferReport). The report is
        computed on normalized shapes; connectivity always equals the source's."""
        if self.status == DONE:
            pass
        elif allow_partial and self.status in (PAUSED, RUNNING, IDLE):
            pass
        else:
            raise SessionError(f"no result available in status {self.status!r}")
        verts_n = self.current_vertices()
        deformed_n = self.src_norm.with_vertices(verts_n)
        report = evaluate_transfer(self.src_norm, deformed_n, self.tgt_norm,
                                   self.config.metric)
        out = self.source.with_vertices(self.tgt_tf.invert(verts_n))
        return out, report

    # -- persistence --------------------------------------------------------

    def checkpoint_bytes(self):
        state = {
            "config": self.config,
            "source_vertices": self.source.vertices,
            "source_faces": self.source.faces,
            "target_variant": self.target.variant,
            "target_mesh_vertices": (self.target.mesh.vertices
                                     if self.target.mesh is not None else None),
            "target_mesh_faces": (self.target.mesh.faces
                                  if self.target.mesh is not None else None),
            "target_points": (self.target.canonical_points
                              if self.target.variant == "point_cloud" else None),
            "corr": (self.corr.source_ids, self.corr.target_points, self.corr.kinds),
            "initial_vertices": self.initial.vertices,
            "net": self.net.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "t": self.t,
            "status": self.status,
            "loss_history": self.loss_history,
        }
        return pickle.dumps(state)

    @classmethod
    def from_checkpoint_bytes(cls, blob):
        state = pickle.loads(blob)
        source = SurfaceMesh(state["source_vertices"], state["source_faces"])
        if state["target_variant"] == "point_cloud":
            target = TargetShape("point_cloud", points=state["target_points"])
        else:
            target = TargetShape(state["target_variant"],
                                 mesh=SurfaceMesh(state["target_mesh_vertices"],
                                                  state["target_mesh_faces"]))
        session = cls.__new__(cls)
        session.config = state["config"]
        session.source = source
        session.target = target
        session.src_norm, session.src_tf = normalize_to_unit_cube(source)
        session.tgt_norm, session.tgt_tf = normalize_to_unit_cube(target)
        ids, pts, kinds = state["corr"]
        session.corr = CorrespondenceSet(ids, pts, kinds)
        session.initial = session.src_norm.with_vertices(state["initial_vertices"])
        session.src_struct = SourceStructure(session.src_norm)
        cfgv = session.config
        session.encoder = EncoderState(mode=cfgv.encoder_mode,
                                       blocks=cfgv.encoder_blocks,
                                       reveal_iters=cfgv.encoder_reveal_iters)
        session.basis = EncodingBasis(session.initial.vertices, session.encoder)
        session.initial_t = torch.as_tensor(session.initial.vertices)
        session.net = Network(session.encoder.width, width=cfgv.net_width,
                              hidden_layers=cfgv.net_layers, seed=cfgv.seed)
        session.net.load_state_dict(state["net"])
        session.optimizer = neural.make_optimizer(session.net,
                                                  lr=cfgv.learning_rate)
        session.optimizer.load_state_dict(state["optimizer"])
        session.t = state["t"]
        session.status = state["status"] if state["status"] != RUNNING else PAUSED
        session.loss_history = state["loss_history"]
        session.snapshots = []
        session.failure = None
        return session


def create_session(source, target, corr=None, config=None) -> DrapeSession:
    return DrapeSession(source, target, corr or CorrespondenceSet.empty(),
                        config or DrapeConfig())


def run(session: DrapeSession) -> DrapeSession:
    while session.t < session.config.iterations:
        session.step()
    return session
