#!/usr/bin/env python3
"""
Pseudo-Label Pipeline Runner
============================

Runs the stages in order

    synth -> features -> partition -> seeds -> hypergraph -> train -> expand -> evaluate

over a synthetic scene corpus and assembles an ``EvalReport``. Any stage
failure is re-raised as ``StageError`` tagged with the stage name.

Ablation switches:
- ``use_superpoints=False``: every point of a subsampled cloud is its own vertex
- ``use_whcn=False``: stop at the expanded seed labels; unseeded superpoints
  stay unlabeled (-1) and score as wrong
- ``use_attention=False``: every hyperedge weight is fixed to 1
"""

import logging
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.core.cutpursuit import (PartitionEnergyParams, SuperpointPartition, l0_cut_pursuit,
                                 make_partition, partition_energy)
from src.core.geomfeat import GeomFeatures, PointGraph, geometric_features, knn_graph
from src.core.synthdata import CATEGORY_NAMES, LabeledCloud, generate_scene, random_scene_config
from src.labeling.hypergraph import Hypergraph, build_hypergraph, propagate_labels
from src.labeling.seeds import (SceneClassifier, SeedSet, SuperpointDescriptorSet,
                                class_activation_map, select_seeds, superpoint_descriptor,
                                train_scene_classifier)
from src.labeling.whcn import VertexLabeling, expand_to_points, init_model, predict, train
from src.pipeline.config import PipelineConfig
from src.pipeline.evaluation import UNLABELED, evaluate_miou
from src.pipeline.report import EvalReport, to_plain
from src.utils.errors import StageError

logger = logging.getLogger(__name__)

STAGES = ("synth", "features", "partition", "seeds", "hypergraph", "train", "expand", "evaluate")

# (row, use_superpoints, use_whcn, use_attention)
ABLATION_ROWS = (
    (1, False, False, False),
    (2, True, False, False),
    (3, False, True, False),
    (4, True, True, False),
    (5, True, True, True),
)


def scene_seed(rng_seed: int, index: int) -> int:
    """Independent per-scene seed derived from the run seed."""
    return int(np.random.SeedSequence([rng_seed, index]).generate_state(1)[0])


def standardize_descriptors(sets: Sequence[SuperpointDescriptorSet]) -> List[SuperpointDescriptorSet]:
    """Zero-mean, unit-variance columns over all superpoints of the corpus."""
    stacked = np.vstack([s.values for s in sets])
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std[std < 1e-12] = 1.0
    return [SuperpointDescriptorSet((s.values - mean) / std) for s in sets]


def seed_vertex_labels(seeds: SeedSet, n_superpoints: int) -> np.ndarray:
    labels = np.full(n_superpoints, UNLABELED, dtype=np.int64)
    labels[seeds.superpoints] = seeds.categories
    return labels


class PseudoLabelPipeline:
    """
    Stage-by-stage pseudo labeling of a synthetic corpus

    State produced by each stage is kept on the instance so that later
    stages (or a ``Workspace``) can read it.
    """

    def __init__(self, config: PipelineConfig, workspace=None):
        self.config = config
        self.workspace = workspace
        self.category_names = CATEGORY_NAMES
        self.n_categories = len(CATEGORY_NAMES)

        self.scenes: List[LabeledCloud] = []
        self.graphs: List[PointGraph] = []
        self.features: List[GeomFeatures] = []
        self.partitions: List[SuperpointPartition] = []
        self.descriptors: List[SuperpointDescriptorSet] = []
        self.classifier: Optional[SceneClassifier] = None
        self.seed_sets: List[SeedSet] = []
        self.hypergraphs: List[Hypergraph] = []
        self.models: list = []
        self.loss_traces: List[List[float]] = []
        self.labelings: List[VertexLabeling] = []
        self.vertex_labels: List[np.ndarray] = []
        self.point_labels: List[np.ndarray] = []
        self.report: Optional[EvalReport] = None

        self.summaries: Dict[str, Dict[str, Any]] = {}
        self.timings: Dict[str, float] = {}

    def run_stage(self, name: str) -> Dict[str, Any]:
        """Run one stage, record its summary and timing, and persist it when a workspace is attached."""
        handler: Callable[[], Dict[str, Any]] = getattr(self, f"_stage_{name}")
        start = time.perf_counter()
        try:
            summary = to_plain(handler())
            self.summaries[name] = summary
            self.timings[name] = time.perf_counter() - start
            if self.workspace is not None:
                self.workspace.save_stage(name, self)
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, e) from e
        logger.info("stage %-10s %.2fs %s", name, self.timings[name], summary)
        return summary

    def prepare(self) -> None:
        for name in STAGES[:4]:
            self.run_stage(name)

    def run(self) -> EvalReport:
        for name in STAGES:
            self.run_stage(name)
        return self.report

    def relabel(self, use_whcn: bool, use_attention: bool) -> EvalReport:
        """Re-run the labeling stages on prepared state with other ablation flags."""
        self.config = self.config.with_overrides({"use_whcn": use_whcn, "use_attention": use_attention})
        for name in STAGES[4:]:
            self.run_stage(name)
        return self.report

    def _stage_synth(self) -> Dict[str, Any]:
        cfg = self.config
        self.scenes = []
        for i in range(cfg.n_scenes):
            cloud = generate_scene(random_scene_config(scene_seed(cfg.rng_seed, i), cfg.points_per_scene,
                                                       self.category_names))
            if not cfg.use_superpoints and cloud.n_points > cfg.subsample_points:
                rng = np.random.default_rng([cfg.rng_seed, i, 1])
                keep = np.sort(rng.choice(cloud.n_points, size=cfg.subsample_points, replace=False))
                cloud = cloud.subset(keep)
            self.scenes.append(cloud)
        return {"n_scenes": len(self.scenes),
                "points": [c.n_points for c in self.scenes],
                "scene_labels": [sorted(c.scene_labels) for c in self.scenes]}

    def _stage_features(self) -> Dict[str, Any]:
        cfg = self.config
        self.graphs, self.features = [], []
        for cloud in self.scenes:
            graph = knn_graph(cloud.points, cfg.knn_k, cfg.knn_backend)
            self.graphs.append(graph)
            self.features.append(geometric_features(cloud.points, graph))
        return {"k": cfg.knn_k, "edges": [g.n_edges for g in self.graphs]}

    def point_features(self, index: int) -> np.ndarray:
        """Geometric features and color, the signal the partition is fitted to."""
        return np.hstack([self.features[index].values, self.scenes[index].colors])

    def _stage_partition(self) -> Dict[str, Any]:
        cfg = self.config
        params = PartitionEnergyParams(cfg.rho)
        self.partitions = []
        energies = []
        for i, cloud in enumerate(self.scenes):
            f = self.point_features(i)
            if cfg.use_superpoints:
                target = cfg.superpoint_target_for(cloud.n_points)
                partition = l0_cut_pursuit(f, self.graphs[i], params, target)
            else:
                partition = make_partition(f, np.arange(cloud.n_points))
            self.partitions.append(partition)
            energies.append(partition_energy(f, self.graphs[i], partition, params))
        return {"superpoints": [p.n_superpoints for p in self.partitions], "energy": energies}

    def _stage_seeds(self) -> Dict[str, Any]:
        cfg = self.config
        raw = [superpoint_descriptor(cloud, self.features[i], self.partitions[i])
               for i, cloud in enumerate(self.scenes)]
        self.descriptors = standardize_descriptors(raw)
        self.classifier = train_scene_classifier(self.descriptors, [c.scene_labels for c in self.scenes],
                                                 self.n_categories, cfg.classifier_epochs, cfg.classifier_lr)
        self.seed_sets = []
        for i, cloud in enumerate(self.scenes):
            cam = class_activation_map(self.classifier, self.descriptors[i])
            self.seed_sets.append(select_seeds(cam, cloud.scene_labels, cfg.seed_fraction, scene_id=i))
        return {"seeds": [len(s) for s in self.seed_sets],
                "coverage": [len(s) / p.n_superpoints for s, p in zip(self.seed_sets, self.partitions)],
                "classifier_loss": self.classifier.training_log[-1] if self.classifier.training_log else None}

    def _stage_hypergraph(self) -> Dict[str, Any]:
        self.hypergraphs = []
        if not self.config.use_whcn:
            return {"skipped": True}
        for seeds, desc in zip(self.seed_sets, self.descriptors):
            self.hypergraphs.append(build_hypergraph(seeds, desc, self.config.k_h))
        return {"hyperedges": [hg.n_edges for hg in self.hypergraphs],
                "warnings": [list(hg.warnings) for hg in self.hypergraphs]}

    def _stage_train(self) -> Dict[str, Any]:
        cfg = self.config
        self.models, self.loss_traces, self.labelings = [], [], []
        if not cfg.use_whcn:
            self.vertex_labels = [seed_vertex_labels(s, p.n_superpoints)
                                  for s, p in zip(self.seed_sets, self.partitions)]
            return {"skipped": True}
        self.vertex_labels = []
        for i, (hg, desc) in enumerate(zip(self.hypergraphs, self.descriptors)):
            model = init_model(desc.values.shape[1], self.n_categories, cfg.hidden_dim, cfg.dropout,
                               cfg.mu, cfg.leaky_slope, scene_seed(cfg.rng_seed, i), cfg.use_attention)
            model, trace = train(model, desc.values, hg, hg.labeled_vertices, cfg.epochs, cfg.lr)
            labeling = predict(model, desc.values, hg)
            self.models.append(model)
            self.loss_traces.append(trace)
            self.labelings.append(labeling)
            self.vertex_labels.append(labeling.labels)
        return {"epochs": cfg.epochs, "final_loss": [t[-1] if t else None for t in self.loss_traces]}

    def _stage_expand(self) -> Dict[str, Any]:
        if self.labelings:
            self.point_labels = [expand_to_points(lab, p) for lab, p in zip(self.labelings, self.partitions)]
        else:
            self.point_labels = [labels[p.assignment] for labels, p in zip(self.vertex_labels, self.partitions)]
        labeled = int(sum(np.count_nonzero(pl != UNLABELED) for pl in self.point_labels))
        total = int(sum(len(pl) for pl in self.point_labels))
        return {"labeled_points": labeled, "points": total}

    def _propagation_labels(self) -> List[np.ndarray]:
        out = []
        for hg, p in zip(self.hypergraphs, self.partitions):
            scores = propagate_labels(hg, self.n_categories, self.config.propagation_alpha)
            labels = np.argmax(scores, axis=1)
            labels[~np.any(scores > 0, axis=1)] = UNLABELED
            out.append(labels[p.assignment])
        return out

    def _stage_evaluate(self) -> Dict[str, Any]:
        gt = np.concatenate([c.gt_labels for c in self.scenes])
        result = evaluate_miou(np.concatenate(self.point_labels), gt, self.n_categories)
        seed_points = [seed_vertex_labels(s, p.n_superpoints)[p.assignment]
                       for s, p in zip(self.seed_sets, self.partitions)]
        seed_result = evaluate_miou(np.concatenate(seed_points), gt, self.n_categories)
        propagation_miou = None
        if self.hypergraphs:
            propagation_miou = evaluate_miou(np.concatenate(self._propagation_labels()), gt,
                                             self.n_categories).miou
        n_seeds = sum(len(s) for s in self.seed_sets)
        n_vertices = sum(p.n_superpoints for p in self.partitions)
        scene_miou = [evaluate_miou(pl, c.gt_labels, self.n_categories).miou
                      for pl, c in zip(self.point_labels, self.scenes)]
        summary = {"scene_miou": scene_miou, "points": int(len(gt))}

        stages = {name: self.summaries[name] for name in STAGES if name in self.summaries}
        stages["evaluate"] = to_plain(summary)
        self.report = EvalReport(
            category_names=tuple(self.category_names),
            per_category_iou=result.named(self.category_names),
            miou=result.miou,
            seed_miou=seed_result.miou,
            propagation_miou=propagation_miou,
            seed_coverage=n_seeds / n_vertices,
            config=self.config.to_dict(),
            stages=stages,
            timings=dict(self.timings),
        )
        return summary


def run_pipeline(config: PipelineConfig, workspace=None) -> EvalReport:
    """
    Run every stage on the configured corpus

    Args:
        config (PipelineConfig): Validated configuration
        workspace (Workspace, optional): Persist each stage's artifacts

    Returns:
        EvalReport: Report with stage summaries and timings
    """
    pipeline = PseudoLabelPipeline(config, workspace)
    report = pipeline.run()
    report.timings = dict(pipeline.timings)
    return report


@dataclass
class AblationResult:
    """Long table with one row per (ablation row, suite seed)."""
    records: pd.DataFrame

    def table(self) -> pd.DataFrame:
        """Wide table: mIoU per suite seed plus the mean, one line per ablation row."""
        wide = self.records.pivot(index="row", columns="seed", values="miou")
        wide.columns = [f"seed_{c}" for c in wide.columns]
        flags = self.records.drop_duplicates("row").set_index("row")[
            ["use_superpoints", "use_whcn", "use_attention"]]
        out = flags.join(wide)
        out["mean_miou"] = wide.mean(axis=1)
        return out.reset_index()

    def mean_miou(self, row: int) -> float:
        return float(self.records.loc[self.records["row"] == row, "miou"].mean())

    def to_dict(self) -> Dict[str, Any]:
        table = self.table()
        rows = []
        for _, line in table.iterrows():
            row = int(line["row"])
            subset = self.records[self.records["row"] == row]
            rows.append({"row": row,
                         "use_superpoints": bool(line["use_superpoints"]),
                         "use_whcn": bool(line["use_whcn"]),
                         "use_attention": bool(line["use_attention"]),
                         "miou_by_seed": {str(int(s)): float(m) for s, m in zip(subset["seed"], subset["miou"])},
                         "mean_miou": float(line["mean_miou"])})
        return {"format": "WHCN-ABLATION v1", "rows": rows}


def run_ablation(config: PipelineConfig, seeds: Sequence[int]) -> AblationResult:
    """
    Evaluate every ablation row for each suite seed

    Rows sharing ``use_superpoints`` reuse one prepared pipeline (scenes,
    features, partition and seeds), so only the labeling stages repeat.
    """
    records = []
    for s in seeds:
        for use_superpoints in (False, True):
            base = config.with_overrides({"rng_seed": s, "use_superpoints": use_superpoints,
                                          "use_whcn": False, "use_attention": False})
            pipeline = PseudoLabelPipeline(base)
            try:
                pipeline.prepare()
            except StageError:
                logger.error("ablation seed %d (superpoints=%s) failed during preparation", s, use_superpoints)
                raise
            for row, sp, whcn, att in ABLATION_ROWS:
                if sp != use_superpoints:
                    continue
                report = pipeline.relabel(whcn, att)
                records.append({"row": row, "use_superpoints": sp, "use_whcn": whcn, "use_attention": att,
                                "seed": int(s), "miou": report.miou, "seed_miou": report.seed_miou})
                logger.info("ablation row #%d seed %d: mIoU %.4f", row, s, report.miou)
    frame = pd.DataFrame(records).sort_values(["row", "seed"], kind="stable").reset_index(drop=True)
    return AblationResult(frame)
