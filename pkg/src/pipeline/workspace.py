#!/usr/bin/env python3
"""
Stage Workspace
===============

Directory of per-stage artifacts so that the staged CLI subcommands can run
one stage at a time. Each stage writes what later stages read; ``restore``
loads everything written before a given stage.

Layout (``i`` is the zero-padded scene index):
    scene_i.cloud               synth
    scene_i.features.npz        features (graph edges and point features)
    scene_i.partition.npz       partition
    descriptors.npz             seeds (standardized descriptors per scene)
    classifier.npz              seeds
    seeds.txt                   seeds
    scene_i.hypergraph.txt      hypergraph
    scene_i.model.txt           train
    scene_i.loss.csv            train
    scene_i.vertex_labels.npy   train
    scene_i.point_labels.npy    expand
    iou.csv                     evaluate (per-category IoU)
    stages.json                 scene count, summaries and timings of every stage run so far
"""

import json
import logging
import os
from typing import Any, Dict

import numpy as np

from src.core.cutpursuit import SuperpointPartition
from src.core.geomfeat import GeomFeatures, PointGraph
from src.core.synthdata import load_cloud, save_cloud
from src.labeling.hypergraph import dump_hypergraph, load_hypergraph
from src.labeling.seeds import SceneClassifier, SuperpointDescriptorSet, read_seeds, write_seeds
from src.labeling.whcn import load_model, save_loss_trace, save_model
from src.pipeline.runner import STAGES
from src.utils.errors import CloudIoError

logger = logging.getLogger(__name__)

STAGE_FILE = "stages.json"
IOU_FILE = "iou.csv"


class Workspace:
    def __init__(self, root: str):
        self.root = root

    def ensure(self) -> None:
        os.makedirs(self.root, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    def scene_path(self, index: int, suffix: str) -> str:
        return self.path(f"scene_{index:03d}.{suffix}")

    def _require(self, path: str) -> str:
        if not os.path.isfile(path):
            raise CloudIoError(f"missing artifact '{path}'; run the earlier stages first")
        return path

    def save_stage(self, name: str, pipeline) -> None:
        """Persist the artifacts of stage ``name`` and the stage log."""
        self.ensure()
        getattr(self, f"_save_{name}")(pipeline)
        self._write_stage_log(pipeline)

    def restore(self, pipeline, before: str) -> None:
        """Load every artifact produced by the stages preceding ``before``."""
        self._read_stage_log(pipeline)
        for name in STAGES[:STAGES.index(before)]:
            getattr(self, f"_load_{name}")(pipeline)
        logger.debug("workspace %s restored up to %s", self.root, before)

    def _write_stage_log(self, pipeline) -> None:
        data = {"n_scenes": len(pipeline.scenes), "summaries": pipeline.summaries,
                "timings": pipeline.timings}
        with open(self.path(STAGE_FILE), "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2)

    def _stage_log(self) -> Dict[str, Any]:
        path = self.path(STAGE_FILE)
        if not os.path.isfile(path):
            return {}
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def _read_stage_log(self, pipeline) -> None:
        data = self._stage_log()
        pipeline.summaries.update(data.get("summaries", {}))
        pipeline.timings.update(data.get("timings", {}))

    def _scene_count(self) -> int:
        count = int(self._stage_log().get("n_scenes", 0))
        if count == 0:
            raise CloudIoError(f"no scenes in workspace '{self.root}'")
        return count

    # synth
    def _save_synth(self, pipeline) -> None:
        for i, cloud in enumerate(pipeline.scenes):
            save_cloud(cloud, self.scene_path(i, "cloud"))

    def _load_synth(self, pipeline) -> None:
        pipeline.scenes = [load_cloud(self._require(self.scene_path(i, "cloud")))
                           for i in range(self._scene_count())]

    # features
    def _save_features(self, pipeline) -> None:
        for i, (graph, feats) in enumerate(zip(pipeline.graphs, pipeline.features)):
            np.savez(self.scene_path(i, "features.npz"), edges=graph.edges, n=graph.n, k=graph.k,
                     values=feats.values)

    def _load_features(self, pipeline) -> None:
        pipeline.graphs, pipeline.features = [], []
        for i in range(len(pipeline.scenes)):
            with np.load(self._require(self.scene_path(i, "features.npz"))) as data:
                pipeline.graphs.append(PointGraph(n=int(data["n"]), edges=data["edges"], k=int(data["k"])))
                pipeline.features.append(GeomFeatures(values=data["values"]))

    # partition
    def _save_partition(self, pipeline) -> None:
        for i, p in enumerate(pipeline.partitions):
            np.savez(self.scene_path(i, "partition.npz"), assignment=p.assignment,
                     region_means=p.region_means, energy_trace=np.asarray(p.energy_trace, dtype=np.float64))

    def _load_partition(self, pipeline) -> None:
        pipeline.partitions = []
        for i in range(len(pipeline.scenes)):
            with np.load(self._require(self.scene_path(i, "partition.npz"))) as data:
                means = data["region_means"]
                pipeline.partitions.append(SuperpointPartition(
                    assignment=data["assignment"], n_superpoints=len(means), region_means=means,
                    energy_trace=tuple(float(e) for e in data["energy_trace"])))

    # seeds
    def _save_seeds(self, pipeline) -> None:
        np.savez(self.path("descriptors.npz"),
                 **{f"scene_{i:03d}": d.values for i, d in enumerate(pipeline.descriptors)})
        c = pipeline.classifier
        np.savez(self.path("classifier.npz"), weights=c.weights, bias=c.bias,
                 training_log=np.asarray(c.training_log, dtype=np.float64))
        write_seeds(pipeline.seed_sets, self.path("seeds.txt"))

    def _load_seeds(self, pipeline) -> None:
        with np.load(self._require(self.path("descriptors.npz"))) as data:
            pipeline.descriptors = [SuperpointDescriptorSet(data[f"scene_{i:03d}"])
                                    for i in range(len(pipeline.scenes))]
        with np.load(self._require(self.path("classifier.npz"))) as data:
            pipeline.classifier = SceneClassifier(data["weights"], data["bias"],
                                                  tuple(float(v) for v in data["training_log"]))
        pipeline.seed_sets = read_seeds(self._require(self.path("seeds.txt")))

    # hypergraph
    def _save_hypergraph(self, pipeline) -> None:
        for i, hg in enumerate(pipeline.hypergraphs):
            dump_hypergraph(hg, self.scene_path(i, "hypergraph.txt"))

    def _load_hypergraph(self, pipeline) -> None:
        pipeline.hypergraphs = []
        if not pipeline.config.use_whcn:
            return
        pipeline.hypergraphs = [load_hypergraph(self._require(self.scene_path(i, "hypergraph.txt")))
                                for i in range(len(pipeline.scenes))]

    # train
    def _save_train(self, pipeline) -> None:
        for i, labels in enumerate(pipeline.vertex_labels):
            np.save(self.scene_path(i, "vertex_labels.npy"), labels)
        for i, (model, trace) in enumerate(zip(pipeline.models, pipeline.loss_traces)):
            save_model(model, self.scene_path(i, "model.txt"))
            save_loss_trace(trace, self.scene_path(i, "loss.csv"))

    def _load_train(self, pipeline) -> None:
        pipeline.vertex_labels = [np.load(self._require(self.scene_path(i, "vertex_labels.npy")))
                                  for i in range(len(pipeline.scenes))]
        pipeline.models = []
        if pipeline.config.use_whcn:
            pipeline.models = [load_model(self._require(self.scene_path(i, "model.txt")))
                               for i in range(len(pipeline.scenes))]

    # expand
    def _save_expand(self, pipeline) -> None:
        for i, labels in enumerate(pipeline.point_labels):
            np.save(self.scene_path(i, "point_labels.npy"), labels)

    def _load_expand(self, pipeline) -> None:
        pipeline.point_labels = [np.load(self._require(self.scene_path(i, "point_labels.npy")))
                                 for i in range(len(pipeline.scenes))]

    # evaluate
    def _save_evaluate(self, pipeline) -> None:
        pipeline.report.iou_table().to_csv(self.path(IOU_FILE), index=False)
