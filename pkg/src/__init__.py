"""
Scene-Label to Point-Label Pseudo Labeling
==========================================

Weakly supervised point-cloud labeling: superpoints from an l0 cut pursuit
partition, seed labels from class activation maps of a scene classifier, and
label propagation with a weighted hypergraph convolutional network.

Modules:
- core: numerical kernel, synthetic scenes, geometric features, cut pursuit
- labeling: seeds, hypergraph construction, hypergraph convolutional network
- pipeline: configuration, stage runner, evaluation, reports and CLI
- utils: error types and logging setup
"""

__version__ = "1.0.0"
__author__ = "WHCN pseudo-label pipeline"
__description__ = "Point-level pseudo labels from scene-level labels"
