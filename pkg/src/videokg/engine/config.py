"""Declarative pipeline specs: named stages, variant tree, capacities, batching."""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Mapping, Union

import yaml

from .pipes import Pipe
from .runner import (
    DEFAULT_QUEUE_CAPACITY,
    LOOP,
    PARALLEL,
    SEQUENTIAL,
    PipelineSpec,
    SpecError,
    validate_spec,
)


def load_pipeline_spec(
    source: Union[str, Path, dict],
    registry: Mapping[str, Pipe],
    predicates: Mapping[str, Callable] = {},
) -> PipelineSpec:
    """Build a validated PipelineSpec from a YAML document or parsed mapping.

    Stage nodes are either {pipe: <registered name>} or nested
    {variant: sequential|parallel|loop, stages: [...], ...}.
    """
    if isinstance(source, (str, Path)) and Path(str(source)).exists():
        doc = yaml.safe_load(Path(source).read_text(encoding="utf-8"))
    elif isinstance(source, str):
        doc = yaml.safe_load(source)
    else:
        doc = source
    if not isinstance(doc, dict):
        raise SpecError("pipeline config must be a mapping")
    root = doc.get("pipeline", doc)
    spec = _build_node(root, registry, predicates, default_capacity=int(root.get("queue_capacity", DEFAULT_QUEUE_CAPACITY)))
    if isinstance(spec, Pipe):
        spec = PipelineSpec(SEQUENTIAL, (spec,))
    validate_spec(spec)
    return spec


def _build_node(node: dict, registry, predicates, default_capacity: int):
    if "pipe" in node:
        name = node["pipe"]
        if name not in registry:
            raise SpecError(f"unknown pipe {name!r} (registered: {sorted(registry)})")
        return registry[name]
    variant = node.get("variant")
    if variant not in (SEQUENTIAL, PARALLEL, LOOP):
        raise SpecError(f"stage node needs 'pipe' or a known 'variant', got {node!r}")
    children = tuple(
        _build_node(child, registry, predicates, default_capacity)
        for child in node.get("stages", ())
    )
    capacity = int(node.get("queue_capacity", default_capacity))
    if variant == LOOP:
        pred_name = node.get("predicate")
        if pred_name not in predicates:
            raise SpecError(f"unknown loop predicate {pred_name!r}")
        return PipelineSpec(
            LOOP,
            children,
            loop_predicate=predicates[pred_name],
            max_iterations=int(node.get("max_iterations", 1)),
            stage_queue_capacity=capacity,
            name=node.get("name", pred_name),
        )
    return PipelineSpec(variant, children, stage_queue_capacity=capacity, name=node.get("name", ""))
