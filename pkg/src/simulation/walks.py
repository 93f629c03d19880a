from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from .world import World


def random_walk(
    world: World,
    min_length: float,
    rng: np.random.Generator,
    start_node: Optional[int] = None,
) -> np.ndarray:
    """Vertices of a graph walk at least ``min_length`` long; no U-turns except at dead ends."""
    node = int(rng.integers(len(world.nodes))) if start_node is None else int(start_node)
    previous = -1
    vertices = [world.nodes[node]]
    length = 0.0
    while length < min_length:
        choices = [n for n in world.adjacency[node] if n != previous] or list(world.adjacency[node])
        nxt = int(choices[int(rng.integers(len(choices)))])
        length += float(np.linalg.norm(world.nodes[nxt] - world.nodes[node]))
        vertices.append(world.nodes[nxt])
        previous, node = node, nxt
    return np.asarray(vertices, dtype=float)


def sample_polyline(vertices: np.ndarray, arc_positions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Points and segment headings at the given arc-length positions along a polyline."""
    vertices = np.asarray(vertices, dtype=float)
    deltas = np.diff(vertices, axis=0)
    seg_len = np.linalg.norm(deltas, axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = np.clip(np.asarray(arc_positions, dtype=float), 0.0, cumulative[-1])
    idx = np.clip(np.searchsorted(cumulative, s, side="right") - 1, 0, len(seg_len) - 1)
    frac = (s - cumulative[idx]) / np.where(seg_len[idx] > 0, seg_len[idx], 1.0)
    points = vertices[idx] + frac[:, None] * deltas[idx]
    headings = np.arctan2(deltas[idx, 1], deltas[idx, 0])
    return points, headings


def polyline_length(points: np.ndarray) -> float:
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def far_node(world: World, origin: np.ndarray, min_distance: float, rng: np.random.Generator) -> int:
    distances = np.linalg.norm(world.nodes - np.asarray(origin, dtype=float), axis=1)
    candidates = np.flatnonzero(distances >= min_distance)
    if candidates.size == 0:
        return int(np.argmax(distances))
    return int(candidates[int(rng.integers(candidates.size))])


__all__ = ["far_node", "polyline_length", "random_walk", "sample_polyline"]
