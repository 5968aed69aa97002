"""Packed-array median-split BVH over triangles (traversed by the compiled core)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_LEAF_SIZE = 4


@dataclass
class PackedBVH:
    node_min: np.ndarray  # (N,3)
    node_max: np.ndarray  # (N,3)
    node_left: np.ndarray  # (N,) child index or -1 for leaves
    node_right: np.ndarray  # (N,)
    node_start: np.ndarray  # (N,) leaf range into tri_order
    node_count: np.ndarray  # (N,)
    tri_order: np.ndarray  # (F,)


def build_bvh(tri_verts: np.ndarray) -> PackedBVH:
    nf = tri_verts.shape[0]
    lo = tri_verts.min(axis=1)
    hi = tri_verts.max(axis=1)
    centroids = tri_verts.mean(axis=1)

    node_min, node_max = [], []
    node_left, node_right = [], []
    node_start, node_count = [], []
    order = np.arange(nf)

    def add_node():
        node_min.append(np.zeros(3))
        node_max.append(np.zeros(3))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
        return len(node_min) - 1

    def build(start: int, count: int) -> int:
        ni = add_node()
        ids = order[start:start + count]
        node_min[ni] = lo[ids].min(axis=0)
        node_max[ni] = hi[ids].max(axis=0)
        if count <= _LEAF_SIZE:
            node_start[ni] = start
            node_count[ni] = count
            return ni
        cents = centroids[ids]
        axis = int(np.argmax(cents.max(axis=0) - cents.min(axis=0)))
        half = count // 2
        local = np.argpartition(cents[:, axis], half)
        order[start:start + count] = ids[local]
        left = build(start, half)
        right = build(start + half, count - half)
        node_left[ni] = left
        node_right[ni] = right
        return ni

    if nf:
        build(0, nf)
    return PackedBVH(
        node_min=np.asarray(node_min),
        node_max=np.asarray(node_max),
        node_left=np.asarray(node_left, dtype=np.int64),
        node_right=np.asarray(node_right, dtype=np.int64),
        node_start=np.asarray(node_start, dtype=np.int64),
        node_count=np.asarray(node_count, dtype=np.int64),
        tri_order=order.astype(np.int64),
    )
