"""Superpixel segmentation by local k-means over color and position.

Cluster centers start on a regular grid and are refined for a fixed number
of iterations; each pixel competes only among nearby centers, with a
compactness term trading color fidelity against spatial regularity. A
post-pass guarantees every segment is 4-connected and the segment count
stays inside the configured bounds. No randomness anywhere, so the
partition is a pure function of (image, params).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import ExplainError

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SuperpixelParams:
    target_segments: int = 50
    compactness: float = 10.0
    iterations: int = 10
    min_segments: int = 2
    max_segments: int = 400

    def __post_init__(self):
        if self.target_segments < 1 or self.iterations < 1:
            raise ExplainError("target_segments and iterations must be positive")
        if self.compactness <= 0:
            raise ExplainError("compactness must be positive")
        if not 1 <= self.min_segments <= self.max_segments:
            raise ExplainError("need 1 <= min_segments <= max_segments")


@dataclass
class SuperpixelMap:
    segment_ids: np.ndarray  # (H, W) int32, ids contiguous in [0, S)

    @property
    def num_segments(self) -> int:
        return int(self.segment_ids.max()) + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.segment_ids.shape

    def pixel_counts(self) -> np.ndarray:
        return np.bincount(self.segment_ids.ravel(), minlength=self.num_segments)


def _grid_centers(h: int, w: int, target: int) -> np.ndarray:
    """Roughly ``target`` centers on an even grid, as (y, x) float pairs."""
    step = math.sqrt(h * w / target)
    ny = max(1, round(h / step))
    nx = max(1, round(w / step))
    while ny * nx < target and (ny < h or nx < w):
        # split the axis whose tiles are currently wider; columns win ties
        if nx < w and w / nx >= h / ny:
            nx += 1
        elif ny < h:
            ny += 1
        else:
            nx += 1
    ys = (np.arange(ny) + 0.5) * (h / ny)
    xs = (np.arange(nx) + 0.5) * (w / nx)
    return np.array([(y, x) for y in ys for x in xs], dtype=np.float64)


def _assign(image, centers_pos, centers_color, step, compactness):
    h, w = image.shape[:2]
    labels = np.full((h, w), -1, dtype=np.int32)
    dist = np.full((h, w), np.inf, dtype=np.float64)
    spatial_scale = (compactness / step) ** 2
    reach = int(math.ceil(2 * step))
    for k in range(len(centers_pos)):
        cy, cx = centers_pos[k]
        y0, y1 = max(0, int(cy) - reach), min(h, int(cy) + reach + 1)
        x0, x1 = max(0, int(cx) - reach), min(w, int(cx) + reach + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        patch = image[y0:y1, x0:x1]
        dc2 = ((patch - centers_color[k]) ** 2).sum(axis=2)
        yy = np.arange(y0, y1, dtype=np.float64)[:, None] - cy
        xx = np.arange(x0, x1, dtype=np.float64)[None, :] - cx
        d = dc2 + spatial_scale * (yy * yy + xx * xx)
        window = dist[y0:y1, x0:x1]
        better = d < window
        window[better] = d[better]
        labels[y0:y1, x0:x1][better] = k
    return labels, dist


def _fill_unassigned(image, labels, centers_pos, centers_color, compactness, step):
    missing = labels < 0
    if not missing.any():
        return labels
    ys, xs = np.nonzero(missing)
    pix = image[ys, xs]  # (M, 3)
    spatial_scale = (compactness / step) ** 2
    best = np.full(len(ys), np.inf)
    pick = np.zeros(len(ys), dtype=np.int32)
    for k in range(len(centers_pos)):
        dc2 = ((pix - centers_color[k]) ** 2).sum(axis=1)
        ds2 = (ys - centers_pos[k][0]) ** 2 + (xs - centers_pos[k][1]) ** 2
        d = dc2 + spatial_scale * ds2
        closer = d < best
        best[closer] = d[closer]
        pick[closer] = k
    labels[ys, xs] = pick
    return labels


def _split_into_components(labels: np.ndarray) -> np.ndarray:
    """Give every 4-connected constant-label region its own id."""
    out = np.full(labels.shape, -1, dtype=np.int32)
    next_id = 0
    for value in np.unique(labels):
        mask = labels == value
        comp, n = ndimage.label(mask, structure=_CROSS)
        out[mask] = comp[mask] - 1 + next_id
        next_id += n
    return out


def _border_counts(ids: np.ndarray) -> dict[int, dict[int, int]]:
    """Shared-border pixel counts between 4-adjacent components."""
    pairs = []
    a, b = ids[:, :-1].ravel(), ids[:, 1:].ravel()
    keep = a != b
    pairs.append(np.stack([a[keep], b[keep]], axis=1))
    a, b = ids[:-1, :].ravel(), ids[1:, :].ravel()
    keep = a != b
    pairs.append(np.stack([a[keep], b[keep]], axis=1))
    all_pairs = np.concatenate(pairs, axis=0)
    lo = all_pairs.min(axis=1).astype(np.int64)
    hi = all_pairs.max(axis=1).astype(np.int64)
    keys, counts = np.unique(lo * (ids.max() + 1) + hi, return_counts=True)
    adjacency: dict[int, dict[int, int]] = {}
    base = int(ids.max()) + 1
    for key, count in zip(keys, counts):
        u, v = int(key // base), int(key % base)
        adjacency.setdefault(u, {})[v] = int(count)
        adjacency.setdefault(v, {})[u] = int(count)
    return adjacency


def _merge_components(ids, min_size, min_segments, max_segments):
    """Fold small or surplus components into their most adjacent neighbor.

    Works on the component adjacency graph with a smallest-first heap, so
    the cost per merge does not depend on image size. Merging along a
    shared border preserves the 4-connectedness of both parties.
    """
    sizes = {int(s): int(n) for s, n in enumerate(np.bincount(ids.ravel())) if n > 0}
    adjacency = _border_counts(ids)
    parent: dict[int, int] = {}

    def find(s: int) -> int:
        root = s
        while root in parent:
            root = parent[root]
        while s != root:
            nxt = parent[s]
            parent[s] = root
            s = nxt
        return root

    def merge_one(victim: int) -> bool:
        neighbors = adjacency.get(victim, {})
        if not neighbors:
            return False
        target = max(neighbors, key=lambda n: (neighbors[n], -n))
        sizes[target] += sizes.pop(victim)
        for other, border in adjacency.pop(victim).items():
            if other == target:
                continue
            adjacency[other].pop(victim, None)
            adjacency[other][target] = adjacency[other].get(target, 0) + border
            adjacency[target][other] = adjacency[target].get(other, 0) + border
        adjacency[target].pop(victim, None)
        parent[victim] = target
        heapq.heappush(heap, (sizes[target], target))
        return True

    heap = [(n, s) for s, n in sizes.items()]
    heapq.heapify(heap)
    while heap and len(sizes) > min_segments:
        size, comp = heapq.heappop(heap)
        if sizes.get(comp) != size:
            continue  # stale entry
        if size >= min_size and len(sizes) <= max_segments:
            break
        if not merge_one(comp):
            break

    remap = np.arange(int(ids.max()) + 1, dtype=np.int32)
    for comp in range(len(remap)):
        remap[comp] = find(comp)
    return remap[ids]


def _compact_ids(ids: np.ndarray) -> np.ndarray:
    """Relabel to contiguous [0, S) in raster first-appearance order."""
    flat = ids.ravel()
    _, first = np.unique(flat, return_index=True)
    order = flat[np.sort(first)]
    remap = np.full(int(flat.max()) + 1, -1, dtype=np.int32)
    remap[order] = np.arange(len(order), dtype=np.int32)
    return remap[ids]


def _grid_fallback(h: int, w: int, min_segments: int) -> np.ndarray:
    """Plain tiling that always meets the lower segment bound."""
    ny = max(1, int(math.floor(math.sqrt(min_segments * h / max(w, 1)))))
    nx = math.ceil(min_segments / ny)
    ny = min(ny, h)
    nx = min(nx, w)
    while ny * nx < min_segments:
        if nx < w:
            nx += 1
        elif ny < h:
            ny += 1
        else:
            break
    rows = np.minimum(np.arange(h) * ny // h, ny - 1)
    cols = np.minimum(np.arange(w) * nx // w, nx - 1)
    return (rows[:, None] * nx + cols[None, :]).astype(np.int32)


def segment_superpixels(image: np.ndarray, params: SuperpixelParams | None = None) -> SuperpixelMap:
    """Partition an RGB image into 4-connected superpixels.

    Returns ids exactly {0..S-1} with min_segments <= S <= max_segments.
    """
    if params is None:
        params = SuperpixelParams()
    if image.ndim != 3 or image.shape[2] != 3:
        raise ExplainError(f"expected an RGB image, got shape {image.shape}")
    h, w = image.shape[:2]
    if h * w < params.min_segments:
        raise ExplainError(
            f"image too small to yield {params.min_segments} segments ({h}x{w})"
        )

    target = min(max(params.target_segments, params.min_segments), params.max_segments, h * w)
    img = image.astype(np.float64)
    centers_pos = _grid_centers(h, w, target)
    step = math.sqrt(h * w / len(centers_pos))
    cy = np.clip(centers_pos[:, 0].astype(int), 0, h - 1)
    cx = np.clip(centers_pos[:, 1].astype(int), 0, w - 1)
    centers_color = img[cy, cx]

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    labels = None
    for _ in range(params.iterations):
        labels, _ = _assign(img, centers_pos, centers_color, step, params.compactness)
        labels = _fill_unassigned(img, labels, centers_pos, centers_color, params.compactness, step)
        flat = labels.ravel()
        k = len(centers_pos)
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        nonempty = counts > 0
        safe = np.maximum(counts, 1.0)
        centers_pos[nonempty, 0] = (np.bincount(flat, weights=yy.ravel(), minlength=k) / safe)[nonempty]
        centers_pos[nonempty, 1] = (np.bincount(flat, weights=xx.ravel(), minlength=k) / safe)[nonempty]
        for c in range(3):
            sums = np.bincount(flat, weights=img[..., c].ravel(), minlength=k)
            centers_color[nonempty, c] = (sums / safe)[nonempty]

    ids = _split_into_components(labels)
    min_size = max(1, int((h * w / len(centers_pos)) // 4))
    ids = _merge_components(ids, min_size, params.min_segments, params.max_segments)
    ids = _compact_ids(ids)
    count = int(ids.max()) + 1
    if count < params.min_segments:
        ids = _grid_fallback(h, w, params.min_segments)
        count = int(ids.max()) + 1
    if count > params.max_segments:  # merging hit an isolated dead end
        raise ExplainError(f"could not reduce segmentation below {count} segments")
    return SuperpixelMap(segment_ids=ids)
