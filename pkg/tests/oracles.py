"""Independent brute-force oracles used to pin expected values.

Each oracle deliberately avoids the implementation path it checks: dense
loops instead of vectorized kernels, Bellman-Ford instead of Dijkstra,
solid-angle winding numbers instead of ray parity, exhaustive scans instead
of separable transforms.
"""

import itertools

import numpy as np


def brute_force_ray_convolution(profile_fn, s0, taps, step):
    """Dense dot product sum_k taps[k] * alpha(s0 - k*step) along a 1D
    profile, looped explicitly."""
    half = (len(taps) - 1) // 2
    total = 0.0
    for j, k in enumerate(range(-half, half + 1)):
        total += taps[j] * profile_fn(s0 - k * step)
    return total


def bellman_ford_cost(dims, enter_cost, spacing, start, end):
    """Exhaustive shortest-path cost on a full 26-connected grid."""
    nx, ny, nz = dims
    coords = list(itertools.product(range(nx), range(ny), range(nz)))
    index = {c: i for i, c in enumerate(coords)}
    edges = []
    for c in coords:
        for off in itertools.product((-1, 0, 1), repeat=3):
            if off == (0, 0, 0):
                continue
            nb = (c[0] + off[0], c[1] + off[1], c[2] + off[2])
            if nb in index:
                step = np.sqrt(sum((o * s) ** 2
                                   for o, s in zip(off, spacing)))
                edges.append((index[c], index[nb],
                              step * enter_cost[nb]))
    dist = np.full(len(coords), np.inf)
    dist[index[tuple(start)]] = 0.0
    u = np.array([e[0] for e in edges])
    v = np.array([e[1] for e in edges])
    w = np.array([e[2] for e in edges])
    for _ in range(len(coords) - 1):
        cand = dist[u] + w
        new = dist.copy()
        np.minimum.at(new, v, cand)
        if np.array_equal(new, dist):
            break
        dist = new
    return dist[index[tuple(end)]]


def winding_number(mesh, point):
    """Generalized winding number via summed signed solid angles (van
    Oosterom & Strackee); ~1 inside a closed outward-oriented surface,
    ~0 outside."""
    tv = mesh.vertices[mesh.triangles] - np.asarray(point, dtype=float)
    a, b, c = tv[:, 0], tv[:, 1], tv[:, 2]
    la = np.linalg.norm(a, axis=1)
    lb = np.linalg.norm(b, axis=1)
    lc = np.linalg.norm(c, axis=1)
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = (la * lb * lc + np.einsum("ij,ij->i", a, b) * lc
           + np.einsum("ij,ij->i", b, c) * la
           + np.einsum("ij,ij->i", a, c) * lb)
    return float(np.sum(2.0 * np.arctan2(num, den)) / (4.0 * np.pi))


def brute_force_edt_sq(mask, spacing_units):
    """Squared Euclidean distances (integer spacing units) to the nearest
    occupied voxel via an O(n^2) scan."""
    occ = np.argwhere(mask)
    out = np.full(mask.shape, -1, dtype=np.int64)
    su = np.asarray(spacing_units, dtype=np.int64)
    grid = np.argwhere(np.ones(mask.shape, dtype=bool))
    for p in grid:
        d2 = (((occ - p) * su) ** 2).sum(axis=1).min()
        out[tuple(p)] = d2
    return out


def brute_force_dilate(mask, radius, spacing):
    """Per-voxel ball test: occupied iff any occupied voxel center lies
    within radius."""
    occ = np.argwhere(mask)
    sp = np.asarray(spacing, dtype=float)
    out = np.zeros_like(mask)
    for p in np.argwhere(np.ones(mask.shape, dtype=bool)):
        d = np.linalg.norm((occ - p) * sp, axis=1)
        if (d <= radius + 1e-12).any():
            out[tuple(p)] = True
    return out


def flood_fill_components(mask):
    """26-connected component labeling by explicit BFS flood fill."""
    labels = np.zeros(mask.shape, dtype=int)
    next_label = 0
    offsets = [o for o in itertools.product((-1, 0, 1), repeat=3)
               if o != (0, 0, 0)]
    for seed in np.argwhere(mask):
        seed = tuple(seed)
        if labels[seed]:
            continue
        next_label += 1
        stack = [seed]
        labels[seed] = next_label
        while stack:
            c = stack.pop()
            for off in offsets:
                nb = (c[0] + off[0], c[1] + off[1], c[2] + off[2])
                if all(0 <= nb[a] < mask.shape[a] for a in range(3)) \
                        and mask[nb] and not labels[nb]:
                    labels[nb] = next_label
                    stack.append(nb)
    return labels, next_label


def exhaustive_min_distance(outer_vertices, inner_vertices, i, k,
                            slice_window=1):
    """Nearest inner vertex over slices within +-slice_window of i (or the
    whole stack when slice_window is None)."""
    n = inner_vertices.shape[0]
    if slice_window is None:
        rows = range(n)
    else:
        rows = range(max(0, i - slice_window), min(n, i + slice_window + 1))
    best = np.inf
    p = outer_vertices[i, k]
    for r in rows:
        for q in inner_vertices[r]:
            best = min(best, float(np.linalg.norm(p - q)))
    return best
