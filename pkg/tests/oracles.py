"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import math

import numpy as np

R = 6_371_008.8


def brute_dbscan(lat, lon, t_ms, eps_s, eps_t, min_pts):
    """O(n^2) DBSCAN over a dense neighbor matrix.

    Points are taken in the given order: clusters are numbered by their
    earliest core point, and a border point joins the lowest-numbered cluster
    among its core neighbors.
    """
    lat, lon, t = (np.asarray(a, float) for a in (lat, lon, t_ms))
    n = len(lat)
    p = np.radians(lat)
    lam = np.radians(lon)
    dp = p[:, None] - p[None, :]
    dl = lam[:, None] - lam[None, :]
    h = np.sin(dp / 2) ** 2 + np.cos(p)[:, None] * np.cos(p)[None, :] * np.sin(dl / 2) ** 2
    d = 2 * R * np.arcsin(np.sqrt(np.minimum(h, 1.0)))
    nb = (d < eps_s) & (np.abs(t[:, None] - t[None, :]) < eps_t * 1000.0)
    np.fill_diagonal(nb, False)
    core = nb.sum(axis=1) + 1 >= min_pts
    labels = np.full(n, -1)
    next_label = 0
    for i in range(n):
        if not core[i] or labels[i] >= 0:
            continue
        stack = [i]
        labels[i] = next_label
        while stack:
            j = stack.pop()
            for k in np.nonzero(nb[j] & core)[0]:
                if labels[k] < 0:
                    labels[k] = next_label
                    stack.append(k)
        next_label += 1
    for i in range(n):
        if not core[i]:
            cands = labels[nb[i] & core]
            labels[i] = cands.min() if len(cands) else -1
    return labels


def partition(labels) -> set[frozenset[int]]:
    groups: dict[int, set[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), set()).add(i)
    return {frozenset(v) for k, v in groups.items() if k >= 0} | {frozenset([-1 - i]) for i in groups.get(-1, ())}


def median_by_sorting(values) -> float:
    v = sorted(values)
    n = len(v)
    return v[n // 2] if n % 2 else 0.5 * (v[n // 2 - 1] + v[n // 2])
