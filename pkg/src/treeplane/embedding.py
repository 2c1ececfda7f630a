"""Planar boundary set of a weighted tree.

A tree with leaf weights bounded below by Delta is mapped into the plane as
E = E1 union E2, where E1 is the implicit grid ([0,2) cap Delta*Z) x {0} and E2
collects one point (psi(v), W_v) per leaf.  The horizontal position psi walks
left to right through the tree: each digit shifts by the parent weight scaled
by digit/(N-1), so deeper digits move exponentially less and the leaf order is
preserved.

E1 is arithmetic only; with Delta near the 2^-40 floor the grid would hold ~10^12
points, so all queries (nearest point, counts in rectangles) are index
computations and nothing is materialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import math

import numpy as np

from .tree_core import WeightedTree, validate

E1_MATERIALIZE_CAP = 10 ** 6
REL_TOL = 1e-12  # closed-comparison slack for float geometry predicates


class PlanarGeometryError(RuntimeError):
    """A geometric invariant of the boundary set failed verification."""


def psi_all(tree: WeightedTree) -> np.ndarray:
    """Horizontal embedding coordinate for every node, by the recursion
    psi(v) = psi(parent) + W_parent * digit / (N - 1), root at 0."""
    out = np.zeros(tree.n_nodes)
    scale = 1.0 / (tree.N - 1)
    for i, v in enumerate(tree.ids):
        if v:
            par = tree.parent[i]
            out[i] = out[par] + tree.weights[par] * int(v[-1]) * scale
    return out


def psi(tree: WeightedTree, v: str) -> float:
    """Same map evaluated by the closed sum over the digits of v."""
    tree._require(v)
    total = 0.0
    prefix = ""
    for ch in v:
        total += tree.weight(prefix) * int(ch) / (tree.N - 1)
        prefix += ch
    return total


@dataclass
class PlanarSet:
    """E1 (implicit grid) plus E2 (one point per leaf, x = psi, y = weight)."""

    delta: float
    e1_count: int
    e2: np.ndarray                       # (n_leaves, 2)
    leaf_ids: list[str]
    leaf_index: dict[str, int] = field(repr=False)

    @property
    def n_e2(self) -> int:
        return self.e2.shape[0]

    def e1_x(self, k) -> np.ndarray | float:
        return np.asarray(k) * self.delta

    def e1_points(self) -> np.ndarray:
        """Materialized grid; refuses above the cap (use the arithmetic queries)."""
        if self.e1_count > E1_MATERIALIZE_CAP:
            raise PlanarGeometryError(
                f"e1_count = {self.e1_count} exceeds the materialization cap")
        xs = np.arange(self.e1_count) * self.delta
        return np.column_stack([xs, np.zeros_like(xs)])

    def nearest_e1(self, q) -> np.ndarray:
        """Grid point closest to q; ties broken toward smaller x; clamped to
        the grid range.  Only the first coordinate of q matters."""
        x = float(np.asarray(q, dtype=float).ravel()[0])
        k = math.ceil(x / self.delta - 0.5)  # round half down
        k = min(max(k, 0), self.e1_count - 1)
        return np.array([k * self.delta, 0.0])

    def nearest_e1_index(self, x: float) -> int:
        k = math.ceil(float(x) / self.delta - 0.5)
        return min(max(k, 0), self.e1_count - 1)

    def e1_index_range(self, lo: float, hi: float) -> tuple[int, int]:
        """Indices k with lo <= k*delta <= hi as a half-open pair (k0, k1).

        Membership is decided on the rounded float k*delta, so counts agree
        bit for bit with a brute-force scan of the materialized grid.
        """
        if hi < lo:
            return 0, 0
        k0 = max(0, math.ceil(lo / self.delta) - 2)
        k1 = min(self.e1_count - 1, math.floor(hi / self.delta) + 2)
        while k0 <= k1 and k0 * self.delta < lo:
            k0 += 1
        while k0 <= k1 and k1 * self.delta > hi:
            k1 -= 1
        return (k0, k1 + 1) if k0 <= k1 else (0, 0)

    def count_e1(self, lo: float, hi: float) -> int:
        k0, k1 = self.e1_index_range(lo, hi)
        return k1 - k0

    def to_json_dict(self) -> dict:
        return {
            "delta": self.delta,
            "e1": {"spacing": self.delta, "count": self.e1_count,
                   "range": [0.0, 2.0]},
            "e2": [{"leaf": v, "x": float(self.e2[i, 0]), "y": float(self.e2[i, 1])}
                   for i, v in enumerate(self.leaf_ids)],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)
            fh.write("\n")


def build_planar_set(tree: WeightedTree, verify: bool = True) -> PlanarSet:
    """Map a tree to its planar boundary set.

    Refuses trees whose `validate` report is non-empty: the geometry below
    (separation, embedding bounds) is only guaranteed under the decay and
    root-weight conventions.
    """
    report = validate(tree)
    if report:
        raise PlanarGeometryError(
            f"tree fails validation ({len(report)} violation(s)); first: "
            f"{report[0]['message']}")
    delta = tree.delta
    e1_count = math.ceil(2.0 / delta)
    while (e1_count - 1) * delta >= 2.0:  # float-rounding guard at the right edge
        e1_count -= 1
    psis = psi_all(tree)
    leaf_rows = [tree.index[v] for v in tree.leaf_ids]
    e2 = np.column_stack([psis[leaf_rows], tree.weights[leaf_rows]])
    ps = PlanarSet(delta=delta, e1_count=e1_count, e2=e2,
                   leaf_ids=list(tree.leaf_ids),
                   leaf_index={v: j for j, v in enumerate(tree.leaf_ids)})
    if verify:
        rep = verify_lemma_sep(ps)
        if not rep["ok"]:
            bad = [k for k, val in rep.items() if val is False]
            raise PlanarGeometryError(f"separation properties failed: {bad}")
    return ps


def verify_lemma_sep(ps: PlanarSet) -> dict:
    """Check the separation properties of E = E1 union E2.

    in_unit_box      every point lies in [0,2) x [0,2)
    delta_separated  pairwise distances >= delta (up to 1e-12 relative slack)
    e1_bounds        delta <= y <= dist(x, E1) <= 2y for every x in E2
    e2_bounds        y <= dist(x, E2 minus x) for every x in E2

    E1's own spacing is delta by construction, so only E2-E2 and E2-E1
    distances are measured.
    """
    d = ps.delta
    slack = 1.0 + REL_TOL
    x, y = ps.e2[:, 0], ps.e2[:, 1]
    in_box = bool(np.all((x >= 0) & (x < 2) & (y >= 0) & (y < 2)))
    # E2 vs E1: nearest grid point realizes the distance
    kx = np.clip(np.ceil(x / d - 0.5).astype(np.int64), 0, ps.e1_count - 1)
    dist_e1 = np.hypot(x - kx * d, y)
    e1_lower = bool(np.all((y >= d / slack) & (dist_e1 >= y / slack)))
    e1_upper = bool(np.all(dist_e1 <= 2 * y * slack))
    sep_e1 = bool(np.all(dist_e1 >= d / slack))
    # E2 vs E2 pairwise
    if ps.n_e2 >= 2:
        diff = ps.e2[:, None, :] - ps.e2[None, :, :]
        dist2 = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(dist2, np.inf)
        nn = dist2.min(axis=1)
        sep_e2 = bool(np.all(nn >= d / slack))
        e2_bounds = bool(np.all(nn >= y / slack))
        min_gap = float(nn.min())
    else:
        sep_e2 = e2_bounds = True
        min_gap = float("inf")
    out = {
        "in_unit_box": in_box,
        "delta_separated": sep_e1 and sep_e2,
        "e1_bounds": e1_lower and e1_upper,
        "e2_bounds": e2_bounds,
        "min_e2_gap": min_gap,
        "min_e2_e1_dist": float(dist_e1.min()) if ps.n_e2 else float("inf"),
    }
    out["ok"] = in_box and out["delta_separated"] and out["e1_bounds"] and e2_bounds
    return out


def verify_lemma_psi(tree: WeightedTree, ps: PlanarSet) -> dict:
    """Distortion report for the embedding restricted to the leaves.

    order_preserving: psi is strictly increasing along the sorted leaf list.
    K_measured: smallest K >= 1 with K^-1 * W_lca / N <= |psi(w) - psi(v)|
        <= K * W_lca over all leaf pairs, where lca is taken in the tree.
    """
    if ps.n_e2 < 2:
        raise ValueError("need at least 2 leaves")
    xs = ps.e2[:, 0]
    order = bool(np.all(np.diff(xs) > 0))
    k_needed = 1.0
    leaves = ps.leaf_ids
    for i in range(len(leaves)):
        for j in range(i + 1, len(leaves)):
            v, w = leaves[i], leaves[j]
            n = 0
            for a, b in zip(v, w):
                if a != b:
                    break
                n += 1
            w_lca = tree.weight(v[:n])
            gap = abs(xs[j] - xs[i])
            k_needed = max(k_needed, gap / w_lca, w_lca / (tree.N * gap))
    return {"order_preserving": order, "K_measured": float(k_needed)}
