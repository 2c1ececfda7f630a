"""The two directions of the tree-plane equivalence.

planar_extend builds the patched interpolant for boundary data on the planar
set, delegating the hard part (extending vertical slopes from the leaf
clusters to all clusters) to a tree extension backend.  tree_extend_from_planar
goes the other way: lift leaf data to planar boundary data, extend in the
plane, then read node values back off as disk averages of the vertical
derivative over the cluster balls.  norm_ratio_experiment runs both pipelines
on random boundary data and reports the seminorm ratios.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import ball_average, planar_seminorm
from .clusters import ClusterTree, assign_clusters, build_clusters
from .embedding import PlanarSet, build_planar_set
from .interpolant import AffinePolynomial, PatchedInterpolant
from .tree_core import (LeafFunction, NodeFunction, WeightedTree,
                        seminorm_tree)
from .tree_extension import (averaging_extension, optimal_extension,
                             trace_seminorm)
from .whitney import WhitneyDecomposition, decompose, e2_anchor_indices

CAVEAT = ("ratio stability across instances is the reportable quantity; "
          "the equivalence constant itself is not computable from the proof")


@dataclass
class PlanarData:
    """Boundary values: one number per upper point, plus a grid rule.

    The grid part is huge and almost never read, so it is stored as either a
    constant or a callable on the first coordinate, with explicit per-index
    overrides taking precedence.
    """

    e2_values: np.ndarray
    e1_rule: float | Callable[[np.ndarray], np.ndarray] = 0.0
    e1_overrides: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.e2_values = np.asarray(self.e2_values, dtype=float)

    def e1_values(self, ps: PlanarSet, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        if np.any((k < 0) | (k >= ps.e1_count)):
            raise ValueError("grid index out of range")
        if callable(self.e1_rule):
            out = np.asarray(self.e1_rule(k * ps.delta), dtype=float)
        else:
            out = np.full(k.shape, float(self.e1_rule))
        for idx, val in self.e1_overrides.items():
            out[k == idx] = val
        return out

    @classmethod
    def from_affine(cls, ps: PlanarSet, A: AffinePolynomial) -> "PlanarData":
        return cls(e2_values=A.evaluate(ps.e2),
                   e1_rule=lambda x1: A.a + A.b * x1)

    @classmethod
    def from_leaf_function(cls, tree: WeightedTree, ps: PlanarSet,
                           phi: LeafFunction) -> "PlanarData":
        """Zero on the grid, slope * weight at each upper point."""
        vals = phi.to_array(tree) * ps.e2[:, 1]
        return cls(e2_values=vals, e1_rule=0.0)


def _tree_backend(backend) -> Callable:
    if callable(backend):
        return backend
    if backend == "averaging":
        return lambda tree, phi, p: averaging_extension(tree, phi)
    if backend == "optimal":
        return lambda tree, phi, p: optimal_extension(tree, phi, p)
    raise ValueError(f"unknown backend {backend!r}")


def leaf_slopes(ps: PlanarSet, f: PlanarData) -> np.ndarray:
    """Vertical slope of the three-point jet at each upper point: the affine
    through the point and its two grid anchors, differentiated vertically."""
    kz, kw = e2_anchor_indices(ps)
    fz = f.e1_values(ps, kz)
    fw = f.e1_values(ps, kw)
    b = (fz - fw) / ((kz - kw) * ps.delta)
    a = fz - b * (kz * ps.delta)
    return (f.e2_values - a - b * ps.e2[:, 0]) / ps.e2[:, 1]


def planar_extend(tree: WeightedTree, ps: PlanarSet, wd: WhitneyDecomposition,
                  ct: ClusterTree, f: PlanarData, p: float,
                  backend="optimal") -> PatchedInterpolant:
    """Extend boundary data to the plane.

    Pieces: the horizontal affine through each square's two grid base points,
    plus the vertical slope assigned to the square's cluster by the tree
    backend.  Frame squares end up carrying the global tail automatically
    (shared base points, root cluster).
    """
    if ct.square_cluster is None:
        assign_clusters(ct, wd)
    assign = ct.square_cluster
    phi = LeafFunction.from_array(tree, leaf_slopes(ps, f))
    Phi = _tree_backend(backend)(tree, phi, p).to_array(tree)
    kzq = np.rint(wd.z[:, 0] / ps.delta).astype(np.int64)
    kwq = np.rint(wd.w[:, 0] / ps.delta).astype(np.int64)
    fz = f.e1_values(ps, kzq)
    fw = f.e1_values(ps, kwq)
    b = (fz - fw) / ((kzq - kwq) * ps.delta)
    a = fz - b * (kzq * ps.delta)
    coefs = np.column_stack([a, b, Phi[assign]])
    brow = int(np.flatnonzero(wd.boundary)[0])
    tail = AffinePolynomial(float(a[brow]), float(b[brow]), float(Phi[0]))
    return PatchedInterpolant(wd, coefs, tail)


def verify_restriction(F: PatchedInterpolant, ps: PlanarSet, f: PlanarData,
                       n_e1_samples: int = 10_000, seed: int = 0) -> dict:
    """Largest relative mismatch between F and the data on both boundary
    parts (grid part sampled when it is large)."""
    got2 = np.atleast_1d(F.evaluate(ps.e2, order=0))
    scale2 = np.maximum(1.0, np.abs(f.e2_values))
    rel2 = float(np.max(np.abs(got2 - f.e2_values) / scale2)) if got2.size else 0.0
    rng = np.random.default_rng(seed)
    if ps.e1_count <= n_e1_samples:
        k = np.arange(ps.e1_count)
    else:
        k = np.unique(rng.integers(0, ps.e1_count, size=n_e1_samples))
    pts = np.column_stack([k * ps.delta, np.zeros(k.size)])
    got1 = np.atleast_1d(F.evaluate(pts, order=0))
    want1 = f.e1_values(ps, k)
    rel1 = float(np.max(np.abs(got1 - want1) / np.maximum(1.0, np.abs(want1))))
    return {"max_rel_e2": rel2, "max_rel_e1": rel1, "n_e1_sampled": int(k.size)}


def _node_values_from_field(tree: WeightedTree, ct: ClusterTree, phi_arr,
                            F: PatchedInterpolant, rings: int,
                            angles: int) -> np.ndarray:
    leaf_rows = np.array([tree.index[v] for v in tree.leaf_ids])
    out = np.empty(tree.n_nodes)
    is_leaf = np.zeros(tree.n_nodes, dtype=bool)
    is_leaf[leaf_rows] = True
    out[leaf_rows] = phi_arr
    for i in np.flatnonzero(~is_leaf):
        try:
            out[i] = ball_average(F, ct.y[i], float(ct.radius[i]), deriv=2,
                                  rings=rings, angles=angles)
        except Exception as exc:
            raise RuntimeError(
                f"disk average failed on cluster {tree.ids[i]!r}") from exc
    return out


def tree_extend_from_planar(tree: WeightedTree, ps: PlanarSet,
                            wd: WhitneyDecomposition, ct: ClusterTree,
                            phi: LeafFunction, p: float,
                            tree_backend="optimal", planar_backend=None,
                            rings: int = 64, angles: int = 128) -> NodeFunction:
    """Extend leaf data through the plane: leaves keep their values exactly,
    every internal node gets the disk average of the vertical derivative of
    the planar extension over its cluster ball."""
    f = PlanarData.from_leaf_function(tree, ps, phi)
    if planar_backend is None:
        F = planar_extend(tree, ps, wd, ct, f, p, backend=tree_backend)
    else:
        F = planar_backend(f)
    vals = _node_values_from_field(tree, ct, phi.to_array(tree), F, rings,
                                   angles)
    return NodeFunction.from_array(tree, vals)


_TRIAL_CTX: dict = {}


def _run_trial(t: int) -> dict:
    c = _TRIAL_CTX
    tree, ps, wd, ct = c["tree"], c["ps"], c["wd"], c["ct"]
    p, seed, backend = c["p"], c["seed"], c["backend"]
    rng = np.random.default_rng([seed, t])
    while True:
        vals = rng.standard_normal(tree.n_leaves)
        vals = vals - vals.mean()
        if np.ptp(vals) > 1e-12:
            break
    phi = LeafFunction.from_array(tree, vals)
    den = trace_seminorm(tree, phi, p)
    f = PlanarData.from_leaf_function(tree, ps, phi)
    F = planar_extend(tree, ps, wd, ct, f, p, backend=backend)
    num_plane, quad_err = planar_seminorm(F, p, quad_order=c["quad_order"])
    node_vals = _node_values_from_field(tree, ct, vals, F, c["rings"],
                                        c["angles"])
    num_tree = seminorm_tree(tree, NodeFunction.from_array(tree, node_vals), p)
    return {
        "seed": seed, "trial": t, "N": tree.N, "depth": int(tree.depths.max()),
        "epsilon": tree.epsilon, "p": p,
        "backend": backend if isinstance(backend, str) else "custom",
        "rho_plane": num_plane / den, "rho_tree": num_tree / den,
        "quad_error": quad_err,
        "quad_rel": quad_err / num_plane if num_plane > 0 else 0.0,
    }


def norm_ratio_experiment(tree: WeightedTree, p: float, n_trials: int,
                          seed: int, backend="optimal", kappa: float = 10.25,
                          K1: float | None = None, quad_order: int = 12,
                          rings: int = 64, angles: int = 128,
                          geometry=None, workers: int = 1) -> dict:
    """Both seminorm ratios over random de-meaned leaf data.

    Per trial: rho_plane is the planar seminorm of the extension of the lifted
    data over the trace seminorm of the leaf data; rho_tree is the tree
    seminorm of the round trip (plane and back) over the same trace seminorm.
    Deterministic given the seed regardless of worker count; constant draws
    are resampled.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if geometry is None:
        ps = build_planar_set(tree)
        wd = decompose(ps)
        ct = build_clusters(tree, ps, kappa=kappa, K1=K1)
        assign_clusters(ct, wd)
    else:
        ps, wd, ct = geometry
    ctx = {"tree": tree, "ps": ps, "wd": wd, "ct": ct, "p": p, "seed": seed,
           "backend": backend, "quad_order": quad_order, "rings": rings,
           "angles": angles}
    global _TRIAL_CTX
    _TRIAL_CTX = ctx
    try:
        if workers > 1:
            # fork lets workers inherit the geometry instead of pickling it
            import multiprocessing
            with multiprocessing.get_context("fork").Pool(workers) as pool:
                rows = pool.map(_run_trial, range(n_trials))
        else:
            rows = [_run_trial(t) for t in range(n_trials)]
    finally:
        _TRIAL_CTX = {}
    rp = np.array([r["rho_plane"] for r in rows])
    rt = np.array([r["rho_tree"] for r in rows])
    return {
        "rows": rows,
        "caveat": CAVEAT,
        "kappa": kappa, "K1": ct.K1, "quad_order": quad_order,
        "rho_plane": {"min": float(rp.min()), "median": float(np.median(rp)),
                      "max": float(rp.max())},
        "rho_tree": {"min": float(rt.min()), "median": float(np.median(rt)),
                     "max": float(rt.max())},
    }


def write_experiment_csv(report: dict, path) -> None:
    cols = ["seed", "trial", "N", "depth", "epsilon", "p", "backend",
            "rho_plane", "rho_tree", "quad_error", "quad_rel"]

    def emit(fh):
        fh.write(f"# {report['caveat']}\n")
        fh.write(f"# kappa={report['kappa']} K1={report['K1']} "
                 f"quad_order={report['quad_order']}\n")
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in report["rows"]:
            w.writerow({c: r[c] for c in cols})

    if hasattr(path, "write"):
        emit(path)
    else:
        with open(path, "w", newline="") as fh:
            emit(fh)
