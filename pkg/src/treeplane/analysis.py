"""Quadrature: the planar seminorm, disk averages, and the two ball-estimate
sums.

The seminorm integrates |Hessian|^p square by square with tensor
Gauss-Legendre rules and reports the change under one uniform order doubling
as its error estimate.  Squares on which every nearby piece is identical are
skipped outright: there the blend collapses to a single affine function and
the integrand vanishes identically, not just approximately.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .clusters import ClusterTree
from .interpolant import PatchedInterpolant, affine_through
from .whitney import _profile, e2_anchor_indices

QUAD_CHUNK = 400_000

# Span [-1, 1] split where the blend changes analytic form.  Touching squares
# come in sizes half/equal/double at dyadic positions, so their bump bands
# (half-width 0.5 to 0.55 of their own side) cut a fixed set of offsets; the
# integrand is a smooth rational function strictly between these lines.
PANEL_EDGES = np.array([-1.0, -0.95, -0.9, -0.8, -0.05, 0.0,
                        0.05, 0.8, 0.9, 0.95, 1.0])


def _gl(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def _panel_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on [-1, 1] over the panels.  The per-panel count
    grows with the requested order but stays below it: the pieces between
    edges are smooth, so moderate counts already converge, and |H|^p kinks
    inside a panel (p < 2) reward extra points more than extra exactness."""
    gx, gw = _gl(max(3, (2 * order) // 3))
    lo, hi = PANEL_EDGES[:-1], PANEL_EDGES[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def _active_rows(F: PatchedInterpolant) -> np.ndarray:
    """Rows whose touching list contains a square with a different piece.
    Elsewhere the local blend is one affine and the Hessian is exactly zero."""
    wd = F.wd
    counts = np.diff(wd.neighbors_indptr)
    src = np.repeat(np.arange(wd.n), counts)
    dst = wd.neighbors
    differ = np.any(F.coefs[src] != F.coefs[dst], axis=1)
    hit = np.bincount(src[differ], minlength=wd.n) > 0
    return np.flatnonzero(hit)


def _hess_power_sum_pointwise(F: PatchedInterpolant, rows: np.ndarray,
                              p: float, order: int) -> float:
    """Reference path: every node goes through the generic point evaluator."""
    wd = F.wd
    gx, gw = _panel_rule(order)
    per = gx.size * gx.size
    step = max(1, QUAD_CHUNK // per)
    total = 0.0
    for lo in range(0, rows.size, step):
        R = rows[lo:lo + step]
        h = 0.5 * wd.delta[R]
        shape = (R.size, gx.size, gx.size)
        X = np.broadcast_to(wd.cx[R][:, None, None] +
                            h[:, None, None] * gx[None, :, None], shape)
        Y = np.broadcast_to(wd.cy[R][:, None, None] +
                            h[:, None, None] * gx[None, None, :], shape)
        W = (gw[:, None] * gw[None, :])[None] * (h ** 2)[:, None, None]
        pts = np.column_stack([X.ravel(), Y.ravel()])
        H = F.evaluate(pts, order=2)
        frob = np.sqrt(H[:, 0, 0] ** 2 + 2.0 * H[:, 0, 1] ** 2 + H[:, 1, 1] ** 2)
        total += float(np.sum(frob ** p * W.ravel()))
    return total


def _hess_power_sum(F: PatchedInterpolant, rows: np.ndarray, p: float,
                    order: int) -> float:
    """Tensor-grid nodes factor every bump into 1-d profiles, so each field
    (the normalizing sum, its derivatives, the coefficient-weighted blends)
    is a batched matrix product over the touching lists.  Same quantity as
    the pointwise path, roughly two orders of magnitude fewer profile
    evaluations."""
    wd = F.wd
    co = F.coefs
    indptr, nbrs = wd.neighbors_indptr, wd.neighbors
    gx, gw = _panel_rule(order)
    m = gx.size
    wxy = gw[:, None] * gw[None, :]
    step = max(1, 2_000_000 // (m * m))
    total = 0.0

    def mm(wk, A, B):
        if wk is None:
            return np.matmul(A.transpose(0, 2, 1), B)
        return np.matmul((wk[:, :, None] * A).transpose(0, 2, 1), B)

    for lo in range(0, rows.size, step):
        R = rows[lo:lo + step]
        nr = R.size
        h = 0.5 * wd.delta[R]
        xn = wd.cx[R][:, None] + h[:, None] * gx[None, :]
        yn = wd.cy[R][:, None] + h[:, None] * gx[None, :]

        cnt = indptr[R + 1] - indptr[R]
        k = int(cnt.max())
        ar = np.arange(k)[None, :]
        valid = ar < cnt[:, None]
        cand = nbrs[indptr[R][:, None] + np.minimum(ar, cnt[:, None] - 1)]

        d = wd.delta[cand][:, :, None]
        gu, gu1, gu2 = _profile((xn[:, None, :] - wd.cx[cand][:, :, None]) / d)
        vm = valid[:, :, None]
        U, Ux, Uxx = gu * vm, gu1 * vm / d, gu2 * vm / d ** 2
        gv, gv1, gv2 = _profile((yn[:, None, :] - wd.cy[cand][:, :, None]) / d)
        V, Vy, Vyy = gv, gv1 / d, gv2 / d ** 2

        iS = 1.0 / mm(None, U, V)
        P = mm(None, Ux, V) * iS
        Q = mm(None, U, Vy) * iS
        Rxx = mm(None, Uxx, V) * iS - 2.0 * P * P
        Rxy = mm(None, Ux, Vy) * iS - 2.0 * P * Q
        Ryy = mm(None, U, Vyy) * iS - 2.0 * Q * Q

        da = co[cand, 0] - co[R, 0][:, None]
        db = co[cand, 1] - co[R, 1][:, None]
        dc = co[cand, 2] - co[R, 2][:, None]
        X = xn[:, :, None]
        Y = yn[:, None, :]

        Bdb_uv, Bdc_uv = mm(db, U, V), mm(dc, U, V)
        Bdb_xv, Bdc_xv = mm(db, Ux, V), mm(dc, Ux, V)
        Bdb_uy, Bdc_uy = mm(db, U, Vy), mm(dc, U, Vy)
        TAuv = mm(da, U, V) + X * Bdb_uv + Y * Bdc_uv
        TAxv = mm(da, Ux, V) + X * Bdb_xv + Y * Bdc_xv
        TAuy = mm(da, U, Vy) + X * Bdb_uy + Y * Bdc_uy
        TAxxv = mm(da, Uxx, V) + X * mm(db, Uxx, V) + Y * mm(dc, Uxx, V)
        TAuyy = mm(da, U, Vyy) + X * mm(db, U, Vyy) + Y * mm(dc, U, Vyy)
        TAxy = mm(da, Ux, Vy) + X * mm(db, Ux, Vy) + Y * mm(dc, Ux, Vy)

        Hxx = iS * (TAxxv - 2.0 * P * TAxv - Rxx * TAuv
                    + 2.0 * (Bdb_xv - P * Bdb_uv))
        Hyy = iS * (TAuyy - 2.0 * Q * TAuy - Ryy * TAuv
                    + 2.0 * (Bdc_uy - Q * Bdc_uv))
        Hxy = iS * (TAxy - Q * TAxv - P * TAuy - Rxy * TAuv
                    + Bdb_uy - Q * Bdb_uv + Bdc_xv - P * Bdc_uv)

        frob = np.sqrt(Hxx ** 2 + 2.0 * Hxy ** 2 + Hyy ** 2)
        total += float(np.sum(frob ** p * wxy[None] * (h ** 2)[:, None, None]))
    return total


def planar_seminorm(F: PatchedInterpolant, p: float, quad_order: int = 12,
                    refine_tol: float = 0.01) -> tuple[float, float]:
    """Seminorm of F over the frame: (value, error estimate).

    value is the doubled-order result to the power 1/p; the estimate is the
    value-scale gap between the two orders.  A gap above refine_tol * value
    triggers a warning, not an exception.
    """
    if quad_order < 4:
        raise ValueError("quad_order must be at least 4")
    rows = _active_rows(F)
    if rows.size == 0:
        return 0.0, 0.0
    coarse = _hess_power_sum(F, rows, p, quad_order)
    fine = _hess_power_sum(F, rows, p, 2 * quad_order)
    value = fine ** (1.0 / p)
    err = abs(coarse ** (1.0 / p) - value)
    if err > refine_tol * max(value, 1e-300):
        warnings.warn(f"quadrature estimate moved by {err:.3e} "
                      f"({err / max(value, 1e-300):.2%} of {value:.6e}) "
                      f"under order doubling", stacklevel=2)
    return value, err


def disk_rule(center, radius: float, rings: int = 64,
              angles: int = 128) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating over the disk (weights sum to its area).
    Gauss on the radius, uniform on the angle: exact for polynomials of
    moderate degree and for every trigonometric mode below the angle count."""
    if rings < 4 or angles < 4:
        raise ValueError("rings and angles must be at least 4")
    t, wt = _gl(rings)
    r = 0.5 * radius * (t + 1.0)
    wr = 0.5 * radius * wt * r
    th = 2.0 * np.pi * np.arange(angles) / angles
    wa = 2.0 * np.pi / angles
    X = center[0] + r[:, None] * np.cos(th)[None, :]
    Y = center[1] + r[:, None] * np.sin(th)[None, :]
    wgt = (wr[:, None] * wa) * np.ones((1, angles))
    return np.column_stack([X.ravel(), Y.ravel()]), wgt.ravel()


def ball_average(F, center, radius: float, deriv: int = 2, rings: int = 64,
                 angles: int = 128) -> float:
    """Mean of a first derivative of F over a closed disk."""
    if deriv not in (1, 2):
        raise ValueError("deriv selects a first derivative: 1 or 2")
    pts, wgt = disk_rule(np.asarray(center, dtype=float), radius, rings, angles)
    g = F.evaluate(pts, order=1)
    return float(np.sum(g[:, deriv - 1] * wgt) / (np.pi * radius ** 2))


def disk_seminorm(F, center, radius: float, p: float, rings: int = 64,
                  angles: int = 128) -> float:
    """Seminorm of F over a disk (same integrand as planar_seminorm)."""
    pts, wgt = disk_rule(np.asarray(center, dtype=float), radius, rings, angles)
    H = F.evaluate(pts, order=2)
    frob = np.sqrt(H[:, 0, 0] ** 2 + 2.0 * H[:, 0, 1] ** 2 + H[:, 1, 1] ** 2)
    return float(np.sum(frob ** p * wgt)) ** (1.0 / p)


def ball_estimate_sums(ct: ClusterTree, G, p: float, rings: int = 64,
                       angles: int = 128) -> tuple[float, float]:
    """The two left-hand sums of the ball estimate for a field G.

    First: parent jumps of disk averages of the vertical derivative, weighted
    by W^(2-p), over all non-root clusters.  Second: for each leaf cluster,
    the gap between the vertical slope of the three-point jet at its boundary
    point and the disk average, same weights.
    """
    tree, ps = ct.tree, ct.ps
    n = ct.n_clusters
    avg = np.empty(n)
    for i in range(n):
        avg[i] = ball_average(G, ct.y[i], float(ct.radius[i]), deriv=2,
                              rings=rings, angles=angles)
    w = tree.weights
    sum1 = float(np.sum(np.abs(avg[1:] - avg[tree.parent[1:]]) ** p *
                        w[1:] ** (2.0 - p)))
    kz, kw = e2_anchor_indices(ps)
    sum2 = 0.0
    leaf_rows = np.array([tree.index[v] for v in tree.leaf_ids])
    for j, i in enumerate(leaf_rows):
        x = ps.e2[j]
        zp = np.array([kz[j] * ps.delta, 0.0])
        wp = np.array([kw[j] * ps.delta, 0.0])
        vals = G.evaluate(np.array([x, zp, wp]), order=0)
        jet = affine_through(x, zp, wp, vals[0], vals[1], vals[2])
        sum2 += abs(jet.c - avg[i]) ** p * w[i] ** (2.0 - p)
    return sum1, float(sum2)


@dataclass(frozen=True)
class GaussianBumpField:
    """Sum of isotropic Gaussian bumps; smooth test input with exact
    derivatives for quadrature cross-checks."""

    centers: np.ndarray
    amps: np.ndarray
    widths: np.ndarray

    @classmethod
    def random(cls, rng: np.random.Generator, n_bumps: int = 3,
               box=((-1.0, 3.0), (-1.0, 2.0)),
               width_range=(0.3, 1.2), amp_scale: float = 1.0):
        (x0, x1), (y0, y1) = box
        centers = np.column_stack([rng.uniform(x0, x1, n_bumps),
                                   rng.uniform(y0, y1, n_bumps)])
        amps = amp_scale * rng.standard_normal(n_bumps)
        widths = rng.uniform(*width_range, n_bumps)
        return cls(centers, amps, widths)

    def evaluate(self, pts: np.ndarray, order: int = 0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        dx = pts[:, None, 0] - self.centers[None, :, 0]
        dy = pts[:, None, 1] - self.centers[None, :, 1]
        s2 = self.widths[None, :] ** 2
        e = self.amps[None, :] * np.exp(-(dx ** 2 + dy ** 2) / (2.0 * s2))
        if order == 0:
            return e.sum(axis=1)
        if order == 1:
            return np.stack([(-dx / s2 * e).sum(axis=1),
                             (-dy / s2 * e).sum(axis=1)], axis=1)
        if order == 2:
            hxx = ((dx ** 2 / s2 - 1.0) / s2 * e).sum(axis=1)
            hyy = ((dy ** 2 / s2 - 1.0) / s2 * e).sum(axis=1)
            hxy = (dx * dy / s2 ** 2 * e).sum(axis=1)
            out = np.empty((pts.shape[0], 2, 2))
            out[:, 0, 0] = hxx
            out[:, 0, 1] = hxy
            out[:, 1, 0] = hxy
            out[:, 1, 1] = hyy
            return out
        raise ValueError("order must be 0, 1 or 2")


def patching_constant(F: PatchedInterpolant, p: float,
                      quad_order: int = 12) -> dict:
    """Measured ratio of the seminorm's p-th power to the touching-pair sum of
    sup-norm piece differences (the patching estimate, read as an equality)."""
    from .interpolant import pair_linf_sum
    lhs = planar_seminorm(F, p, quad_order=quad_order)[0] ** p
    rhs, worst = pair_linf_sum(F, p)
    if rhs == 0.0:
        c = 0.0 if lhs == 0.0 else float("inf")
    else:
        c = lhs / rhs
    return {"C_meas": c, "lhs": lhs, "rhs": rhs, "max_pair_diff": worst}
