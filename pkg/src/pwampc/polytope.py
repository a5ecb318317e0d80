"""H-representation polyhedral set algebra: {x | G x <= h}.

All operations are LP-based and exact up to the inclusion slack tolerance;
vertex enumeration is never used in production paths (test oracles only).
"""

import numpy as np

from .errors import NumericError, ValidationError
from .numerics import DEFAULT_TOL, LpProblem, solve_lp


class Polyhedron:
    """Convex polyhedron {x | G x <= h} with normalized rows."""

    def __init__(self, G, h, normalize=True):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        h = np.asarray(h, dtype=float).ravel()
        if G.shape[0] != h.shape[0]:
            raise ValidationError("row count mismatch between G and h")
        if normalize and G.size:
            norms = np.linalg.norm(G, axis=1)
            keep = norms > 1e-12
            G = G[keep] / norms[keep, None]
            h = h[keep] / norms[keep]
        self.G = G
        self.h = h

    @property
    def dim(self):
        return self.G.shape[1]

    @property
    def num_rows(self):
        return self.G.shape[0]

    def __repr__(self):
        return f"Polyhedron({self.num_rows} rows, dim {self.dim})"

    def contains(self, x, tol=DEFAULT_TOL.inclusion_slack):
        x = np.asarray(x, dtype=float).ravel()
        return bool(np.all(self.G @ x <= self.h + tol))

    def contains_many(self, X, tol=DEFAULT_TOL.inclusion_slack):
        """Vectorized membership for an (n_points, dim) array."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all(X @ self.G.T <= self.h + tol, axis=1)

    def to_dict(self):
        return {"G": self.G.tolist(), "h": self.h.tolist()}

    @staticmethod
    def from_dict(d):
        return Polyhedron(np.array(d["G"]), np.array(d["h"]), normalize=False)


def box(lower, upper):
    """Axis-aligned box as a Polyhedron."""
    lower = np.asarray(lower, dtype=float).ravel()
    upper = np.asarray(upper, dtype=float).ravel()
    n = lower.size
    G = np.vstack([np.eye(n), -np.eye(n)])
    h = np.concatenate([upper, -lower])
    return Polyhedron(G, h)


def is_empty(P: Polyhedron):
    """Emptiness via one feasibility LP (Chebyshev radius)."""
    c, r = _chebyshev(P)
    return c is None


def chebyshev_center(P: Polyhedron):
    """Center and radius of the largest inscribed ball.

    Returns (center, radius); raises NumericError if the LP fails.  The
    radius is negative-infinite only for empty sets, reported as (None, None).
    """
    return _chebyshev(P)


def _chebyshev(P):
    # maximize r s.t. G x + r <= h (rows normalized)
    m, n = P.G.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0
    G = np.hstack([P.G, np.ones((m, 1))])
    # keep r bounded for cones/unbounded sets
    G = np.vstack([G, np.concatenate([np.zeros(n), [-1.0]])])
    h = np.concatenate([P.h, [0.0]])
    Gb = np.vstack([G, np.concatenate([np.zeros(n), [1.0]])])
    hb = np.concatenate([h, [1e9]])
    status, z, _ = solve_lp(LpProblem(c, Gb, hb))
    if status == "infeasible":
        return None, None
    if status != "optimal":
        raise NumericError(f"Chebyshev LP status {status}")
    return z[:n], float(z[n])


def support(P: Polyhedron, direction):
    """max d.x over P; returns (value, argmax); value inf when unbounded."""
    d = np.asarray(direction, dtype=float).ravel()
    status, z, val = solve_lp(LpProblem(-d, P.G, P.h))
    if status == "optimal":
        return -val, z
    if status == "unbounded":
        return np.inf, None
    raise NumericError("support LP on empty polyhedron")


def intersect(P: Polyhedron, Q: Polyhedron, reduce_result=True):
    """Intersection by constraint union, followed by redundancy removal."""
    if P.dim != Q.dim:
        raise ValidationError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    R = Polyhedron(np.vstack([P.G, Q.G]), np.concatenate([P.h, Q.h]), normalize=False)
    return reduce(R) if reduce_result else R


def preimage(P: Polyhedron, Acl):
    """{x | Acl x in P} = {x | G Acl x <= h}."""
    Acl = np.atleast_2d(np.asarray(Acl, dtype=float))
    if Acl.shape[0] != P.dim:
        raise ValidationError("map dimension does not match the polyhedron")
    return Polyhedron(P.G @ Acl, P.h.copy())


def reduce(P: Polyhedron, tol=DEFAULT_TOL.inclusion_slack):
    """Minimal representation: drop every row implied by the others.

    Each candidate row is checked with one LP; removed rows are verifiably
    redundant, so the returned set is identical to the input set.
    """
    G, h = P.G.copy(), P.h.copy()
    # cheap pre-pass: drop duplicate rows (same normal, keep tightest offset)
    order = np.lexsort(np.round(np.hstack([G, h[:, None]]), 12).T)
    keep_mask = np.ones(len(h), dtype=bool)
    for a, b in zip(order[:-1], order[1:]):
        if np.allclose(G[a], G[b], atol=1e-12):
            drop = a if h[a] >= h[b] else b
            keep_mask[drop] = False
    G, h = G[keep_mask], h[keep_mask]

    keep = list(range(len(h)))
    i = 0
    while i < len(keep):
        rows = keep[:i] + keep[i + 1:]
        if not rows:
            break
        r = keep[i]
        status, _, val = solve_lp(LpProblem(-G[r], G[rows], h[rows]))
        if status == "optimal" and -val <= h[r] + tol:
            keep.pop(i)  # implied by the rest
        else:
            i += 1
    return Polyhedron(G[keep], h[keep], normalize=False)


def is_subset(P: Polyhedron, Q: Polyhedron, tol=DEFAULT_TOL.inclusion_slack):
    """P subseteq Q, one support LP per row of Q.  Empty P is a subset of
    everything."""
    if P.dim != Q.dim:
        raise ValidationError("dimension mismatch")
    if is_empty(P):
        return True
    for i in range(Q.num_rows):
        status, _, val = solve_lp(LpProblem(-Q.G[i], P.G, P.h))
        if status == "unbounded":
            return False
        if status != "optimal":
            raise NumericError(f"inclusion LP status {status}")
        if -val > Q.h[i] + tol:
            return False
    return True


def max_invariant_set(Acl, X0: Polyhedron, max_iter=500):
    """Maximal positively invariant subset of X0 under x+ = Acl x.

    Fixpoint of X_k = X_{k-1} ∩ {x | Acl x in X_{k-1}}, reached when every
    propagated row is already implied.  Raises NumericError with the last
    iterate attached when max_iter is exceeded.
    """
    if is_empty(X0):
        return Polyhedron(X0.G, X0.h, normalize=False)
    Acl = np.atleast_2d(np.asarray(Acl, dtype=float))
    X = reduce(X0)
    G_new, h_new = X0.G, X0.h
    for _ in range(max_iter):
        G_prop = G_new @ Acl
        # keep only propagated rows not implied by the current iterate
        viol_rows = []
        for i in range(G_prop.shape[0]):
            status, _, val = solve_lp(LpProblem(-G_prop[i], X.G, X.h))
            if status == "unbounded" or (status == "optimal"
                                         and -val > h_new[i] + DEFAULT_TOL.inclusion_slack):
                viol_rows.append(i)
        if not viol_rows:
            return reduce(X)
        G_add = G_prop[viol_rows]
        h_add = h_new[viol_rows]
        X = reduce(Polyhedron(np.vstack([X.G, G_add]),
                              np.concatenate([X.h, h_add]), normalize=True))
        norms = np.linalg.norm(G_add, axis=1)
        G_new, h_new = G_add / norms[:, None], h_add / norms
    err = NumericError(f"invariant set did not converge in {max_iter} iterations")
    err.last_iterate = X
    raise err


def sample(P: Polyhedron, n, seed=0, burn_in=50, thin=5):
    """Approximately uniform interior samples via seeded hit-and-run.

    Deterministic for a given seed.  Requires a nonempty, bounded set; the
    chain starts at the Chebyshev center.
    """
    center, radius = _chebyshev(P)
    if center is None:
        raise ValidationError("cannot sample an empty polyhedron")
    rng = np.random.default_rng(seed)
    x = center
    out = np.empty((n, P.dim))
    total = burn_in + n * thin
    count = 0
    for step in range(total):
        d = rng.standard_normal(P.dim)
        d /= np.linalg.norm(d)
        Gd = P.G @ d
        slack = P.h - P.G @ x
        with np.errstate(divide="ignore"):
            ratios = slack / Gd
        t_hi = np.min(ratios[Gd > 1e-14]) if np.any(Gd > 1e-14) else np.inf
        t_lo = np.max(ratios[Gd < -1e-14]) if np.any(Gd < -1e-14) else -np.inf
        if not (np.isfinite(t_hi) and np.isfinite(t_lo)):
            raise ValidationError("hit-and-run requires a bounded polyhedron")
        if t_hi <= t_lo:
            continue  # numerically stuck on a face; resample direction
        x = x + (t_lo + (t_hi - t_lo) * rng.random()) * d
        if step >= burn_in and (step - burn_in) % thin == 0:
            out[count] = x
            count += 1
            if count == n:
                break
    if count < n:
        out[count:] = x
    return out


def bounding_box(P: Polyhedron):
    """Tight axis-aligned bounds via 2n support LPs: (lower, upper)."""
    lo = np.empty(P.dim)
    hi = np.empty(P.dim)
    for i in range(P.dim):
        e = np.zeros(P.dim)
        e[i] = 1.0
        hi[i], _ = support(P, e)
        v, _ = support(P, -e)
        lo[i] = -v
    return lo, hi
