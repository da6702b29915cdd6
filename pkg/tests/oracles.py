"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written from the mathematical definitions,
with algorithms different from the ones shipped in the package, so agreement
between the two is meaningful evidence of correctness.
"""

from __future__ import annotations

import itertools

import numpy as np


def simplex_lattice(k: int, dims: int) -> np.ndarray:
    """All points of the simplex whose coordinates are multiples of 1/k."""
    if dims == 1:
        return np.ones((1, 1))
    points = []

    def rec(prefix, remaining, left):
        if left == 1:
            points.append(prefix + [remaining])
            return
        for first in range(remaining + 1):
            rec(prefix + [first], remaining - first, left - 1)

    rec([], k, dims)
    return np.asarray(points, dtype=np.float64) / k


def maximin_objective(g: np.ndarray, d: np.ndarray) -> np.ndarray:
    """min_j sum_a g(a) d[a][j] for each row of g (shape (n, A))."""
    return np.min(np.atleast_2d(g) @ d, axis=1)


def exact_line_max(p: np.ndarray, u: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact maximum of min_j (p + t u).d_j over the simplex segment through p.

    Along a line the objective is the minimum of at most n_alt affine
    functions of t, so its maximum lies at a pairwise intersection or at an
    endpoint; all are enumerated.  ``u`` must sum to zero.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        bounds_pos = np.where(u < 0.0, p / -u, np.inf)
        bounds_neg = np.where(u > 0.0, p / u, np.inf)
    t_hi = min(float(bounds_pos.min()), 1e9)
    t_lo = max(-float(bounds_neg.min()), -1e9)
    a = p @ d
    b = u @ d
    candidates = [t_lo, t_hi, 0.0]
    n_alt = d.shape[1]
    for i in range(n_alt):
        for j in range(i + 1, n_alt):
            db = b[i] - b[j]
            if db != 0.0:
                t = (a[j] - a[i]) / db
                if t_lo <= t <= t_hi:
                    candidates.append(t)
    ts = np.asarray(candidates)
    vals = np.min(a + ts[:, None] * b, axis=1)
    k = int(np.argmax(vals))
    best = np.clip(p + ts[k] * u, 0.0, None)
    best /= best.sum()
    # Re-evaluate at the renormalized feasible point so the reported value is
    # always attained exactly.
    return best, float(maximin_objective(best, d)[0])


def grid_maximin(
    d: np.ndarray,
    coarse: int = 20,
    levels: int = 7,
    points: int = 11,
    starts: int = 8,
) -> tuple[np.ndarray, float]:
    """Grid search for max_g min_j sum_a g(a) d[a][j] over the simplex.

    Starts from a global lattice of spacing 1/coarse, then refines boxes
    around the best `starts` candidates.  At each box width the search
    re-centers on the best point and repeats until stationary before the
    width shrinks, so it tracks ridges instead of collapsing prematurely
    (the objective is concave, hence a box-local maximum is global).  Final
    resolution is about (2/coarse) / 4**(levels-1) / (points//2), well below
    1e-3.  The returned value is attained by a feasible g, so it always
    lower-bounds the true optimum.
    """
    d = np.minimum(np.asarray(d, dtype=np.float64), 1e6)
    n_actions = d.shape[0]
    if n_actions == 1:
        return np.ones(1), float(d[0].min())
    lattice = simplex_lattice(coarse, n_actions)
    vals = maximin_objective(lattice, d)
    order = np.argsort(vals)[::-1][:starts]
    best_g = lattice[order[0]].copy()
    best_val = float(vals[order[0]])
    offsets_base = np.stack(
        [g.ravel() for g in np.meshgrid(*([np.linspace(-1.0, 1.0, points)] * (n_actions - 1)), indexing="ij")],
        axis=1,
    )
    pair_dirs = []
    for a in range(n_actions):
        for b in range(a + 1, n_actions):
            u = np.zeros(n_actions)
            u[a], u[b] = 1.0, -1.0
            pair_dirs.append(u)
    tops = lattice[order]
    for start in tops:
        center = start.copy()
        center_val = float(maximin_objective(center, d)[0])
        width = 2.0 / coarse
        for _ in range(levels):
            for _ in range(80):  # walk at this width until stationary
                improved = False
                cand_head = center[: n_actions - 1] + width * offsets_base
                cand_last = 1.0 - cand_head.sum(axis=1)
                cand = np.hstack([cand_head, cand_last[:, None]])
                cand = cand[np.all(cand >= 0.0, axis=1)]
                if cand.shape[0]:
                    cvals = maximin_objective(cand, d)
                    k = int(np.argmax(cvals))
                    if cvals[k] > center_val + 1e-15:
                        center = cand[k].copy()
                        center_val = float(cvals[k])
                        improved = True
                # Exact line searches escape kinks the fixed-step lattice
                # misses: along action swaps and toward other strong starts
                # (ridge crests tend to pass through several of them).
                for u in pair_dirs + [t - center for t in tops]:
                    if np.max(np.abs(u)) < 1e-12:
                        continue
                    g_line, v_line = exact_line_max(center, u, d)
                    if v_line > center_val + 1e-15:
                        center = g_line
                        center_val = v_line
                        improved = True
                if not improved:
                    break
            width /= 4.0
        if center_val > best_val:
            best_val = center_val
            best_g = center.copy()
    return best_g, best_val


def exact_game_value(d: np.ndarray, tol: float = 1e-8) -> float:
    """Value of max_g min_j g.d_j via support enumeration, certified by duality.

    The objective is the value of the zero-sum matrix game with payoff d, so
    it equals min over distributions lam on the columns of max_a (d lam)_a.
    Every feasible g yields a certified lower bound min_j (g.d)_j and every
    feasible lam a certified upper bound max_a (d lam)_a; enumerating square
    support pairs and solving the equalizing linear systems makes the bounds
    meet.  Raises RuntimeError if they fail to close, so a wrong answer is
    never returned silently.
    """
    d = np.minimum(np.asarray(d, dtype=np.float64), 1e6)
    n_a, n_j = d.shape
    lb = float(d.min(axis=1).max())
    ub = float(d.max(axis=0).min())
    for k in range(2, min(n_a, n_j) + 1):
        if ub - lb <= tol * max(1.0, abs(lb)):
            break
        for rows in itertools.combinations(range(n_a), k):
            sub = d[list(rows)]
            for cols in itertools.combinations(range(n_j), k):
                m = sub[:, list(cols)]
                lhs = np.zeros((k + 1, k + 1))
                lhs[k, :k] = 1.0
                lhs[:k, k] = -1.0
                rhs = np.zeros(k + 1)
                rhs[k] = 1.0
                # Equalizing maximizer on these rows: m.T g = v, sum g = 1.
                lhs[:k, :k] = m.T
                try:
                    sol = np.linalg.solve(lhs, rhs)
                except np.linalg.LinAlgError:
                    sol = None
                if sol is not None and sol[:k].min() > -1e-9:
                    g = np.zeros(n_a)
                    g[list(rows)] = np.clip(sol[:k], 0.0, None)
                    g /= g.sum()
                    lb = max(lb, float((g @ d).min()))
                # Equalizing minimizer on these columns: m lam = v, sum lam = 1.
                lhs[:k, :k] = m
                try:
                    sol = np.linalg.solve(lhs, rhs)
                except np.linalg.LinAlgError:
                    sol = None
                if sol is not None and sol[:k].min() > -1e-9:
                    lam = np.zeros(n_j)
                    lam[list(cols)] = np.clip(sol[:k], 0.0, None)
                    lam /= lam.sum()
                    ub = min(ub, float((d @ lam).max()))
    if ub - lb > tol * max(1.0, abs(lb)):
        raise RuntimeError(f"support enumeration left a duality gap: [{lb}, {ub}]")
    return 0.5 * (lb + ub)


def random_kl_matrix(rng: np.random.Generator) -> np.ndarray:
    """Random non-negative divergence table with <=5 actions, <=8 alternatives.

    Mixes dense, sparse, and tied entries so degenerate games (zero rows,
    duplicated columns) are exercised too.
    """
    n_actions = int(rng.integers(2, 6))
    n_alt = int(rng.integers(1, 9))
    d = rng.uniform(0.0, 3.0, size=(n_actions, n_alt))
    if rng.random() < 0.3:
        mask = rng.random(d.shape) < 0.4
        d[mask] = 0.0
    if rng.random() < 0.2 and n_alt >= 2:
        d[:, 1] = d[:, 0]
    if rng.random() < 0.15:
        d[int(rng.integers(n_actions))] = 0.0
    return d
