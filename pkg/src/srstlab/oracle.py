"""Exact risk accounting on finite instances.

A finite instance abstracts the robustness setting down to something a
desk can enumerate: finitely many points, an explicit neighborhood (the
perturbation ball) per point, a fixed classifier label per point, the
label conditionals p(Y = c | x), and a marginal over points.  On such an
instance the natural, boundary, and robust risks are computable exactly,
so the additive decomposition and the two upper bounds built from a
worst-case neighbor can be machine-checked instead of trusted.

The binary variant additionally carries a real-valued score per point and
checks the surrogate-loss versions of the same bounds, including the
unweighted form that drops the probability factor.  The surrogate is the
base-2 logistic loss, whose value 1 at margin 0 is what makes it dominate
the 0/1 indicators.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

Array = np.ndarray

TIE_BREAKS = ("lowest", "highest")

# base-2 logistic: phi(0) = 1, so indicators of wrong sign are dominated
_LN2 = np.log(2.0)


def surrogate(t) -> Array:
    """log2(1 + exp(-t)), computed overflow-safe."""
    return np.logaddexp(0.0, -np.asarray(t, dtype=np.float64)) / _LN2


def _check_neighborhoods(neighborhoods, n: int) -> tuple[tuple[int, ...], ...]:
    cleaned = []
    for i, ball in enumerate(neighborhoods):
        ball = tuple(int(j) for j in ball)
        if any(j < 0 or j >= n for j in ball):
            raise ValueError(f"ball of point {i} references ids outside [0, {n})")
        if i not in ball:
            raise ValueError(f"ball of point {i} must contain the point itself")
        if len(set(ball)) != len(ball):
            raise ValueError(f"ball of point {i} has duplicate ids")
        cleaned.append(tuple(sorted(ball)))
    return tuple(cleaned)


@dataclass
class FiniteInstance:
    """Enumerable robustness problem over points 0 .. n-1.

    neighborhoods[i] lists the ids reachable from point i (always
    including i); classifier[i] is the fixed predicted class;
    conditionals[i, c] = p(Y = c | point i); marginal[i] weights the
    points and sums to one.
    """

    neighborhoods: tuple
    classifier: Array
    conditionals: Array
    marginal: Array

    def __post_init__(self):
        self.classifier = np.asarray(self.classifier, dtype=np.int64)
        self.conditionals = np.asarray(self.conditionals, dtype=np.float64)
        self.marginal = np.asarray(self.marginal, dtype=np.float64)
        n = self.classifier.shape[0]
        if self.conditionals.ndim != 2 or self.conditionals.shape[0] != n:
            raise ValueError(f"conditionals shape {self.conditionals.shape} does not match {n} points")
        if self.marginal.shape != (n,):
            raise ValueError(f"marginal shape {self.marginal.shape} does not match {n} points")
        C = self.conditionals.shape[1]
        if C < 2:
            raise ValueError(f"need at least 2 classes, got {C}")
        if self.classifier.min(initial=0) < 0 or self.classifier.max(initial=0) >= C:
            raise ValueError(f"classifier labels out of range [0, {C})")
        if self.conditionals.min(initial=0.0) < 0.0:
            raise ValueError("conditionals must be nonnegative")
        if np.abs(self.conditionals.sum(axis=1) - 1.0).max(initial=0.0) > 1e-8:
            raise ValueError("conditional rows must sum to one")
        if self.marginal.min(initial=0.0) < 0.0 or abs(self.marginal.sum() - 1.0) > 1e-8:
            raise ValueError("marginal must be a distribution over points")
        self.neighborhoods = _check_neighborhoods(self.neighborhoods, n)

    @property
    def n_points(self) -> int:
        return self.classifier.shape[0]

    @property
    def n_classes(self) -> int:
        return self.conditionals.shape[1]

    @property
    def points(self) -> range:
        return range(self.n_points)


@dataclass
class BinaryInstance:
    """Two-class instance scored by a real number per point.

    The induced classifier is the score sign with sign(0) = +1; class +1
    corresponds to conditional column `cond_pos`, class -1 to its
    complement.  lam scales the margin inside the surrogate boundary
    terms.
    """

    scores: Array
    neighborhoods: tuple
    cond_pos: Array
    marginal: Array
    lam: float = 1.0

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.cond_pos = np.asarray(self.cond_pos, dtype=np.float64)
        self.marginal = np.asarray(self.marginal, dtype=np.float64)
        n = self.scores.shape[0]
        if self.cond_pos.shape != (n,) or self.marginal.shape != (n,):
            raise ValueError("scores, cond_pos, and marginal must have the same length")
        if self.cond_pos.min(initial=0.0) < 0.0 or self.cond_pos.max(initial=0.0) > 1.0:
            raise ValueError("cond_pos must lie in [0, 1]")
        if self.marginal.min(initial=0.0) < 0.0 or abs(self.marginal.sum() - 1.0) > 1e-8:
            raise ValueError("marginal must be a distribution over points")
        if not self.lam > 0.0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        self.neighborhoods = _check_neighborhoods(self.neighborhoods, n)

    @property
    def n_points(self) -> int:
        return self.scores.shape[0]

    def signs(self) -> Array:
        return np.where(self.scores >= 0.0, 1, -1).astype(np.int64)


@dataclass(frozen=True)
class RiskReport:
    """Exact risks and the two worst-case-neighbor upper bounds.

    r_rob always equals r_nat + r_bdy (same enumeration, regrouped), and
    never exceeds either bound.  bound_neighbor_mismatch weights each
    flip-reachable point by the chance the label differs from the
    worst-case neighbor's class; bound_self_match weights it by the
    chance the label matches the point's own class.
    """

    r_nat: float
    r_bdy: float
    r_rob: float
    bound_neighbor_mismatch: float
    bound_self_match: float

    def min_bound(self) -> float:
        return min(self.bound_neighbor_mismatch, self.bound_self_match)


def worst_case_point(instance: FiniteInstance, point: int, tie_break: str = "lowest") -> int:
    """Neighbor maximizing classifier disagreement: the point itself when
    nothing in the ball flips, otherwise a flipping neighbor, lowest id
    first (or highest under the alternative tie break)."""
    if tie_break not in TIE_BREAKS:
        raise ValueError(f"unknown tie break {tie_break!r}, expected one of {TIE_BREAKS}")
    if point < 0 or point >= instance.n_points:
        raise ValueError(f"point {point} outside [0, {instance.n_points})")
    own = instance.classifier[point]
    flips = [j for j in instance.neighborhoods[point] if instance.classifier[j] != own]
    if not flips:
        return point
    return min(flips) if tie_break == "lowest" else max(flips)


def exact_risks(instance: FiniteInstance, tie_break: str = "lowest") -> RiskReport:
    """Enumerate the natural, boundary, and robust risks plus both upper
    bounds.  Everything is a finite sum over (point, class) pairs."""
    F = instance.classifier
    P = instance.conditionals
    m = instance.marginal
    r_nat = r_bdy = r_rob = 0.0
    extra_mismatch = 0.0
    extra_selfmatch = 0.0
    for i in instance.points:
        ball_labels = {int(F[j]) for j in instance.neighborhoods[i]}
        flip = len(ball_labels - {int(F[i])}) > 0
        z = worst_case_point(instance, i, tie_break)
        r_nat += m[i] * (1.0 - P[i, F[i]])
        if flip:
            r_bdy += m[i] * P[i, F[i]]
            extra_mismatch += m[i] * (1.0 - P[i, F[z]])
            extra_selfmatch += m[i] * P[i, F[i]]
        for c in range(instance.n_classes):
            if ball_labels - {c}:
                r_rob += m[i] * P[i, c]
    return RiskReport(
        r_nat=float(r_nat),
        r_bdy=float(r_bdy),
        r_rob=float(r_rob),
        bound_neighbor_mismatch=float(r_nat + extra_mismatch),
        bound_self_match=float(r_nat + extra_selfmatch),
    )


def boundary_term_pairs(instance: FiniteInstance, tie_break: str = "lowest",
                        event: str = "boundary") -> Array:
    """Per-point (event probability, worst-case-neighbor bound term).

    event "boundary": probability that some neighbor flips the classifier
    while the label matches the point's own class.  This is the quantity
    the risk bounds actually control: it never exceeds the bound term,
    and with two classes the two columns are equal.

    event "flip_mismatch": probability that some flipping neighbor's
    class differs from the label.  Once a ball flips into two or more
    distinct classes this can exceed the bound term, which is why the
    bounds are stated through the boundary event instead; this form is
    kept so that gap is demonstrable by enumeration.
    """
    if event not in ("boundary", "flip_mismatch"):
        raise ValueError(f"unknown event {event!r}")
    F = instance.classifier
    P = instance.conditionals
    out = np.zeros((instance.n_points, 2))
    for i in instance.points:
        flips = [j for j in instance.neighborhoods[i] if F[j] != F[i]]
        z = worst_case_point(instance, i, tie_break)
        rhs = (1.0 - P[i, F[z]]) if flips else 0.0
        if event == "boundary":
            lhs = P[i, F[i]] if flips else 0.0
        else:
            flip_labels = {int(F[j]) for j in flips}
            lhs = sum(P[i, c] for c in range(instance.n_classes) if flip_labels - {c})
        out[i] = (lhs, rhs)
    return out


def binary_bounds(instance: BinaryInstance, tie_break: str = "lowest") -> dict:
    """Exact robust risk of the sign classifier next to its three
    surrogate upper bounds.

    bound_neighbor_mismatch and bound_self_match weight the boundary
    surrogate by a label probability; bound_trades drops the factor and
    is therefore never smaller than either of them.
    """
    F = instance.signs()
    f = instance.scores
    p_pos = instance.cond_pos
    m = instance.marginal
    lam = instance.lam

    nat_surrogate = float(np.sum(m * (p_pos * surrogate(f) + (1.0 - p_pos) * surrogate(-f))))
    r_rob = 0.0
    term_mismatch = term_selfmatch = term_trades = 0.0
    for i in range(instance.n_points):
        ball = instance.neighborhoods[i]
        flips = [j for j in ball if F[j] != F[i]]
        if tie_break == "lowest":
            z = min(flips) if flips else i
        elif tie_break == "highest":
            z = max(flips) if flips else i
        else:
            raise ValueError(f"unknown tie break {tie_break!r}")
        for y, p_y in ((1, p_pos[i]), (-1, 1.0 - p_pos[i])):
            if any(F[j] != y for j in ball):
                r_rob += m[i] * p_y
        phi = float(surrogate(f[i] * f[z] / lam))
        p_neq_fz = (1.0 - p_pos[i]) if F[z] == 1 else p_pos[i]
        p_eq_fx = p_pos[i] if F[i] == 1 else (1.0 - p_pos[i])
        term_mismatch += m[i] * phi * p_neq_fz
        term_selfmatch += m[i] * phi * p_eq_fx
        term_trades += m[i] * phi
    return {
        "r_rob": float(r_rob),
        "bound_neighbor_mismatch": nat_surrogate + float(term_mismatch),
        "bound_self_match": nat_surrogate + float(term_selfmatch),
        "bound_trades": nat_surrogate + float(term_trades),
    }


def random_instance(seed: int, n_points: int, n_classes: int, ball_density: float,
                    symmetric: bool = False) -> FiniteInstance:
    """Seeded random instance; density 0 gives singleton balls, density 1
    the complete graph.  Balls are directed unless symmetric is set."""
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    if not 0.0 <= ball_density <= 1.0:
        raise ValueError(f"ball_density must be in [0, 1], got {ball_density}")
    rng = np.random.default_rng(seed)
    edges = rng.random((n_points, n_points)) < ball_density
    if symmetric:
        edges = edges | edges.T
    np.fill_diagonal(edges, True)
    neighborhoods = tuple(tuple(np.flatnonzero(edges[i]).tolist()) for i in range(n_points))
    classifier = rng.integers(0, n_classes, size=n_points)
    conditionals = rng.dirichlet(np.ones(n_classes), size=n_points)
    marginal = rng.dirichlet(np.ones(n_points))
    return FiniteInstance(neighborhoods=neighborhoods, classifier=classifier,
                          conditionals=conditionals, marginal=marginal)


def random_binary_instance(seed: int, n_points: int, ball_density: float,
                           lam: float = 1.0, score_scale: float = 2.0) -> BinaryInstance:
    rng = np.random.default_rng(seed)
    edges = rng.random((n_points, n_points)) < ball_density
    np.fill_diagonal(edges, True)
    neighborhoods = tuple(tuple(np.flatnonzero(edges[i]).tolist()) for i in range(n_points))
    return BinaryInstance(
        scores=rng.normal(0.0, score_scale, size=n_points),
        neighborhoods=neighborhoods,
        cond_pos=rng.uniform(0.0, 1.0, size=n_points),
        marginal=rng.dirichlet(np.ones(n_points)),
        lam=lam,
    )


def _sweep_dims(seed: int, max_points: int, max_classes: int) -> tuple[int, int, float]:
    meta = np.random.default_rng([seed, 0xD15C])
    n = int(meta.integers(2, max_points + 1))
    C = int(meta.integers(2, max_classes + 1))
    density = float(meta.uniform(0.0, 1.0))
    return n, C, density


def instance_sweep(seeds, max_points: int = 12, max_classes: int = 4,
                   atol: float = 1e-12) -> list[dict]:
    """One record per seed: exact risks, bounds, and pass flags for the
    decomposition, both bounds under both tie breaks, and the per-point
    boundary-event inequality."""
    records = []
    for seed in seeds:
        n, C, density = _sweep_dims(int(seed), max_points, max_classes)
        inst = random_instance(int(seed), n, C, density)
        rep = exact_risks(inst, "lowest")
        rep_alt = exact_risks(inst, "highest")
        pairs = boundary_term_pairs(inst, "lowest")
        pairs_alt = boundary_term_pairs(inst, "highest")
        binary_eq = True
        if C == 2:
            binary_eq = bool(np.all(np.abs(pairs[:, 0] - pairs[:, 1]) <= atol)
                             and np.all(np.abs(pairs_alt[:, 0] - pairs_alt[:, 1]) <= atol))
        records.append({
            "kind": "multiclass",
            "seed": int(seed),
            "n_points": n,
            "n_classes": C,
            "ball_density": density,
            "r_nat": rep.r_nat,
            "r_bdy": rep.r_bdy,
            "r_rob": rep.r_rob,
            "bound_neighbor_mismatch": rep.bound_neighbor_mismatch,
            "bound_self_match": rep.bound_self_match,
            "bound_neighbor_mismatch_alt": rep_alt.bound_neighbor_mismatch,
            "bound_self_match_alt": rep_alt.bound_self_match,
            "decomposition_ok": bool(abs(rep.r_nat + rep.r_bdy - rep.r_rob) <= atol),
            "bounds_ok": bool(rep.r_rob <= rep.min_bound() + atol),
            "bounds_alt_ok": bool(rep_alt.r_rob <= rep_alt.min_bound() + atol),
            "pointwise_ok": bool(np.all(pairs[:, 0] <= pairs[:, 1] + atol)
                                 and np.all(pairs_alt[:, 0] <= pairs_alt[:, 1] + atol)),
            "pointwise_binary_equal": binary_eq,
        })
    return records


def binary_sweep(seeds, lams=(0.5, 1.0, 5.0), max_points: int = 12,
                 atol: float = 1e-12) -> list[dict]:
    """One record per (seed, lam): exact robust risk against the three
    surrogate bounds, with ordering flags."""
    records = []
    for seed in seeds:
        meta = np.random.default_rng([int(seed), 0xB14A])
        n = int(meta.integers(2, max_points + 1))
        density = float(meta.uniform(0.0, 1.0))
        base = random_binary_instance(int(seed), n, density)
        for lam in lams:
            inst = replace(base, lam=float(lam))
            rep = binary_bounds(inst)
            rep_alt = binary_bounds(inst, "highest")
            weighted_max = max(rep["bound_neighbor_mismatch"], rep["bound_self_match"])
            records.append({
                "kind": "binary",
                "seed": int(seed),
                "n_points": n,
                "ball_density": density,
                "lam": float(lam),
                **{k: rep[k] for k in ("r_rob", "bound_neighbor_mismatch",
                                       "bound_self_match", "bound_trades")},
                "bounds_ok": bool(rep["r_rob"] <= min(rep["bound_neighbor_mismatch"],
                                                      rep["bound_self_match"]) + atol),
                "bounds_alt_ok": bool(rep_alt["r_rob"] <= min(rep_alt["bound_neighbor_mismatch"],
                                                              rep_alt["bound_self_match"]) + atol),
                "trades_dominates": bool(weighted_max <= rep["bound_trades"] + atol),
            })
    return records
