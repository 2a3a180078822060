"""Discrete probability measures on the line.

Atomic measures with exact CDF/quantile access, potential functions,
convex-order checks, decomposition into irreducible intervals, and the
reciprocal reflection that swaps geometric and arithmetic martingale
transport problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MEAN_TOLERANCE = 1e-9
ORDER_TOLERANCE = 1e-9
DECOMPOSITION_TOLERANCE = 1e-9


class MeasureError(ValueError):
    """Invalid measure construction or operation input."""


@dataclass(frozen=True)
class GridMeasure:
    """Finite atomic probability measure: strictly increasing atoms, weights summing to one."""

    atoms: np.ndarray
    weights: np.ndarray

    @cached_property
    def cum_weights(self) -> np.ndarray:
        c = np.minimum(np.cumsum(self.weights), 1.0)
        c[-1] = 1.0
        return c

    @cached_property
    def tail_weights(self) -> np.ndarray:
        # tail_weights[j] = mass strictly above atom j, summed small-to-large
        # so extreme tails keep full precision
        return np.concatenate([np.cumsum(self.weights[:0:-1])[::-1], [0.0]])

    @cached_property
    def mean(self) -> float:
        return float(self.atoms @ self.weights)

    @property
    def n(self) -> int:
        return self.atoms.size

    @property
    def positive_support(self) -> bool:
        return bool(self.atoms[0] > 0.0)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.atoms[0]), float(self.atoms[-1])

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "GridMeasure":
        return make_grid_measure(d["atoms"], d["weights"])


def make_grid_measure(atoms, weights) -> GridMeasure:
    """Build a GridMeasure: sorts atoms, merges duplicates, renormalizes weights.

    Zero-weight atoms are dropped so the stored support is the actual support.
    Raises MeasureError naming the offending index for empty, non-finite or
    negative input.
    """
    a = np.asarray(atoms, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if a.size == 0:
        raise MeasureError("empty measure: no atoms given")
    if a.size != w.size:
        raise MeasureError(f"atoms ({a.size}) and weights ({w.size}) differ in length")
    for name, arr in (("atom", a), ("weight", w)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise MeasureError(f"non-finite {name} at index {bad[0]}: {arr[bad[0]]}")
    neg = np.flatnonzero(w < 0)
    if neg.size:
        raise MeasureError(f"negative weight at index {neg[0]}: {w[neg[0]]}")
    total = w.sum()
    if total <= 0:
        raise MeasureError("weights sum to zero")

    order = np.argsort(a, kind="stable")
    a, w = a[order], w[order]
    # merge exact duplicates by summing weight
    keep = np.concatenate([[True], np.diff(a) > 0])
    idx = np.cumsum(keep) - 1
    merged_w = np.zeros(int(idx[-1]) + 1)
    np.add.at(merged_w, idx, w)
    merged_a = a[keep]

    pos = merged_w > 0
    merged_a, merged_w = merged_a[pos], merged_w[pos]
    if merged_a.size == 0:
        raise MeasureError("all atoms have zero weight")
    merged_w = merged_w / merged_w.sum()
    merged_a.setflags(write=False)
    merged_w.setflags(write=False)
    return GridMeasure(merged_a, merged_w)


def normalize_to_unit_mean(mu: GridMeasure) -> GridMeasure:
    """Scale the state space so the measure has mean one."""
    m = mu.mean
    if m <= 0:
        raise MeasureError(f"cannot normalize: mean {m} is not positive")
    return make_grid_measure(mu.atoms / m, mu.weights)


def moment(mu: GridMeasure, p) -> float:
    """p-th moment; p may be any real, or the string "log" for the log-moment.

    Fractional, negative or log moments require strictly positive support.
    """
    if isinstance(p, str):
        if p != "log":
            raise MeasureError(f"unknown moment flag {p!r}")
        if not mu.positive_support:
            raise MeasureError("log-moment requires strictly positive support")
        return float(mu.weights @ np.log(mu.atoms))
    p = float(p)
    if (p < 0 or p != round(p)) and not mu.positive_support:
        raise MeasureError(f"moment of order {p} requires strictly positive support")
    return float(mu.weights @ np.power(mu.atoms, p))


def cdf(mu: GridMeasure, x):
    """Right-continuous distribution function; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    idx = np.searchsorted(mu.atoms, x, side="right")
    c = np.concatenate([[0.0], mu.cum_weights])
    out = c[idx]
    return float(out) if out.ndim == 0 else out


def quantile(mu: GridMeasure, u):
    """Left-continuous generalized inverse of the CDF.

    quantile(0) is the smallest atom and quantile(1) the largest.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise MeasureError("quantile level outside [0, 1]")
    idx = np.searchsorted(mu.cum_weights, u, side="left")
    out = mu.atoms[np.minimum(idx, mu.n - 1)]
    return float(out) if out.ndim == 0 else out


def potential(mu: GridMeasure, z):
    """Integrated absolute deviation z -> int |x - z| mu(dx), evaluated exactly."""
    z = np.asarray(z, dtype=float)
    zz = np.atleast_1d(z)
    out = np.empty_like(zz)
    # split sum with prefix moments: sum_{a<=z} w(z-a) + sum_{a>z} w(a-z)
    cw = np.concatenate([[0.0], np.cumsum(mu.weights)])
    cm = np.concatenate([[0.0], np.cumsum(mu.weights * mu.atoms)])
    idx = np.searchsorted(mu.atoms, zz, side="right")
    below_w, below_m = cw[idx], cm[idx]
    total_w, total_m = cw[-1], cm[-1]
    out = zz * below_w - below_m + (total_m - below_m) - zz * (total_w - below_w)
    return float(out[0]) if z.ndim == 0 else out


@dataclass(frozen=True)
class OrderReport:
    in_convex_order: bool
    max_violation: float
    equal_means: bool
    mean: float


def check_convex_order(eta: GridMeasure, rho: GridMeasure) -> OrderReport:
    """Decide eta <=_cx rho by comparing potentials on the union of atoms.

    Potentials of atomic measures are piecewise linear with kinks only at
    atoms, so the pointwise comparison on the union grid is exact.
    """
    grid = np.union1d(eta.atoms, rho.atoms)
    violation = float(np.max(potential(eta, grid) - potential(rho, grid)))
    equal_means = abs(eta.mean - rho.mean) <= MEAN_TOLERANCE
    ok = bool(violation <= ORDER_TOLERANCE and equal_means)
    return OrderReport(ok, violation, equal_means, eta.mean)


@dataclass(frozen=True)
class MeasureComponent:
    interval: tuple[float, float]
    nu0_restricted: GridMeasure
    nu1_restricted: GridMeasure
    mass: float


@dataclass(frozen=True)
class ComponentDecomposition:
    identity_set_mass: float
    identity_restriction: GridMeasure | None
    components: list[MeasureComponent] = field(default_factory=list)


def _component_intervals(nu0: GridMeasure, nu1: GridMeasure) -> list[tuple[float, float]]:
    grid = np.union1d(nu0.atoms, nu1.atoms)
    gap = potential(nu1, grid) - potential(nu0, grid)
    pos = gap > DECOMPOSITION_TOLERANCE
    intervals: list[tuple[float, float]] = []
    i = 0
    n = grid.size
    while i < n:
        if not pos[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and pos[j + 1]:
            j += 1
        if i == 0:
            lo = float(grid[0])
        else:
            d0, d1 = gap[i - 1], gap[i]
            lo = float(grid[i - 1]) if d0 >= 0 else float(
                grid[i - 1] + (grid[i] - grid[i - 1]) * (-d0) / (d1 - d0))
        if j == n - 1:
            hi = float(grid[-1])
        else:
            d0, d1 = gap[j], gap[j + 1]
            hi = float(grid[j + 1]) if d1 >= 0 else float(
                grid[j] + (grid[j + 1] - grid[j]) * d0 / (d0 - d1))
        intervals.append((lo, hi))
        i = j + 1
    return intervals


def irreducible_components(nu0: GridMeasure, nu1: GridMeasure) -> ComponentDecomposition:
    """Split a convex-ordered pair into irreducible intervals plus the static set.

    Components are the maximal open intervals where the potential of nu1
    strictly exceeds that of nu0; mass of nu0 outside them never moves.
    Atoms of nu1 sitting exactly on a shared component endpoint are assigned
    left-first, splitting only as needed to balance component masses.
    """
    report = check_convex_order(nu0, nu1)
    if not report.in_convex_order:
        raise MeasureError(
            "measures are not in convex order "
            f"(max potential violation {report.max_violation:.3e}, "
            f"equal means: {report.equal_means})")
    intervals = _component_intervals(nu0, nu1)
    k = len(intervals)
    los = np.array([iv[0] for iv in intervals])
    his = np.array([iv[1] for iv in intervals])

    def locate(x: float) -> int:
        """Index of the open interval containing x, else -1."""
        i = int(np.searchsorted(los, x, side="right")) - 1
        if i >= 0 and los[i] < x < his[i]:
            return i
        return -1

    def at_endpoint(x: float, e: float) -> bool:
        return abs(x - e) <= 1e-12 * max(1.0, abs(x))

    # nu0: strict interior goes to its component, the rest never moves
    comp_n0_atoms: list[list[float]] = [[] for _ in range(k)]
    comp_n0_weights: list[list[float]] = [[] for _ in range(k)]
    id_atoms: list[float] = []
    id_weights: list[float] = []
    for x, w in zip(nu0.atoms, nu0.weights):
        i = locate(float(x))
        if i >= 0:
            comp_n0_atoms[i].append(float(x))
            comp_n0_weights[i].append(float(w))
        else:
            id_atoms.append(float(x))
            id_weights.append(float(w))
    comp_mass = np.array([sum(ws) for ws in comp_n0_weights])

    # nu1: interior atoms are forced; endpoint atoms cover whatever mass is missing
    comp_n1_atoms: list[list[float]] = [[] for _ in range(k)]
    comp_n1_weights: list[list[float]] = [[] for _ in range(k)]
    deficit = comp_mass.copy()
    endpoint_atoms: list[tuple[float, float, int, int]] = []  # (x, w, left comp, right comp)
    for x, w in zip(nu1.atoms, nu1.weights):
        x, w = float(x), float(w)
        i = locate(x)
        if i >= 0:
            comp_n1_atoms[i].append(x)
            comp_n1_weights[i].append(w)
            deficit[i] -= w
            continue
        # mass that nu0 keeps at this exact point stays put
        static = sum(w0 for x0, w0 in zip(id_atoms, id_weights) if at_endpoint(x, x0))
        left = next((j for j in range(k) if at_endpoint(x, his[j])), -1)
        right = next((j for j in range(k) if at_endpoint(x, los[j])), -1)
        if left >= 0 or right >= 0:
            endpoint_atoms.append((x, w - static, left, right))
            continue
        excess = w - static
        if excess <= 0 or k == 0:
            continue  # fully static; matched by the nu0 identity part
        # moving mass in the shoulder where the potential gap dips below the
        # tolerance belongs to the closest interval
        dists = np.where(x < los, los - x, np.where(x > his, x - his, 0.0))
        nearest = int(np.argmin(dists))
        comp_n1_atoms[nearest].append(x)
        comp_n1_weights[nearest].append(excess)
        deficit[nearest] -= excess

    for x, w, left, right in endpoint_atoms:
        remaining = w
        if left >= 0:
            take = min(remaining, max(deficit[left], 0.0)) if right >= 0 else remaining
            if take > 0:
                comp_n1_atoms[left].append(x)
                comp_n1_weights[left].append(take)
                deficit[left] -= take
                remaining -= take
        if right >= 0 and remaining > 0:
            comp_n1_atoms[right].append(x)
            comp_n1_weights[right].append(remaining)
            deficit[right] -= remaining

    if k and np.max(np.abs(deficit)) > 1e-9:
        raise MeasureError(
            f"component mass balance failed (worst residual {np.max(np.abs(deficit)):.3e})")

    components = []
    for i in range(k):
        n0 = make_grid_measure(comp_n0_atoms[i], comp_n0_weights[i])
        n1 = make_grid_measure(comp_n1_atoms[i], comp_n1_weights[i])
        components.append(MeasureComponent(intervals[i], n0, n1, float(comp_mass[i])))

    id_mass = float(sum(id_weights))
    identity = make_grid_measure(id_atoms, id_weights) if id_mass > 0 else None
    return ComponentDecomposition(id_mass, identity, components)


def reflect_measure(mu: GridMeasure, normalize: bool = False) -> GridMeasure:
    """Reweight by the identity density and push forward through x -> 1/x.

    With normalize=True the measure is first rescaled to mean one, making the
    transform an involution that exchanges the geometric and arithmetic
    transport problems; the result always has mean one in that case.
    """
    if not mu.positive_support:
        raise MeasureError("reflection requires strictly positive support")
    base = normalize_to_unit_mean(mu) if normalize else mu
    new_weights = base.weights * base.atoms / base.mean
    return make_grid_measure(1.0 / base.atoms, new_weights)


def _panels(eta: GridMeasure, rho: GridMeasure):
    """Probability panels on which both quantile functions are constant."""
    edges = np.unique(np.concatenate([
        eta.cum_weights[:-1], rho.cum_weights[:-1], [0.0, 1.0]]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    return np.diff(edges), quantile(eta, mids), quantile(rho, mids)


def wasserstein1(eta: GridMeasure, rho: GridMeasure) -> float:
    """Exact 1-Wasserstein distance via the quantile-function representation."""
    du, qe, qr = _panels(eta, rho)
    return float(du @ np.abs(qe - qr))
