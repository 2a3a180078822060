"""Reduction of the geometric transport problem to the arithmetic one.

Positive marginals with a common mean are reflected through x -> m/x into an
arithmetic pair, solved by the fixed-point scheme, and mapped back: marginal
flow of the price process, the interval correspondence between the two
decompositions, and the lognormal volatility surface of the price dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .bass_solver import (
    BassSolution,
    SolverParams,
    _terminal_level_masses,
    solve_decomposed,
)
from .gaussian import invert_increasing
from .measures import (
    GridMeasure,
    MeasureError,
    check_convex_order,
    irreducible_components,
    make_grid_measure,
    reflect_measure,
)

FLOW_GRID_MAX = 4001


@dataclass(frozen=True)
class GeometricSolution:
    m: float
    mu0: GridMeasure
    mu1: GridMeasure
    nu0: GridMeasure
    nu1: GridMeasure
    arithmetic: BassSolution
    component_map: list[tuple[tuple[float, float], tuple[float, float]]] = field(
        default_factory=list)


def to_arithmetic(mu0: GridMeasure, mu1: GridMeasure) -> tuple[GridMeasure, GridMeasure, float]:
    """Reflect a positive convex-ordered pair into its arithmetic counterpart.

    The convex order is verified on both sides; the verdicts must agree since
    the reflection preserves the order.
    """
    for name, mu in (("initial", mu0), ("terminal", mu1)):
        if not mu.positive_support:
            raise MeasureError(f"{name} marginal must have strictly positive support")
    m = mu0.mean
    if abs(mu0.mean - mu1.mean) > 1e-9:
        raise MeasureError(
            f"marginal means differ: {mu0.mean!r} vs {mu1.mean!r}")
    mu_report = check_convex_order(mu0, mu1)
    nu0 = reflect_measure(mu0, normalize=True)
    nu1 = reflect_measure(mu1, normalize=True)
    nu_report = check_convex_order(nu0, nu1)
    if mu_report.in_convex_order != nu_report.in_convex_order:
        raise RuntimeError(
            "internal consistency failure: convex-order verdicts disagree "
            f"across the reflection ({mu_report.max_violation:.3e} vs "
            f"{nu_report.max_violation:.3e})")
    if not mu_report.in_convex_order:
        raise MeasureError(
            f"marginals are not in convex order (violation {mu_report.max_violation:.3e})")
    return nu0, nu1, m


def solve_geometric(mu0: GridMeasure, mu1: GridMeasure,
                    params: SolverParams | None = None) -> GeometricSolution:
    """Solve the geometric problem through its arithmetic reduction.

    The interval map J = m / I is cross-checked against an independently
    computed decomposition of the price-side pair.
    """
    nu0, nu1, m = to_arithmetic(mu0, mu1)
    bass = solve_decomposed(nu0, nu1, params)

    comp_map = []
    for comp in bass.decomposition.components:
        lo, hi = comp.interval
        comp_map.append(((lo, hi), (m / hi, m / lo)))

    mu_decomp = irreducible_components(mu0, mu1)
    mu_intervals = sorted(c.interval for c in mu_decomp.components)
    mapped = sorted(j for _, j in comp_map)
    if len(mu_intervals) != len(mapped):
        raise RuntimeError(
            "internal consistency failure: component counts differ between "
            f"the two decompositions ({len(mapped)} vs {len(mu_intervals)})")
    for (a, b), (c, d) in zip(mapped, mu_intervals):
        # endpoints are only tolerance-sharp where the potential gap has an
        # exact zero, so require the paired intervals to overlap
        if max(a, c) >= min(b, d):
            raise RuntimeError(
                "internal consistency failure: mapped component "
                f"({a}, {b}) does not overlap price-side interval ({c}, {d})")

    return GeometricSolution(m, mu0, mu1, nu0, nu1, bass, comp_map)


def _gaussian_bin_means(n_bins: int) -> np.ndarray:
    """Conditional means of a standard Gaussian on its n equal-mass bins."""
    edges = ndtri(np.arange(1, n_bins) / n_bins)
    dens = np.exp(-edges * edges / 2.0) / np.sqrt(2.0 * np.pi)
    dens = np.concatenate([[0.0], dens, [0.0]])
    return (dens[:-1] - dens[1:]) * n_bins


def _compact(atoms: np.ndarray, weights: np.ndarray, max_atoms: int) -> tuple[np.ndarray, np.ndarray]:
    """Merge adjacent atoms into at most max_atoms barycenters, mass preserving."""
    order = np.argsort(atoms)
    atoms, weights = atoms[order], weights[order]
    if atoms.size <= max_atoms:
        return atoms, weights
    cum = np.cumsum(weights)
    group = np.minimum((cum / cum[-1] * max_atoms).astype(int), max_atoms - 1)
    w_out = np.zeros(max_atoms)
    aw_out = np.zeros(max_atoms)
    np.add.at(w_out, group, weights)
    np.add.at(aw_out, group, weights * atoms)
    keep = w_out > 0
    return aw_out[keep] / w_out[keep], w_out[keep]


def marginal_flow(gsol: GeometricSolution, t: float,
                  flow_grid_max: int = FLOW_GRID_MAX) -> GridMeasure:
    """Law of the price at time t.

    The driving law at time t is quantized by equal-mass Gaussian bins around
    each initial atom (conditional means, so the mean is kept exactly), pushed
    through the smoothed generating function, and reflected back through
    s = m / y with the density weighting y.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"time {t} outside [0, 1]")
    m = gsol.m
    decomp = gsol.arithmetic.decomposition
    atoms_parts: list[np.ndarray] = []
    weights_parts: list[np.ndarray] = []

    n_alpha = sum(s.alpha.n for s in gsol.arithmetic.component_solutions)
    for comp, csol in zip(decomp.components, gsol.arithmetic.component_solutions):
        if t == 1.0:
            vals = csol.target.atoms
            w = _terminal_level_masses(csol.fn, csol.alpha) * comp.mass
        elif t == 0.0:
            vals = csol.fn.heat_convolve(1.0, csol.alpha.atoms)
            w = csol.alpha.weights * comp.mass
        else:
            n_bins = max(16, flow_grid_max // max(n_alpha, 1))
            offsets = np.sqrt(t) * _gaussian_bin_means(n_bins)
            nodes = (csol.alpha.atoms[:, None] + offsets[None, :]).ravel()
            vals = csol.fn.heat_convolve(1.0 - t, nodes)
            w = np.repeat(csol.alpha.weights / n_bins, n_bins) * comp.mass
        atoms_parts.append(np.atleast_1d(vals))
        weights_parts.append(np.atleast_1d(w))

    if decomp.identity_restriction is not None:
        atoms_parts.append(decomp.identity_restriction.atoms)
        weights_parts.append(decomp.identity_restriction.weights * decomp.identity_set_mass)

    y = np.concatenate(atoms_parts)
    p = np.concatenate(weights_parts)
    if np.any(y <= 0):
        raise RuntimeError("internal error: nonpositive value in the driving law")
    atoms, weights = _compact(m / y, p * y, flow_grid_max)
    return make_grid_measure(atoms, weights)


def sde_volatility(gsol: GeometricSolution, component_index: int, t: float,
                   s: float) -> float:
    """Lognormal volatility of the price dynamics on one component.

    Inverts the smoothed generating function at m / s and returns
    (s / m) times its slope there; nonnegative by monotonicity.
    """
    if not 0.0 < t < 1.0:
        raise ValueError(f"time {t} must lie strictly inside (0, 1)")
    if s <= 0:
        raise ValueError(f"price must be positive, got {s}")
    csol = gsol.arithmetic.component_solutions[component_index]
    target = gsol.m / s
    if not csol.fn.lower < target < csol.fn.upper:
        raise ValueError(
            f"price {s} outside the open range of component {component_index}")
    var = 1.0 - t
    root = np.sqrt(var)
    thr = csol.fn.thresholds
    lo = (thr[0] if thr.size else 0.0) - 9.0 * root
    hi = (thr[-1] if thr.size else 0.0) + 9.0 * root
    step = 1.0
    while csol.fn.heat_convolve(var, np.array([lo]))[0] > target:
        lo -= step
        step *= 2.0
    step = 1.0
    while csol.fn.heat_convolve(var, np.array([hi]))[0] < target:
        hi += step
        step *= 2.0
    x_star = invert_increasing(
        lambda x: csol.fn.heat_convolve(var, x),
        lambda x: csol.fn.heat_convolve_deriv(var, x),
        np.array([target]), lo, hi, tol=1e-12)[0]
    return float(s / gsol.m * csol.fn.heat_convolve_deriv(var, x_star))
