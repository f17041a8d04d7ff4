"""
Exact Finite-N Density Service
Mean density of |z|^2 for T = U diag(sqrt g_i) at finite N with strictly distinct
g_i. Each per-atom term F(g_i) is a signed product prefactor times an integral
over t in (0, inf), evaluated here after the change of variable t = (1 - u)/u,
which turns the integrand into a polynomial in u on (0, 1)
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import List, Sequence, Tuple, Union

import numpy as np

from .asymptotic import GridSpec, annulus, y_of_r
from .errors import DomainError, NumericalError, PoleError, QuadratureError
from .measure import GSpectrum, MeasureSpec, discretize, quantile
from .parallel import ordered_map

logger = logging.getLogger(__name__)

MIN_GAP = 1e-9
POLE_TOL = 1e-12
TIE_SPREAD = 1e-6
NEGATIVE_NOISE = 1e-10
NEGATIVE_FAILURE = 1e-6
# roundoff floor of a compensated sum, in units of eps * largest term
ROUNDOFF_FLOOR = 64.0


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule on u in (0, 1)"""

    panels: int = 8
    nodes_per_panel: int = 32
    refine: bool = True
    rtol: float = 1e-8

    def violations(self) -> List[str]:
        errors = []
        for key in ('panels', 'nodes_per_panel'):
            value = getattr(self, key)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                errors.append(f"quad.{key}: positive integer required")
        if not isinstance(self.refine, bool):
            errors.append("quad.refine: boolean required")
        return errors

    def refined(self) -> 'QuadratureSpec':
        """Rule with twice the panels and no further refinement"""
        return replace(self, panels=2 * self.panels, refine=False)


@dataclass(frozen=True)
class SignedLog:
    """A real number stored as sign * exp(log_magnitude); sign 0 means exactly zero"""

    log_magnitude: float
    sign: int

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_magnitude)


@dataclass(frozen=True, eq=False)
class ExactEnsemble:
    """
    Strictly increasing g_1 < ... < g_N in (0, 1] with gaps >= 1e-9

    The log-magnitude and sign of prod_{j != i} (g_i - g_j) are computed once
    at construction.
    """

    g: np.ndarray

    def __post_init__(self):
        g = np.sort(np.asarray(self.g, dtype=float).ravel())
        if g.size == 0:
            raise DomainError("an exact ensemble needs at least one g value")
        if g[0] <= 0.0 or g[-1] > 1.0:
            raise DomainError("exact ensemble values must lie in (0, 1]", {'g_min': g[0], 'g_max': g[-1]})
        gaps = np.diff(g)
        if gaps.size and gaps.min() < MIN_GAP:
            raise DomainError(f"exact ensemble values must be distinct, min gap {gaps.min():.3e} < {MIN_GAP}",
                              {'min_gap': gaps.min()})
        g.setflags(write=False)
        object.__setattr__(self, 'g', g)

        diff = g[:, None] - g[None, :]
        np.fill_diagonal(diff, 1.0)
        log_vandermonde = np.log(np.abs(diff)).sum(axis=1)
        # g sorted ascending: g_i - g_j < 0 exactly for the N - 1 - i larger atoms
        vandermonde_sign = np.where((g.size - 1 - np.arange(g.size)) % 2 == 0, 1.0, -1.0)
        object.__setattr__(self, '_log_vandermonde', log_vandermonde)
        object.__setattr__(self, '_vandermonde_sign', vandermonde_sign)

    @property
    def N(self) -> int:
        return int(self.g.size)

    def __repr__(self) -> str:
        return f"ExactEnsemble(N={self.N}, g=[{self.g[0]:.6g}..{self.g[-1]:.6g}])"


@dataclass(frozen=True)
class ExactComparison:
    r: np.ndarray
    s: np.ndarray
    y_exact: np.ndarray
    y_asymptotic: np.ndarray

    @property
    def sup_distance(self) -> float:
        return float(np.max(np.abs(self.y_exact - self.y_asymptotic)))


@lru_cache(maxsize=32)
def gauss_legendre(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]"""
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=32)
def composite_rule(panels: int, nodes_per_panel: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on (0, 1), equal panels"""
    x, w = gauss_legendre(nodes_per_panel)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    u.setflags(write=False)
    weights.setflags(write=False)
    logger.debug(f"Built composite rule: {panels} panels x {nodes_per_panel} nodes")
    return u, weights


def integrate_interval(func, lo: float, hi: float, nodes: int) -> float:
    """Single-panel Gauss-Legendre integral of a scalar func over [lo, hi]"""
    if hi <= lo:
        return 0.0
    x, w = gauss_legendre(nodes)
    half = 0.5 * (hi - lo)
    points = 0.5 * (lo + hi) + half * x
    values = [func(float(p)) for p in points]
    return half * math.fsum(wk * vk for wk, vk in zip(w, values))


def _check_pole(e: ExactEnsemble, s: float):
    distance = np.abs(e.g - s)
    idx = int(np.argmin(distance))
    if distance[idx] <= POLE_TOL:
        raise PoleError(f"|z|^2 = {s} coincides with g_{idx + 1} = {e.g[idx]}",
                        {'s': s, 'index': idx, 'g': e.g[idx]})


def _term_logs(e: ExactEnsemble, s: float, quad: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Log-magnitudes, signs and log roundoff scales of every F(g_i) at s

    u-form integrand for atom i:
        N * prod_{j != i} (u + (1 - u) a_j) * [N u - (1 - u) + a_i (N (1 - u) - u)],  a = g/s
    which equals u^N prod_{j != i}(1 + t a_j) [N - t + a_i (N t - 1)] times the
    Jacobian of t = (1 - u)/u. The roundoff scale of a term is its prefactor
    times the quadrature of the absolute integrand.
    """
    n = e.N
    a = e.g / s
    u, weights = composite_rule(quad.panels, quad.nodes_per_panel)
    u_col = u[:, None]
    factors = np.log(u_col + (1.0 - u_col) * a[None, :])
    log_w = factors.sum(axis=1)
    bracket = n * u_col - (1.0 - u_col) + a[None, :] * (n * (1.0 - u_col) - u_col)

    with np.errstate(divide='ignore'):
        log_integrand = log_w[:, None] - factors + np.log(np.abs(bracket))
    peak = log_integrand.max(axis=0)
    weighted = weights[:, None] * np.exp(log_integrand - peak[None, :])
    scaled = (np.sign(bracket) * weighted).sum(axis=0)
    magnitude = weighted.sum(axis=0)

    with np.errstate(divide='ignore'):
        log_integral = peak + np.log(np.abs(scaled)) + math.log(n)
        log_prefactor = (n - 2) * np.log(np.abs(e.g - s)) - e._log_vandermonde
    sign_prefactor = e._vandermonde_sign * (np.sign(e.g - s) ** (n - 2))
    log_scales = log_prefactor + peak + np.log(magnitude) + math.log(n)

    signs = sign_prefactor * np.sign(scaled)
    logs = np.where(signs == 0.0, -np.inf, log_prefactor + log_integral)
    if not np.all(np.isfinite(logs[signs != 0.0])):
        raise NumericalError(f"non-finite exact term at s = {s}", {'s': s, 'N': n})
    return logs, signs, log_scales


def _signed_sum(logs: np.ndarray, signs: np.ndarray) -> Tuple[float, float]:
    """Compensated sum of sign*exp(log); returns (value, largest term magnitude)"""
    live = signs != 0.0
    if not np.any(live):
        return 0.0, 0.0
    top = float(np.max(logs[live]))
    total = math.fsum((signs[live] * np.exp(logs[live] - top)).tolist())
    if total == 0.0:
        return 0.0, math.exp(top)
    return math.copysign(math.exp(top + math.log(abs(total))), total), math.exp(top)


def exact_terms(e: ExactEnsemble, s: float, quad: QuadratureSpec = QuadratureSpec()) -> List[SignedLog]:
    """All per-atom terms F(g_i) at s, in atom order"""
    if not s > 0.0:
        raise DomainError(f"exact terms need s > 0, got {s}")
    _check_pole(e, s)
    logs, signs, _ = _term_logs(e, s, quad)
    return [SignedLog(float(lg), int(sg)) if sg != 0.0 else SignedLog(-math.inf, 0)
            for lg, sg in zip(logs, signs)]


def _single_term(e: ExactEnsemble, i: int, s: float, quad: QuadratureSpec) -> Tuple[float, float]:
    logs, signs, log_scales = _term_logs(e, s, quad)
    return float(SignedLog(float(logs[i]), int(signs[i]))), math.exp(log_scales[i])


def f_delta(e: ExactEnsemble, i: int, s: float, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """
    Per-atom term F(g_i) of the exact density

    Args:
        e: exact ensemble
        i: zero-based atom index
        s: |z|^2, strictly between 0 and g_N and away from every g_j
        quad: u-quadrature rule

    Returns:
        float: (g_i - s)^(N-2) / prod_{j != i}(g_i - g_j) times the integral term

    Raises:
        PoleError: s within 1e-12 of some g_j
        QuadratureError: refined rule disagrees beyond tolerance
    """
    if not 0 <= i < e.N:
        raise DomainError(f"atom index {i} outside [0, {e.N})")
    if not 0.0 < s < e.g[-1]:
        raise DomainError(f"f_delta needs 0 < s < g_N = {e.g[-1]}, got {s}")
    _check_pole(e, s)
    value, scale = _single_term(e, i, s, quad)
    if quad.refine:
        fine, fine_scale = _single_term(e, i, s, quad.refined())
        _check_refinement(fine, value, max(scale, fine_scale), quad, {'s': s, 'index': i})
        value = fine
    return value


def _check_refinement(fine: float, coarse: float, scale: float, quad: QuadratureSpec, context: dict):
    """Relative tolerance on the refined value plus the roundoff floor of terms of size `scale`"""
    allowed = quad.rtol * abs(fine) + ROUNDOFF_FLOOR * np.finfo(float).eps * scale
    if abs(fine - coarse) > allowed:
        raise QuadratureError(
            f"quadrature not converged: refinement changed the value by {abs(fine - coarse):.3e} (allowed {allowed:.3e})",
            {**context, 'coarse': coarse, 'fine': fine, 'panels': quad.panels,
             'nodes_per_panel': quad.nodes_per_panel})


def _density_once(e: ExactEnsemble, s: float, quad: QuadratureSpec) -> Tuple[float, float]:
    """(density, roundoff scale of the summed terms)"""
    logs, signs, log_scales = _term_logs(e, s, quad)
    k = int(np.searchsorted(e.g, s))
    # the sum over all atoms integrates to zero, so the upper sum equals minus the lower one
    if e.N > 1 and k > 0 and np.max(logs[:k]) < np.max(logs[k:]):
        value, _ = _signed_sum(logs[:k], signs[:k])
        value, scale = -value, math.exp(np.max(log_scales[:k]))
    else:
        value, _ = _signed_sum(logs[k:], signs[k:])
        scale = math.exp(np.max(log_scales[k:]))
    return value / e.N, scale / e.N


def exact_density(e: ExactEnsemble, s: float, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """
    Exact mean density per unit |z|^2 at finite N

    0 for s < g_1 or s > g_N; otherwise (1/N) sum_{i > k} F(g_i) with g_k < s < g_{k+1}.
    Of the two equivalent partial sums the one with the smaller largest term is
    evaluated, with compensated summation.

    Raises:
        PoleError: s within 1e-12 of some g_i
        QuadratureError: refined rule disagrees beyond tolerance
        NumericalError: density below -1e-6, which only cancellation between
            terms much larger than the result can produce
    """
    if not s > 0.0:
        raise DomainError(f"exact density needs s > 0, got {s}")
    _check_pole(e, s)
    if s < e.g[0] or s > e.g[-1]:
        return 0.0

    value, scale = _density_once(e, s, quad)
    if quad.refine:
        fine, fine_scale = _density_once(e, s, quad.refined())
        _check_refinement(fine, value, max(scale, fine_scale), quad, {'s': s, 'N': e.N})
        value, scale = fine, max(scale, fine_scale)

    if value < -NEGATIVE_FAILURE:
        condition = scale / abs(value)
        min_gap = float(np.diff(e.g).min()) if e.N > 1 else None
        raise NumericalError(
            f"exact density lost to cancellation at s = {s}: result {value:.3e} from terms of size {scale:.3e} "
            f"(condition {condition:.1e}, smallest g gap {min_gap})",
            {'s': s, 'N': e.N, 'value': value, 'term_scale': scale, 'condition': condition, 'min_gap': min_gap})
    if value < -NEGATIVE_NOISE:
        logger.warning(f"exact density {value:.3e} slightly negative at s = {s} (N = {e.N})")
    return value


def full_sum_residual(e: ExactEnsemble, s: float, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """|sum over all atoms of F(g_i)| relative to the largest term; zero up to roundoff"""
    if not s > 0.0:
        raise DomainError(f"full sum needs s > 0, got {s}")
    _check_pole(e, s)
    logs, signs, _ = _term_logs(e, s, quad)
    value, scale = _signed_sum(logs, signs)
    return abs(value) / scale if scale > 0.0 else 0.0


def _piece_integrals(e: ExactEnsemble, quad: QuadratureSpec) -> np.ndarray:
    """Integral of the density over each (g_k, g_{k+1})"""
    return np.array([
        integrate_interval(lambda s: exact_density(e, s, quad), e.g[k], e.g[k + 1], quad.nodes_per_panel)
        for k in range(e.N - 1)
    ])


def normalization_check(e: ExactEnsemble, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """
    Integral of exact_density over (0, g_N), piecewise between consecutive g_i

    A single atom gives 0: its whole mass sits at |z|^2 = g_1, outside every open piece.
    """
    pieces = _piece_integrals(e, quad)
    total = math.fsum(pieces.tolist())
    logger.info(f"Exact normalization for N = {e.N}: {total:.12f}")
    return total


def exact_cdf(e: ExactEnsemble, s_values: Union[Sequence[float], np.ndarray],
              quad: QuadratureSpec = QuadratureSpec(), threads: int = 1) -> np.ndarray:
    """Integral of exact_density over (0, s) for every s in s_values"""
    pieces = _piece_integrals(e, quad)
    cumulative = np.concatenate(([0.0], np.cumsum(pieces)))

    def evaluate(s):
        s = float(s)
        if s <= e.g[0]:
            return 0.0
        if s >= e.g[-1]:
            return float(cumulative[-1])
        k = int(np.searchsorted(e.g, s, side='right')) - 1
        partial = integrate_interval(lambda t: exact_density(e, t, quad), e.g[k], s, quad.nodes_per_panel)
        return float(cumulative[k] + partial)

    return np.array(ordered_map(evaluate, np.asarray(s_values, dtype=float), threads))


def _spread_ties(values: np.ndarray, delta: float = TIE_SPREAD) -> np.ndarray:
    """
    Spread each group of equal values (and any value at 0) evenly over a window
    of width 2*delta around it, shifted to stay inside (0, 1]
    """
    spread = []
    for value in np.unique(values):
        count = int(np.count_nonzero(values == value))
        if count == 1 and value > 0.0:
            spread.append(float(value))
            continue
        lo = value - delta
        if lo <= 0.0:
            lo = 0.0
        elif value + delta > 1.0:
            lo = 1.0 - 2.0 * delta
        spread.extend(lo + 2.0 * delta * j / count for j in range(1, count + 1))
        logger.debug(f"Spread {count} tied values at g = {value} over ({lo}, {lo + 2.0 * delta}]")
    return np.array(sorted(spread))


def ensemble_from_measure(source: Union[GSpectrum, MeasureSpec], N: int) -> ExactEnsemble:
    """
    Mid-quantile ensemble g_i = quantile((i - 1/2)/N) of a measure

    Continuous uniform specs use their exact quantile; everything else uses the
    atomic quantile, with tied values spread over a window of +-1e-6.

    Raises:
        DomainError: N < 1 or the measure sits entirely at 0
    """
    if not isinstance(N, int) or N < 1:
        raise DomainError(f"ensemble size must be a positive integer, got {N}")
    levels = (np.arange(1, N + 1) - 0.5) / N
    if isinstance(source, MeasureSpec) and source.kind == 'uniform':
        values = np.array([source.quantile(p) for p in levels])
        g_max = source.b
    else:
        m = discretize(source) if isinstance(source, MeasureSpec) else source
        values = np.array([quantile(m, p) for p in levels])
        g_max = m.g_max
    if g_max == 0.0:
        raise DomainError("measure is concentrated at g = 0; the exact formula needs g_i > 0")

    if np.unique(values).size < values.size or values[0] <= 0.0:
        values = _spread_ties(values)
    return ExactEnsemble(values)


def exact_cdf_vs_asymptotic(e: ExactEnsemble, m: GSpectrum, grid: GridSpec,
                            quad: QuadratureSpec = QuadratureSpec(), threads: int = 1) -> ExactComparison:
    """
    Exact finite-N radial CDF against the large-N fraction y(r) on a grid

    Args:
        e: exact ensemble drawn from m
        m: limiting g measure
        grid: radial grid, default range from the annulus of m
        quad: u-quadrature rule
        threads: worker threads for the CDF evaluations

    Returns:
        ExactComparison: per-point table and the sup distance
    """
    radii = grid.radii(annulus(m))
    s_values = radii * radii
    logger.info(f"Comparing exact N = {e.N} CDF with asymptotic y on {len(radii)} points")
    y_exact = exact_cdf(e, s_values, quad, threads)
    y_asymptotic = np.array([y_of_r(m, float(r)) for r in radii])
    comparison = ExactComparison(r=radii, s=s_values, y_exact=y_exact, y_asymptotic=y_asymptotic)
    logger.info(f"Exact vs asymptotic sup distance at N = {e.N}: {comparison.sup_distance:.6g}")
    return comparison
