"""
Asymptotic Density Service
Large-N spectral density of T = UH: annulus of support, the integrated radial
fraction y(r) from the master equation psi((y-1)/(y r^2)) = y - 1, radial
densities in both normalizations, and the saddle-point identities that tie the
exact finite-N formula to the same answer
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .errors import DomainError, NumericalError, RingLawError, RootFindingError
from .measure import GSpectrum, INFINITE_MOMENT, moment, psi, psi_prime
from .parallel import ordered_map

logger = logging.getLogger(__name__)

BRACKET_EPS = 1e-13
SCAN_INTERVALS = 64
RESIDUAL_FAILURE = 1e-9
DEGENERATE_SADDLE = 1e-14
# relative width below which the annulus is a circle (all g on one positive atom)
COLLAPSED_WIDTH = 1e-12
DEFAULT_PAD = 0.05


@dataclass(frozen=True)
class AnnulusBounds:
    """Inner and outer radii (not squared) of the support"""

    r_inner: float
    r_outer: float

    def as_dict(self) -> dict:
        return {'r_inner': self.r_inner, 'r_outer': self.r_outer}


@dataclass(frozen=True)
class GridSpec:
    points: int
    r_min: Optional[float] = None
    r_max: Optional[float] = None
    pad: float = DEFAULT_PAD

    def radii(self, bounds: AnnulusBounds) -> np.ndarray:
        """Radial grid; the default range is the annulus padded by `pad` on both sides"""
        if not isinstance(self.points, int) or self.points < 2:
            raise DomainError(f"grid needs at least 2 points, got {self.points}")
        r_min = max(0.0, bounds.r_inner - self.pad) if self.r_min is None else float(self.r_min)
        r_max = bounds.r_outer + self.pad if self.r_max is None else float(self.r_max)
        if r_min < 0.0 or not r_min < r_max:
            raise DomainError(f"grid range [{r_min}, {r_max}] must satisfy 0 <= r_min < r_max")
        return np.linspace(r_min, r_max, self.points)


@dataclass(frozen=True)
class MasterSolution:
    """Root of the master equation at s = r^2; boundary marks clamped values outside the open annulus"""

    s: float
    y: float
    boundary: bool
    residual: float


@dataclass(frozen=True, eq=False)
class RadialSolution:
    r: np.ndarray
    s: np.ndarray
    y: np.ndarray
    rho_s: np.ndarray
    nu_area: np.ndarray
    boundary: np.ndarray
    atom_at_zero: float
    bounds: AnnulusBounds

    def rows(self) -> Iterator[Tuple[float, float, float, float, float]]:
        for row in zip(self.r, self.s, self.y, self.rho_s, self.nu_area):
            yield tuple(float(v) for v in row)

    def total_mass(self) -> float:
        """2*pi * integral of nu_area r dr over the grid (trapezoid) plus the atom at zero"""
        return float(2.0 * math.pi * trapezoid(self.nu_area * self.r, self.r) + self.atom_at_zero)

    def nonzero_normalized(self) -> 'RadialSolution':
        """Same densities normalized to the number of non-zero eigenvalues"""
        nonzero = 1.0 - self.atom_at_zero
        if nonzero <= 0.0:
            raise DomainError("measure has no non-zero eigenvalues to normalize to")
        return replace(
            self,
            y=np.clip((self.y - self.atom_at_zero) / nonzero, 0.0, 1.0),
            rho_s=self.rho_s / nonzero,
            nu_area=self.nu_area / nonzero,
            atom_at_zero=0.0,
        )


@dataclass(frozen=True)
class SaddleDiagnostics:
    s: float
    y: float
    phi_second: float
    pole_term: float
    density_lhs: float
    density_rhs: float

    @property
    def relative_error(self) -> float:
        return abs(self.density_lhs - self.density_rhs) / abs(self.density_rhs)


def support_squared(m: GSpectrum) -> Tuple[float, float]:
    """(r_inner^2, r_outer^2) = (1/mu_g(-1), mu_g(1)), inner bound 0 when mu_g(-1) diverges"""
    inverse_moment = moment(m, -1)
    s_inner = 0.0 if inverse_moment == INFINITE_MOMENT else 1.0 / inverse_moment
    return s_inner, moment(m, 1)


def annulus(m: GSpectrum) -> AnnulusBounds:
    s_inner, s_outer = support_squared(m)
    return AnnulusBounds(r_inner=math.sqrt(s_inner), r_outer=math.sqrt(s_outer))


def _collapsed(s_inner: float, s_outer: float) -> bool:
    return s_outer > 0.0 and s_outer - s_inner <= COLLAPSED_WIDTH * s_outer


def ring_radius(m: GSpectrum) -> Optional[float]:
    """Radius of the circle the annulus collapses to when all of g sits on one positive atom, else None"""
    s_inner, s_outer = support_squared(m)
    return math.sqrt(s_outer) if _collapsed(s_inner, s_outer) else None


def master_residual(m: GSpectrum, y: float, s: float) -> float:
    """psi((y-1)/(y s)) - (y - 1)"""
    return psi(m, (y - 1.0) / (y * s)) - (y - 1.0)


def _reduced_master(m: GSpectrum, y, s: float):
    """
    Master equation divided by y(1 - y) > 0:
    w0/y + sum_{g>0} w (s - g)/(y s + (1 - y) g), strictly decreasing in y
    """
    g, w = m.positive
    y = np.asarray(y, dtype=float)
    w0 = m.weight_at_zero()
    terms = (s - g) / (np.multiply.outer(y, s - g) + g)
    value = terms @ w
    if w0 > 0.0:
        value = value + w0 / y
    return value


def solve_y_point(m: GSpectrum, s: float) -> MasterSolution:
    """
    Solve the master equation at s = |z|^2

    Outside the open annulus the clamped value (weight at zero below, 1 above)
    is returned with boundary=True. A collapsed annulus gives the step
    from the weight at zero to 1 at its radius. Inside, the bracket (eps, 1 - eps) is
    scanned on 64 subintervals, exactly one sign change is required, and the
    root is refined with Brent's method. A function of one sign on the whole
    bracket puts the root within eps of the end it points to.

    Raises:
        RootFindingError: no sign change, several sign changes, or a residual
            that fails the acceptance threshold
    """
    s_inner, s_outer = support_squared(m)
    w0 = m.weight_at_zero()
    if _collapsed(s_inner, s_outer):
        # point mass on the circle; the CDF is right-continuous there
        return MasterSolution(s, 1.0 if s >= s_outer * (1.0 - COLLAPSED_WIDTH) else w0, True, 0.0)
    if s <= s_inner:
        return MasterSolution(s, w0, True, 0.0)
    if s >= s_outer:
        return MasterSolution(s, 1.0, True, 0.0)

    ys = np.linspace(BRACKET_EPS, 1.0 - BRACKET_EPS, SCAN_INTERVALS + 1)
    values = _reduced_master(m, ys, s)
    if not np.all(np.isfinite(values)):
        raise RootFindingError(f"master equation not finite on the bracket at s = {s}", {'s': s})

    signs = np.sign(values)
    zeros = np.flatnonzero(signs == 0.0)
    changes = np.flatnonzero(signs[:-1] * signs[1:] < 0.0)
    diagnostics = {'s': s, 'h_low': values[0], 'h_high': values[-1], 'sign_changes': len(changes)}

    if zeros.size:
        y = float(ys[zeros[0]])
    elif changes.size == 1:
        k = int(changes[0])
        logger.debug(f"solve_y(s={s}): bracket [{ys[k]}, {ys[k + 1]}]")
        y = brentq(lambda t: float(_reduced_master(m, t, s)), ys[k], ys[k + 1],
                   xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=500)
    elif changes.size == 0 and values[-1] > 0.0:
        # root within eps of 1 (s just below the outer radius)
        y = float(ys[-1])
    elif changes.size == 0 and values[0] < 0.0:
        y = float(ys[0])
    elif changes.size == 0:
        raise RootFindingError(f"master equation has no sign change in (0,1) at s = {s}", diagnostics)
    else:
        raise RootFindingError(f"master equation has {changes.size} sign changes at s = {s}", diagnostics)

    residual = abs(master_residual(m, y, s))
    if residual > RESIDUAL_FAILURE:
        diagnostics.update(y=y, residual=residual)
        raise RootFindingError(f"master equation residual {residual:.3e} at s = {s}", diagnostics)
    return MasterSolution(s, float(y), False, residual)


def solve_y(m: GSpectrum, s: float) -> float:
    return solve_y_point(m, s).y


def y_of_r(m: GSpectrum, r: float) -> float:
    """Fraction of eigenvalues with modulus <= r, atom at the origin included"""
    if r < 0.0:
        return 0.0
    if r == 0.0:
        return m.weight_at_zero()
    return solve_y(m, r * r)


def density_s(m: GSpectrum, s: float) -> float:
    """
    dy/ds per unit |z|^2, from implicit differentiation of the master equation;
    0 outside the open annulus
    """
    point = solve_y_point(m, s)
    if point.boundary:
        return 0.0
    y = point.y
    u = (y - 1.0) / (y * s)
    slope = psi_prime(m, u)
    denominator = 1.0 - slope / (y * y * s)
    if denominator <= DEGENERATE_SADDLE:
        raise NumericalError(f"degenerate saddle at s = {s}: 1 - psi'(u)/(y^2 s) = {denominator:.3e}",
                             {'s': s, 'y': y, 'denominator': denominator})
    return -(y - 1.0) / (y * s * s) * slope / denominator


def phi(m: GSpectrum, v: float, s: float) -> float:
    """ln v + sum_k w_k ln(1 - (v - 1) g_k/(v s))"""
    if not (v > 0.0 and s > 0.0):
        raise DomainError(f"phi needs v > 0 and s > 0, got v = {v}, s = {s}")
    shift = (1.0 - v) * m.g / (v * s)
    if np.any(shift <= -1.0):
        raise DomainError(f"phi has a non-positive log argument at v = {v}, s = {s}")
    return float(math.log(v) + np.dot(m.w, np.log1p(shift)))


def phi_prime(m: GSpectrum, v: float, s: float) -> float:
    """(1/v) [1 - psi(u)/(v - 1)] with u = (v-1)/(v s); zero at the solve_y point"""
    if not (v > 0.0 and s > 0.0):
        raise DomainError(f"phi_prime needs v > 0 and s > 0, got v = {v}, s = {s}")
    u = (v - 1.0) / (v * s)
    # psi(u)/(v - 1) = [psi(u)/u]/(v s), finite at v = 1
    psi_over_u = float(np.dot(m.w, m.g / (1.0 - u * m.g)))
    return (1.0 - psi_over_u / (v * s)) / v


def phi_second(m: GSpectrum, y: float, s: float) -> float:
    """[1/(y(y-1))] [1 - psi'(u)/(y^2 s)] at the saddle point y, u = (y-1)/(y s)"""
    if not (0.0 < y < 1.0 and s > 0.0):
        raise DomainError(f"phi_second needs 0 < y < 1 and s > 0, got y = {y}, s = {s}")
    u = (y - 1.0) / (y * s)
    return (1.0 - psi_prime(m, u) / (y * y * s)) / (y * (y - 1.0))


def pole_contribution(y: float, s: float) -> float:
    return y * (y - 1.0) / s


def saddle_identity(m: GSpectrum, s: float) -> SaddleDiagnostics:
    """
    Compare (1/s)(1/|phi''(y)| + y(y-1)) with dy/ds at an interior point

    Raises:
        DomainError: s not strictly inside the annulus
    """
    point = solve_y_point(m, s)
    if point.boundary:
        raise DomainError(f"saddle identity needs s strictly inside the annulus, got s = {s}")
    y = point.y
    second = phi_second(m, y, s)
    pole = pole_contribution(y, s)
    lhs = 1.0 / (s * abs(second)) + pole
    return SaddleDiagnostics(s=s, y=y, phi_second=second, pole_term=pole,
                             density_lhs=lhs, density_rhs=density_s(m, s))


def tabulate(m: GSpectrum, grid: GridSpec, threads: int = 1) -> RadialSolution:
    """
    Evaluate y, dy/ds and the per-area density on a radial grid

    Args:
        m: g measure
        grid: point count and optional r range
        threads: worker threads (0 = one per CPU); output does not depend on it

    Returns:
        RadialSolution
    """
    bounds = annulus(m)
    radii = grid.radii(bounds)
    logger.info(f"Tabulating {len(radii)} radii on [{radii[0]:.6g}, {radii[-1]:.6g}], "
                f"annulus [{bounds.r_inner:.6g}, {bounds.r_outer:.6g}]")

    def evaluate(item):
        idx, r = item
        s = float(r) * float(r)
        try:
            point = solve_y_point(m, s)
            rho = 0.0 if point.boundary else density_s(m, s)
        except RingLawError as e:
            raise type(e)(f"grid point {idx} (r = {r}): {e}", {**e.diagnostics, 'grid_index': idx}) from e
        return s, point.y, rho, point.boundary

    results = ordered_map(evaluate, enumerate(radii), threads)
    s_values, y_values, rho_values, flags = (np.array(col) for col in zip(*results))
    return RadialSolution(
        r=radii, s=s_values.astype(float), y=y_values.astype(float),
        rho_s=rho_values.astype(float), nu_area=rho_values.astype(float) / math.pi,
        boundary=flags.astype(bool), atom_at_zero=m.weight_at_zero(), bounds=bounds,
    )
