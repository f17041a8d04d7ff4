"""
Measure Service
Weighted atomic measures of the g_i (the spectrum of H^2) and their transform
calculus: moments, Psi, its inverse chi, the S-transform and the radius map F(y)
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, DomainError, RootFindingError

logger = logging.getLogger(__name__)

MERGE_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12
# moment(n < 0) with an atom at zero
INFINITE_MOMENT = math.inf

MEASURE_KINDS = ('truncated', 'atoms', 'uniform', 'file')


@dataclass(frozen=True, eq=False)
class GSpectrum:
    """
    Normalized atomic measure of the g values, atoms strictly increasing in g

    Build instances with GSpectrum.from_atoms / from_values; the constructor
    expects already merged, sorted and normalized arrays.
    """

    g: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if g.ndim != 1 or g.shape != w.shape or g.size == 0:
            raise DomainError("GSpectrum needs matching non-empty 1-D g and weight arrays")
        if np.any(g < 0.0) or np.any(g > 1.0):
            raise DomainError("every g must satisfy 0 <= g <= 1", {'g_min': g.min(), 'g_max': g.max()})
        if np.any(w <= 0.0):
            raise DomainError("atom weights must be positive")
        if np.any(np.diff(g) <= 0.0):
            raise DomainError("atoms must be strictly increasing in g")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise DomainError("weights must sum to 1", {'weight_sum': w.sum()})
        g.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, 'g', g)
        object.__setattr__(self, 'w', w)

    @classmethod
    def from_atoms(cls, atoms: Iterable[Tuple[float, float]]) -> 'GSpectrum':
        """
        Merge, sort and normalize (g, weight) pairs

        Args:
            atoms: iterable of (g, weight) with 0 <= g <= 1 and weight > 0

        Returns:
            GSpectrum: atoms within MERGE_TOL of each other are merged by summing weights
        """
        pairs = [(float(g), float(w)) for g, w in atoms]
        if not pairs:
            raise DomainError("a measure needs at least one atom")
        for g, w in pairs:
            if not (0.0 <= g <= 1.0):
                raise DomainError(f"g value {g} outside [0, 1]")
            if not w > 0.0:
                raise DomainError(f"atom weight {w} must be positive")

        pairs.sort()
        merged: List[List[float]] = []
        for g, w in pairs:
            if merged and g - merged[-1][0] <= MERGE_TOL:
                merged[-1][1] += w
            else:
                merged.append([g, w])

        g = np.array([p[0] for p in merged])
        w = np.array([p[1] for p in merged])
        total = math.fsum(w)
        if len(merged) < len(pairs):
            logger.debug(f"Merged {len(pairs) - len(merged)} coincident atoms")
        return cls(g, w / total)

    @classmethod
    def from_values(cls, values: Sequence[float]) -> 'GSpectrum':
        """Equal-weight measure of a finite list of g values"""
        values = list(values)
        if not values:
            raise DomainError("a measure needs at least one g value")
        return cls.from_atoms((v, 1.0) for v in values)

    @property
    def atoms(self) -> List[Tuple[float, float]]:
        return list(zip(self.g.tolist(), self.w.tolist()))

    def weight_at_zero(self) -> float:
        return float(self.w[0]) if self.g[0] == 0.0 else 0.0

    @property
    def g_max(self) -> float:
        return float(self.g[-1])

    @property
    def positive(self) -> Tuple[np.ndarray, np.ndarray]:
        """Atoms with g > 0, as (g, w)"""
        mask = self.g > 0.0
        return self.g[mask], self.w[mask]

    def __repr__(self) -> str:
        return f"GSpectrum(atoms={len(self.g)}, g=[{self.g[0]:.6g}..{self.g[-1]:.6g}], w0={self.weight_at_zero():.6g})"


@dataclass(frozen=True)
class MeasureSpec:
    """
    Configuration-level description of a g measure

    kind is one of 'truncated' (mu), 'atoms' (atoms), 'uniform' (a, b, points)
    or 'file' (path).
    """

    kind: str
    mu: Optional[float] = None
    atoms: Tuple[Tuple[float, float], ...] = field(default_factory=tuple)
    a: Optional[float] = None
    b: Optional[float] = None
    points: Optional[int] = None
    path: Optional[str] = None

    @classmethod
    def truncated(cls, mu: float) -> 'MeasureSpec':
        return cls(kind='truncated', mu=mu)

    @classmethod
    def from_atoms(cls, atoms: Iterable[Tuple[float, float]]) -> 'MeasureSpec':
        return cls(kind='atoms', atoms=tuple((float(g), float(w)) for g, w in atoms))

    @classmethod
    def uniform(cls, a: float, b: float, points: int = 64) -> 'MeasureSpec':
        return cls(kind='uniform', a=a, b=b, points=points)

    @classmethod
    def file(cls, path: Union[str, Path]) -> 'MeasureSpec':
        return cls(kind='file', path=str(path))

    def violations(self) -> List[str]:
        """Structural problems with the spec; empty when well formed"""
        errors = []
        if self.kind not in MEASURE_KINDS:
            errors.append(f"measure.kind: must be one of {', '.join(MEASURE_KINDS)}")
        elif self.kind == 'truncated':
            if not isinstance(self.mu, (int, float)) or not (0.0 < self.mu < 1.0):
                errors.append("measure.mu: mu must be in (0,1)")
        elif self.kind == 'atoms':
            if not self.atoms:
                errors.append("measure.atoms: at least one (g, weight) pair required")
            for idx, (g, w) in enumerate(self.atoms):
                if not (0.0 <= g <= 1.0):
                    errors.append(f"measure.atoms[{idx}]: g must be in [0,1]")
                if not w > 0.0:
                    errors.append(f"measure.atoms[{idx}]: weight must be > 0")
        elif self.kind == 'uniform':
            if not isinstance(self.a, (int, float)) or not isinstance(self.b, (int, float)):
                errors.append("measure.a/b: numeric bounds required")
            else:
                if not (0.0 <= self.a and self.b <= 1.0):
                    errors.append("measure.a/b: 0 <= a and b <= 1 required")
                if not self.a < self.b:
                    errors.append("measure.a/b: a < b required")
            if not isinstance(self.points, int) or isinstance(self.points, bool) or self.points < 1:
                errors.append("measure.points: positive integer required")
        elif self.kind == 'file':
            if not self.path:
                errors.append("measure.path: file path required")
        return errors

    def quantile(self, p: float) -> float:
        """Continuous quantile for uniform specs; atomic quantile otherwise"""
        if self.kind == 'uniform':
            return float(self.a + (self.b - self.a) * p)
        return quantile(discretize(self), p)

    def describe(self) -> str:
        if self.kind == 'truncated':
            return f"truncated(mu={self.mu})"
        if self.kind == 'uniform':
            return f"uniform(a={self.a}, b={self.b}, points={self.points})"
        if self.kind == 'file':
            return f"file({self.path})"
        return f"atoms({len(self.atoms)})"


def discretize(spec: MeasureSpec) -> GSpectrum:
    """
    Reduce a MeasureSpec to weighted atoms

    Args:
        spec: measure description

    Returns:
        GSpectrum: truncated(mu) -> {(0, 1-mu), (1, mu)}; uniform(a, b, M) -> M
        Gauss-Legendre nodes on [a, b] with weights rescaled to total 1; file -> equal weights
    """
    errors = spec.violations()
    if errors:
        raise ConfigurationError(f"Malformed measure spec: {'; '.join(errors)}", errors)

    if spec.kind == 'truncated':
        return GSpectrum.from_atoms([(0.0, 1.0 - spec.mu), (1.0, spec.mu)])
    if spec.kind == 'atoms':
        return GSpectrum.from_atoms(spec.atoms)
    if spec.kind == 'uniform':
        nodes, weights = np.polynomial.legendre.leggauss(spec.points)
        half = 0.5 * (spec.b - spec.a)
        g = 0.5 * (spec.a + spec.b) + half * nodes
        return GSpectrum.from_atoms(zip(g, weights))
    return GSpectrum.from_values(read_measure_file(spec.path))


def read_measure_file(path: Union[str, Path]) -> List[float]:
    """
    Read one g value per line; '#' comment lines and blank lines are ignored

    Raises:
        ConfigurationError: unreadable file, unparsable line or g outside [0, 1]
    """
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigurationError(f"Cannot read measure file {path}: {e}", [f"measure.path: unreadable ({e})"])

    values = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        try:
            value = float(line)
        except ValueError:
            raise ConfigurationError(f"{path}:{lineno}: not a number: {line!r}",
                                     [f"measure.path: line {lineno} is not a number"])
        if not (0.0 <= value <= 1.0):
            raise ConfigurationError(f"{path}:{lineno}: g = {value} outside [0,1]",
                                     [f"measure.path: line {lineno} g outside [0,1]"])
        values.append(value)

    if not values:
        raise ConfigurationError(f"Measure file {path} holds no g values", ["measure.path: no values"])
    logger.info(f"Read {len(values)} g values from {path}")
    return values


def moment(m: GSpectrum, n: int) -> float:
    """Sum_k w_k g_k^n; +inf when n < 0 and the measure has an atom at zero"""
    if n < 0 and m.weight_at_zero() > 0.0:
        return INFINITE_MOMENT
    return float(np.dot(m.w, m.g ** n))


def quantile(m: GSpectrum, p: float) -> float:
    """Smallest atom g whose cumulative weight reaches p"""
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"quantile level {p} outside [0, 1]")
    cumulative = np.cumsum(m.w)
    idx = int(np.searchsorted(cumulative, p - 1e-14, side='left'))
    return float(m.g[min(idx, len(m.g) - 1)])


def _check_psi_domain(m: GSpectrum, u: float):
    if m.g_max > 0.0 and u * m.g_max >= 1.0:
        raise DomainError(f"psi evaluated at u = {u} beyond its pole 1/g_max = {1.0 / m.g_max}",
                          {'u': u, 'g_max': m.g_max})


def psi(m: GSpectrum, u: float) -> float:
    """Moment generating transform: sum_k w_k (u g_k)/(1 - u g_k), real branch u < 1/g_max"""
    _check_psi_domain(m, u)
    ug = u * m.g
    return float(np.dot(m.w, ug / (1.0 - ug)))


def psi_prime(m: GSpectrum, u: float) -> float:
    """d/du psi = sum_k w_k g_k / (1 - u g_k)^2"""
    _check_psi_domain(m, u)
    return float(np.dot(m.w, m.g / (1.0 - u * m.g) ** 2))


def psi_range(m: GSpectrum) -> Tuple[float, float]:
    """Open interval of values attained by psi on its real branch"""
    if m.g_max == 0.0:
        return 0.0, 0.0
    return -(1.0 - m.weight_at_zero()), math.inf


def chi(m: GSpectrum, y: float) -> float:
    """
    Inverse of psi on its real branch

    The bracket is grown from u = 0 (psi is increasing), refined by Brent's
    bisection-safeguarded method and polished with one Newton step.

    Raises:
        DomainError: y outside the attainable range of psi
    """
    if y == 0.0:
        return 0.0
    lo_limit, hi_limit = psi_range(m)
    if not (lo_limit < y < hi_limit):
        raise DomainError(f"chi({y}) undefined: psi attains only ({lo_limit}, {hi_limit})",
                          {'y': y, 'range': [lo_limit, hi_limit]})

    def target(u):
        return psi(m, u) - y

    if y > 0.0:
        pole = 1.0 / m.g_max
        lo, hi = 0.0, 0.5 * pole
        step = 0.5
        while target(hi) <= 0.0:
            step *= 0.5
            hi = pole * (1.0 - step)
            if step < 1e-15 or hi >= pole:
                raise RootFindingError(f"no bracket for chi({y}) below the pole", {'y': y})
    else:
        lo, hi = -1.0, 0.0
        while target(lo) >= 0.0:
            lo *= 2.0
            if lo < -1e300:
                raise RootFindingError(f"no bracket for chi({y}) on the negative axis", {'y': y})

    logger.debug(f"chi({y}): bracket [{lo}, {hi}]")
    u = brentq(target, lo, hi, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=500)

    # one Newton polish step, kept only when it lowers the residual and stays in the bracket
    slope = psi_prime(m, u)
    if slope > 0.0:
        candidate = u - target(u) / slope
        if lo <= candidate <= hi and abs(target(candidate)) < abs(target(u)):
            u = candidate
    return float(u)


def s_transform(m: GSpectrum, w: float) -> float:
    """
    S-transform (w + 1)/w * chi(w)

    Raises:
        DomainError: w = 0 (removable singularity, sample at small w instead) or
            w outside the range of psi
    """
    if w == 0.0:
        raise DomainError("s_transform is not evaluated at w = 0; sample at small |w| for the limit 1/mu_g(1)")
    return (w + 1.0) / w * chi(m, w)


def f_of_y(m: GSpectrum, y: float) -> float:
    """
    Radius F(y) = S(y - 1)^(-1/2) holding the fraction y of eigenvalues

    Args:
        m: g measure
        y: integrated fraction, weight_at_zero < y < 1

    Returns:
        float: the modulus r with y(r) = y
    """
    w0 = m.weight_at_zero()
    if not (w0 < y < 1.0):
        raise DomainError(f"f_of_y needs {w0} < y < 1, got {y}", {'y': y, 'weight_at_zero': w0})
    # (w + 1)/w with w = y - 1 is y/(y - 1); written this way to keep y exact
    s_value = y / (y - 1.0) * chi(m, y - 1.0)
    if not s_value > 0.0:
        raise DomainError(f"S(y - 1) = {s_value} is not positive at y = {y}")
    return float(s_value ** -0.5)
