"""
Ensemble Service
Monte Carlo ground truth: Haar unitaries, T = U diag(sqrt g), eigenvalue moduli
and their distance to the large-N radial law
"""

import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy import stats

from .asymptotic import ring_radius, y_of_r
from .errors import ConfigurationError, SamplingError
from .measure import GSpectrum, MeasureSpec, discretize, quantile
from .parallel import ordered_map
from .report import OutputDirectory

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-10
UNITARITY_TOL = 1e-12
SUBUNITARY_TOL = 1e-8
RING_TOL = 1e-8
SEED_MAX = 2 ** 64 - 1


@dataclass(frozen=True)
class SampleConfig:
    N: int
    samples: int
    seed: int
    g: Tuple[float, ...]
    g_source: str = 'explicit'

    @classmethod
    def from_measure(cls, source: Union[GSpectrum, MeasureSpec], N: int, samples: int, seed: int) -> 'SampleConfig':
        label = source.describe() if isinstance(source, MeasureSpec) else repr(source)
        return cls(N=N, samples=samples, seed=seed, g=tuple(quantile_g_list(source, N)), g_source=label)

    def violations(self) -> List[str]:
        errors = []
        if not isinstance(self.N, int) or isinstance(self.N, bool) or self.N < 1:
            errors.append("sample.N: positive integer required")
        if not isinstance(self.samples, int) or isinstance(self.samples, bool) or self.samples < 1:
            errors.append("sample.samples: positive integer required")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed <= SEED_MAX:
            errors.append("sample.seed: unsigned 64-bit integer required")
        if isinstance(self.N, int) and len(self.g) != self.N:
            errors.append(f"sample.g: length {len(self.g)} must equal N")
        if any(not 0.0 <= v <= 1.0 for v in self.g):
            errors.append("sample.g: every g must be in [0,1]")
        return errors


@dataclass(frozen=True, eq=False)
class EigenSample:
    """Sorted eigenvalue moduli of all samples, with the config that produced them"""

    moduli: np.ndarray
    zero_fraction: float
    provenance: SampleConfig
    excluded: Tuple[int, ...] = ()

    @property
    def count(self) -> int:
        return int(self.moduli.size)

    @property
    def flagged(self) -> bool:
        return bool(self.excluded)

    def provenance_dict(self) -> dict:
        record = asdict(self.provenance)
        record.update(count=self.count, zero_fraction=self.zero_fraction,
                      excluded_samples=list(self.excluded))
        return record


def quantile_g_list(source: Union[GSpectrum, MeasureSpec], N: int) -> List[float]:
    """Mid-quantile g values (i - 1/2)/N of a measure; ties are kept"""
    levels = (np.arange(1, N + 1) - 0.5) / N
    if isinstance(source, MeasureSpec) and source.kind == 'uniform':
        return [source.quantile(p) for p in levels]
    m = discretize(source) if isinstance(source, MeasureSpec) else source
    return [quantile(m, p) for p in levels]


def unitarity_residual(u: np.ndarray) -> float:
    """max |U* U - I|"""
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def haar_unitary(N: int, rng: np.random.Generator) -> np.ndarray:
    """
    Haar-distributed N x N unitary

    QR of a standard complex Gaussian matrix, with each column of Q multiplied
    by the phase of the matching diagonal entry of R.

    Raises:
        SamplingError: orthonormality residual above 1e-12
    """
    if N < 1:
        raise ConfigurationError(f"matrix dimension must be >= 1, got {N}", ["sample.N: positive integer required"])
    z = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2.0)
    q, r = scipy.linalg.qr(z)
    diagonal = np.diagonal(r)
    magnitude = np.abs(diagonal)
    phases = np.where(magnitude > 0.0, diagonal / np.where(magnitude > 0.0, magnitude, 1.0), 1.0)
    u = q * phases[None, :]

    residual = unitarity_residual(u)
    if residual > UNITARITY_TOL:
        raise SamplingError(f"Haar draw lost unitarity: residual {residual:.3e}", {'N': N, 'residual': residual})
    return u


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one sample, fixed by (seed, index) alone"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _sample_once(cfg: SampleConfig, sqrt_g: np.ndarray, index: int) -> Optional[np.ndarray]:
    u = haar_unitary(cfg.N, sample_stream(cfg.seed, index))
    t = u * sqrt_g[None, :]
    try:
        eigenvalues = scipy.linalg.eigvals(t, overwrite_a=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.warning(f"Eigensolver failed on sample {index}: {e}; sample excluded")
        return None
    if not np.all(np.isfinite(eigenvalues)):
        logger.warning(f"Non-finite eigenvalues on sample {index}; sample excluded")
        return None
    return np.abs(eigenvalues)


def sample_moduli(cfg: SampleConfig, threads: int = 1) -> EigenSample:
    """
    Draw cfg.samples matrices T = U diag(sqrt g) and collect all eigenvalue moduli

    Args:
        cfg: sampling configuration; the seed fixes the output completely
        threads: worker threads (0 = one per CPU); the output is identical for any value

    Returns:
        EigenSample: sorted moduli; samples whose eigensolve failed are excluded and listed

    Raises:
        ConfigurationError: invalid cfg
        SamplingError: every sample failed, or a modulus exceeded 1 + 1e-8
    """
    errors = cfg.violations()
    if errors:
        raise ConfigurationError(f"Invalid sample config: {'; '.join(errors)}", errors)

    sqrt_g = np.sqrt(np.asarray(cfg.g, dtype=float))
    logger.info(f"Sampling {cfg.samples} matrices of size {cfg.N} (seed {cfg.seed})")
    results = ordered_map(lambda idx: _sample_once(cfg, sqrt_g, idx), range(cfg.samples), threads)

    excluded = tuple(idx for idx, moduli in enumerate(results) if moduli is None)
    kept = [moduli for moduli in results if moduli is not None]
    if not kept:
        raise SamplingError("every sample failed in the eigensolver", {'samples': cfg.samples})
    if excluded:
        logger.warning(f"{len(excluded)} of {cfg.samples} samples excluded")

    moduli = np.sort(np.concatenate(kept))
    if moduli[-1] > 1.0 + SUBUNITARY_TOL:
        raise SamplingError(f"eigenvalue modulus {moduli[-1]:.12g} exceeds 1", {'max_modulus': moduli[-1]})
    moduli.setflags(write=False)
    zero_fraction = float(np.count_nonzero(moduli <= ZERO_TOL)) / moduli.size
    return EigenSample(moduli=moduli, zero_fraction=zero_fraction, provenance=cfg, excluded=excluded)


def empirical_cdf(es: EigenSample, r: float) -> float:
    """Fraction of moduli <= r"""
    if r < 0.0:
        return 0.0
    return float(np.searchsorted(es.moduli, r, side='right')) / es.count


def _snapped(es: EigenSample, ring: Optional[float] = None) -> np.ndarray:
    """Moduli with numerical zeros set to exactly 0, and to exactly `ring` within RING_TOL of it"""
    moduli = np.where(es.moduli <= ZERO_TOL, 0.0, es.moduli)
    if ring is not None:
        moduli = np.where(np.abs(moduli - ring) <= RING_TOL, ring, moduli)
    return moduli


def ks_distance(es: EigenSample, m: GSpectrum, threads: int = 1) -> float:
    """
    sup |empirical CDF - y(r)| over the jump points of the empirical CDF

    Both one-sided limits are compared at every jump. The limiting CDF jumps
    at the origin, and on the circle when the annulus of m collapses; its left
    limit is 0 at both. m must be the limiting measure of the g that produced es.
    """
    ring = ring_radius(m)
    moduli = _snapped(es, ring)
    jumps = np.unique(moduli)
    after = np.searchsorted(moduli, jumps, side='right') / moduli.size
    before = np.searchsorted(moduli, jumps, side='left') / moduli.size
    y = np.array(ordered_map(lambda r: y_of_r(m, float(r)), jumps, threads))
    continuous = jumps > 0.0 if ring is None else (jumps > 0.0) & (jumps != ring)
    y_before = np.where(continuous, y, 0.0)
    distance = float(max(np.max(np.abs(after - y)), np.max(np.abs(before - y_before))))
    logger.info(f"KS distance over {moduli.size} moduli: {distance:.6g}")
    return distance


def ks_two_sample(a: EigenSample, b: EigenSample) -> float:
    return float(stats.ks_2samp(_snapped(a), _snapped(b)).statistic)


def write_sample(es: EigenSample, output: OutputDirectory, version: str = ''):
    """moduli.csv (header `modulus`) and its provenance sidecar"""
    csv_path = output.write_csv('moduli.csv', ['modulus'], ([v] for v in es.moduli))
    provenance = es.provenance_dict()
    provenance['version'] = version
    json_path = output.write_json('moduli.provenance.json', provenance)
    return csv_path, json_path
