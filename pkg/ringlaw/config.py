"""
Configuration settings for the ring-law toolkit
Environment defaults (Config classes) and the JSON run document (RunConfig)
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv

try:
    from .services.errors import ConfigurationError
    from .services.exact_n import QuadratureSpec
    from .services.asymptotic import GridSpec
    from .services.measure import MeasureSpec
except ImportError:
    from services.errors import ConfigurationError
    from services.exact_n import QuadratureSpec
    from services.asymptotic import GridSpec
    from services.measure import MeasureSpec

# Load environment variables from .env file
load_dotenv()


class Config:
    """Base configuration class"""

    # Logging Configuration
    LOG_LEVEL = os.environ.get('RINGLAW_LOG_LEVEL', 'INFO')

    # Parallelism (0 = one worker per CPU)
    THREADS = int(os.environ.get('RINGLAW_THREADS', 0))

    # Output
    OUTPUT_DIR = os.environ.get('RINGLAW_OUTPUT_DIR', './ringlaw-output')

    # Radial grid defaults
    GRID_POINTS = int(os.environ.get('RINGLAW_GRID_POINTS', 101))
    GRID_PAD = float(os.environ.get('RINGLAW_GRID_PAD', 0.05))

    # Exact route quadrature
    QUAD_PANELS = int(os.environ.get('RINGLAW_QUAD_PANELS', 8))
    QUAD_NODES = int(os.environ.get('RINGLAW_QUAD_NODES', 32))
    QUAD_REFINE = os.environ.get('RINGLAW_QUAD_REFINE', 'True').lower() == 'true'

    # Continuous measures are discretized on this many Gauss-Legendre nodes
    UNIFORM_POINTS = int(os.environ.get('RINGLAW_UNIFORM_POINTS', 64))

    # Desk-scale budgets
    EXACT_MAX_N = int(os.environ.get('RINGLAW_EXACT_MAX_N', 64))
    SAMPLE_MAX_N = int(os.environ.get('RINGLAW_SAMPLE_MAX_N', 128))
    SAMPLE_MAX_COUNT = int(os.environ.get('RINGLAW_SAMPLE_MAX_COUNT', 500))

    @classmethod
    def validate_config(cls):
        """Validate environment configuration"""
        errors = []

        if cls.THREADS < 0:
            errors.append("RINGLAW_THREADS must be >= 0")
        if cls.GRID_POINTS < 2:
            errors.append("RINGLAW_GRID_POINTS must be >= 2")
        if cls.GRID_PAD < 0:
            errors.append("RINGLAW_GRID_PAD must be >= 0")
        if cls.QUAD_PANELS < 1 or cls.QUAD_NODES < 1:
            errors.append("RINGLAW_QUAD_PANELS and RINGLAW_QUAD_NODES must be >= 1")
        if cls.UNIFORM_POINTS < 1:
            errors.append("RINGLAW_UNIFORM_POINTS must be >= 1")
        if min(cls.EXACT_MAX_N, cls.SAMPLE_MAX_N, cls.SAMPLE_MAX_COUNT) < 1:
            errors.append("RINGLAW_*_MAX_* budgets must be >= 1")

        if errors:
            raise ValueError(f"Configuration errors: {', '.join(errors)}")

        return True


class DevelopmentConfig(Config):
    """Development configuration"""
    LOG_LEVEL = os.environ.get('RINGLAW_LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration"""


class TestingConfig(Config):
    """Testing configuration: serial and quiet"""
    LOG_LEVEL = os.environ.get('RINGLAW_LOG_LEVEL', 'WARNING')
    THREADS = 1


# Configuration mapping
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': ProductionConfig
}


def get_config(name: Optional[str] = None) -> type:
    """
    Config class named by `name`, else by RINGLAW_ENV, else the default

    Raises:
        ValueError: unknown name
    """
    name = name or os.environ.get('RINGLAW_ENV', 'default')
    if name not in config:
        raise ValueError(f"Configuration errors: RINGLAW_ENV must be one of {', '.join(config)}, got {name!r}")
    return config[name]


TOP_LEVEL_KEYS = ('measure', 'grid', 'quad', 'sample', 'exact', 'output', 'threads')
MEASURE_KEYS = {
    'truncated': ('kind', 'mu'),
    'atoms': ('kind', 'atoms'),
    'uniform': ('kind', 'a', 'b', 'points'),
    'file': ('kind', 'path'),
}
GRID_KEYS = ('points', 'r_min', 'r_max', 'pad')
QUAD_KEYS = ('panels', 'nodes_per_panel', 'refine')
SAMPLE_KEYS = ('N', 'samples', 'seed', 'g')
EXACT_KEYS = ('N',)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _unknown(section: str, raw: Dict[str, Any], allowed) -> List[str]:
    return [f"{section}{key}: unknown key" for key in raw if key not in allowed]


@dataclass(frozen=True)
class SampleSettings:
    N: int
    samples: int
    seed: int
    g: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class RunConfig:
    """Validated run document"""

    measure: MeasureSpec
    grid: GridSpec
    quad: QuadratureSpec
    sample: Optional[SampleSettings] = None
    exact_n: Optional[int] = None
    output: str = Config.OUTPUT_DIR
    threads: int = Config.THREADS
    raw: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def ensemble_size(self) -> Optional[int]:
        """N for the exact route: exact.N, else sample.N"""
        if self.exact_n is not None:
            return self.exact_n
        return self.sample.N if self.sample else None


def _measure_violations(raw: Any) -> List[str]:
    if not isinstance(raw, dict):
        return ["measure: object required"]
    kind = raw.get('kind')
    if kind not in MEASURE_KEYS:
        return [f"measure.kind: must be one of {', '.join(MEASURE_KEYS)}"]
    errors = _unknown('measure.', raw, MEASURE_KEYS[kind])
    if kind == 'truncated' and not _is_number(raw.get('mu')):
        errors.append("measure.mu: mu must be in (0,1)")
    elif kind == 'atoms':
        atoms = raw.get('atoms')
        if not isinstance(atoms, list) or not all(
                isinstance(pair, (list, tuple)) and len(pair) == 2 and all(_is_number(v) for v in pair)
                for pair in atoms):
            errors.append("measure.atoms: list of [g, weight] pairs required")
    elif kind == 'uniform':
        if not _is_number(raw.get('a')) or not _is_number(raw.get('b')):
            errors.append("measure.a/b: numeric bounds required")
        if 'points' in raw and not _is_int(raw['points']):
            errors.append("measure.points: positive integer required")
    elif kind == 'file':
        if not isinstance(raw.get('path'), str):
            errors.append("measure.path: file path required")
        elif not Path(raw['path']).is_file():
            errors.append("measure.path: file not found")
    if errors:
        return errors
    return build_measure(raw).violations()


def build_measure(raw: Dict[str, Any]) -> MeasureSpec:
    kind = raw['kind']
    if kind == 'truncated':
        return MeasureSpec.truncated(raw['mu'])
    if kind == 'atoms':
        return MeasureSpec.from_atoms(raw['atoms'])
    if kind == 'uniform':
        return MeasureSpec.uniform(raw['a'], raw['b'], raw.get('points', Config.UNIFORM_POINTS))
    return MeasureSpec.file(raw['path'])


def _grid_violations(raw: Any) -> List[str]:
    if not isinstance(raw, dict):
        return ["grid: object required"]
    errors = _unknown('grid.', raw, GRID_KEYS)
    points = raw.get('points', Config.GRID_POINTS)
    if not _is_int(points) or points < 2:
        errors.append("grid.points: integer >= 2 required")
    for key in ('r_min', 'r_max', 'pad'):
        if key in raw and (not _is_number(raw[key]) or raw[key] < 0):
            errors.append(f"grid.{key}: non-negative number required")
    if _is_number(raw.get('r_min')) and _is_number(raw.get('r_max')) and not raw['r_min'] < raw['r_max']:
        errors.append("grid.r_min/r_max: r_min < r_max required")
    return errors


def _quad_violations(raw: Any) -> List[str]:
    if not isinstance(raw, dict):
        return ["quad: object required"]
    errors = _unknown('quad.', raw, QUAD_KEYS)
    return errors + build_quad(raw).violations()


def build_quad(raw: Dict[str, Any]) -> QuadratureSpec:
    return QuadratureSpec(panels=raw.get('panels', Config.QUAD_PANELS),
                          nodes_per_panel=raw.get('nodes_per_panel', Config.QUAD_NODES),
                          refine=raw.get('refine', Config.QUAD_REFINE))


def _sample_violations(raw: Any) -> List[str]:
    if not isinstance(raw, dict):
        return ["sample: object required"]
    errors = _unknown('sample.', raw, SAMPLE_KEYS)
    N = raw.get('N')
    if not _is_int(N) or N < 1:
        errors.append("sample.N: positive integer required")
    elif N > Config.SAMPLE_MAX_N:
        errors.append(f"sample.N: at most {Config.SAMPLE_MAX_N}")
    samples = raw.get('samples')
    if not _is_int(samples) or samples < 1:
        errors.append("sample.samples: positive integer required")
    elif samples > Config.SAMPLE_MAX_COUNT:
        errors.append(f"sample.samples: at most {Config.SAMPLE_MAX_COUNT}")
    seed = raw.get('seed')
    if not _is_int(seed) or not 0 <= seed < 2 ** 64:
        errors.append("sample.seed: unsigned 64-bit integer required")
    if 'g' in raw:
        g = raw['g']
        if not isinstance(g, list) or not all(_is_number(v) and 0 <= v <= 1 for v in g):
            errors.append("sample.g: list of numbers in [0,1] required")
        elif _is_int(N) and len(g) != N:
            errors.append("sample.g: length must equal sample.N")
    return errors


def _exact_violations(raw: Any) -> List[str]:
    if not isinstance(raw, dict):
        return ["exact: object required"]
    errors = _unknown('exact.', raw, EXACT_KEYS)
    N = raw.get('N')
    if not _is_int(N) or N < 1:
        errors.append("exact.N: positive integer required")
    elif N > Config.EXACT_MAX_N:
        errors.append(f"exact.N: at most {Config.EXACT_MAX_N}")
    return errors


def validate_run_config(raw: Any) -> List[str]:
    """
    Validate a parsed run document

    Args:
        raw: the decoded JSON document

    Returns:
        list: "<key>: <constraint>" messages; empty when the document is runnable
    """
    if not isinstance(raw, dict):
        return ["config: JSON object required"]
    errors = _unknown('', raw, TOP_LEVEL_KEYS)
    if 'measure' not in raw:
        errors.append("measure: required")
    else:
        errors.extend(_measure_violations(raw['measure']))
    errors.extend(_grid_violations(raw.get('grid', {})))
    errors.extend(_quad_violations(raw.get('quad', {})))
    if 'sample' in raw:
        errors.extend(_sample_violations(raw['sample']))
    if 'exact' in raw:
        errors.extend(_exact_violations(raw['exact']))
    if 'output' in raw and not isinstance(raw['output'], str):
        errors.append("output: directory path string required")
    if 'threads' in raw and (not _is_int(raw['threads']) or raw['threads'] < 0):
        errors.append("threads: integer >= 0 required (0 = auto)")
    return errors


def parse_run_config(raw: Any, output: Optional[str] = None, threads: Optional[int] = None,
                     settings: type = Config) -> RunConfig:
    """
    Build a RunConfig from a decoded document; CLI overrides win over the document,
    which wins over the output and thread defaults of `settings`

    Raises:
        ConfigurationError: the document has violations
    """
    errors = validate_run_config(raw)
    if threads is not None and threads < 0:
        errors.append("threads: integer >= 0 required (0 = auto)")
    if errors:
        raise ConfigurationError(f"Invalid run configuration: {'; '.join(errors)}", errors)

    grid_raw = raw.get('grid', {})
    grid = GridSpec(points=grid_raw.get('points', Config.GRID_POINTS),
                    r_min=grid_raw.get('r_min'), r_max=grid_raw.get('r_max'),
                    pad=grid_raw.get('pad', Config.GRID_PAD))
    sample = None
    if 'sample' in raw:
        s = raw['sample']
        sample = SampleSettings(N=s['N'], samples=s['samples'], seed=s['seed'],
                                g=tuple(float(v) for v in s['g']) if 'g' in s else None)
    return RunConfig(
        measure=build_measure(raw['measure']),
        grid=grid,
        quad=build_quad(raw.get('quad', {})),
        sample=sample,
        exact_n=raw['exact']['N'] if 'exact' in raw else None,
        output=output if output is not None else raw.get('output', settings.OUTPUT_DIR),
        threads=threads if threads is not None else raw.get('threads', settings.THREADS),
        raw=raw,
    )


def load_run_config(path, output: Optional[str] = None, threads: Optional[int] = None,
                    settings: type = Config) -> RunConfig:
    """Read and parse a JSON run document"""
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}", [f"config: unreadable ({e})"])
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config {path} is not valid JSON: {e}", [f"config: invalid JSON ({e.msg})"])
    return parse_run_config(raw, output=output, threads=threads, settings=settings)
