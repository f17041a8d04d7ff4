"""
Ring-Law Toolkit - Command Line Front Door
Parses a JSON run document and dispatches the bounds, asymptotic, exact, sample
and compare commands; tables land in the output directory as CSV/JSON
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional

try:
    from . import __version__
    from .config import Config, RunConfig, get_config, load_run_config, validate_run_config
    from .services.asymptotic import annulus, saddle_identity, tabulate
    from .services.ensemble import (SampleConfig, empirical_cdf, ks_distance, quantile_g_list,
                                    sample_moduli, write_sample)
    from .services.errors import (EXIT_OK, EXIT_VALIDATION, ConfigurationError, PoleError, RingLawError,
                                  error_handler, with_error_handling)
    from .services.exact_n import (ensemble_from_measure, exact_cdf_vs_asymptotic, exact_density,
                                   normalization_check)
    from .services.measure import GSpectrum, discretize
    from .services.report import CompareReport, OutputDirectory
except ImportError:
    from ringlaw import __version__
    from ringlaw.config import Config, RunConfig, get_config, load_run_config, validate_run_config
    from ringlaw.services.asymptotic import annulus, saddle_identity, tabulate
    from ringlaw.services.ensemble import (SampleConfig, empirical_cdf, ks_distance, quantile_g_list,
                                           sample_moduli, write_sample)
    from ringlaw.services.errors import (EXIT_OK, EXIT_VALIDATION, ConfigurationError, PoleError,
                                         RingLawError, error_handler, with_error_handling)
    from ringlaw.services.exact_n import (ensemble_from_measure, exact_cdf_vs_asymptotic, exact_density,
                                          normalization_check)
    from ringlaw.services.measure import GSpectrum, discretize
    from ringlaw.services.report import CompareReport, OutputDirectory

logger = logging.getLogger(__name__)

COMMANDS = ('bounds', 'asymptotic', 'exact', 'sample', 'compare')


def configure_logging(level: str = Config.LOG_LEVEL):
    """Logs go to stderr; stdout is reserved for command payloads"""
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO), stream=sys.stderr,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def _require_ensemble_size(cfg: RunConfig) -> int:
    N = cfg.ensemble_size
    if N is None:
        raise ConfigurationError("exact route needs exact.N or sample.N", ["exact.N: required"])
    return N


def _sample_config(cfg: RunConfig) -> SampleConfig:
    if cfg.sample is None:
        raise ConfigurationError("sample route needs a sample section", ["sample: required"])
    s = cfg.sample
    if s.g is not None:
        return SampleConfig(N=s.N, samples=s.samples, seed=s.seed, g=s.g, g_source='explicit')
    return SampleConfig(N=s.N, samples=s.samples, seed=s.seed,
                        g=tuple(quantile_g_list(cfg.measure, s.N)), g_source=cfg.measure.describe())


def _reference_measure(cfg: RunConfig) -> GSpectrum:
    """Limiting g measure of the simulated ensemble: the explicit sample.g list when given"""
    if cfg.sample is not None and cfg.sample.g is not None:
        return GSpectrum.from_values(cfg.sample.g)
    return discretize(cfg.measure)


def _exact_ensemble(cfg: RunConfig, N: int):
    if cfg.sample is not None and cfg.sample.g is not None:
        return ensemble_from_measure(GSpectrum.from_values(cfg.sample.g), N)
    return ensemble_from_measure(cfg.measure, N)


def _config_echo(cfg: RunConfig) -> Dict[str, Any]:
    echo = dict(cfg.raw)
    echo['output'] = cfg.output
    echo['threads'] = cfg.threads
    return echo


def run_bounds(cfg: RunConfig, output: OutputDirectory, stdout=None) -> Dict[str, Any]:
    bounds = annulus(discretize(cfg.measure)).as_dict()
    print(json.dumps(bounds), file=stdout or sys.stdout)
    return bounds


def run_asymptotic(cfg: RunConfig, output: OutputDirectory, stdout=None) -> Dict[str, Any]:
    m = discretize(cfg.measure)
    solution = tabulate(m, cfg.grid, cfg.threads)
    output.write_csv('radial_solution.csv', ['r', 's', 'y', 'rho_s', 'nu_area'], solution.rows())
    summary = {
        'bounds': solution.bounds.as_dict(),
        'atom_at_zero': solution.atom_at_zero,
        'total_mass': solution.total_mass(),
        'boundary_points': int(solution.boundary.sum()),
    }
    logger.info(f"Asymptotic summary: {summary}")
    return summary


def run_exact(cfg: RunConfig, output: OutputDirectory, stdout=None) -> Dict[str, Any]:
    N = _require_ensemble_size(cfg)
    m = _reference_measure(cfg)
    e = _exact_ensemble(cfg, N)
    radii = cfg.grid.radii(annulus(m))

    rows = []
    for r in radii:
        s = float(r) * float(r)
        if s < e.g[0]:
            rows.append((s, 0.0))
            continue
        try:
            rows.append((s, exact_density(e, s, cfg.quad)))
        except PoleError:
            logger.warning(f"Skipping s = {s}: coincides with an ensemble g value")
    output.write_csv('exact_density.csv', ['s', 'density'], rows)

    summary = {'N': N, 'normalization': normalization_check(e, cfg.quad), 'points': len(rows)}
    print(json.dumps(summary), file=sys.stderr)
    return summary


def run_sample(cfg: RunConfig, output: OutputDirectory, stdout=None) -> Dict[str, Any]:
    es = sample_moduli(_sample_config(cfg), cfg.threads)
    write_sample(es, output, __version__)
    summary = {'count': es.count, 'zero_fraction': es.zero_fraction, 'flagged': es.flagged}
    logger.info(f"Sample summary: {summary}")
    return summary


def run_compare(cfg: RunConfig, output: OutputDirectory, stdout=None) -> Dict[str, Any]:
    """
    Run every applicable route on one grid and write compare_report.json + compare_table.csv

    The exact route is skipped (and flagged) when no N is configured, N exceeds
    the exact budget, or the route fails; the sample route runs when a sample
    section is present.

    With an explicit sample.g the exact ensemble and the KS reference follow
    that list; the asymptotic table keeps the document measure.
    """
    m = discretize(cfg.measure)
    solution = tabulate(m, cfg.grid, cfg.threads)
    reference = _reference_measure(cfg)
    table_grid = replace(cfg.grid, r_min=float(solution.r[0]), r_max=float(solution.r[-1]))
    routes: Dict[str, Dict[str, Any]] = {'asymptotic': {'ran': True}}
    metrics: Dict[str, Optional[float]] = {
        'sup_cdf_exact_vs_asymptotic': None,
        'ks_empirical_vs_asymptotic': None,
        'saddle_max_relative_error': None,
        'exact_normalization': None,
    }

    interior = [float(s) for s, flag in zip(solution.s, solution.boundary) if not flag]
    if interior:
        metrics['saddle_max_relative_error'] = max(saddle_identity(m, s).relative_error for s in interior)

    y_exact = [None] * len(solution.r)
    N = cfg.ensemble_size
    if N is None:
        routes['exact'] = {'ran': False, 'reason': 'no exact.N or sample.N configured'}
    elif N > Config.EXACT_MAX_N:
        routes['exact'] = {'ran': False, 'reason': f"N = {N} exceeds the exact budget {Config.EXACT_MAX_N}"}
    else:
        try:
            ensemble = _exact_ensemble(cfg, N)
            comparison = exact_cdf_vs_asymptotic(ensemble, reference, table_grid, cfg.quad, cfg.threads)
            metrics['sup_cdf_exact_vs_asymptotic'] = comparison.sup_distance
            metrics['exact_normalization'] = normalization_check(ensemble, cfg.quad)
            y_exact = comparison.y_exact.tolist()
            routes['exact'] = {'ran': True, 'N': N}
        except RingLawError as error:
            routes['exact'] = {'ran': False, 'reason': str(error), 'error_type': type(error).__name__}
    if not routes['exact']['ran']:
        logger.warning(f"Exact route not run: {routes['exact']['reason']}")

    y_empirical = [None] * len(solution.r)
    if cfg.sample is not None:
        es = sample_moduli(_sample_config(cfg), cfg.threads)
        metrics['ks_empirical_vs_asymptotic'] = ks_distance(es, reference, cfg.threads)
        y_empirical = [empirical_cdf(es, float(r)) for r in solution.r]
        routes['sample'] = {'ran': True, 'count': es.count, 'zero_fraction': es.zero_fraction,
                            'excluded_samples': list(es.excluded)}
    else:
        routes['sample'] = {'ran': False, 'reason': 'no sample section configured'}

    table = [
        {'r': float(r), 'y_asymptotic': float(y), 'rho_s': float(rho), 'nu_area': float(nu),
         'y_exact': ye, 'y_empirical': yemp}
        for r, y, rho, nu, ye, yemp in zip(solution.r, solution.y, solution.rho_s, solution.nu_area,
                                          y_exact, y_empirical)
    ]
    report = CompareReport(
        bounds=solution.bounds.as_dict(), table=table, metrics=metrics, routes=routes,
        provenance={'config': _config_echo(cfg), 'version': __version__,
                    'measure': cfg.measure.describe(),
                    'reference_measure': 'sample.g' if cfg.sample is not None and cfg.sample.g is not None
                    else cfg.measure.describe()},
    )
    output.write_json('compare_report.json', report.to_dict())
    output.write_csv('compare_table.csv', list(CompareReport.TABLE_COLUMNS), report.table_rows())
    logger.info(f"Compare metrics: {metrics}")
    return {'metrics': metrics, 'routes': routes}


HANDLERS = {
    'bounds': run_bounds,
    'asymptotic': run_asymptotic,
    'exact': run_exact,
    'sample': run_sample,
    'compare': run_compare,
}


def run(command: str, cfg: RunConfig, stdout=None, stderr=None) -> int:
    """
    Execute one command; on failure remove its partial outputs and print the
    diagnostic JSON to stderr

    Returns:
        int: 0 on success, 1 on validation error, 2 on numerical failure
    """
    if command not in HANDLERS:
        raise ConfigurationError(f"unknown command {command!r}", [f"command: one of {', '.join(COMMANDS)}"])
    output = OutputDirectory(cfg.output)
    logger.info(f"Running {command} for {cfg.measure.describe()}")
    exit_code, payload = with_error_handling(command)(HANDLERS[command])(cfg, output, stdout)
    if exit_code != EXIT_OK:
        output.cleanup()
        print(json.dumps(payload, indent=2), file=stderr or sys.stderr)
    return exit_code


def validate(raw: Any) -> List[str]:
    """Violations of a decoded run document; never raises"""
    try:
        return validate_run_config(raw)
    except Exception as e:
        return [f"config: {e}"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ringlaw', description='Spectral density of sub-unitary ensembles T = UH')
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('command', choices=COMMANDS + ('validate',))
    parser.add_argument('--config', required=True, help='JSON run document')
    parser.add_argument('--output', help='output directory (overrides the document)')
    parser.add_argument('--threads', type=int, help='worker threads, 0 = one per CPU (overrides the document)')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        settings = get_config()
        configure_logging(settings.LOG_LEVEL)
        settings.validate_config()
        if args.command == 'validate':
            with open(args.config, encoding='utf-8') as handle:
                violations = validate(json.load(handle))
            for violation in violations:
                print(violation)
            return EXIT_VALIDATION if violations else EXIT_OK
        cfg = load_run_config(args.config, output=args.output, threads=args.threads, settings=settings)
    except (ValueError, OSError) as e:
        configure_logging(Config.LOG_LEVEL)
        payload = error_handler.handle_command_error(args.command, e, {'config': args.config})
        payload['exit_code'] = EXIT_VALIDATION
        print(json.dumps(payload, indent=2), file=sys.stderr)
        return EXIT_VALIDATION

    return run(args.command, cfg)


if __name__ == '__main__':
    sys.exit(main())
