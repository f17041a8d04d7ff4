import json
import math

import pytest

from ringlaw import app
from ringlaw.services.errors import NumericalError
from ringlaw.services.report import read_csv

TRUNCATED = {'kind': 'truncated', 'mu': 0.5}
UNIFORM = {'kind': 'uniform', 'a': 0.1, 'b': 0.9, 'points': 16}


def json_lines(text):
    """Single-line JSON objects printed to a stream"""
    found = []
    for line in text.splitlines():
        if line.startswith('{'):
            try:
                found.append(json.loads(line))
            except json.JSONDecodeError:
                pass
    return found


class TestBounds:
    def test_prints_annulus(self, write_config, tmp_path, capsys):
        out_dir = tmp_path / 'out'
        code = app.main(['bounds', '--config', write_config({'measure': TRUNCATED}), '--output', str(out_dir)])
        assert code == 0
        bounds = json.loads(capsys.readouterr().out)
        assert bounds['r_inner'] == 0.0
        assert bounds['r_outer'] == pytest.approx(math.sqrt(0.5))
        assert not out_dir.exists()

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            app.main(['--version'])
        assert excinfo.value.code == 0
        assert '1.0.0' in capsys.readouterr().out


class TestAsymptotic:
    def test_radial_solution_csv(self, write_config, tmp_path):
        out_dir = tmp_path / 'out'
        document = {'measure': TRUNCATED, 'grid': {'points': 31}, 'output': str(out_dir), 'threads': 1}
        assert app.main(['asymptotic', '--config', write_config(document)]) == 0

        rows = read_csv(out_dir / 'radial_solution.csv')
        assert len(rows) == 31
        assert list(rows[0]) == ['r', 's', 'y', 'rho_s', 'nu_area']
        for row in rows:
            s = float(row['s'])
            assert float(row['y']) == pytest.approx(min(max(0.5 / (1.0 - s), 0.5), 1.0), abs=1e-10)

    def test_output_flag_overrides_document(self, write_config, tmp_path):
        document = {'measure': TRUNCATED, 'grid': {'points': 5}, 'output': str(tmp_path / 'ignored')}
        assert app.main(['asymptotic', '--config', write_config(document), '--output', str(tmp_path / 'cli')]) == 0
        assert (tmp_path / 'cli' / 'radial_solution.csv').exists()
        assert not (tmp_path / 'ignored').exists()


class TestExact:
    def test_density_and_normalization(self, write_config, tmp_path, capsys):
        out_dir = tmp_path / 'out'
        document = {'measure': UNIFORM, 'exact': {'N': 8}, 'grid': {'points': 21}, 'output': str(out_dir)}
        assert app.main(['exact', '--config', write_config(document)]) == 0

        rows = read_csv(out_dir / 'exact_density.csv')
        assert len(rows) == 21
        assert all(float(row['density']) >= -1e-10 for row in rows)

        summaries = [item for item in json_lines(capsys.readouterr().err) if 'normalization' in item]
        assert summaries[-1]['N'] == 8
        assert summaries[-1]['normalization'] == pytest.approx(1.0, abs=1e-6)

    def test_explicit_g_list_defines_the_ensemble(self, write_config, tmp_path, capsys):
        out_dir = tmp_path / 'out'
        document = {'measure': TRUNCATED, 'grid': {'points': 21}, 'output': str(out_dir),
                    'sample': {'N': 2, 'samples': 1, 'seed': 0, 'g': [0.3, 0.9]}}
        assert app.main(['exact', '--config', write_config(document)]) == 0

        rows = read_csv(out_dir / 'exact_density.csv')
        assert len(rows) == 21
        for row in rows:
            s = float(row['s'])
            assert 0.3 < s < 0.9
            assert float(row['density']) == pytest.approx((1.0 + 0.27 / s ** 2) / 1.2, rel=1e-8)
        summaries = [item for item in json_lines(capsys.readouterr().err) if 'normalization' in item]
        assert summaries[-1]['normalization'] == pytest.approx(1.0, abs=1e-6)

    def test_missing_ensemble_size(self, write_config, tmp_path):
        document = {'measure': UNIFORM, 'output': str(tmp_path / 'out')}
        assert app.main(['exact', '--config', write_config(document)]) == 1

    def test_numerical_failure_removes_outputs(self, write_config, tmp_path, monkeypatch, capsys):
        def broken(*args, **kwargs):
            raise NumericalError("forced failure", {'stage': 'normalization'})

        monkeypatch.setattr(app, 'normalization_check', broken)
        out_dir = tmp_path / 'out'
        document = {'measure': UNIFORM, 'exact': {'N': 4}, 'grid': {'points': 11}, 'output': str(out_dir)}
        assert app.main(['exact', '--config', write_config(document)]) == 2

        assert not (out_dir / 'exact_density.csv').exists()
        err = capsys.readouterr().err
        assert '"error_type": "NumericalError"' in err
        assert '"exit_code": 2' in err


class TestSample:
    def test_files(self, write_config, tmp_path):
        out_dir = tmp_path / 'out'
        document = {'measure': TRUNCATED, 'sample': {'N': 8, 'samples': 5, 'seed': 3}, 'output': str(out_dir)}
        assert app.main(['sample', '--config', write_config(document)]) == 0

        assert len(read_csv(out_dir / 'moduli.csv')) == 40
        provenance = json.loads((out_dir / 'moduli.provenance.json').read_text(encoding='utf-8'))
        assert provenance['seed'] == 3
        assert provenance['zero_fraction'] == pytest.approx(0.5, abs=1e-12)

    def test_identical_across_thread_counts(self, write_config, tmp_path):
        path = write_config({'measure': UNIFORM, 'sample': {'N': 16, 'samples': 12, 'seed': 99}})
        for threads in ('1', '4'):
            assert app.main(['sample', '--config', path, '--output', str(tmp_path / threads),
                             '--threads', threads]) == 0
        assert (tmp_path / '1' / 'moduli.csv').read_bytes() == (tmp_path / '4' / 'moduli.csv').read_bytes()


class TestValidation:
    def test_invalid_document_exits_one_without_files(self, write_config, tmp_path, capsys):
        out_dir = tmp_path / 'out'
        document = {'measure': {'kind': 'truncated', 'mu': 1.5}, 'output': str(out_dir)}
        assert app.main(['asymptotic', '--config', write_config(document)]) == 1

        assert not out_dir.exists()
        err = capsys.readouterr().err
        assert '"violations"' in err
        assert "measure.mu: mu must be in (0,1)" in err

    def test_unreadable_config(self, tmp_path):
        assert app.main(['bounds', '--config', str(tmp_path / 'absent.json')]) == 1

    def test_validate_command(self, write_config, capsys):
        assert app.main(['validate', '--config', write_config({'measure': TRUNCATED})]) == 0
        assert capsys.readouterr().out == ''

        bad = write_config({'measure': TRUNCATED, 'threads': -1, 'extra': 1}, name='bad.json')
        assert app.main(['validate', '--config', bad]) == 1
        printed = capsys.readouterr().out.splitlines()
        assert "extra: unknown key" in printed
        assert "threads: integer >= 0 required (0 = auto)" in printed

    def test_validate_never_raises(self):
        assert app.validate("not a document") == ["config: JSON object required"]


class TestCompare:
    def test_exact_route_skipped_without_n(self, write_config, tmp_path):
        out_dir = tmp_path / 'out'
        document = {'measure': TRUNCATED, 'grid': {'points': 21}, 'output': str(out_dir)}
        assert app.main(['compare', '--config', write_config(document)]) == 0

        report = json.loads((out_dir / 'compare_report.json').read_text(encoding='utf-8'))
        assert report['routes']['exact']['ran'] is False
        assert report['routes']['sample']['ran'] is False
        assert report['metrics']['sup_cdf_exact_vs_asymptotic'] is None
        assert report['metrics']['saddle_max_relative_error'] <= 1e-8
        assert len(report['table']) == 21

        rows = read_csv(out_dir / 'compare_table.csv')
        assert list(rows[0]) == ['r', 'y_asymptotic', 'rho_s', 'nu_area', 'y_exact', 'y_empirical']
        assert rows[0]['y_exact'] == ''

    def test_explicit_g_list_is_the_ks_reference(self, write_config, tmp_path):
        out_dir = tmp_path / 'out'
        document = {'measure': TRUNCATED, 'grid': {'points': 11}, 'output': str(out_dir),
                    'sample': {'N': 8, 'samples': 4, 'seed': 3, 'g': [1.0] * 8}}
        assert app.main(['compare', '--config', write_config(document)]) == 0

        report = json.loads((out_dir / 'compare_report.json').read_text(encoding='utf-8'))
        # unitary T: every modulus sits on the unit circle, exactly the law of g = 1
        assert report['metrics']['ks_empirical_vs_asymptotic'] == 0.0
        assert report['provenance']['reference_measure'] == 'sample.g'
        assert report['routes']['sample']['count'] == 32
        assert 'ran' in report['routes']['exact']

    def test_same_config_same_report(self, write_config, tmp_path):
        out_dir = tmp_path / 'out'
        document = {'measure': UNIFORM, 'grid': {'points': 11}, 'sample': {'N': 8, 'samples': 4, 'seed': 5},
                    'output': str(out_dir)}
        path = write_config(document)
        assert app.main(['compare', '--config', path]) == 0
        first = (out_dir / 'compare_report.json').read_bytes()
        assert app.main(['compare', '--config', path, '--threads', '3']) == 0
        second = json.loads((out_dir / 'compare_report.json').read_text(encoding='utf-8'))
        assert second['metrics'] == json.loads(first)['metrics']
        assert second['table'] == json.loads(first)['table']

    @pytest.mark.slow
    def test_all_metrics(self, write_config, tmp_path):
        out_dir = tmp_path / 'out'
        document = {
            'measure': {'kind': 'uniform', 'a': 0.1, 'b': 0.9},
            'grid': {'points': 41},
            'sample': {'N': 32, 'samples': 50, 'seed': 7},
            'output': str(out_dir),
        }
        assert app.main(['compare', '--config', write_config(document)]) == 0

        report = json.loads((out_dir / 'compare_report.json').read_text(encoding='utf-8'))
        metrics = report['metrics']
        assert all(value is not None for value in metrics.values())
        assert metrics['exact_normalization'] == pytest.approx(1.0, abs=1e-6)
        assert metrics['sup_cdf_exact_vs_asymptotic'] <= 0.2
        assert report['routes']['exact'] == {'ran': True, 'N': 32}
        assert report['provenance']['config']['sample']['seed'] == 7


class TestEnvironment:
    def test_testing_environment_runs_serially(self, write_config, tmp_path, monkeypatch):
        monkeypatch.setenv('RINGLAW_ENV', 'testing')
        out_dir = tmp_path / 'out'
        assert app.main(['compare', '--config', write_config({'measure': TRUNCATED, 'grid': {'points': 11},
                                                              'output': str(out_dir)})]) == 0
        report = json.loads((out_dir / 'compare_report.json').read_text(encoding='utf-8'))
        assert report['provenance']['config']['threads'] == 1

    def test_unknown_environment(self, write_config, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv('RINGLAW_ENV', 'staging')
        assert app.main(['bounds', '--config', write_config({'measure': TRUNCATED})]) == 1
        assert "RINGLAW_ENV" in capsys.readouterr().err
