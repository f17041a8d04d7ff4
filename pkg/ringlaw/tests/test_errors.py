import json

import numpy as np
import pytest

from ringlaw.services.errors import (EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, ConfigurationError, DomainError,
                                     ErrorHandler, NumericalError, PoleError, QuadratureError, RootFindingError,
                                     SamplingError, _jsonable, error_handler, with_error_handling)


class Opaque:
    def __str__(self):
        return 'opaque'


class TestExitCodes:
    @pytest.mark.parametrize('error, code', [
        (ConfigurationError("bad", ["grid.points: integer >= 2 required"]), EXIT_VALIDATION),
        (DomainError("s outside (0, g_N)"), EXIT_VALIDATION),
        (NumericalError("failed"), EXIT_NUMERICAL),
        (RootFindingError("no sign change"), EXIT_NUMERICAL),
        (QuadratureError("not converged"), EXIT_NUMERICAL),
        (PoleError("s equals g_i"), EXIT_NUMERICAL),
        (SamplingError("not unitary"), EXIT_NUMERICAL),
        (RuntimeError("unexpected"), EXIT_NUMERICAL),
    ])
    def test_mapping(self, error, code):
        assert ErrorHandler.exit_code_for(error) == code

    def test_configuration_error_is_value_error(self):
        error = ConfigurationError("invalid", ["measure: required"])
        assert isinstance(error, ValueError)
        assert error.violations == ["measure: required"]
        assert error.diagnostics == {'violations': ["measure: required"]}


class TestErrorHandler:
    def test_payload(self):
        handler = ErrorHandler()
        error = PoleError("s coincides with an atom", {'s': np.float64(0.5), 'index': 3})
        payload = handler.handle_command_error('exact', error, {'grid_index': 7})

        assert payload['status'] == 'error'
        assert payload['command'] == 'exact'
        assert payload['error_type'] == 'PoleError'
        assert payload['error_code'] == 'POLE_COINCIDENCE'
        assert payload['message'] == "s coincides with an atom"
        assert payload['exit_code'] == EXIT_NUMERICAL
        assert payload['error_count'] == 1
        assert payload['diagnostics'] == {'s': 0.5, 'index': 3}
        assert payload['context'] == {'grid_index': 7}
        json.dumps(payload)

    def test_unexpected_error_code(self):
        payload = ErrorHandler().handle_command_error('bounds', KeyError('mu'))
        assert payload['error_code'] == 'UNEXPECTED_ERROR'
        assert payload['diagnostics'] == {}

    def test_counts_and_reset(self):
        handler = ErrorHandler()
        handler.handle_command_error('sample', SamplingError("x"))
        second = handler.handle_command_error('sample', SamplingError("x"))
        handler.handle_command_error('exact', SamplingError("x"))
        assert second['error_count'] == 2

        handler.reset_error_count('sample')
        assert handler.error_counts == {'exact_SamplingError': 1}


class TestWithErrorHandling:
    def setup_method(self):
        error_handler.error_counts.clear()

    def test_success(self):
        @with_error_handling('bounds')
        def run_bounds(value):
            """Docstring survives"""
            return {'value': value}

        assert run_bounds(3) == (EXIT_OK, {'value': 3})
        assert run_bounds.__name__ == 'run_bounds'
        assert run_bounds.__doc__ == "Docstring survives"

    def test_failure(self):
        @with_error_handling('exact')
        def run_exact():
            raise DomainError("N must be at least 1")

        code, payload = run_exact()
        assert code == EXIT_VALIDATION
        assert payload['context'] == {'function': 'run_exact'}
        assert payload['error_code'] == 'DOMAIN_VIOLATION'

    def test_success_resets_count(self):
        calls = {'fail': True}

        @with_error_handling('sample')
        def run_sample():
            if calls['fail']:
                raise SamplingError("rank")
            return {}

        run_sample()
        assert error_handler.error_counts == {'sample_SamplingError': 1}
        calls['fail'] = False
        run_sample()
        assert error_handler.error_counts == {}


class TestJsonable:
    def test_nested(self):
        value = {'a': (1, np.float64(0.25)), 2: [None, True, 'x'], 'o': Opaque()}
        assert _jsonable(value) == {'a': [1, 0.25], '2': [None, True, 'x'], 'o': 'opaque'}

    def test_numpy_integer_becomes_float(self):
        assert _jsonable(np.int64(4)) == 4.0
