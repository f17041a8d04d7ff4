"""
Error types and centralized error handling for the ring-law toolkit
Library code raises the exceptions below; only the CLI turns them into exit codes
"""

import logging
from datetime import datetime
from typing import Any, Callable, Dict, Optional

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class RingLawError(Exception):
    """Base class for every error raised by the toolkit"""

    error_code = 'RINGLAW_ERROR'

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigurationError(RingLawError, ValueError):
    """Run configuration or input file is malformed"""

    error_code = 'INVALID_CONFIG'

    def __init__(self, message: str, violations: Optional[list] = None):
        super().__init__(message, {'violations': list(violations or [])})
        self.violations = list(violations or [])


class DomainError(RingLawError, ValueError):
    """An argument lies outside the domain of the operation"""

    error_code = 'DOMAIN_VIOLATION'


class NumericalError(RingLawError, ArithmeticError):
    """A numerical procedure failed to produce a trustworthy answer"""

    error_code = 'NUMERICAL_FAILURE'


class RootFindingError(NumericalError):
    error_code = 'ROOT_NOT_FOUND'


class QuadratureError(NumericalError):
    error_code = 'QUADRATURE_NOT_CONVERGED'


class PoleError(NumericalError):
    error_code = 'POLE_COINCIDENCE'


class SamplingError(NumericalError):
    error_code = 'SAMPLING_FAILURE'


class ErrorHandler:
    """Maps exceptions raised during a command onto exit codes and diagnostic payloads"""

    def __init__(self):
        self.error_counts: Dict[str, int] = {}

    def handle_command_error(self, command: str, error: Exception,
                             context: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        Build the standardized diagnostic payload for a failed command

        Args:
            command: CLI command that was running
            error: The exception that occurred
            context: Additional context (config echo, grid index, ...)

        Returns:
            dict: Diagnostic payload, JSON-serializable
        """
        error_key = f"{command}_{type(error).__name__}"
        self.error_counts[error_key] = self.error_counts.get(error_key, 0) + 1

        exit_code = self.exit_code_for(error)
        logger.error(f"Command {command} failed ({type(error).__name__}): {error}")

        payload = {
            'status': 'error',
            'command': command,
            'error_type': type(error).__name__,
            'error_code': getattr(error, 'error_code', 'UNEXPECTED_ERROR'),
            'message': str(error),
            'exit_code': exit_code,
            'error_count': self.error_counts[error_key],
            'diagnostics': _jsonable(getattr(error, 'diagnostics', {})),
            'context': _jsonable(context or {}),
            'timestamp': datetime.now().isoformat()
        }
        return payload

    @staticmethod
    def exit_code_for(error: Exception) -> int:
        if isinstance(error, (ConfigurationError, DomainError)):
            return EXIT_VALIDATION
        if isinstance(error, NumericalError):
            return EXIT_NUMERICAL
        # anything unexpected is reported as a numerical failure of the run
        return EXIT_NUMERICAL

    def reset_error_count(self, command: str):
        """Reset error counts for a command after it succeeds"""
        for key in [key for key in self.error_counts if key.startswith(f"{command}_")]:
            del self.error_counts[key]


error_handler = ErrorHandler()


def with_error_handling(command: str) -> Callable:
    """Decorator: run a command handler, returning (exit_code, payload)"""
    def decorator(func):
        def wrapper(*args, **kwargs):
            try:
                payload = func(*args, **kwargs)
                error_handler.reset_error_count(command)
                return EXIT_OK, payload
            except Exception as e:
                return error_handler.exit_code_for(e), error_handler.handle_command_error(
                    command, e, {'function': func.__name__})
        wrapper.__name__ = func.__name__
        wrapper.__doc__ = func.__doc__
        return wrapper
    return decorator


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (str, int, bool)) or value is None:
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)
