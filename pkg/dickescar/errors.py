"""Exception hierarchy; every error carries the code used in controller envelopes"""

from typing import Any, Dict


class DickeScarError(Exception):
    """Base error"""
    code = "INTERNAL_ERROR"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_envelope(self) -> Dict[str, Any]:
        return {
            'success': False,
            'error': {
                'code': self.code,
                'message': self.message
            }
        }


class ConfigError(DickeScarError):
    """Invalid run configuration or CLI selection"""
    code = "CONFIG_ERROR"


class DomainError(DickeScarError, ValueError):
    """Physics input outside the admissible domain"""
    code = "DOMAIN_ERROR"


class NumericalError(DickeScarError):
    """A numerical procedure failed"""
    code = "NUMERICAL_FAILURE"


class IntegrationError(NumericalError):
    """The ODE integrator could not complete the requested span"""
    code = "INTEGRATION_FAILED"


class EmptyWindowError(NumericalError):
    """Not enough eigenstates or shell points to build the requested object"""
    code = "EMPTY_WINDOW"


class NewtonDivergenceError(NumericalError):
    """Newton residual grew on consecutive iterations or hit max_iter"""
    code = "NEWTON_DIVERGED"


class SingularNewtonError(NumericalError):
    """Newton system is rank deficient (typically near a bifurcation)"""
    code = "NEWTON_SINGULAR"


# Codes that map to exit status 3
NUMERICAL_CODES = {
    DomainError.code,
    NumericalError.code,
    IntegrationError.code,
    EmptyWindowError.code,
    NewtonDivergenceError.code,
    SingularNewtonError.code,
}
