'''
Error types raised by the neutron transport engine.
'''


class NeutronTransportError(Exception):
    pass


class DomainError(NeutronTransportError, ValueError):
    '''
    A position lies outside the (closure of the) spatial domain.
    '''


class ConfigError(NeutronTransportError, ValueError):
    '''
    Invalid configuration. The dotted key path is kept when known.

    Attributes:
    key (str | None): Offending configuration key, e.g. "materials[2].region".
    '''

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message if key is None else f'{key}: {message}')
        self.key = key


class OutOfLifeError(NeutronTransportError, ValueError):
    '''
    A path was queried at or after its terminal time.
    '''


class SingularRateError(NeutronTransportError, ArithmeticError):
    '''
    The h-function vanished at an interior evaluation point.
    '''


class RateBoundError(NeutronTransportError, ArithmeticError):
    '''
    A jump rate exceeded the thinning bound its rate model declared.
    '''


class PopulationCapError(NeutronTransportError, RuntimeError):
    '''
    The branching population exceeded the hard cap.

    Attributes:
    forest (NbpForest): Partial forest, flagged invalid.
    '''

    def __init__(self, message: str, forest=None):
        super().__init__(message)
        self.forest = forest


class ExtinctionError(NeutronTransportError, RuntimeError):
    '''
    Every particle carries zero weight.

    Attributes:
    trace (pandas.DataFrame | None): Particle-filter trace up to the extinction.
    '''

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
