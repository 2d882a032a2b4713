"""Jerarquía de errores del paquete.

Todas las clases heredan de ValueError para que los llamadores que ya
capturan ValueError sigan funcionando.
"""


class SobolevError(ValueError):
    """Error base de las normas de Sobolev negativas."""


class DomainError(SobolevError):
    """Argumento fuera del dominio de la operación (t <= 0, r < 0, ...)."""


class DensityUndefinedError(SobolevError):
    def __init__(self, message="density undefined: the model has atoms and s = 0"):
        super().__init__(message)


class DivergentIntegralError(SobolevError):
    pass


class DeltaNotInSpaceError(SobolevError):
    def __init__(self, message="delta not in space: alpha <= d/q"):
        super().__init__(message)


class MuNotInHError(SobolevError):
    def __init__(self, message="mu not in H^{-alpha}: need eps > 0 or alpha > d/2"):
        super().__init__(message)


class QuadratureOverflowError(SobolevError):
    def __init__(self, t):
        self.t = float(t)
        super().__init__(f"quadrature overflow at t={self.t:.3e}")


class InsufficientSampleError(SobolevError):
    def __init__(self, n_samples, required):
        self.n_samples = n_samples
        self.required = required
        super().__init__(f"insufficient sample: {n_samples} draws, need at least {required}")


class DegenerateFitError(SobolevError):
    pass


class ReplicaError(SobolevError):
    """Una réplica falló; conserva la semilla para poder reproducirla."""

    def __init__(self, n, replica, seed, cause):
        self.n = n
        self.replica = replica
        self.seed = seed
        self.cause = cause
        super().__init__(f"replica failed (N={n}, replica={replica}, seed={seed}): {cause}")


class ConfigError(SobolevError):
    def __init__(self, message, path=None, key=None):
        self.path = path
        self.key = key
        where = []
        if path is not None:
            where.append(f"config={path}")
        if key is not None:
            where.append(f"key={key}")
        suffix = f" [{', '.join(where)}]" if where else ""
        super().__init__(f"{message}{suffix}")


class SchemaVersionError(ConfigError):
    pass
