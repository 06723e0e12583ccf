"""Shared test oracles."""

import numpy as np

from accelmin.core import BlockPartition, Oracle


class HalfQuadOracle(Oracle):
    """f(z) = 0.5 z^T H z - c^T z for symmetric PSD H (test helper)."""

    def __init__(self, H, c=None, partition=None):
        H = np.asarray(H, dtype=float)
        super().__init__(H.shape[0])
        self.H = H
        self.c = np.zeros(H.shape[0]) if c is None else np.asarray(c, dtype=float)
        self.partition = partition
        eigs = np.linalg.eigvalsh(H)
        self.known_L = float(eigs.max())
        self.known_mu = float(max(eigs.min(), 0.0))

    def _value(self, z):
        return 0.5 * float(z @ (self.H @ z)) - float(self.c @ z)

    def _gradient(self, z):
        return self.H @ z - self.c

    def solution(self):
        return np.linalg.solve(self.H, self.c)

    def f_star(self):
        s = self.solution()
        return self._value(s)


class RayMinOracle(HalfQuadOracle):
    """Single-block oracle whose 'block minimization' is an exact ray search
    along the negative gradient (closed form for quadratics)."""

    def __init__(self, H, c=None):
        super().__init__(H, c, partition=BlockPartition.single(np.asarray(H).shape[0]))

    def _block_minimize(self, z, i):
        g = self._gradient(z)
        gHg = float(g @ (self.H @ g))
        if gHg <= 0.0:
            return z.copy()
        h = float(g @ g) / gHg
        return z - h * g


class ZeroOracle(Oracle):
    """f identically zero."""

    def _value(self, z):
        return 0.0

    def _gradient(self, z):
        return np.zeros_like(z)
