"""Exponential-integrator toolbox: phi functions and the per-mode 2x2 flow.

The density / curl-free-velocity coupling reduces per Fourier mode to

    d/dt [a, v] = M(k) [a, v],      M(k) = [[0, -k], [alpha*k, -nu*k**2]],

whose eigenvalues are ``(-nu k^2 +/- sqrt(nu^2 k^4 - 4 alpha k^2)) / 2``:
damped-oscillatory below ``k = 2 sqrt(alpha)/nu``, overdamped above, with a
defective (Jordan) matrix exactly at the crossover.  :class:`PairPropagator`
evaluates analytic functions of ``t*M(k)`` over a whole lattice of ``k``
values at once, handling the defective set by the derivative formula.

``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2`` are the kernels
of the second-order exponential time stepper: with exact phi's the step is
exact for forcing that is affine in time.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "phi1",
    "phi2",
    "phi1_prime",
    "phi2_prime",
    "PairPropagator",
    "pair_matrix",
    "pair_eigenvalues",
]

_SERIES_RADIUS = 1e-3


def _series(z: np.ndarray, coeffs: list[float]) -> np.ndarray:
    out = np.zeros_like(z)
    for c in reversed(coeffs):
        out = out * z + c
    return out


def _eval_piecewise(z, direct, series_coeffs):
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_RADIUS
    safe = np.where(small, 1.0, z)
    out = direct(safe)
    return np.where(small, _series(z, series_coeffs), out)


def phi1(z):
    """(e^z - 1)/z, series near 0 to avoid cancellation."""
    return _eval_piecewise(
        z,
        lambda w: (np.exp(w) - 1.0) / w,
        [1.0, 1 / 2, 1 / 6, 1 / 24, 1 / 120, 1 / 720],
    )


def phi2(z):
    """(e^z - 1 - z)/z^2, series near 0."""
    return _eval_piecewise(
        z,
        lambda w: (np.exp(w) - 1.0 - w) / w**2,
        [1 / 2, 1 / 6, 1 / 24, 1 / 120, 1 / 720, 1 / 5040],
    )


def phi1_prime(z):
    """d/dz phi1."""
    return _eval_piecewise(
        z,
        lambda w: ((w - 1.0) * np.exp(w) + 1.0) / w**2,
        [1 / 2, 1 / 3, 1 / 8, 1 / 30, 1 / 144],
    )


def phi2_prime(z):
    """d/dz phi2."""
    return _eval_piecewise(
        z,
        lambda w: ((w - 2.0) * np.exp(w) + w + 2.0) / w**3,
        [1 / 6, 1 / 12, 1 / 40, 1 / 180, 1 / 1008],
    )


def _phi0(z):
    return np.exp(np.asarray(z, dtype=complex))


def _phi0_prime(z):
    return np.exp(np.asarray(z, dtype=complex))


_FUNCS = {
    "exp": (_phi0, _phi0_prime),
    "phi1": (phi1, phi1_prime),
    "phi2": (phi2, phi2_prime),
}


def pair_matrix(k: float, alpha: float, nu: float) -> np.ndarray:
    """The 2x2 coupling matrix at frequency magnitude ``k``."""
    return np.array([[0.0, -k], [alpha * k, -nu * k**2]])


def pair_eigenvalues(k, alpha: float, nu: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalue pair (plus, minus branch) of the coupling matrix."""
    k = np.asarray(k, dtype=float)
    disc = (nu * k**2) ** 2 - 4.0 * alpha * k**2
    root = np.sqrt(disc.astype(complex))
    lam_p = 0.5 * (-nu * k**2 + root)
    lam_m = 0.5 * (-nu * k**2 - root)
    return lam_p, lam_m


class PairPropagator:
    """Analytic functions of ``t * M(k)`` vectorised over a lattice of ``k``.

    Defective modes (discriminant below ``degeneracy_rtol * (nu k^2)^2``,
    including k = 0) use ``f(tM) = f(t lam) I + t f'(t lam) (M - lam I)``.
    """

    def __init__(self, k: np.ndarray, alpha: float, nu: float, degeneracy_rtol: float = 1e-12):
        if alpha <= 0 or nu <= 0:
            raise ValueError("alpha and nu must be positive")
        self.k = np.asarray(k, dtype=float)
        self.alpha = alpha
        self.nu = nu
        k2 = self.k**2
        self._disc = (nu * k2) ** 2 - 4.0 * alpha * k2
        self._degenerate = np.abs(self._disc) < degeneracy_rtol * np.maximum((nu * k2) ** 2, 1e-300)
        self._degenerate |= self.k == 0.0
        self._lam_p, self._lam_m = pair_eigenvalues(self.k, alpha, nu)

    def matfunc(self, fname: str, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Entries ``(F00, F01, F10, F11)`` of ``f(t M(k))`` (real arrays)."""
        f, fprime = _FUNCS[fname]
        k = self.k
        alpha, nu = self.alpha, self.nu
        lam_p, lam_m = self._lam_p, self._lam_m

        with np.errstate(invalid="ignore", divide="ignore"):
            fp = f(t * lam_p)
            fm = f(t * lam_m)
            denom = lam_p - lam_m
            denom_safe = np.where(self._degenerate, 1.0, denom)
            diff = (fp - fm) / denom_safe
            f00 = (fp * (-lam_m) - fm * (-lam_p)) / denom_safe
            f11 = (fp * lam_p - fm * lam_m) / denom_safe
        f01 = -k * diff
        f10 = alpha * k * diff

        # defective branch: double eigenvalue lam = -nu k^2 / 2
        lam = -0.5 * nu * k**2
        fl = f(t * lam)
        dfl = t * fprime(t * lam)
        g00 = fl + dfl * (0.0 - lam)
        g01 = dfl * (-k)
        g10 = dfl * (alpha * k)
        g11 = fl + dfl * (-nu * k**2 - lam)

        deg = self._degenerate
        out = []
        for reg, degv in ((f00, g00), (f01, g01), (f10, g10), (f11, g11)):
            merged = np.where(deg, degv, reg)
            out.append(np.ascontiguousarray(merged.real))
        return tuple(out)

    def apply(self, fname: str, t: float, a: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Apply ``f(t M)`` to a stacked pair of mode arrays."""
        f00, f01, f10, f11 = self.matfunc(fname, t)
        return f00 * a + f01 * v, f10 * a + f11 * v
