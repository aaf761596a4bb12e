"""Bessel functions J0, J1, Y0, Y1 and Hankel H0^(1), H1^(1) for real x > 0.

Ascending power series below ``SWITCH`` and the Hankel asymptotic expansion
above it. Absolute error is below 1e-10 on (0, 100].
"""

from __future__ import annotations

import numpy as np

EULER_GAMMA = 0.57721566490153286061
SWITCH = 12.0
N_SERIES = 40
N_ASYMPTOTIC = 12

# (k!)^2 and k!(k+1)! denominators and harmonic numbers for the series
_k = np.arange(N_SERIES)
_fact = np.cumprod(np.concatenate([[1.0], np.arange(1, N_SERIES + 1, dtype=float)]))
_H = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, N_SERIES + 1))])
_SIGN = (-1.0) ** _k
_C0 = _SIGN / _fact[:N_SERIES] ** 2
_C1 = _SIGN / (_fact[:N_SERIES] * _fact[1 : N_SERIES + 1])


def _asymptotic_coefficients(nu: int) -> np.ndarray:
    mu = 4.0 * nu * nu
    a = np.ones(2 * N_ASYMPTOTIC)
    for k in range(1, a.size):
        a[k] = a[k - 1] * (mu - (2 * k - 1) ** 2) / (k * 8.0)
    return a


_A0 = _asymptotic_coefficients(0)
_A1 = _asymptotic_coefficients(1)


def _series(x):
    """J0, J1, Y0, Y1 by ascending series (x moderate)."""
    h = 0.5 * x
    q = (h * h)[..., None] ** _k  # (x/2)^(2k)
    j0 = q @ _C0
    j1 = h * (q @ _C1)
    log_term = np.log(h) + EULER_GAMMA
    y0 = (2 / np.pi) * (log_term * j0 + q[..., 1:] @ (-_C0[1:] * _H[1:N_SERIES]))
    # Y1 = (2/pi) J1 ln(x/2) - 2/(pi x) - (1/pi) sum (-1)^k [psi(k+1)+psi(k+2)] (x/2)^(2k+1)/(k!(k+1)!)
    psi_sum = _H[:N_SERIES] + _H[1 : N_SERIES + 1] - 2 * EULER_GAMMA
    y1 = (2 / np.pi) * j1 * np.log(h) - 2 / (np.pi * x) - (h * (q @ (_C1 * psi_sum))) / np.pi
    return j0, j1, y0, y1


def _asymptotic(x, a):
    """(J, Y) for one order from the Hankel expansion with coefficients ``a``."""
    inv = 1.0 / x
    powers = inv[..., None] ** np.arange(2 * N_ASYMPTOTIC)
    sign = (-1.0) ** np.arange(N_ASYMPTOTIC)
    P = powers[..., 0::2] @ (sign * a[0::2])
    Q = powers[..., 1::2] @ (sign * a[1::2])
    return P, Q


def bessel_j0_j1_y0_y1(x):
    """All four functions at once (shared work); ``x`` must be positive."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("Bessel evaluation requires x > 0")
    shape = x.shape
    x = x.ravel()
    out = np.empty((4, x.size))
    small = x <= SWITCH
    if np.any(small):
        out[:, small] = _series(x[small])
    large = ~small
    if np.any(large):
        xl = x[large]
        amp = np.sqrt(2.0 / (np.pi * xl))
        for nu, a, rows in ((0, _A0, (0, 2)), (1, _A1, (1, 3))):
            P, Q = _asymptotic(xl, a)
            chi = xl - (0.5 * nu + 0.25) * np.pi
            c, s = np.cos(chi), np.sin(chi)
            out[rows[0], large] = amp * (P * c - Q * s)
            out[rows[1], large] = amp * (P * s + Q * c)
    return tuple(o.reshape(shape) for o in out)


def j0(x):
    return bessel_j0_j1_y0_y1(x)[0]


def j1(x):
    return bessel_j0_j1_y0_y1(x)[1]


def y0(x):
    return bessel_j0_j1_y0_y1(x)[2]


def y1(x):
    return bessel_j0_j1_y0_y1(x)[3]


def hankel1_01(x):
    """(H0^(1)(x), H1^(1)(x)) together with (J0(x), J1(x))."""
    J0, J1, Y0, Y1 = bessel_j0_j1_y0_y1(x)
    return J0 + 1j * Y0, J1 + 1j * Y1, J0, J1
