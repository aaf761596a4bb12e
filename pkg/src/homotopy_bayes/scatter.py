"""2D sound-soft obstacle scattering: starlike curves, CFIE Nystrom solver, far field.

The density ``phi`` solves ``(I + K - i tau S) phi = -2 u_inc`` on the boundary
with single/double-layer operators carrying a factor 2. The integral
operators are discretised with Kress's quadrature for logarithmic kernels
on ``n`` equispaced nodes; the far field uses the trapezoid rule, which is
spectrally accurate for smooth periodic integrands.

Far-field normalisation: ``u_s(x) ~ exp(i k r) / sqrt(r) * u_inf(x_hat)``, which
is the convention implied by the far-field integral used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from .bessel import EULER_GAMMA, hankel1_01
from .errors import ContractError, DegenerateCurveError


# -- catalog shapes: each returns (r, r', r'') at s ---------------------------
def _sqrt_shape(scale, f, df, ddf):
    def radius(s):
        v, d1, d2 = f(s), df(s), ddf(s)
        sv = np.sqrt(v)
        return scale * sv, scale * d1 / (2 * sv), scale * (d2 / (2 * sv) - d1**2 / (4 * v * sv))

    return radius


def _threelobes(s):
    e = np.exp(-np.sin(3 * s))
    c3 = np.cos(3 * s)
    r = 0.5 + 0.25 * e - 0.1 * np.sin(s)
    dr = -0.75 * c3 * e - 0.1 * np.cos(s)
    ddr = 0.25 * e * (9 * c3**2 + 9 * np.sin(3 * s)) + 0.1 * np.sin(s)
    return r, dr, ddr


def _pear(s):
    return (5 + np.sin(3 * s)) / 6, 0.5 * np.cos(3 * s), -1.5 * np.sin(3 * s)


def _bean(s):
    N = 1 + 0.9 * np.cos(s) + 0.1 * np.sin(2 * s)
    dN = -0.9 * np.sin(s) + 0.2 * np.cos(2 * s)
    ddN = -0.9 * np.cos(s) - 0.4 * np.sin(2 * s)
    D = 1 + 0.75 * np.cos(s)
    dD = -0.75 * np.sin(s)
    ddD = -0.75 * np.cos(s)
    r = N / D
    dr = dN / D - N * dD / D**2
    ddr = ddN / D - 2 * dN * dD / D**2 - N * ddD / D**2 + 2 * N * dD**2 / D**3
    return r, dr, ddr


_peanut = _sqrt_shape(
    0.4,
    lambda s: 1 + 3 * np.cos(s) ** 2,
    lambda s: -3 * np.sin(2 * s),
    lambda s: -6 * np.cos(2 * s),
)

_acorn = _sqrt_shape(
    0.6,
    lambda s: 17 / 4 + 2 * np.cos(3 * s),
    lambda s: -6 * np.sin(3 * s),
    lambda s: -18 * np.cos(3 * s),
)


def _roundedtriangle(s):
    return 2 + 0.5 * np.cos(s), -0.5 * np.sin(s), -0.5 * np.cos(s)


def _roundrect(s):
    c, sn = np.cos(s), np.sin(s)
    b = 16 / 81  # (2/3)^4
    f = c**4 + b * sn**4
    df = -4 * c**3 * sn + 4 * b * sn**3 * c
    ddf = 12 * c**2 * sn**2 - 4 * c**4 + b * (12 * sn**2 * c**2 - 4 * sn**4)
    r = f**-0.25
    dr = -0.25 * f**-1.25 * df
    ddr = (5 / 16) * f**-2.25 * df**2 - 0.25 * f**-1.25 * ddf
    return r, dr, ddr


def _kite(s):
    """Parametric kite: returns (x, x', x'') as (..., 2) arrays."""
    x = np.stack([np.cos(s) + 0.65 * np.cos(2 * s) - 0.65, 1.5 * np.sin(s)], axis=-1)
    dx = np.stack([-np.sin(s) - 1.3 * np.sin(2 * s), 1.5 * np.cos(s)], axis=-1)
    ddx = np.stack([-np.cos(s) - 2.6 * np.cos(2 * s), -1.5 * np.sin(s)], axis=-1)
    return x, dx, ddx


_RADIAL = {
    "threelobes": _threelobes,
    "pear": _pear,
    "bean": _bean,
    "peanut": _peanut,
    "acorn": _acorn,
    "roundedtriangle": _roundedtriangle,
    "roundrect": _roundrect,
}
CATALOG_NAMES = tuple(_RADIAL) + ("kite",)


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Either a log-radius Fourier series or a named catalog shape.

    Fourier coefficients are ordered ``(c0, a1, b1, ..., aN, bN)`` and give
    ``log r(s) = c0/sqrt(2 pi) + sum_n n^-decay (a_n cos ns + b_n sin ns)/sqrt(pi)``.
    """

    kind: str
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(1))
    decay: float = 2.2
    name: str = ""

    def __post_init__(self):
        if self.kind == "fourier":
            c = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
            if c.size % 2 != 1:
                raise ContractError("Fourier coefficient vector must have odd length 2N+1")
            object.__setattr__(self, "coefficients", c)
        elif self.kind == "catalog":
            if self.name not in CATALOG_NAMES:
                raise ContractError(f"unknown shape {self.name!r}; known: {CATALOG_NAMES}")
        else:
            raise ContractError(f"unknown curve kind {self.kind!r}")

    @property
    def n_modes(self) -> int:
        return (self.coefficients.size - 1) // 2

    def log_radius_derivatives(self, s):
        """(q, q', q'') of the Fourier log-radius."""
        s = np.asarray(s, dtype=float)
        c = self.coefficients
        n = np.arange(1, self.n_modes + 1, dtype=float)
        a, b = c[1::2] / n**self.decay, c[2::2] / n**self.decay
        ns = np.multiply.outer(s, n)
        cs, sn = np.cos(ns), np.sin(ns)
        q = c[0] / np.sqrt(2 * np.pi) + (cs @ a + sn @ b) / np.sqrt(np.pi)
        dq = (-sn @ (n * a) + cs @ (n * b)) / np.sqrt(np.pi)
        ddq = -(cs @ (n**2 * a) + sn @ (n**2 * b)) / np.sqrt(np.pi)
        return q, dq, ddq

    def radius_derivatives(self, s):
        if self.kind == "fourier":
            q, dq, ddq = self.log_radius_derivatives(s)
            r = np.exp(q)
            return r, dq * r, (ddq + dq**2) * r
        if self.name == "kite":
            raise ContractError("the kite is parametric, not starlike in r(s)")
        return _RADIAL[self.name](np.asarray(s, dtype=float))

    def parametrize(self, s):
        """(x, x', x'') at parameters ``s``, each of shape (..., 2)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "catalog" and self.name == "kite":
            return _kite(s)
        r, dr, ddr = self.radius_derivatives(s)
        e = np.stack([np.cos(s), np.sin(s)], axis=-1)
        e_perp = np.stack([-np.sin(s), np.cos(s)], axis=-1)
        x = r[..., None] * e
        dx = dr[..., None] * e + r[..., None] * e_perp
        ddx = (ddr - r)[..., None] * e + 2 * dr[..., None] * e_perp
        return x, dx, ddx


def fourier_curve(coefficients, decay: float = 2.2) -> BoundaryCurve:
    return BoundaryCurve("fourier", coefficients, decay)


def shape_catalog(name: str) -> BoundaryCurve:
    return BoundaryCurve("catalog", name=name)


def radius(curve: BoundaryCurve, s) -> np.ndarray:
    if curve.kind == "catalog" and curve.name == "kite":
        x, _, _ = curve.parametrize(s)
        return np.hypot(x[..., 0], x[..., 1])
    return curve.radius_derivatives(np.mod(s, 2 * np.pi))[0]


@dataclass(frozen=True, eq=False)
class CurveGeometry:
    s: np.ndarray
    points: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    speed: np.ndarray
    normals: np.ndarray  # outward unit normals


def curve_geometry(curve: BoundaryCurve, n: int) -> CurveGeometry:
    if n < 16 or n % 2:
        raise ContractError("n must be even and >= 16")
    s = 2 * np.pi * np.arange(n) / n
    with np.errstate(over="ignore", invalid="ignore"):
        x, dx, ddx = curve.parametrize(s)
    speed = np.hypot(dx[:, 0], dx[:, 1])
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(speed))):
        raise DegenerateCurveError("curve evaluation overflowed")
    # relative test: a uniformly scaled curve is not degenerate
    if np.any(speed <= 1e-12 * speed.max()) or speed.max() == 0:
        raise DegenerateCurveError("curve has vanishing tangent speed")
    normals = np.stack([dx[:, 1], -dx[:, 0]], axis=1) / speed[:, None]
    return CurveGeometry(s, x, dx, ddx, speed, normals)


@lru_cache(maxsize=16)
def _kress_tables(n: int):
    """Circulant log-quadrature weights R[(i - j) mod n] and ln(4 sin^2) table."""
    N = n // 2
    diff = np.pi * np.arange(n) / N
    m = np.arange(1, N)
    R = -(2 * np.pi / N) * (np.cos(np.multiply.outer(diff, m)) @ (1.0 / m)) - (np.pi / N**2) * np.cos(N * diff)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    Rmat = R[idx]
    with np.errstate(divide="ignore"):
        logsin = np.log(4 * np.sin(0.5 * diff[idx]) ** 2)
    np.fill_diagonal(logsin, 0.0)
    Rmat.setflags(write=False)
    logsin.setflags(write=False)
    return Rmat, logsin


def assemble_cfie(geom: CurveGeometry, k: float, tau: float, incident_angles=()):
    """Nystrom matrix for ``(I + K - i tau S)`` and right-hand sides ``-2 u_inc``.

    Returns ``(A, rhs)`` with ``rhs`` of shape (n, number of incident angles).
    """
    n = geom.s.size
    Rmat, logsin = _kress_tables(n)
    x, dx, ddx = geom.points, geom.d1, geom.d2
    diff = x[:, None, :] - x[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    eye = np.eye(n, dtype=bool)
    r[eye] = 1.0
    kr = k * r
    H0, H1, J0, J1 = hankel1_01(kr)
    # (x(t) - x(s)) . n~(s) with n~ = (x2', -x1') = speed * outward normal
    num = diff[..., 0] * dx[None, :, 1] - diff[..., 1] * dx[None, :, 0]
    speed = geom.speed[None, :]

    L = 0.5j * k * num * H1 / r
    L1 = -(k / (2 * np.pi)) * num * J1 / r
    M = 0.5j * H0 * speed
    M1 = -(1 / (2 * np.pi)) * J0 * speed
    L2 = L - L1 * logsin
    M2 = M - M1 * logsin

    sp_d = geom.speed
    curvature_term = (dx[:, 1] * ddx[:, 0] - dx[:, 0] * ddx[:, 1]) / sp_d**2
    L1[eye] = 0.0
    L2[eye] = curvature_term / (2 * np.pi)
    M1[eye] = -sp_d / (2 * np.pi)
    M2[eye] = sp_d * (0.5j - (EULER_GAMMA + np.log(0.5 * k * sp_d)) / np.pi)

    K1 = L1 - 1j * tau * M1
    K2 = L2 - 1j * tau * M2
    A = np.eye(n, dtype=complex) + Rmat * K1 + (2 * np.pi / n) * K2

    angles = np.atleast_1d(np.asarray(incident_angles, dtype=float))
    d = np.stack([np.cos(angles), np.sin(angles)], axis=0)  # (2, L)
    rhs = -2.0 * np.exp(1j * k * (x @ d))
    return A, rhs


def solve_density(geom: CurveGeometry, k: float, tau: float, incident_angles):
    A, rhs = assemble_cfie(geom, k, tau, incident_angles)
    return np.linalg.solve(A, rhs)


def far_field(geom: CurveGeometry, density, k: float, tau: float, directions) -> np.ndarray:
    """Far-field pattern at ``directions`` (angles, or unit vectors of shape (m, 2)).

    ``density`` may be a vector (n,) or a matrix (n, L); the result has shape
    (m,) or (m, L) accordingly.
    """
    directions = np.asarray(directions, dtype=float)
    if directions.ndim == 1:
        xhat = np.stack([np.cos(directions), np.sin(directions)], axis=1)
    else:
        xhat = directions
    n = geom.s.size
    ntilde = geom.normals * geom.speed[:, None]
    kernel = (k * (xhat @ ntilde.T) + tau * geom.speed[None, :]) * np.exp(-1j * k * (xhat @ geom.points.T))
    prefactor = np.exp(-0.25j * np.pi) / np.sqrt(8 * np.pi * k) * (2 * np.pi / n)
    return prefactor * (kernel @ density)


def circle_far_field_series(a: float, k: float, d, xhat, max_terms: int = 10_000) -> complex:
    """Far field of a sound-soft circle of radius ``a`` centred at the origin.

    ``u_inf = exp(-i pi/4) sqrt(2/(pi k)) sum_n -J_n(ka)/H_n(ka) exp(i n (theta - theta_d))``,
    truncated at the first order whose term (and its negative-order twin) is below 1e-14.
    Uses scipy's Bessel routines so that it stays independent of the solver.
    """
    from scipy.special import hankel1, jv

    if a <= 0 or k <= 0:
        raise ContractError("radius and wavenumber must be positive")
    d, xhat = np.asarray(d, dtype=float), np.asarray(xhat, dtype=float)
    angle = np.arctan2(xhat[1], xhat[0]) - np.arctan2(d[1], d[0])
    total = -jv(0, k * a) / hankel1(0, k * a)
    for m in range(1, max_terms):
        c = -jv(m, k * a) / hankel1(m, k * a)
        term = 2 * c * np.cos(m * angle)  # J_{-m}/H_{-m} = J_m/H_m
        total += term
        if abs(c) < 1e-14:
            break
    return complex(np.exp(-0.25j * np.pi) * np.sqrt(2 / (np.pi * k)) * total)


@dataclass(frozen=True)
class ScatterConfig:
    k: float = 1.0
    tau: float = None  # defaults to k
    incident_angles: tuple = (0.0, np.pi / 2)
    n_observations: int = 64  # full aperture, uniform directions
    n: int = 128

    def __post_init__(self):
        if self.k <= 0:
            raise ContractError("wavenumber must be positive")
        if self.n < 16 or self.n % 2:
            raise ContractError("quadrature size n must be even and >= 16")
        if self.n_observations < 1:
            raise ContractError("need at least one observation direction")
        if self.tau is None:
            object.__setattr__(self, "tau", float(self.k))
        object.__setattr__(self, "incident_angles", tuple(float(a) for a in np.atleast_1d(self.incident_angles)))

    @property
    def observation_angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_observations) / self.n_observations


def far_field_data(curve: BoundaryCurve, config: ScatterConfig) -> np.ndarray:
    """Complex far field matrix, shape (n_observations, number of incident angles)."""
    geom = curve_geometry(curve, config.n)
    phi = solve_density(geom, config.k, config.tau, config.incident_angles)
    return far_field(geom, phi, config.k, config.tau, config.observation_angles)


def stack_real(F) -> np.ndarray:
    """Direction-major flattening of a complex (m, L) matrix into [Re; Im]."""
    c = np.asarray(F).ravel()
    return np.concatenate([c.real, c.imag])


def unstack_real(y, m: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    half = y.size // 2
    return (y[:half] + 1j * y[half:]).reshape(m, -1)


def scatter_forward(coefficients, config: ScatterConfig, decay: float = 2.2) -> np.ndarray:
    return stack_real(far_field_data(fourier_curve(coefficients, decay), config))


def add_far_field_noise(F, delta: float, seed) -> np.ndarray:
    """``F + delta |F| (xi1 + i xi2)`` with independent standard normals per entry;
    ``|F|`` is the Euclidean norm of the whole data matrix."""
    rng = np.random.default_rng(seed)
    F = np.asarray(F)
    xi = rng.standard_normal(F.shape + (2,))
    return F + delta * np.linalg.norm(F) * (xi[..., 0] + 1j * xi[..., 1])


class ScatterForwardModel:
    """Fourier coefficients -> stacked real far-field data."""

    def __init__(self, config: ScatterConfig, decay: float = 2.2, n_modes: int = 5):
        self.config, self.decay, self.n_modes = config, decay, n_modes

    @property
    def input_dim(self) -> int:
        return 2 * self.n_modes + 1

    def __call__(self, coefficients) -> np.ndarray:
        c = np.asarray(coefficients, dtype=float)
        if c.shape != (self.input_dim,):
            raise ContractError(f"expected {self.input_dim} coefficients, got {c.shape}")
        return scatter_forward(c, self.config, self.decay)


def curve_points(curve: BoundaryCurve, n: int = 2048) -> np.ndarray:
    s = 2 * np.pi * np.arange(n) / n
    return curve.parametrize(s)[0]


def hausdorff_distance(a: BoundaryCurve, b: BoundaryCurve, n: int = 2048) -> float:
    pa, pb = curve_points(a, n), curve_points(b, n)
    return max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0])


def write_far_field_csv(path, F, observation_angles, incident_angles) -> None:
    """Rows (obs_angle, incident_angle, re, im) in direction-major order."""
    import csv

    F = np.asarray(F)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["obs_angle", "incident_angle", "re", "im"])
        for i, a in enumerate(observation_angles):
            for j, b in enumerate(incident_angles):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(F[i, j].real)), repr(float(F[i, j].imag))])


def read_far_field_csv(path):
    """Inverse of ``write_far_field_csv``: returns (F, observation_angles, incident_angles)."""
    import csv

    with open(path, newline="") as fh:
        rows = [[float(v) for v in r] for r in list(csv.reader(fh))[1:] if r]
    if not rows:
        raise ContractError(f"{path}: no far-field rows")
    data = np.array(rows)
    obs = np.unique(data[:, 0])
    inc = list(dict.fromkeys(data[:, 1]))
    if len(rows) != obs.size * len(inc):
        raise ContractError(f"{path}: rows do not form a full (direction, incidence) grid")
    obs_order = list(dict.fromkeys(data[:, 0]))
    F = np.empty((len(obs_order), len(inc)), dtype=complex)
    for a, b, re, im in data:
        F[obs_order.index(a), inc.index(b)] = re + 1j * im
    return F, np.array(obs_order), np.array(inc)
