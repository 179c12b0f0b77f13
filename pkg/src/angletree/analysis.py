"""Closed-form geometry behind the Angle Tree and Monte Carlo checks of it.

Covers the distribution of sin(dihedral) for random splitters, the chance
that k random vectors all miss a double cone of half-angle theta, and the
fraction of a noisy hypercylinder lying in the error region of a tilted
splitter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import hypercylinder_radii, uniform_ball

HALF_PI = math.pi / 2
THETA_GRID_STEP = math.radians(0.5)

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def gauss_legendre(f, lo: float, hi: float, rel_tol: float = 1e-8, order: int = 16, max_panels: int = 1 << 14) -> float:
    """Composite Gauss-Legendre on ``[lo, hi]``, doubling the panel count until converged.

    ``f`` must accept and return numpy arrays.
    """
    if hi == lo:
        return 0.0
    x, w = _gl_nodes(order)

    def composite(panels: int) -> float:
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        vals = np.asarray(f(pts), dtype=np.float64).reshape(panels, order)
        return float(np.sum(half * (vals @ w)))

    panels = 1
    prev = composite(panels)
    while panels < max_panels:
        panels *= 2
        cur = composite(panels)
        if abs(cur - prev) <= rel_tol * abs(cur) or (cur == 0.0 and prev == 0.0):
            return cur
        prev = cur
    return cur


@dataclass(frozen=True)
class GeometryParams:
    ambient_dim: int
    intrinsic_dim: int
    epsilon: float = 0.0
    alpha: float = HALF_PI
    theta: float | None = None
    k: int = 2000

    def __post_init__(self):
        if self.intrinsic_dim < 1 or self.intrinsic_dim > self.ambient_dim:
            raise ValueError("need 1 <= d <= D")
        if not 0.0 <= self.epsilon <= 0.1 + 1e-12:
            raise ValueError("epsilon must lie in [0, 0.1]")
        if not 0.0 < self.alpha <= HALF_PI:
            raise ValueError("alpha must lie in (0, pi/2]")

    @property
    def radii(self) -> tuple[float, float]:
        return hypercylinder_radii(self.intrinsic_dim, self.ambient_dim, self.epsilon)


@dataclass
class MCEstimate:
    value: float
    stderr: float
    n_samples: int


@dataclass
class MomentEstimate:
    mean: float
    variance: float
    stderr: float
    n_samples: int


@dataclass
class HypercylinderEstimate:
    ratio: float
    stderr: float
    n_samples: int
    avg_sq_within_ip: float
    avg_sq_from_ip: float

    @property
    def noise_fraction(self) -> float:
        """avg squared distance from the plane over avg squared distance from the centre."""
        return self.avg_sq_from_ip / (self.avg_sq_within_ip + self.avg_sq_from_ip)


# -- volumes -------------------------------------------------------------------


def ball_volume(dim: int, radius: float = 1.0) -> float:
    if dim < 0:
        raise ValueError("dimension must be non-negative")
    if dim == 0:
        return 1.0
    if radius == 0:
        return 0.0
    return math.exp(0.5 * dim * math.log(math.pi) + dim * math.log(radius) - math.lgamma(0.5 * dim + 1))


def _sin_power_integral(power: int, upper: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """``int_0^upper sin(t)^power dt`` for an array of upper limits."""
    upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    order = max(16, power // 2 + 8)
    x, w = _gl_nodes(order)
    panels = 1
    prev = None
    while True:
        edges = np.linspace(0.0, 1.0, panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        s = (mid[:, None] + half[:, None] * x).ravel()
        vals = np.sin(upper[:, None] * s[None, :]) ** power
        cur = upper * (vals.reshape(len(upper), panels, order) @ w @ half)
        if prev is not None and np.all(np.abs(cur - prev) <= rel_tol * np.abs(cur) + 1e-300):
            return cur
        if panels >= 1 << 10:
            return cur
        prev = cur
        panels *= 2


def cap_volume(dim: int, radius: float, height: float) -> float:
    """Volume of the cap of height ``height`` cut from a ``dim``-ball.

    Slabs ``B^{dim-1}(sqrt(r^2 - t^2))`` are integrated over ``t`` in
    ``[r - h, r]``; substituting ``t = r cos(phi)`` makes the integrand
    ``sin(phi)^dim`` smooth at the pole.
    """
    if dim < 1:
        raise ValueError("cap volume needs dim >= 1")
    if not -1e-15 <= height <= 2 * radius + 1e-15:
        raise ValueError(f"cap height {height} outside [0, {2 * radius}]")
    if radius == 0 or height <= 0:
        return 0.0
    phi0 = math.acos(min(1.0, max(-1.0, (radius - height) / radius)))
    integral = float(_sin_power_integral(dim, phi0)[0])
    return ball_volume(dim - 1, 1.0) * radius**dim * integral


def cap_fraction(dim: int, height_over_radius) -> np.ndarray:
    """Vectorised ``cap_volume(dim, r, h) / ball_volume(dim, r)`` as a function of ``h / r``."""
    hr = np.clip(np.asarray(height_over_radius, dtype=np.float64), 0.0, 2.0)
    phi0 = np.arccos(1.0 - hr)
    out = np.zeros_like(np.atleast_1d(hr))
    mask = np.atleast_1d(phi0) > 0
    if np.any(mask):
        ratio = ball_volume(dim - 1, 1.0) / ball_volume(dim, 1.0)
        out[mask] = ratio * _sin_power_integral(dim, np.atleast_1d(phi0)[mask])
    return out


# -- sin(alpha) distribution for random splitters ---------------------------------


def asymptotic_sin_alpha_mean(d: int, D: int) -> float:
    """Large-dimension mean ``sqrt((d - 1/2) / (D - 1/2))``."""
    return math.sqrt((d - 0.5) / (D - 0.5))


def asymptotic_sin_alpha_variance(D: int) -> float:
    return 1.0 / (2 * D - 1)


def exact_sin_alpha_mean(d: int, D: int) -> float:
    """``E sqrt(chi2_d / chi2_D)`` for nested sums, from ``sin^2 ~ Beta(d/2, (D-d)/2)``."""
    if d == D:
        return 1.0
    return math.exp(math.lgamma((d + 1) / 2) + math.lgamma(D / 2) - math.lgamma(d / 2) - math.lgamma((D + 1) / 2))


def sin_alpha_mc(D: int, d: int, n_samples: int, rng: np.random.Generator, chunk_elems: int = 4_000_000) -> MomentEstimate:
    """Moments of ``sin(alpha)`` for a Gaussian splitter normal and the plane of the first d axes."""
    if not 1 <= d <= D:
        raise ValueError("need 1 <= d <= D")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    chunk = max(1, chunk_elems // D)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        x = rng.standard_normal((m, D))
        sq = x * x
        s = np.sqrt(sq[:, :d].sum(axis=1) / sq.sum(axis=1))
        total += s.sum()
        total_sq += (s * s).sum()
        done += m
    mean = total / n_samples
    var = max(0.0, total_sq / n_samples - mean * mean)
    if n_samples > 1:
        var *= n_samples / (n_samples - 1)
    return MomentEstimate(mean, var, math.sqrt(var / n_samples), n_samples)


# -- random-vector strategy --------------------------------------------------------


def _check_theta(theta: float) -> None:
    if not 0.0 < theta <= HALF_PI:
        raise ValueError(f"theta must lie in (0, pi/2], got {theta}")


def segment_ratio(d: int, theta: float) -> float:
    """Volume fraction of the unit d-ball within angle ``theta`` of a fixed line (both directions).

    Each half is a cone of height ``cos(theta)`` over a ``(d-1)``-ball of
    radius ``sin(theta)`` plus the cap of height ``1 - cos(theta)``.
    """
    if d < 1:
        raise ValueError("d must be positive")
    _check_theta(theta)
    if d == 1:
        return 1.0  # the interval is the line itself
    c, s = math.cos(theta), math.sin(theta)
    cone = ball_volume(d - 1, s) * c / d
    cap = cap_volume(d, 1.0, 1.0 - c)
    return min(1.0, 2.0 * (cone + cap) / ball_volume(d, 1.0))


def segment_ratio_series(d: int, theta: float) -> float:
    """The same ratio through Gamma functions and the terminating 2F1 series (odd ``d`` only)."""
    if d < 1 or d % 2 == 0:
        raise ValueError("the hypergeometric series terminates only for odd d")
    _check_theta(theta)
    c, s = math.cos(theta), math.sin(theta)
    x = c * c
    a, b, cc = 0.5, (1 - d) / 2, 1.5
    term, hyp = 1.0, 1.0
    for n in range((d - 1) // 2):
        term *= (a + n) * (b + n) / ((cc + n) * (n + 1)) * x
        hyp += term
    g = math.exp(math.lgamma(1 + d / 2) - math.lgamma((d + 1) / 2)) / math.sqrt(math.pi)
    cap_part = 2 * (0.5 - c * g * hyp)
    g2 = math.exp(math.lgamma(1 + d / 2) - math.lgamma(1 + (d - 1) / 2)) / math.sqrt(math.pi)
    cone_part = 2 * c * s ** (d - 1) * g2 / d
    return cap_part + cone_part


def segment_ratio_mc(d: int, theta: float, n_samples: int, rng: np.random.Generator, chunk: int = 1_000_000) -> MCEstimate:
    """Fraction of uniform points in the unit d-ball with ``|p_1| / |p| >= cos(theta)``."""
    _check_theta(theta)
    c = math.cos(theta)
    hits = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        p = uniform_ball(m, d, 1.0, rng)
        hits += int(np.count_nonzero(np.abs(p[:, 0]) >= c * np.linalg.norm(p, axis=1)))
        done += m
    frac = hits / n_samples
    return MCEstimate(frac, math.sqrt(frac * (1 - frac) / n_samples), n_samples)


def miss_probability(d: int, theta: float, k: int) -> float:
    """Probability that ``k`` uniform vectors all land outside the double cone."""
    if k == 0:
        return 1.0
    s = segment_ratio(d, theta)
    if s >= 1.0:
        return 0.0
    return math.exp(k * math.log1p(-s))


def compute_theta(d: int, k: int, target_fail_prob: float) -> float:
    """Smallest error angle on a 0.5 degree grid whose miss probability is within target.

    Returns pi/2 when no grid angle below 90 degrees reaches the target.
    """
    if not 0.0 < target_fail_prob < 1.0:
        raise ValueError("target_fail_prob must lie in (0, 1)")
    n_steps = int(round(HALF_PI / THETA_GRID_STEP))
    for i in range(1, n_steps):
        theta = i * THETA_GRID_STEP
        if miss_probability(d, theta, k) <= target_fail_prob:
            return theta
    return HALF_PI


# -- error region -------------------------------------------------------------------


def error_region_ratio(params: GeometryParams, rel_tol: float = 1e-6) -> float:
    """Fraction of the hypercylinder that lies in the error region of a splitter tilted by ``alpha``.

    Integrates slices along an in-plane axis ``z`` from ``-b / tan(alpha)``
    (cut to ``-a`` where the plane ball ends) up to 0 and doubles the result.
    """
    d, D = params.intrinsic_dim, params.ambient_dim
    if d >= D:
        raise ValueError("error region needs d < D")
    alpha = params.alpha
    if alpha >= HALF_PI or params.epsilon <= 0:
        return 0.0
    a, b = params.radii
    m = D - d
    tan_a = math.tan(alpha)
    lo = max(-b / tan_a, -a)
    slice_norm = ball_volume(d - 1, 1.0) / ball_volume(d, a)

    def integrand(z):
        rad = np.sqrt(np.maximum(a * a - z * z, 0.0))
        return slice_norm * rad ** (d - 1) * cap_fraction(m, (b + z * tan_a) / b)

    return 2.0 * gauss_legendre(integrand, lo, 0.0, rel_tol=rel_tol, order=16)


def hypercylinder_mc(params: GeometryParams, n_samples: int, rng: np.random.Generator, model: str = "ball", chunk: int = 500_000) -> HypercylinderEstimate:
    """Monte Carlo estimate of the error-region fraction, with the noise statistics of the sample.

    A point ``(u, w)`` is in the one-sided error region when ``u_1 < 0`` and
    ``w_1 > -u_1 tan(alpha)``; the returned ratio doubles that fraction.
    """
    d, D = params.intrinsic_dim, params.ambient_dim
    if d >= D:
        raise ValueError("hypercylinder needs d < D")
    a, b = params.radii
    m = D - d
    tan_a = math.inf if params.alpha >= HALF_PI else math.tan(params.alpha)
    hits = 0
    sum_ip = 0.0
    sum_off = 0.0
    done = 0
    while done < n_samples:
        c = min(chunk, n_samples - done)
        if model == "ball":
            u = uniform_ball(c, d, a, rng)
            w = uniform_ball(c, m, b, rng) if b > 0 else np.zeros((c, m))
        elif model == "box":
            u = rng.uniform(-a, a, size=(c, d))
            w = rng.uniform(-b, b, size=(c, m))
        else:
            raise ValueError(f"unknown model {model!r}")
        z = u[:, 0]
        with np.errstate(invalid="ignore"):
            hits += int(np.count_nonzero((z < 0) & (w[:, 0] > -z * tan_a)))
        sum_ip += float(np.einsum("ij,ij->", u, u))
        sum_off += float(np.einsum("ij,ij->", w, w))
        done += c
    p = hits / n_samples
    return HypercylinderEstimate(2 * p, 2 * math.sqrt(p * (1 - p) / n_samples), n_samples, sum_ip / n_samples, sum_off / n_samples)
