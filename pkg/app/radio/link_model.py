from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate

from app.errors import LinkPreconditionError

Vector = tuple[float, float]

STATS_WINDOW = 20
QUAD_EPSABS = 1e-6
_BOUNDARY_RTOL = 1e-9


@dataclass(frozen=True)
class Kinematics:
    position: Vector
    velocity: Vector

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in (*self.position, *self.velocity)):
            raise LinkPreconditionError(f"non-finite kinematics: {self}")

    def at(self, dt: float) -> Kinematics:
        """Constant-velocity extrapolation."""
        return Kinematics(
            position=(self.position[0] + self.velocity[0] * dt, self.position[1] + self.velocity[1] * dt),
            velocity=self.velocity,
        )


@dataclass(frozen=True)
class VelocityStats:
    mean: float = 0.0
    deviation: float = 0.0
    sample_count: int = 0
    window: tuple[float, ...] = ()


@dataclass(frozen=True)
class LinkEstimate:
    duration: float
    reliability: float
    lifetime: float


DISCONNECTED = LinkEstimate(duration=0.0, reliability=0.0, lifetime=0.0)


def distance(a: Kinematics, b: Kinematics) -> float:
    return math.dist(a.position, b.position)


def connection_duration(a: Kinematics, b: Kinematics, radius: float) -> float:
    dx, dy = b.position[0] - a.position[0], b.position[1] - a.position[1]
    dvx, dvy = b.velocity[0] - a.velocity[0], b.velocity[1] - a.velocity[1]
    dist = math.hypot(dx, dy)
    if dist > radius * (1 + _BOUNDARY_RTOL):
        raise LinkPreconditionError(f"vehicles are {dist:.3f} m apart, beyond radius {radius}")

    A = dvx * dvx + dvy * dvy
    B = 2.0 * (dx * dvx + dy * dvy)
    if A == 0.0:
        return math.inf
    if abs(dist - radius) <= radius * _BOUNDARY_RTOL and B >= 0.0:
        return 0.0

    C = min(dist * dist - radius * radius, 0.0)
    root = math.sqrt(B * B - 4.0 * A * C)
    if B > 0.0:
        # Avoids cancellation in -B + root.
        return -2.0 * C / (B + root)
    return (-B + root) / (2.0 * A)


def _duration_density(t: float, radius: float, mu: float, sigma: float) -> float:
    if t <= 0.0:
        return 0.0
    u = 2.0 * radius / t
    z = (u - mu) / sigma
    if abs(z) > 40.0:
        return 0.0
    return 2.0 * radius / (math.sqrt(2.0 * math.pi) * sigma * t * t) * math.exp(-0.5 * z * z)


def link_reliability(duration: float, stats_a: VelocityStats, stats_b: VelocityStats, radius: float) -> float:
    if not duration > 0.0:
        return 0.0
    sigma = math.hypot(stats_a.deviation, stats_b.deviation)
    if sigma == 0.0:
        return 1.0
    mu = stats_a.mean - stats_b.mean

    args = (radius, mu, sigma)
    # The density peaks near 2R/mu; split there so quad sees the mode.
    split = 2.0 * radius / mu if mu > 0 else 2.0 * radius / sigma
    if math.isinf(duration):
        head, _ = integrate.quad(_duration_density, 0.0, split, args=args, epsabs=QUAD_EPSABS, limit=200)
        tail, _ = integrate.quad(_duration_density, split, math.inf, args=args, epsabs=QUAD_EPSABS, limit=200)
        value = head + tail
    else:
        points = [split] if 0.0 < split < duration else None
        value, _ = integrate.quad(
            _duration_density, 0.0, duration, args=args, epsabs=QUAD_EPSABS, limit=200, points=points
        )
    return min(max(value, 0.0), 1.0)


def expected_lifetime(duration: float, reliability: float) -> float:
    if reliability <= 0.0:
        return 0.0
    return reliability * duration


def update_velocity_stats(stats: VelocityStats, observed_speed: float, window: int = STATS_WINDOW) -> VelocityStats:
    if observed_speed < 0:
        raise LinkPreconditionError(f"observed speed must be non-negative, got {observed_speed}")
    samples = (*stats.window, float(observed_speed))[-window:]
    n = len(samples)
    mean = math.fsum(samples) / n
    var = math.fsum((x - mean) ** 2 for x in samples) / n
    return VelocityStats(mean=mean, deviation=math.sqrt(var), sample_count=stats.sample_count + 1, window=samples)


def estimate_link(
    a: Kinematics,
    b: Kinematics,
    stats_a: VelocityStats,
    stats_b: VelocityStats,
    radius: float,
) -> LinkEstimate:
    """T, r and LT for a pair; DISCONNECTED when the pair is out of range."""
    if distance(a, b) > radius:
        return DISCONNECTED
    duration = connection_duration(a, b, radius)
    reliability = link_reliability(duration, stats_a, stats_b, radius)
    return LinkEstimate(duration=duration, reliability=reliability, lifetime=expected_lifetime(duration, reliability))
