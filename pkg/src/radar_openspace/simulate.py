"""Synthetic parking-lot scenes and LFMCW TDM-MIMO frame synthesis.

A scene is a set of parked-car footprints carrying point scatterers on
their radar-facing edges. Frames are ideal beat-signal cubes: each
scatterer contributes a 3-D complex exponential indexed directly by its
range, Doppler and azimuth bins, plus circular Gaussian noise. Ground
truth is derived analytically from the same footprints.

Visibility semantics: a cell is occluded when any of 256 evenly spaced
sample points along the sensor-to-cell ray falls strictly inside a car
footprint. This discretization is the single definition used by both the
mask generator and its test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import IGNORE_LABEL, CartesianGrid, PolarGrid

SPEED_OF_LIGHT = 299_792_458.0
N_RAY_SAMPLES = 256


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RadarConfig:
    carrier_freq: float
    max_range: float
    range_res: float
    unambig_vel: float
    vel_res: float
    fov: float                # full field of view, degrees
    n_tx: int
    n_rx: int
    n_samples: int
    n_chirps: int
    n_virtual: int
    bandwidth: float
    wavelength: float
    element_spacing: float
    chirp_duration: float
    tdm_mode: bool = False

    def __post_init__(self) -> None:
        if self.n_virtual != self.n_tx * self.n_rx:
            raise ValueError("n_virtual must equal n_tx * n_rx")
        expected_bw = SPEED_OF_LIGHT / (2.0 * self.range_res)
        if abs(self.bandwidth - expected_bw) > 1e-9 * expected_bw:
            raise ValueError("bandwidth inconsistent with range resolution")
        if self.n_samples < self.max_range / self.range_res:
            raise ValueError("n_samples too small for max_range")
        for n in (self.n_samples, self.n_chirps):
            if n < 1 or n & (n - 1):
                raise ValueError("n_samples and n_chirps must be powers of two")
        if abs(self.element_spacing - self.wavelength / 2.0) > 1e-12:
            raise ValueError("element_spacing must be half a wavelength")


def default_config(tdm_mode: bool = False) -> RadarConfig:
    """77-GHz-class short-range parking configuration (90 deg FOV, 15 m)."""
    carrier = 76e9
    wavelength = SPEED_OF_LIGHT / carrier
    return RadarConfig(
        carrier_freq=carrier,
        max_range=15.0,
        range_res=0.12,
        unambig_vel=10.5,
        vel_res=0.33,
        fov=90.0,
        n_tx=2,
        n_rx=4,
        n_samples=128,
        n_chirps=64,
        n_virtual=8,
        bandwidth=SPEED_OF_LIGHT / (2.0 * 0.12),
        wavelength=wavelength,
        element_spacing=wavelength / 2.0,
        chirp_duration=wavelength / (4.0 * 10.5),
        tdm_mode=tdm_mode,
    )


# ---------------------------------------------------------------------------
# scene model


@dataclass(frozen=True)
class Scatterer:
    range_m: float
    azimuth_deg: float        # boresight = 0, positive toward +y
    radial_velocity: float
    amplitude: float

    def validate(self, cfg: RadarConfig) -> None:
        if not 0.0 < self.range_m <= cfg.max_range:
            raise ValueError(f"scatterer range {self.range_m} out of (0, {cfg.max_range}]")
        if abs(self.azimuth_deg) > cfg.fov / 2.0:
            raise ValueError(f"scatterer azimuth {self.azimuth_deg} outside FOV")
        if abs(self.radial_velocity) > cfg.unambig_vel:
            raise ValueError(f"scatterer velocity {self.radial_velocity} ambiguous")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")


@dataclass(frozen=True)
class CarFootprint:
    center_x: float
    center_y: float
    heading: float            # radians
    length: float
    width: float
    # scatterer description, car-local coordinates on the radar-facing edges
    point_local: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    point_amp: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def rotation(self) -> np.ndarray:
        c, s = np.cos(self.heading), np.sin(self.heading)
        return np.array([[c, -s], [s, c]])

    def corners(self) -> np.ndarray:
        half = np.array(
            [[self.length / 2, self.width / 2],
             [self.length / 2, -self.width / 2],
             [-self.length / 2, -self.width / 2],
             [-self.length / 2, self.width / 2]]
        )
        return half @ self.rotation().T + np.array([self.center_x, self.center_y])

    def point_world(self) -> np.ndarray:
        return self.point_local @ self.rotation().T + np.array(
            [self.center_x, self.center_y]
        )

    def contains(self, px: np.ndarray, py: np.ndarray, strict: bool = False) -> np.ndarray:
        d = np.stack([px - self.center_x, py - self.center_y], axis=-1)
        local = d @ self.rotation()
        if strict:
            return (np.abs(local[..., 0]) < self.length / 2) & (
                np.abs(local[..., 1]) < self.width / 2
            )
        return (np.abs(local[..., 0]) <= self.length / 2) & (
            np.abs(local[..., 1]) <= self.width / 2
        )


@dataclass(frozen=True)
class Scene:
    scatterers: tuple[Scatterer, ...]
    cars: tuple[CarFootprint, ...]
    seed: int


@dataclass
class ScaCube:
    """Raw complex ADC cube, samples x chirps x virtual antennas."""

    data: np.ndarray
    config: RadarConfig
    frame_id: int = 0


@dataclass
class Mask:
    """Per-cell labels: 0 = not-open, 1 = open, 255 = ignore (out of FOV)."""

    grid: np.ndarray          # uint8
    domain: str               # "polar" | "cartesian"
    geometry: PolarGrid | CartesianGrid


# ---------------------------------------------------------------------------
# scene generation


def _facing_edges(car: CarFootprint) -> list[tuple[np.ndarray, np.ndarray]]:
    """Car-local endpoints of edges whose outward normal faces the sensor."""
    half_l, half_w = car.length / 2, car.width / 2
    edges = [
        (np.array([half_l, -half_w]), np.array([half_l, half_w]), np.array([1.0, 0.0])),
        (np.array([-half_l, half_w]), np.array([-half_l, -half_w]), np.array([-1.0, 0.0])),
        (np.array([half_l, half_w]), np.array([-half_l, half_w]), np.array([0.0, 1.0])),
        (np.array([-half_l, -half_w]), np.array([half_l, -half_w]), np.array([0.0, -1.0])),
    ]
    rot = car.rotation()
    center = np.array([car.center_x, car.center_y])
    facing = []
    for a, b, n in edges:
        mid_world = (a + b) / 2 @ rot.T + center
        n_world = n @ rot.T
        if np.dot(n_world, -mid_world) > 0:
            facing.append((a, b))
    return facing


def _car_points(car: CarFootprint, rng: np.random.Generator) -> CarFootprint:
    """Attach 8..20 scatterer points along the car's radar-facing edges."""
    edges = _facing_edges(car)
    n_points = int(rng.integers(8, 21))
    locals_ = []
    for i in range(n_points):
        a, b = edges[i % len(edges)]
        f = rng.uniform(0.05, 0.95)
        locals_.append(a + f * (b - a))
    amps = rng.uniform(0.5, 1.5, size=n_points)
    return replace(car, point_local=np.array(locals_), point_amp=amps)


def _in_wedge(px: np.ndarray, py: np.ndarray, cfg: RadarConfig, margin: float = 0.0) -> np.ndarray:
    r = np.hypot(px, py)
    half = np.deg2rad(cfg.fov / 2.0)
    az = np.arctan2(py, np.maximum(px, 1e-12))
    return (px > 0) & (r <= cfg.max_range - margin) & (np.abs(az) <= half - np.deg2rad(margin * 4))


def scatterers_from_cars(
    cars: tuple[CarFootprint, ...],
    cfg: RadarConfig,
    sensor_velocity: tuple[float, float] = (0.0, 0.0),
) -> tuple[Scatterer, ...]:
    """World scatterers for all cars; points outside the wedge are dropped.

    Static targets seen from a moving sensor get radial velocity
    -v_sensor . r_hat.
    """
    out = []
    vel = np.asarray(sensor_velocity)
    for car in cars:
        pts = car.point_world()
        for (x, y), amp in zip(pts, car.point_amp):
            r = float(np.hypot(x, y))
            if r <= 0:
                continue
            az = float(np.degrees(np.arctan2(y, x)))
            if not (0.0 < r <= cfg.max_range and abs(az) <= cfg.fov / 2.0):
                continue
            v_r = float(-(vel[0] * x + vel[1] * y) / r)
            if abs(v_r) > cfg.unambig_vel:
                continue
            out.append(Scatterer(r, az, v_r, float(amp)))
    return tuple(out)


def make_parking_scene(seed: int, n_cars: int, cfg: RadarConfig) -> Scene:
    """Deterministic random scene of parked cars inside the FOV wedge."""
    if n_cars < 0:
        raise ValueError("n_cars must be >= 0")
    rng = np.random.default_rng(seed)
    cars: list[CarFootprint] = []
    for _ in range(n_cars):
        for _attempt in range(200):
            r = rng.uniform(3.5, 12.0)
            az = np.deg2rad(rng.uniform(-33.0, 33.0))
            car = CarFootprint(
                center_x=float(r * np.cos(az)),
                center_y=float(r * np.sin(az)),
                heading=float(rng.uniform(0, 2 * np.pi)),
                length=float(rng.uniform(3.8, 4.8)),
                width=float(rng.uniform(1.7, 2.0)),
            )
            corners = car.corners()
            if not _in_wedge(corners[:, 0], corners[:, 1], cfg, margin=0.4).all():
                continue
            if any(
                np.hypot(car.center_x - c.center_x, car.center_y - c.center_y) < 4.0
                for c in cars
            ):
                continue
            cars.append(_car_points(car, rng))
            break
    scatterers = scatterers_from_cars(tuple(cars), cfg)
    return Scene(scatterers=scatterers, cars=tuple(cars), seed=seed)


def drift_scene(
    scene: Scene,
    cfg: RadarConfig,
    offset_xy: tuple[float, float],
    sensor_velocity: tuple[float, float] = (0.0, 0.0),
) -> Scene:
    """Scene as seen after the sensor has moved by -offset_xy (cars shift by
    offset_xy in sensor coordinates)."""
    cars = tuple(
        replace(c, center_x=c.center_x + offset_xy[0], center_y=c.center_y + offset_xy[1])
        for c in scene.cars
    )
    return Scene(
        scatterers=scatterers_from_cars(cars, cfg, sensor_velocity),
        cars=cars,
        seed=scene.seed,
    )


# ---------------------------------------------------------------------------
# frame synthesis


def predict_bins(s: Scatterer, cfg: RadarConfig, n_az: int = 64) -> tuple[int, int, int]:
    """Analytic (range, doppler, azimuth) peak bins for one scatterer."""
    range_bin = int(round(s.range_m / cfg.range_res))
    doppler_bin = cfg.n_chirps // 2 + int(round(s.radial_velocity / cfg.vel_res))
    azimuth_bin = n_az // 2 + int(round(n_az * np.sin(np.deg2rad(s.azimuth_deg)) / 2.0))
    return range_bin, doppler_bin, azimuth_bin


def synthesize_frame(
    scene: Scene,
    cfg: RadarConfig,
    noise_std: float = 0.01,
    noise_seed: int = 0,
    frame_id: int = 0,
) -> ScaCube:
    """Ideal beat-signal cube of the scene plus circular Gaussian noise.

    Each scatterer contributes A * exp(j*2*pi*(f_r*n/N_s + f_d*m/N_c + f_a*k))
    with f_r, f_d its fractional range/Doppler bins and f_a = sin(az)/2.
    In TDM mode, chirps of the second Tx additionally advance the Doppler
    phase by half a chirp period.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    ns, nc, nv = cfg.n_samples, cfg.n_chirps, cfg.n_virtual
    cube = np.zeros((ns, nc, nv), dtype=np.complex128)
    n = np.arange(ns)
    m = np.arange(nc)
    k = np.arange(nv)
    tx_index = k // cfg.n_rx
    for s in scene.scatterers:
        s.validate(cfg)
        f_r = s.range_m / cfg.range_res
        f_d = s.radial_velocity / cfg.vel_res
        f_a = np.sin(np.deg2rad(s.azimuth_deg)) / 2.0
        e_n = np.exp(2j * np.pi * f_r * n / ns)
        e_m = np.exp(2j * np.pi * f_d * m / nc)
        e_k = np.exp(2j * np.pi * f_a * k)
        if cfg.tdm_mode:
            e_k = e_k * np.exp(2j * np.pi * f_d / (2.0 * nc) * tx_index)
        cube += s.amplitude * e_n[:, None, None] * e_m[None, :, None] * e_k[None, None, :]
    if noise_std > 0:
        rng = np.random.default_rng(noise_seed)
        cube += (noise_std / np.sqrt(2.0)) * (
            rng.standard_normal(cube.shape) + 1j * rng.standard_normal(cube.shape)
        )
    return ScaCube(data=cube.astype(np.complex64), config=cfg, frame_id=frame_id)


# ---------------------------------------------------------------------------
# ground truth


def _segment_min_range(corners: np.ndarray) -> float:
    """Distance from the sensor at the origin to the rectangle boundary."""
    best = np.inf
    for i in range(4):
        a = corners[i]
        b = corners[(i + 1) % 4]
        ab = b - a
        t = np.clip(-np.dot(a, ab) / max(np.dot(ab, ab), 1e-12), 0.0, 1.0)
        best = min(best, float(np.hypot(*(a + t * ab))))
    return best


def ray_occluded(px: np.ndarray, py: np.ndarray, cars: tuple[CarFootprint, ...]) -> np.ndarray:
    """True where the sensor-to-point ray passes through a car footprint.

    Uses the 256-sample ray discretization; candidate points are prefiltered
    by each car's angular span and nearest corner to keep this cheap.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    occ = np.zeros(px.shape, dtype=bool)
    if not cars:
        return occ
    ts = (np.arange(N_RAY_SAMPLES) + 0.5) / N_RAY_SAMPLES
    ang = np.arctan2(py, px)
    r = np.hypot(px, py)
    for car in cars:
        corners = car.corners()
        c_ang = np.arctan2(corners[:, 1], corners[:, 0])
        near = _segment_min_range(corners)
        cand = (
            ~occ
            & (ang >= c_ang.min() - 1e-9)
            & (ang <= c_ang.max() + 1e-9)
            & (r > near - 1e-9)
        )
        if not cand.any():
            continue
        sx = px[cand][:, None] * ts[None, :]
        sy = py[cand][:, None] * ts[None, :]
        inside = car.contains(sx, sy, strict=True).any(axis=1)
        hit = np.zeros(px.shape, dtype=bool)
        hit[cand] = inside
        occ |= hit
    return occ


def open_space_labels(px: np.ndarray, py: np.ndarray, scene: Scene, cfg: RadarConfig) -> np.ndarray:
    """1 = open, 0 = occupied/occluded/outside the open region."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    r = np.hypot(px, py)
    half = np.deg2rad(cfg.fov / 2.0)
    az = np.arctan2(py, px)
    open_ = (r <= cfg.max_range) & (np.abs(az) <= half)
    for car in scene.cars:
        open_ &= ~car.contains(px, py)
    open_ &= ~ray_occluded(px, py, scene.cars)
    return open_.astype(np.uint8)


def ground_truth_mask(
    scene: Scene,
    cfg: RadarConfig,
    domain: str,
    grid: PolarGrid | CartesianGrid | None = None,
) -> Mask:
    """Analytic open-space mask on the polar or Cartesian grid."""
    if domain == "polar":
        g = grid or PolarGrid(n_range=cfg.n_samples, range_res=cfg.range_res)
        x, y = g.cell_centers_xy()
        labels = open_space_labels(x, y, scene, cfg)
        return Mask(grid=labels, domain="polar", geometry=g)
    if domain == "cartesian":
        g = grid or CartesianGrid(x_max=cfg.max_range)
        x, y = g.cell_centers_xy()
        labels = open_space_labels(x, y, scene, cfg)
        labels = np.where(g.in_fov(), labels, np.uint8(IGNORE_LABEL)).astype(np.uint8)
        return Mask(grid=labels, domain="cartesian", geometry=g)
    raise ValueError(f"unknown mask domain {domain!r}")
