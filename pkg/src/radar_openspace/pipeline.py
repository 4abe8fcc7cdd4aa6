"""Frequency-domain processing chain: SCA -> RDA -> RA -> DoA.

All stages are pure per-frame transforms. The azimuth axis is zero-padded
8 -> 64 before its FFT so the 90-degree crop has enough bins, then cropped
and edge-padded to 48 columns (see geometry module).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, numerics
from .geometry import IGNORE_LABEL, CartesianGrid, PolarGrid
from .simulate import Mask, RadarConfig, ScaCube


@dataclass
class RdaCube:
    """Linear magnitudes on range x Doppler x azimuth, Doppler and azimuth
    axes fftshift-centered."""

    data: np.ndarray
    config: RadarConfig


@dataclass
class RaMap:
    """Log-domain range-azimuth map, azimuth cropped to the FOV (48 cols)."""

    data: np.ndarray
    grid: PolarGrid


@dataclass
class DoaMap:
    """Cartesian BEV of received power; out-of-FOV cells hold `fill`."""

    data: np.ndarray
    grid: CartesianGrid
    fill: float


def sca_to_rda(
    sca: ScaCube,
    window: str = "hann",
    tdm_compensate: bool = True,
    n_az: int = geometry.N_AZ_FFT,
) -> RdaCube:
    """3-D FFT of the raw cube with optional windowing and TDM de-rotation.

    Sample-axis bins are kept unshifted (range >= 0); Doppler and azimuth
    axes are centered. The second-Tx virtual channels are de-rotated by
    exp(-j*pi*d/n_chirps) per signed Doppler bin d before the azimuth FFT.
    """
    cfg = sca.config
    x = np.asarray(sca.data)
    if x.shape != (cfg.n_samples, cfg.n_chirps, cfg.n_virtual):
        raise ValueError(f"cube shape {x.shape} does not match config")
    x = x.astype(np.complex64, copy=True)
    if window == "hann":
        w = numerics.hann_window(cfg.n_samples)[:, None, None] * numerics.hann_window(
            cfg.n_chirps
        )[None, :, None]
        x *= w.astype(np.float32)
    elif window != "none":
        raise ValueError(f"unknown window {window!r}")
    x = numerics.fft_axis(x, 0)
    x = numerics.fftshift_axis(numerics.fft_axis(x, 1), 1)
    if tdm_compensate and cfg.tdm_mode:
        d = np.arange(cfg.n_chirps) - cfg.n_chirps // 2
        derot = np.exp(-1j * np.pi * d / cfg.n_chirps).astype(np.complex64)
        x[:, :, cfg.n_rx:] *= derot[None, :, None]
    padded = np.zeros((cfg.n_samples, cfg.n_chirps, n_az), dtype=np.complex64)
    padded[:, :, : cfg.n_virtual] = x
    x = numerics.fftshift_axis(numerics.fft_axis(padded, 2), 2)
    return RdaCube(data=numerics.magnitude(x).astype(np.float32), config=cfg)


def rda_to_ra(rda: RdaCube, epsilon: float = numerics.DEFAULT_LOG_EPSILON) -> RaMap:
    """Doppler-summed, log-compressed RA map, cropped to the FOV."""
    summed = rda.data.astype(np.float64).sum(axis=1)
    ra = numerics.log_compress(summed, epsilon)
    ra = geometry.crop_azimuth(ra, axis=1)
    grid = PolarGrid(n_range=rda.config.n_samples, range_res=rda.config.range_res)
    return RaMap(data=ra.astype(np.float32), grid=grid)


def rad_input(rda: RdaCube, epsilon: float = numerics.DEFAULT_LOG_EPSILON) -> np.ndarray:
    """Log-compressed RDA arranged (range, azimuth, Doppler-as-channels),
    azimuth cropped exactly like rda_to_ra. Shape (128, 48, 64)."""
    logged = numerics.log_compress(rda.data.astype(np.float64), epsilon)
    cropped = geometry.crop_azimuth(logged, axis=2)
    return np.ascontiguousarray(cropped.transpose(0, 2, 1)).astype(np.float32)


def sample_ra(ra: RaMap, x: np.ndarray, y: np.ndarray, fill: float) -> np.ndarray:
    """Bilinear lookup of the RA map at Cartesian points (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = np.hypot(x, y)
    s = np.divide(y, r, out=np.zeros_like(y), where=r > 0)
    valid = (r <= ra_max_range(ra)) & (np.abs(s) <= geometry.SIN_FOV_HALF)
    rb = np.clip(r / ra.grid.range_res, 0.0, ra.grid.n_range - 1.0)
    cb = np.clip(geometry.sin_to_column(s), 0.0, ra.grid.n_az - 1.0)
    r0 = np.floor(rb).astype(np.int64)
    c0 = np.floor(cb).astype(np.int64)
    r1 = np.minimum(r0 + 1, ra.grid.n_range - 1)
    c1 = np.minimum(c0 + 1, ra.grid.n_az - 1)
    tr = rb - r0
    tc = cb - c0
    data = ra.data.astype(np.float64)
    val = (
        data[r0, c0] * (1 - tr) * (1 - tc)
        + data[r1, c0] * tr * (1 - tc)
        + data[r0, c1] * (1 - tr) * tc
        + data[r1, c1] * tr * tc
    )
    return np.where(valid, val, fill)


def ra_max_range(ra: RaMap) -> float:
    # wedge radius: the configured maximum range, never past the last bin
    return min(15.0, ra.grid.n_range * ra.grid.range_res)


def ra_to_doa(
    ra: RaMap,
    height: int = 128,
    width: int = 128,
    fill: float | None = None,
) -> DoaMap:
    """Polar-to-Cartesian BEV resampling of the RA map."""
    if fill is None:
        fill = float(np.log(numerics.DEFAULT_LOG_EPSILON))
    grid = CartesianGrid(n_x=height, n_y=width, x_max=ra_max_range(ra))
    x, y = grid.cell_centers_xy()
    data = sample_ra(ra, x, y, fill).astype(np.float32)
    return DoaMap(data=data, grid=grid, fill=fill)


def mask_to_polar(mask_cart: Mask, grid: PolarGrid | None = None) -> Mask:
    """Nearest-neighbor label lookup of a Cartesian mask on the polar grid.

    Every polar cell is inside the FOV, so no ignore labels remain; lookups
    that land on an ignore cell (range beyond the Cartesian extent) become
    not-open.
    """
    if mask_cart.domain != "cartesian":
        raise ValueError("mask_to_polar expects a Cartesian mask")
    g = grid or PolarGrid()
    cg: CartesianGrid = mask_cart.geometry
    x, y = g.cell_centers_xy()
    ix = np.clip(np.floor(x / (cg.x_max / cg.n_x)).astype(np.int64), 0, cg.n_x - 1)
    iy = np.clip(
        np.floor((y + cg.y_half) / (2 * cg.y_half / cg.n_y)).astype(np.int64),
        0,
        cg.n_y - 1,
    )
    labels = mask_cart.grid[ix, iy]
    labels = np.where(labels == IGNORE_LABEL, np.uint8(0), labels).astype(np.uint8)
    return Mask(grid=labels, domain="polar", geometry=g)


def normalize(t: np.ndarray, mean: float, std: float) -> np.ndarray:
    """(t - mean) / std with frozen per-modality statistics."""
    if std <= 0:
        raise ValueError(f"std must be positive, got {std}")
    return ((np.asarray(t) - mean) / std).astype(np.float32)
