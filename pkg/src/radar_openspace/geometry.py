"""Grid geometry shared by the processing pipeline and the mask generators.

Conventions: boresight is the +x axis, azimuth is measured from boresight
(positive toward +y). Polar grids are uniform in range and in sin(azimuth);
the azimuth axis comes from a 64-point zero-padded FFT whose shifted bin j
holds sin(az) = (j - 32) / 32.

The 90-degree field of view keeps |sin(az)| <= sin(45deg), i.e. the 45 FFT
bins 10..54. Those are re-padded to 48 columns (two replicated on the low
side, one on the high side) so the maps survive three stride-2 stages; the
zero-azimuth column then lands at index 24.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_AZ_FFT = 64
AZ_CROP_LO = 10          # first kept FFT bin (inclusive)
AZ_CROP_HI = 54          # last kept FFT bin (inclusive)
AZ_PAD_LEFT = 2
AZ_PAD_RIGHT = 1
N_AZ_CROPPED = AZ_CROP_HI - AZ_CROP_LO + 1 + AZ_PAD_LEFT + AZ_PAD_RIGHT  # 48
SIN_FOV_HALF = np.sin(np.pi / 4)

IGNORE_LABEL = 255


def crop_azimuth(arr: np.ndarray, axis: int) -> np.ndarray:
    """Crop a 64-bin shifted azimuth axis to the FOV and edge-pad to 48."""
    if arr.shape[axis] != N_AZ_FFT:
        raise ValueError(f"expected {N_AZ_FFT} azimuth bins, got {arr.shape[axis]}")
    sl = [slice(None)] * arr.ndim
    sl[axis] = slice(AZ_CROP_LO, AZ_CROP_HI + 1)
    cropped = arr[tuple(sl)]
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (AZ_PAD_LEFT, AZ_PAD_RIGHT)
    return np.pad(cropped, pad, mode="edge")


def azimuth_column_sines(n_cols: int = N_AZ_CROPPED) -> np.ndarray:
    """sin(az) represented by each of the 48 cropped/padded columns."""
    j64 = np.clip(np.arange(n_cols) - AZ_PAD_LEFT, 0, AZ_CROP_HI - AZ_CROP_LO) + AZ_CROP_LO
    return (j64 - N_AZ_FFT // 2) / (N_AZ_FFT // 2)


def sin_to_column(s: np.ndarray) -> np.ndarray:
    """Continuous 48-grid column coordinate for a given sin(azimuth)."""
    return (N_AZ_FFT // 2) * np.asarray(s, dtype=np.float64) + (
        N_AZ_FFT // 2 - AZ_CROP_LO + AZ_PAD_LEFT
    )


@dataclass(frozen=True)
class PolarGrid:
    """Range x sin-azimuth grid of the RA map and polar masks."""

    n_range: int = 128
    n_az: int = N_AZ_CROPPED
    range_res: float = 0.12

    def cell_centers_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian (x, y) centers, each shaped (n_range, n_az)."""
        r = np.arange(self.n_range) * self.range_res
        s = azimuth_column_sines(self.n_az)
        az = np.arcsin(s)
        x = r[:, None] * np.cos(az)[None, :]
        y = r[:, None] * np.sin(az)[None, :]
        return x, y


@dataclass(frozen=True)
class CartesianGrid:
    """BEV grid of DoA maps and Cartesian masks; rows sweep x, cols sweep y."""

    n_x: int = 128
    n_y: int = 128
    x_max: float = 15.0
    y_half: float = 10.65

    def cell_centers_xy(self) -> tuple[np.ndarray, np.ndarray]:
        dx = self.x_max / self.n_x
        dy = 2.0 * self.y_half / self.n_y
        x = (np.arange(self.n_x) + 0.5) * dx
        y = -self.y_half + (np.arange(self.n_y) + 0.5) * dy
        return (
            np.broadcast_to(x[:, None], (self.n_x, self.n_y)).copy(),
            np.broadcast_to(y[None, :], (self.n_x, self.n_y)).copy(),
        )

    def in_fov(self) -> np.ndarray:
        """True for cells inside the +-45deg wedge of radius x_max."""
        x, y = self.cell_centers_xy()
        r = np.hypot(x, y)
        return (np.abs(y) <= x) & (r <= self.x_max)
