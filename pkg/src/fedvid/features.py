"""Sensor preprocessing for the box-prediction network.

Turns a message sender's recent GPS/speed/orientation samples plus the ego
vehicle's own sensor records into a fixed-width normalized feature vector:
a window of normalized lat/lng differences, both speeds scaled to [0, 1],
and the signed left/right orientation offset gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geo

V_MAX_DEFAULT = 40.0  # m/s ceiling for speed normalization


@dataclass(frozen=True)
class FeatureConfig:
    window: int = 4            # samples of lat/lng history (newest last)
    v_max: float = V_MAX_DEFAULT
    comm_range_m: float = 50.0  # sets the lat/lng difference normalization scale

    def input_dim(self) -> int:
        return 2 * self.window + 3


@dataclass
class FeatureVector:
    latlng_deltas: np.ndarray   # (window, 2) of (dlat_norm, dlng_norm), in [-1, 1]
    spd_y_norm: float           # sender speed, [0, 1]
    spd_x_norm: float           # ego speed, [0, 1]
    gamma: float                # [-1, 1]; positive = sender left of ego heading
    validity_mask: np.ndarray   # (window,) bool; False for zero-filled slots

    def as_array(self) -> np.ndarray:
        flat = self.latlng_deltas.reshape(-1)
        return np.concatenate([flat, [self.spd_y_norm, self.spd_x_norm, self.gamma]])


def latlng_delta_norm(msg_latlng, ego_latlng, norm_scale) -> tuple[float, float]:
    """Signed (msg - ego) lat/lng difference divided by the normalization scale,
    clamped to [-1, 1]. North and east are positive.

    norm_scale is (lat_scale_deg, lng_scale_deg) or a single scale for both.
    """
    if np.isscalar(norm_scale):
        norm_scale = (norm_scale, norm_scale)
    s_lat, s_lng = norm_scale
    if s_lat <= 0 or s_lng <= 0:
        raise ValueError("norm_scale components must be positive")
    dlat = (msg_latlng[0] - ego_latlng[0]) / s_lat
    dlng = (msg_latlng[1] - ego_latlng[1]) / s_lng
    return float(np.clip(dlat, -1.0, 1.0)), float(np.clip(dlng, -1.0, 1.0))


def orientation_gamma(alpha_ori: float, beta: float) -> float:
    """Signed, normalized angular offset between the ego heading and the
    bearing to the sender. Positive means the sender is on the left."""
    d = alpha_ori - beta
    if -180.0 <= d <= 180.0:
        return d / 180.0
    if d < -180.0:
        return (d + 360.0) / 180.0
    return (d - 360.0) / 180.0


def speed_norm(spd: float, v_max: float) -> float:
    """Speed scaled into [0, 1]. Negative speeds are a kinematics violation."""
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    if spd < 0:
        raise ValueError(f"negative speed {spd!r}")
    return float(np.clip(spd / v_max, 0.0, 1.0))


def build_feature_vector(history, msg, ego_records, cfg: FeatureConfig) -> FeatureVector:
    """Assemble the model input for one (sender, tick).

    history: sender samples as (lat, lng, ori, spd), oldest first, newest = the
    current message; ego_records: ego sensor samples aligned slot-for-slot with
    history (same length). Missing leading slots are zero-filled with a False
    validity mask. The newest sample drives speeds and gamma.
    """
    if len(history) == 0:
        raise ValueError("empty sender history")
    if len(history) != len(ego_records):
        raise ValueError("sender history and ego records must align")

    w = cfg.window
    deltas = np.zeros((w, 2))
    mask = np.zeros(w, dtype=bool)
    used = min(w, len(history))
    for i in range(used):
        # newest-last: slot w-1 holds the current tick
        h = history[len(history) - used + i]
        e = ego_records[len(ego_records) - used + i]
        scale = geo.latlng_scale_deg(cfg.comm_range_m, e[0])
        slot = w - used + i
        deltas[slot] = latlng_delta_norm((h[0], h[1]), (e[0], e[1]), scale)
        mask[slot] = True

    newest = history[-1]
    ego_now = ego_records[-1]
    brg = geo.initial_bearing(ego_now[0], ego_now[1], newest[0], newest[1])
    gamma = orientation_gamma(ego_now[2], brg)
    return FeatureVector(
        latlng_deltas=deltas,
        spd_y_norm=speed_norm(msg.spd if hasattr(msg, "spd") else newest[3], cfg.v_max),
        spd_x_norm=speed_norm(ego_now[3], cfg.v_max),
        gamma=gamma,
        validity_mask=mask,
    )
