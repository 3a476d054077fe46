"""Dataset, trace, and configuration file handling.

Dataset CSV (3-D only)::

    t,ax,ay,az,range,vx,vy,vz,gx,gy,gz

``t`` in seconds (strictly increasing), ``a*`` measured acceleration in
m/s^2, ``range`` in meters, ``v*`` flow velocity in m/s, ``g*`` ground-truth
position in meters. Missing values are empty fields, never sentinel
numbers. Floats are written with 17 significant digits so a write/read
round trip is value-exact.

Config files are flat YAML mappings; unknown keys are rejected. Compiled-in
profile defaults ("indoor" / "outdoor") provide every parameter, the file
only overrides.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import yaml
from numpy.typing import NDArray

from .errors import ConfigError, NonMonotoneTimeError, ParseError
from .estimator import EstimatorConfig, Estimate, StreamRecord
from .model import DragModel
from .simulator import Dataset, NoiseSpec, TrajectorySpec

DATASET_HEADER = ["t", "ax", "ay", "az", "range", "vx", "vy", "vz", "gx", "gy", "gz"]

TRACE_HEADER = [
    "t",
    "est_px", "est_py", "est_pz", "est_vx", "est_vy", "est_vz",
    "true_px", "true_py", "true_pz", "true_vx", "true_vy", "true_vz",
    "err_x", "err_y", "err_z",
]

PROFILES = ("indoor", "outdoor")

_PROFILE_MU = {
    "indoor": [1.2, 2.4, 4.0],
    "outdoor": [0.3, 0.45, 1.5],
}


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else format(x, ".17g")


def _parse_float(tok: str, line_no: int, col: str) -> float:
    if tok == "":
        return np.nan
    try:
        return float(tok)
    except ValueError as exc:
        raise ParseError(f"column {col!r}: {tok!r} is not a number", line_no) from exc


def write_dataset(path: str | Path, dataset: Dataset) -> None:
    """Write a Dataset to the documented 11-column CSV."""
    if dataset.imu.shape[1] != 3:
        raise ValueError("the dataset CSV format is 3-D only")
    n = dataset.t.size
    flow = dataset.flow if dataset.flow is not None else np.full((n, 3), np.nan)
    truth = dataset.truth_pos if dataset.truth_pos is not None else np.full((n, 3), np.nan)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(DATASET_HEADER)
        for i in range(n):
            row = [dataset.t[i], *dataset.imu[i], dataset.uwb[i], *flow[i], *truth[i]]
            writer.writerow([_fmt(x) for x in row])


def read_dataset(path: str | Path) -> Dataset:
    """Read a Dataset CSV; empty fields become NaN missing-markers.

    Raises
    ------
    ParseError
        On a header mismatch, wrong column count, or a malformed number
        (the message carries the 1-based line number).
    NonMonotoneTimeError
        If timestamps do not strictly increase.
    """
    rows: list[list[float]] = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if [h.strip() for h in header] != DATASET_HEADER:
            raise ParseError(f"expected header {','.join(DATASET_HEADER)}", 1)
        for line_no, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(DATASET_HEADER):
                raise ParseError(f"expected {len(DATASET_HEADER)} columns, got {len(raw)}", line_no)
            rows.append(
                [_parse_float(tok, line_no, col) for tok, col in zip(raw, DATASET_HEADER)]
            )
    if not rows:
        raise ParseError("no data rows", 2)
    data = np.asarray(rows)
    t = data[:, 0]
    if np.any(np.isnan(t)):
        raise ParseError("timestamp column has empty fields", None)
    if np.any(np.diff(t) <= 0):
        bad = int(np.argmax(np.diff(t) <= 0)) + 3  # +2 header/base, +1 second row
        raise NonMonotoneTimeError(f"timestamps not strictly increasing near line {bad}")
    flow = data[:, 5:8]
    truth = data[:, 8:11]
    return Dataset(
        t=t,
        imu=data[:, 1:4],
        uwb=data[:, 4],
        flow=None if np.all(np.isnan(flow)) else flow,
        truth_pos=None if np.all(np.isnan(truth)) else truth,
        truth_vel=None,
    )


def write_trace(path: str | Path, estimates: list[Estimate], dataset: Dataset) -> None:
    """Write the estimate trace with per-axis position errors.

    Estimated states are shifted back to world coordinates by the dataset's
    anchor; truth columns stay empty when the dataset has no ground truth.
    """
    anchor = dataset.anchor
    d = dataset.imu.shape[1]
    truth_by_t = {}
    if dataset.truth_pos is not None:
        vel = dataset.truth_vel
        for i, t in enumerate(dataset.t):
            truth_by_t[round(float(t), 9)] = (
                dataset.truth_pos[i],
                vel[i] if vel is not None else np.full(d, np.nan),
            )
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_HEADER)
        for est in estimates:
            p = est.state[:d] + anchor
            v = est.state[d:]
            key = round(float(est.t), 9)
            if key in truth_by_t:
                tp, tv = truth_by_t[key]
                err = p - tp
            else:
                tp = tv = err = np.full(d, np.nan)
            row = [est.t, *p, *v, *tp, *tv, *err]
            writer.writerow([_fmt(float(x)) for x in row])


def read_trace(path: str | Path) -> dict[str, NDArray[np.float64]]:
    """Read a trace CSV back into column arrays keyed by header name."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ParseError("unexpected trace header", 1)
        rows = [
            [_parse_float(tok, line_no, col) for tok, col in zip(raw, header)]
            for line_no, raw in enumerate(reader, start=2)
        ]
    data = np.asarray(rows) if rows else np.empty((0, len(TRACE_HEADER)))
    return {name: data[:, i] for i, name in enumerate(TRACE_HEADER)}


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs: model, estimator weights, noise, trajectory."""

    drag: DragModel
    estimator: EstimatorConfig
    noise: NoiseSpec
    trajectory: TrajectorySpec


def default_config(profile: str = "indoor", mode: str = "srio") -> RunConfig:
    """Compiled-in defaults for a profile.

    Indoor drag is ``diag(1.2, 2.4, 4)``; outdoor ``diag(0.3, 0.45, 1.5)``.
    Shared weights: ``P_inv = 0.05 diag(2,1,2,2,1,2)``,
    ``Q_inv = diag(1,.5,1,1,.5,1)``, range weight 1 and identity flow weight
    (a 4x4 identity in total for the range+flow output). ``k_t = 4`` with
    ``k_w = 38`` for range-only and 30 when flow is fused.
    """
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    drag = DragModel(mu=np.asarray(_PROFILE_MU[profile]), dt=0.04)
    estimator = EstimatorConfig(
        k_w=38 if mode == "srio" else 30,
        k_t=4,
        P_inv=0.05 * np.diag([2.0, 1.0, 2.0, 2.0, 1.0, 2.0]),
        Q_inv=np.diag([1.0, 0.5, 1.0, 1.0, 0.5, 1.0]),
        R_inv_range=1.0,
        R_inv_flow=np.eye(3),
        mode=mode,
    )
    return RunConfig(
        drag=drag,
        estimator=estimator,
        noise=NoiseSpec(),
        trajectory=TrajectorySpec(),
    )


_SCALAR_KEYS = {
    "dt": float, "k_w": int, "k_t": int, "ell": int, "stride": int,
    "R_inv_range": float, "mode": str, "seed_output_row": str,
    "scale_q_with_ell": bool,
    "accel_sigma": float, "range_sigma": float, "flow_sigma": float,
    "accel_bias_walk": float, "noise_seed": int,
    "kind": str, "duration": float, "velocity_scale": float,
    "accel_scale": float, "trajectory_seed": int,
}
_VECTOR_KEYS = {"mu": 3, "P_inv": 6, "Q_inv": 6, "R_inv_flow": 3, "anchor": 3}


def load_config(path: str | Path | None, profile: str = "indoor", mode: str | None = None) -> RunConfig:
    """Profile defaults overridden by a flat YAML mapping.

    Vector keys (``mu``, ``P_inv``, ``Q_inv``, ``R_inv_flow``, ``anchor``)
    take diagonal / component lists. Unknown keys raise ``ConfigError``, as
    do values of the wrong type.
    """
    overrides: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a flat key: value mapping")
        overrides = loaded

    if mode is None:
        mode = overrides.get("mode", "srio")
    if mode not in ("srio", "srifo"):
        raise ConfigError(f"mode must be 'srio' or 'srifo', got {mode!r}")

    for key, value in overrides.items():
        if key in _SCALAR_KEYS:
            want = _SCALAR_KEYS[key]
            if want in (float, int) and isinstance(value, bool):
                raise ConfigError(f"key {key!r} must be {want.__name__}")
            if want is float and isinstance(value, (int, float)):
                continue
            if not isinstance(value, want):
                raise ConfigError(f"key {key!r} must be {want.__name__}")
        elif key in _VECTOR_KEYS:
            size = _VECTOR_KEYS[key]
            if (
                not isinstance(value, (list, tuple))
                or len(value) != size
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
            ):
                raise ConfigError(f"key {key!r} must be a list of {size} numbers")
        else:
            raise ConfigError(f"unknown key {key!r}")

    base = default_config(profile, mode)

    def pick(key, fallback):
        return overrides.get(key, fallback)

    drag = DragModel(
        mu=np.asarray(pick("mu", base.drag.mu)), dt=float(pick("dt", base.drag.dt))
    )
    est = base.estimator
    k_w = pick("k_w", 38 if mode == "srio" else 30)
    estimator = EstimatorConfig(
        k_w=int(k_w),
        k_t=int(pick("k_t", est.k_t)),
        P_inv=np.diag(np.asarray(pick("P_inv", np.diag(est.P_inv)), dtype=float)),
        Q_inv=np.diag(np.asarray(pick("Q_inv", np.diag(est.Q_inv)), dtype=float)),
        R_inv_range=float(pick("R_inv_range", est.R_inv_range)),
        R_inv_flow=np.diag(np.asarray(pick("R_inv_flow", np.diag(est.R_inv_flow)), dtype=float)),
        ell=int(pick("ell", est.ell)),
        mode=mode,
        stride=int(pick("stride", est.stride)),
        seed_output_row=str(pick("seed_output_row", est.seed_output_row)),
        scale_q_with_ell=bool(pick("scale_q_with_ell", est.scale_q_with_ell)),
    )
    noise = NoiseSpec(
        accel_sigma=float(pick("accel_sigma", base.noise.accel_sigma)),
        range_sigma=float(pick("range_sigma", base.noise.range_sigma)),
        flow_sigma=float(pick("flow_sigma", base.noise.flow_sigma)),
        accel_bias_walk=float(pick("accel_bias_walk", base.noise.accel_bias_walk)),
        seed=int(pick("noise_seed", base.noise.seed)),
    )
    trajectory = TrajectorySpec(
        kind=str(pick("kind", base.trajectory.kind)),
        duration=float(pick("duration", base.trajectory.duration)),
        velocity_scale=float(pick("velocity_scale", base.trajectory.velocity_scale)),
        accel_scale=float(pick("accel_scale", base.trajectory.accel_scale)),
        seed=int(pick("trajectory_seed", base.trajectory.seed)),
        anchor=np.asarray(pick("anchor", base.trajectory.anchor), dtype=float),
    )
    try:
        return RunConfig(drag=drag, estimator=estimator, noise=noise, trajectory=trajectory)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def dataset_records(dataset: Dataset, ell: int = 1) -> Iterator[StreamRecord]:
    """Turn a Dataset into estimator stream records.

    With ``ell > 1`` the range (and flow) measurements are downsampled by
    ``ell`` while every acceleration sample is kept, so a fixed-size window
    spans ``ell`` times more wall-clock time. The record at index ``r``
    carries the accelerations covering ``((r-1) ell, r ell]``.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    n = dataset.t.size
    d = dataset.imu.shape[1]
    n_records = (n - 1) // ell + 1
    for r in range(n_records):
        k = r * ell
        accel = dataset.imu[(r - 1) * ell : k] if r > 0 else np.zeros((ell, d))
        flow = dataset.flow[k] if dataset.flow is not None else None
        yield StreamRecord(
            t=float(dataset.t[k]),
            accel=accel,
            range_=float(dataset.uwb[k]),
            flow=flow,
        )
