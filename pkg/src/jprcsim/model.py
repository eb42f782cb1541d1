"""Network domain types, random scenario generation and sub-channel allocation.

A scenario is a square grid of square cells with one base station (BS) at
each cell centre and users dropped uniformly inside their cell. Path gains
follow ``h[m, i, k] = x * d_{m,i} ** -alpha`` with unit-mean exponential
power fading ``x`` (squared Rayleigh amplitude), drawn independently per
(BS, user, channel).
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np

__all__ = [
    "Scheme",
    "ScenarioConfig",
    "Scenario",
    "Allocation",
    "grid_shape",
    "bs_grid_positions",
    "draw_fading",
    "path_gain",
    "generate_scenario",
    "allocate_subchannels",
    "MIN_DISTANCE",
]

#: Users closer than this to any BS are resampled (meters).
MIN_DISTANCE = 1.0


class Scheme(str, Enum):
    NOMA = "NOMA"
    OFDMA = "OFDMA"

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown scheme {value!r}; expected NOMA or OFDMA") from None


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of the random network. Defaults are the reference setup.

    All quantities are SI: meters, watts, bps/Hz.
    """

    num_cells: int = 4
    cell_side: float = 500.0
    area_side: float = 1000.0
    users_per_cell: int = 4
    num_subchannels: int = 100
    path_loss_exponent: float = 3.0
    noise_power: float = 1e-14
    min_rate: float = 5.0
    peak_power: float = 0.25e-3
    rng_seed: int = 0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in ("num_cells", "users_per_cell", "num_subchannels"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
        for name in ("cell_side", "area_side", "path_loss_exponent",
                     "noise_power", "min_rate", "peak_power"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        rows, cols = grid_shape(self.num_cells)
        if max(rows, cols) * self.cell_side > self.area_side * (1 + 1e-12):
            raise ValueError(
                f"{rows}x{cols} grid of {self.cell_side} m cells does not fit "
                f"in a {self.area_side} m area")

    @property
    def num_users(self) -> int:
        return self.num_cells * self.users_per_cell

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)


def grid_shape(num_cells: int) -> tuple[int, int]:
    """(rows, cols) of the cell grid: a square grid, or 1x2 for two cells."""
    if num_cells == 2:
        return 1, 2
    side = math.isqrt(num_cells)
    if side * side != num_cells:
        raise ValueError(
            f"num_cells={num_cells} does not form a square grid (use 1, 2, 4, 9, ...)")
    return side, side


def bs_grid_positions(num_cells: int, cell_side: float) -> np.ndarray:
    """BS coordinates at cell centres, row-major (x varies fastest)."""
    rows, cols = grid_shape(num_cells)
    ys, xs = np.divmod(np.arange(num_cells), cols)
    return np.column_stack(((xs + 0.5) * cell_side, (ys + 0.5) * cell_side))


def path_gain(distance, fading, exponent: float):
    """``fading * distance ** -exponent``."""
    return np.asarray(fading, dtype=float) * np.asarray(distance, dtype=float) ** (-exponent)


def draw_fading(rng: np.random.Generator, size) -> np.ndarray:
    """Power fading gains |g|^2 for a unit-power Rayleigh amplitude g."""
    return rng.exponential(1.0, size=size)


@dataclass(frozen=True, eq=False)
class Scenario:
    """One network snapshot.

    ``path_gain[m, i, k]`` is the gain from user ``i`` to BS ``m`` on channel
    ``k``. ``min_rate`` (U,) and ``peak_power`` (U, C) carry the per-user
    requirements so a snapshot can be re-used across requirement sweeps.
    """

    bs_positions: np.ndarray
    user_positions: np.ndarray
    serving_bs: np.ndarray
    path_gain: np.ndarray
    noise: np.ndarray
    min_rate: np.ndarray
    peak_power: np.ndarray
    cell_side: float = 500.0
    seed: Optional[int] = None
    config: Optional[ScenarioConfig] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        for name in ("bs_positions", "user_positions", "serving_bs", "path_gain",
                     "noise", "min_rate", "peak_power"):
            arr = np.array(getattr(self, name), dtype=int if name == "serving_bs" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        B, U, C = self.path_gain.shape
        if self.bs_positions.shape != (B, 2) or self.user_positions.shape != (U, 2):
            raise ValueError("position arrays do not match path_gain shape")
        if self.serving_bs.shape != (U,) or self.noise.shape != (B,):
            raise ValueError("serving_bs/noise do not match path_gain shape")
        if self.min_rate.shape != (U,) or self.peak_power.shape != (U, C):
            raise ValueError("min_rate/peak_power do not match path_gain shape")
        if np.any(self.serving_bs < 0) or np.any(self.serving_bs >= B):
            raise ValueError("serving_bs index out of range")
        if not np.all(self.path_gain > 0):
            raise ValueError("path gains must be strictly positive")
        if not np.all(self.noise > 0):
            raise ValueError("noise powers must be strictly positive")
        if np.any(self.min_rate < 0) or not np.all(self.peak_power > 0):
            raise ValueError("min_rate must be >= 0 and peak_power > 0")

    @property
    def num_cells(self) -> int:
        return self.path_gain.shape[0]

    @property
    def num_users(self) -> int:
        return self.path_gain.shape[1]

    @property
    def num_subchannels(self) -> int:
        return self.path_gain.shape[2]

    @property
    def cell_members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.serving_bs == m) for m in range(self.num_cells)]

    @property
    def own_gain(self) -> np.ndarray:
        """(U, C) gain of each user towards its serving BS."""
        return self.path_gain[self.serving_bs, np.arange(self.num_users), :]

    def with_requirements(self, min_rate=None, peak_power=None) -> "Scenario":
        """Same geometry and fading, different rate or peak-power requirements."""
        changes = {}
        if min_rate is not None:
            changes["min_rate"] = np.broadcast_to(
                np.asarray(min_rate, dtype=float), (self.num_users,)).copy()
        if peak_power is not None:
            changes["peak_power"] = np.broadcast_to(
                np.asarray(peak_power, dtype=float),
                (self.num_users, self.num_subchannels)).copy()
        return dataclasses.replace(self, **changes)

    def fingerprint(self) -> str:
        """SHA-256 over geometry, gains and noise (not the requirements)."""
        digest = hashlib.sha256()
        for arr in (self.bs_positions, self.user_positions, self.serving_bs,
                    self.path_gain, self.noise):
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "config": None if self.config is None else self.config.to_dict(),
            "cell_side": self.cell_side,
            "bs_positions": self.bs_positions.tolist(),
            "user_positions": self.user_positions.tolist(),
            "serving_bs": self.serving_bs.tolist(),
            "path_gain": self.path_gain.tolist(),
            "noise": self.noise.tolist(),
            "min_rate": self.min_rate.tolist(),
            "peak_power": self.peak_power.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Scenario":
        config = data.get("config")
        return cls(
            bs_positions=data["bs_positions"],
            user_positions=data["user_positions"],
            serving_bs=data["serving_bs"],
            path_gain=data["path_gain"],
            noise=data["noise"],
            min_rate=data["min_rate"],
            peak_power=data["peak_power"],
            cell_side=data.get("cell_side", 500.0),
            seed=data.get("seed"),
            config=None if config is None else ScenarioConfig.from_dict(config),
        )


def generate_scenario(config: ScenarioConfig, seed: Optional[int] = None) -> Scenario:
    """Draw a random snapshot. Pure function of ``(config, seed)``.

    ``seed`` defaults to ``config.rng_seed``.
    """
    config.validate()
    seed = config.rng_seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    B, n, C = config.num_cells, config.users_per_cell, config.num_subchannels
    U = B * n
    bs = bs_grid_positions(B, config.cell_side)
    serving = np.repeat(np.arange(B), n)

    users = np.empty((U, 2))
    half = config.cell_side / 2
    for i in range(U):
        centre = bs[serving[i]]
        while True:
            pos = centre + rng.uniform(-half, half, size=2)
            if np.min(np.hypot(*(bs - pos).T)) >= MIN_DISTANCE:
                break
        users[i] = pos

    dist = np.hypot(bs[:, None, 0] - users[None, :, 0], bs[:, None, 1] - users[None, :, 1])
    fading = draw_fading(rng, (B, U, C))
    gain = path_gain(dist[:, :, None], fading, config.path_loss_exponent)
    # exponential draws of exactly 0 have probability ~2^-53 per entry
    gain = np.maximum(gain, np.finfo(float).tiny)

    return Scenario(
        bs_positions=bs,
        user_positions=users,
        serving_bs=serving,
        path_gain=gain,
        noise=np.full(B, config.noise_power),
        min_rate=np.full(U, config.min_rate),
        peak_power=np.full((U, C), config.peak_power),
        cell_side=config.cell_side,
        seed=seed,
        config=config,
    )


@dataclass(frozen=True, eq=False)
class Allocation:
    """Binary channel assignment ``assign[i, k]`` under a multiple-access scheme."""

    scheme: Scheme
    assign: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.assign, dtype=bool)
        if arr.ndim != 2:
            raise ValueError("assign must be a (U, C) table")
        arr.setflags(write=False)
        object.__setattr__(self, "assign", arr)
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))

    @property
    def per_user_channels(self) -> list[np.ndarray]:
        return [np.flatnonzero(row) for row in self.assign]

    def to_dict(self) -> dict[str, Any]:
        return {"scheme": self.scheme.value, "assign": self.assign.astype(int).tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Allocation":
        return cls(Scheme.parse(data["scheme"]), np.asarray(data["assign"], dtype=bool))


def allocate_subchannels(scenario: Scenario, scheme: "Scheme | str") -> Allocation:
    """NOMA: every user gets every channel. OFDMA: equal contiguous blocks per cell.

    Under OFDMA the ``j``-th user of a cell (by global index order) gets
    channels ``[j*C/n, (j+1)*C/n)``.
    """
    scheme = Scheme.parse(scheme)
    U, C = scenario.num_users, scenario.num_subchannels
    if scheme is Scheme.NOMA:
        return Allocation(scheme, np.ones((U, C), dtype=bool))

    assign = np.zeros((U, C), dtype=bool)
    for members in scenario.cell_members:
        n = len(members)
        if n == 0:
            continue
        if C % n:
            raise ValueError(
                f"OFDMA needs num_subchannels ({C}) divisible by users per cell ({n})")
        block = C // n
        for j, user in enumerate(members):
            assign[user, j * block:(j + 1) * block] = True
    return Allocation(scheme, assign)
