"""Scenario-driven sweeps: presets, config files and CSV output.

A scenario fixes one curve of one figure-style experiment: the system
geometry, the precoder family, the combiner, whether rate splitting is on,
the sweep axis (SNR in dB or estimation-error variance at a fixed SNR) and
the Monte Carlo realization counts.  ``run_scenario`` maps every sweep point
to an ergodic-sum-rate evaluation; ``emit_csv`` writes the decomposed results
with enough digits for bitwise comparison across runs.

The preset catalog ships the three reference experiments at two scales
(``desk``: 200 channel draws x 20 error draws, ``paper``: 1000 x 100) for
seven transmission arms each: conventional MMSE and RBD precoding, rate
splitting without a combiner on both precoders, and rate splitting with the
antenna-selection, MRC and MMSE combiners on RBD.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .combining import COMBINER_NONE, COMBINERS
from .model import (
    CSIT_FIXED,
    CSIT_MODES,
    CSIT_PERFECT,
    CSIT_SNR_SCALED,
    ConfigurationError,
    SystemConfig,
)
from .precoding import PRECODER_BUILDERS
from .rates import ergodic_sum_rate

SWEEP_SNR = "snr"
SWEEP_ERROR_VAR = "error_var"
SWEEPS = (SWEEP_SNR, SWEEP_ERROR_VAR)


@dataclass(frozen=True)
class Scenario:
    """Complete description of one sweep experiment."""

    name: str
    config: SystemConfig
    precoder: str = "rbd"
    combiner: str = COMBINER_NONE
    rs_enabled: bool = True
    sweep: str = SWEEP_SNR
    points: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    fixed_snr_db: float = 20.0
    n_channels: int = 200
    n_errors: int = 20
    grid_size: int = 33
    seed: int = 1
    common_grid: tuple[float, ...] | None = None
    min_of_means: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(float(p) for p in self.points))
        if self.common_grid is not None:
            object.__setattr__(
                self, "common_grid", tuple(float(g) for g in self.common_grid)
            )
        if self.precoder not in PRECODER_BUILDERS:
            raise ConfigurationError(f"unknown precoder {self.precoder!r}")
        if self.combiner not in COMBINERS:
            raise ConfigurationError(f"unknown combiner {self.combiner!r}")
        if not self.rs_enabled and self.combiner != COMBINER_NONE:
            raise ConfigurationError("combiners require rate splitting to be enabled")
        if self.sweep not in SWEEPS:
            raise ConfigurationError(f"unknown sweep kind {self.sweep!r}")
        if len(self.points) == 0:
            pass  # an empty sweep is legal and yields a header-only CSV
        elif any(b <= a for a, b in zip(self.points, self.points[1:])):
            raise ConfigurationError("sweep points must be strictly increasing")
        if self.sweep == SWEEP_ERROR_VAR and any(p < 0.0 for p in self.points):
            raise ConfigurationError("error variances must be nonnegative")
        if self.n_channels < 1 or self.n_errors < 1:
            raise ConfigurationError("realization counts must be >= 1")

    def point_config(self, value: float) -> SystemConfig:
        """System configuration at one sweep point."""
        if self.sweep == SWEEP_SNR:
            power = self.config.noise_var * 10.0 ** (value / 10.0)
            return replace(self.config, total_power=power)
        power = self.config.noise_var * 10.0 ** (self.fixed_snr_db / 10.0)
        return replace(self.config, total_power=power, csit=CSIT_FIXED, error_var=value)


@dataclass(frozen=True)
class SweepPoint:
    sweep_value: float
    esr: float
    common: float
    private: float
    stderr: float
    seconds: float


@dataclass(frozen=True)
class SweepResult:
    name: str
    sweep: str
    points: tuple[SweepPoint, ...]


def run_scenario(scenario: Scenario, *, workers: int = 1, timing: bool = False) -> SweepResult:
    """Evaluate the ergodic sum rate at every sweep point.

    Results are deterministic for a fixed seed regardless of ``workers``.
    Wall time per point is recorded only when ``timing`` is set, so the
    default output is reproducible byte for byte.
    """
    rows = []
    for value in scenario.points:
        begin = time.perf_counter()
        point = ergodic_sum_rate(
            scenario.point_config(value),
            scenario.precoder,
            scenario.combiner,
            scenario.rs_enabled,
            scenario.n_channels,
            scenario.n_errors,
            scenario.seed,
            grid_size=scenario.grid_size,
            common_grid=scenario.common_grid,
            min_of_means=scenario.min_of_means,
            workers=workers,
        )
        seconds = time.perf_counter() - begin if timing else 0.0
        rows.append(
            SweepPoint(
                sweep_value=value,
                esr=point.esr,
                common=point.common,
                private=point.private,
                stderr=point.stderr,
                seconds=seconds,
            )
        )
    return SweepResult(name=scenario.name, sweep=scenario.sweep, points=tuple(rows))


CSV_HEADER = "sweep_value,esr,common,private,stderr,seconds"


def emit_csv(result: SweepResult, path) -> None:
    """Write one sweep as UTF-8 CSV with 13 significant digits per value."""
    lines = [CSV_HEADER]
    for p in result.points:
        lines.append(
            ",".join(
                f"{v:.12e}"
                for v in (p.sweep_value, p.esr, p.common, p.private, p.stderr, p.seconds)
            )
        )
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write sweep CSV to {path}: {exc}") from exc


_ARMS = {
    "mmse": ("mmse", COMBINER_NONE, False),
    "rbd": ("rbd", COMBINER_NONE, False),
    "mmse-rs": ("mmse", COMBINER_NONE, True),
    "rbd-rs": ("rbd", COMBINER_NONE, True),
    "rbd-rs-minmax": ("rbd", "minmax", True),
    "rbd-rs-mrc": ("rbd", "mrc", True),
    "rbd-rs-mmsec": ("rbd", "mmsec", True),
}

_SCALES = {"desk": (200, 20), "paper": (1000, 100)}

_BASE_GEOMETRY = dict(n_tx=12, rx_antennas=(2, 2, 2, 2, 2, 2), noise_var=1.0)

DEFAULT_SNR_GRID_DB = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
ERROR_VAR_GRID = (0.05, 0.1, 0.2, 0.3)


def reference_scenarios() -> dict[str, Scenario]:
    """Named catalog of the shipped experiments.

    ``fig3``: fixed estimation-error variance 0.1, swept over SNR.
    ``fig4``: error-variance sweep at 20 dB SNR.
    ``fig5``: SNR sweep with the error variance shrinking as
    ``0.94 * snr^-0.6``.
    """
    catalog: dict[str, Scenario] = {}
    experiments = {
        "fig3": dict(
            config=SystemConfig(csit=CSIT_FIXED, error_var=0.1, **_BASE_GEOMETRY),
            sweep=SWEEP_SNR,
            points=DEFAULT_SNR_GRID_DB,
        ),
        "fig4": dict(
            config=SystemConfig(csit=CSIT_FIXED, error_var=0.1, **_BASE_GEOMETRY),
            sweep=SWEEP_ERROR_VAR,
            points=ERROR_VAR_GRID,
            fixed_snr_db=20.0,
        ),
        "fig5": dict(
            config=SystemConfig(
                csit=CSIT_SNR_SCALED, error_xi=0.94, error_alpha=0.6, **_BASE_GEOMETRY
            ),
            sweep=SWEEP_SNR,
            points=DEFAULT_SNR_GRID_DB,
        ),
    }
    for exp_name, exp in experiments.items():
        for arm_name, (precoder, combiner, rs) in _ARMS.items():
            for scale, (n_channels, n_errors) in _SCALES.items():
                name = f"{exp_name}-{arm_name}-{scale}"
                catalog[name] = Scenario(
                    name=name,
                    precoder=precoder,
                    combiner=combiner,
                    rs_enabled=rs,
                    n_channels=n_channels,
                    n_errors=n_errors,
                    **exp,
                )
    return catalog


# ---------------------------------------------------------------------------
# Flat key = value scenario files
# ---------------------------------------------------------------------------

_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_bool(value: str) -> bool:
    try:
        return _BOOL_VALUES[value.strip().lower()]
    except KeyError:
        raise ConfigurationError(f"expected a boolean, got {value!r}") from None


def _parse_floats(value: str) -> tuple[float, ...]:
    return tuple(float(v) for v in value.split(",") if v.strip())


def _parse_ints(value: str) -> tuple[int, ...]:
    return tuple(int(v) for v in value.split(",") if v.strip())


def parse_scenario_text(text: str, name: str = "custom") -> Scenario:
    """Parse the flat ``key = value`` scenario format (``#`` comments)."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()

    known = {
        "name", "n_tx", "rx_antennas", "streams_per_user", "noise_var",
        "csit", "error_var", "xi", "alpha",
        "precoder", "combiner", "rs_enabled", "sweep", "points",
        "fixed_snr_db", "n_channels", "n_errors", "grid_size", "seed",
        "common_grid", "min_of_means",
    }
    unknown = set(entries) - known
    if unknown:
        raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")

    def take(key: str, default=None):
        return entries.get(key, default)

    csit = take("csit", CSIT_PERFECT)
    if csit not in CSIT_MODES:
        raise ConfigurationError(f"unknown csit mode {csit!r}")
    config = SystemConfig(
        n_tx=int(take("n_tx", 12)),
        rx_antennas=_parse_ints(take("rx_antennas", "2,2,2,2,2,2")),
        streams_per_user=(
            _parse_ints(entries["streams_per_user"])
            if "streams_per_user" in entries
            else None
        ),
        noise_var=float(take("noise_var", 1.0)),
        csit=csit,
        error_var=float(take("error_var", 0.0)),
        error_xi=float(take("xi", 0.94)),
        error_alpha=float(take("alpha", 0.6)),
    )
    return Scenario(
        name=take("name", name),
        config=config,
        precoder=take("precoder", "rbd"),
        combiner=take("combiner", COMBINER_NONE),
        rs_enabled=_parse_bool(take("rs_enabled", "true")),
        sweep=take("sweep", SWEEP_SNR),
        points=_parse_floats(take("points", "0,5,10,15,20,25,30")),
        fixed_snr_db=float(take("fixed_snr_db", 20.0)),
        n_channels=int(take("n_channels", 200)),
        n_errors=int(take("n_errors", 20)),
        grid_size=int(take("grid_size", 33)),
        seed=int(take("seed", 1)),
        common_grid=(
            _parse_floats(entries["common_grid"]) if "common_grid" in entries else None
        ),
        min_of_means=_parse_bool(take("min_of_means", "false")),
    )


def parse_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario_text(fh.read())
