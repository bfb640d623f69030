"""Shared domain types for the rate-splitting MU-MIMO downlink.

Conventions used everywhere in this package:

* The channel matrix ``H`` is stored with shape ``(n_tx, n_rx)``; the link
  applies its transpose, so a receive vector is ``H_k.T @ x + n``.  Keeping a
  single storage convention avoids transposition bugs between modules.
* Per-user quantities are concatenated in user order.  User ``k`` owns a
  contiguous block of receive antennas and a contiguous block of private
  streams.
* Powers are linear (unitless energy), never dB.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

CSIT_PERFECT = "perfect"
CSIT_FIXED = "fixed"
CSIT_SNR_SCALED = "snr_scaled"
CSIT_MODES = (CSIT_PERFECT, CSIT_FIXED, CSIT_SNR_SCALED)


class ConfigurationError(ValueError):
    """A system or scenario description violates the model constraints."""


class PowerBudgetError(RuntimeError):
    """An allocation exceeded the transmit power budget."""


@dataclass(frozen=True)
class SystemConfig:
    """Geometry, power and CSIT-error description of one downlink system.

    ``rx_antennas[k]`` is the antenna count of user ``k``; ``streams_per_user``
    defaults to one stream per receive antenna.  ``csit`` selects how the
    transmitter-side channel estimate degrades: ``perfect`` (no error),
    ``fixed`` (error entries with variance ``error_var``) or ``snr_scaled``
    (variance ``error_xi * snr**-error_alpha``).
    """

    n_tx: int
    rx_antennas: tuple[int, ...]
    streams_per_user: tuple[int, ...] | None = None
    total_power: float = 1.0
    noise_var: float = 1.0
    csit: str = CSIT_PERFECT
    error_var: float = 0.0
    error_xi: float = 0.94
    error_alpha: float = 0.6

    def __post_init__(self) -> None:
        object.__setattr__(self, "rx_antennas", tuple(int(n) for n in self.rx_antennas))
        if self.streams_per_user is not None:
            object.__setattr__(
                self, "streams_per_user", tuple(int(m) for m in self.streams_per_user)
            )
        k = len(self.rx_antennas)
        if k < 2:
            raise ConfigurationError(f"need at least 2 users, got {k}")
        if self.n_tx < k:
            raise ConfigurationError(f"n_tx={self.n_tx} must be >= number of users {k}")
        if any(n < 1 for n in self.rx_antennas):
            raise ConfigurationError("every user needs at least one receive antenna")
        if self.n_rx > self.n_tx:
            raise ConfigurationError(
                f"total receive antennas {self.n_rx} exceed n_tx={self.n_tx}"
            )
        streams = self.streams
        if len(streams) != k:
            raise ConfigurationError("streams_per_user length must match user count")
        for m, n in zip(streams, self.rx_antennas):
            if not 1 <= m <= n:
                raise ConfigurationError(
                    f"streams per user must satisfy 1 <= M_k <= N_k, got {m} vs {n}"
                )
        if self.total_power <= 0.0:
            raise ConfigurationError("total_power must be positive")
        if self.noise_var <= 0.0:
            raise ConfigurationError("noise_var must be positive")
        if self.csit not in CSIT_MODES:
            raise ConfigurationError(f"unknown csit mode {self.csit!r}")
        if self.csit == CSIT_FIXED and self.error_var < 0.0:
            raise ConfigurationError("error_var must be nonnegative")
        if self.csit == CSIT_SNR_SCALED and (self.error_xi <= 0.0 or self.error_alpha <= 0.0):
            raise ConfigurationError("snr_scaled needs error_xi > 0 and error_alpha > 0")

    @property
    def n_users(self) -> int:
        return len(self.rx_antennas)

    @property
    def n_rx(self) -> int:
        return sum(self.rx_antennas)

    @property
    def streams(self) -> tuple[int, ...]:
        if self.streams_per_user is None:
            return self.rx_antennas
        return self.streams_per_user

    @property
    def snr_linear(self) -> float:
        return self.total_power / self.noise_var

    def error_variance(self, snr_linear: float | None = None) -> float:
        """Estimation-error variance for the configured CSIT mode."""
        if self.csit == CSIT_PERFECT:
            return 0.0
        if self.csit == CSIT_FIXED:
            return self.error_var
        snr = self.snr_linear if snr_linear is None else snr_linear
        return self.error_xi * snr ** (-self.error_alpha)


@dataclass(frozen=True)
class StreamLayout:
    """Bookkeeping for the private streams: sizes, offsets and ownership."""

    streams: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "streams", tuple(int(m) for m in self.streams))
        offsets = tuple(int(n) for n in np.cumsum((0,) + self.streams[:-1]))
        object.__setattr__(self, "offsets", offsets)

    @property
    def total_private(self) -> int:
        return sum(self.streams)

    @property
    def n_users(self) -> int:
        return len(self.streams)

    def slice(self, user: int) -> slice:
        """Global private-stream slice owned by ``user`` (0-based)."""
        start = self.offsets[user]
        return slice(start, start + self.streams[user])

    def membership(self, user: int) -> frozenset[int]:
        """Set of global private-stream indices owned by ``user`` (0-based)."""
        s = self.slice(user)
        return frozenset(range(s.start, s.stop))


def build_layout(config: SystemConfig) -> StreamLayout:
    """Stream layout for a validated configuration (M + 1 streams in total)."""
    return StreamLayout(config.streams)


def rx_offsets(rx_antennas: Sequence[int]) -> tuple[int, ...]:
    """Start index of each user's receive-antenna block."""
    return tuple(int(n) for n in np.cumsum((0,) + tuple(rx_antennas)[:-1]))


@dataclass(frozen=True)
class ChannelSet:
    """True channel, transmitter-side estimate and estimation error.

    All three matrices have shape ``(n_tx, n_rx)`` and satisfy
    ``h_true == h_est + h_err`` exactly by construction.
    """

    h_true: np.ndarray
    h_est: np.ndarray
    h_err: np.ndarray
    rx_antennas: tuple[int, ...]

    def __post_init__(self) -> None:
        shape = self.h_true.shape
        if self.h_est.shape != shape or self.h_err.shape != shape:
            raise ConfigurationError("channel matrices must share one shape")
        if shape[1] != sum(self.rx_antennas):
            raise ConfigurationError(
                f"channel has {shape[1]} receive columns, users declare {sum(self.rx_antennas)}"
            )

    @property
    def n_tx(self) -> int:
        return self.h_true.shape[0]

    @property
    def n_rx(self) -> int:
        return self.h_true.shape[1]

    def matrix(self, which: str = "true") -> np.ndarray:
        if which == "true":
            return self.h_true
        if which == "est":
            return self.h_est
        if which == "err":
            return self.h_err
        raise ValueError(f"unknown channel side {which!r}")

    def user_block(self, user: int, which: str = "true") -> np.ndarray:
        """Columns of the requested matrix owned by ``user``, shape (n_tx, N_k)."""
        start = rx_offsets(self.rx_antennas)[user]
        return self.matrix(which)[:, start : start + self.rx_antennas[user]]

    def deflated(self, user: int, which: str = "est") -> np.ndarray:
        """Requested matrix with ``user``'s columns removed, order preserved."""
        start = rx_offsets(self.rx_antennas)[user]
        stop = start + self.rx_antennas[user]
        m = self.matrix(which)
        return np.concatenate([m[:, :start], m[:, stop:]], axis=1)


@dataclass(frozen=True)
class PowerAllocation:
    """Amplitude gains for the common stream and the M private streams."""

    a_common: float
    a_private: np.ndarray

    def __post_init__(self) -> None:
        gains = np.asarray(self.a_private, dtype=float)
        object.__setattr__(self, "a_private", gains)
        if self.a_common < 0.0 or np.any(gains < 0.0):
            raise ConfigurationError("stream gains must be nonnegative")


@dataclass(frozen=True)
class RateReport:
    """Per-user rates of one evaluation, with derived aggregates.

    ``common_rate`` is the minimum over users (every user must decode the
    common stream), and ``sum_rate = common_rate + sum_private`` by
    construction, so the consistency invariants hold exactly.
    """

    common_per_user: tuple[float, ...]
    private_per_user: tuple[float, ...]

    @property
    def common_rate(self) -> float:
        return min(self.common_per_user)

    @property
    def sum_private(self) -> float:
        return float(sum(self.private_per_user))

    @property
    def sum_rate(self) -> float:
        return self.common_rate + self.sum_private


def transmit_signal(symbols: np.ndarray, precoders, alloc: PowerAllocation) -> np.ndarray:
    """Superimposed transmit vector for one symbol draw.

    ``symbols`` holds the common symbol first, then the M private symbols.
    The result is ``a_c s_c p_c + P @ (a ⊙ s)``, linear in the symbols.
    """
    symbols = np.asarray(symbols)
    m = precoders.p_private.shape[1]
    if symbols.shape != (m + 1,):
        raise ConfigurationError(f"expected {m + 1} symbols, got {symbols.shape}")
    if alloc.a_private.shape != (m,):
        raise ConfigurationError("allocation does not match precoder streams")
    x = alloc.a_common * symbols[0] * precoders.p_common
    x = x + precoders.p_private @ (alloc.a_private * symbols[1:])
    return x


def check_power_budget(precoders, alloc: PowerAllocation, config: SystemConfig) -> float:
    """Expected transmit power for unit-variance uncorrelated symbols.

    Returns ``a_c^2 ||p_c||^2 + sum_j a_j^2 ||p_j||^2``; enforcing the budget
    against ``config.total_power`` is the caller's policy.
    """
    common = alloc.a_common ** 2 * float(np.vdot(precoders.p_common, precoders.p_common).real)
    col_norms = np.sum(np.abs(precoders.p_private) ** 2, axis=0)
    return common + float(np.dot(alloc.a_private ** 2, col_norms))
