"""Channel sampling with deterministic, counter-based random streams.

Every draw is a pure function of ``(seed, stream_id)`` through a Philox
counter-based generator, so concurrent workers that use disjoint stream ids
reproduce bit-identical matrices in any execution order.  The Monte Carlo
engine assigns stream ids with :func:`channel_stream` and
:func:`error_stream`; anything replaying a single realization by hand should
use the same helpers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, ConfigurationError, SystemConfig

# Error draws for channel realization i live in the id range
# (i * STREAM_STRIDE, (i + 1) * STREAM_STRIDE); the realization's estimate
# draw sits at the range start.
STREAM_STRIDE = 1 << 20


@dataclass(frozen=True)
class RngSeed:
    """Named sub-stream of the experiment-wide random seed."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def channel_stream(realization: int) -> int:
    """Stream id of the channel-estimate draw for one realization."""
    return realization * STREAM_STRIDE


def error_stream(realization: int, draw: int) -> int:
    """Stream id of the ``draw``-th estimation-error matrix of a realization."""
    if not 0 <= draw < STREAM_STRIDE - 1:
        raise ConfigurationError(f"error draw index {draw} out of range")
    return realization * STREAM_STRIDE + 1 + draw


def _complex_gaussian(rng: np.random.Generator, shape: tuple[int, int], variance: float) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channel(config: SystemConfig, rng: RngSeed) -> np.ndarray:
    """Channel estimate with i.i.d. unit-variance complex Gaussian entries."""
    gen = rng.generator()
    return _complex_gaussian(gen, (config.n_tx, config.n_rx), 1.0)


def sample_error(config: SystemConfig, snr_linear: float, rng: RngSeed) -> np.ndarray:
    """Estimation-error matrix for the configured CSIT mode.

    Perfect CSIT yields an exact zero matrix; the other modes draw i.i.d.
    complex Gaussian entries with variance ``config.error_variance(snr)``.
    """
    variance = config.error_variance(snr_linear)
    if variance == 0.0:
        return np.zeros((config.n_tx, config.n_rx), dtype=complex)
    gen = rng.generator()
    return _complex_gaussian(gen, (config.n_tx, config.n_rx), variance)


def compose_channel(h_est: np.ndarray, h_err: np.ndarray, rx_antennas) -> ChannelSet:
    """Assemble a :class:`ChannelSet` with ``h_true = h_est + h_err`` exactly."""
    h_est = np.asarray(h_est, dtype=complex)
    h_err = np.asarray(h_err, dtype=complex)
    if h_est.shape != h_err.shape:
        raise ConfigurationError(
            f"estimate shape {h_est.shape} does not match error shape {h_err.shape}"
        )
    h_true = h_est + h_err
    for m in (h_true, h_est, h_err):
        m.flags.writeable = False
    return ChannelSet(h_true=h_true, h_est=h_est, h_err=h_err, rx_antennas=tuple(rx_antennas))
