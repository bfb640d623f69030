"""Common-stream receive combining: antenna selection, MRC and MMSE weights.

Every user sees the common stream on all of its antennas; a combining vector
``w_k`` turns those copies into one decision variable.  The SINR of the
combined signal is

    a_c^2 |w^H r_c|^2 / (sum_j a_j^2 |w^H r_j|^2 + ||w||^2 noise_var)

where ``r_c = H_k^T p_c`` and ``r_j = H_k^T p_j`` are the effective stream
vectors at user ``k`` (all M private streams appear in the denominator).  The
receivers know their own true channel, so the geometry here is normally built
from the true side; the transmitter-side power search reuses the same code on
the estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, PowerAllocation, StreamLayout, rx_offsets
from .precoding import PrecoderSet

logger = logging.getLogger(__name__)

COMBINER_NONE = "none"
COMBINER_MINMAX = "minmax"
COMBINER_MRC = "mrc"
COMBINER_MMSEC = "mmsec"
COMBINERS = (COMBINER_NONE, COMBINER_MINMAX, COMBINER_MRC, COMBINER_MMSEC)


@dataclass(frozen=True)
class ReceiveGeometry:
    """Effective stream vectors seen by every user for a fixed precoder set.

    ``r_common[k]`` has shape ``(N_k,)`` and ``r_streams[k]`` has shape
    ``(N_k, M)``; both are allocation-independent, so one geometry serves any
    number of candidate power allocations.  The received-signal covariance for
    a specific allocation comes from :meth:`covariance`.
    """

    r_common: tuple[np.ndarray, ...]
    r_streams: tuple[np.ndarray, ...]
    layout: StreamLayout
    noise_var: float

    @property
    def n_users(self) -> int:
        return len(self.r_common)

    def covariance(self, user: int, alloc: PowerAllocation) -> np.ndarray:
        """Hermitian positive-definite covariance of the received vector."""
        rc = self.r_common[user]
        rp = self.r_streams[user]
        cov = alloc.a_common ** 2 * np.outer(rc, rc.conj())
        cov = cov + (rp * alloc.a_private ** 2) @ rp.conj().T
        cov = cov + self.noise_var * np.eye(rc.size)
        return cov


def receive_geometry(
    channels: ChannelSet,
    precoders: PrecoderSet,
    noise_var: float,
    which: str = "true",
) -> ReceiveGeometry:
    """Per-user effective stream vectors on the requested channel side."""
    h = channels.matrix(which)
    r_all = h.T @ np.concatenate([precoders.p_common[:, None], precoders.p_private], axis=1)
    offsets = rx_offsets(channels.rx_antennas)
    r_common = []
    r_streams = []
    for k, n_k in enumerate(channels.rx_antennas):
        rows = slice(offsets[k], offsets[k] + n_k)
        r_common.append(r_all[rows, 0])
        r_streams.append(r_all[rows, 1:])
    return ReceiveGeometry(
        r_common=tuple(r_common),
        r_streams=tuple(r_streams),
        layout=precoders.layout,
        noise_var=noise_var,
    )


def sinr_general(
    w: np.ndarray, geometry: ReceiveGeometry, alloc: PowerAllocation, user: int
) -> float:
    """Common-stream SINR of user ``user`` for an arbitrary combining vector.

    Invariant under ``w -> c w`` for any nonzero complex ``c``.
    """
    w = np.asarray(w, dtype=complex)
    if not np.any(w):
        raise ValueError("combining vector must be nonzero")
    rc = geometry.r_common[user]
    rp = geometry.r_streams[user]
    signal = alloc.a_common ** 2 * np.abs(np.vdot(w, rc)) ** 2
    cross = np.abs(w.conj() @ rp) ** 2
    interference = float(np.dot(alloc.a_private ** 2, cross))
    noise = float(np.vdot(w, w).real) * geometry.noise_var
    return float(signal / (interference + noise))


def minmax_combiner(
    geometry: ReceiveGeometry, alloc: PowerAllocation, user: int
) -> tuple[int, np.ndarray, float]:
    """Select the receive antenna with the highest common rate.

    Returns ``(antenna index, weight vector, rate)``; the weight vector is the
    standard basis vector of the winning antenna and ties break toward the
    lowest index.
    """
    rc = geometry.r_common[user]
    rp = geometry.r_streams[user]
    signal = alloc.a_common ** 2 * np.abs(rc) ** 2
    interference = np.abs(rp) ** 2 @ alloc.a_private ** 2
    gammas = signal / (interference + geometry.noise_var)
    antenna = int(np.argmax(gammas))
    w = np.zeros(rc.size, dtype=complex)
    w[antenna] = 1.0
    rate = float(np.log1p(gammas[antenna]) / np.log(2.0))
    return antenna, w, rate


def mrc_combiner(geometry: ReceiveGeometry, user: int) -> np.ndarray:
    """Weights parallel to the common stream's effective channel.

    Normalized so that ``w^H r_c == 1`` exactly.  A user whose common
    effective channel is identically zero falls back to antenna-1 selection.
    """
    rc = geometry.r_common[user]
    norm2 = float(np.vdot(rc, rc).real)
    if norm2 == 0.0:
        logger.warning("zero common effective channel for user %d; using antenna 1", user)
        w = np.zeros(rc.size, dtype=complex)
        w[0] = 1.0
        return w
    return rc / norm2


def mmsec_combiner(
    geometry: ReceiveGeometry, alloc: PowerAllocation, user: int
) -> np.ndarray:
    """Weights minimizing the mean-square error of the common symbol.

    Solves ``R_yy w = r_c``; among all linear combiners this also maximizes
    the common-stream SINR.
    """
    cov = geometry.covariance(user, alloc)
    rc = geometry.r_common[user]
    cond = np.linalg.cond(cov)
    if cond > 1e12:
        logger.warning(
            "ill-conditioned covariance for user %d (cond=%.3g); solution may be inaccurate",
            user,
            cond,
        )
    return np.linalg.solve(cov, rc)


def combiner_weights(
    kind: str, geometry: ReceiveGeometry, alloc: PowerAllocation, user: int
) -> np.ndarray:
    """Weight vector of the requested combiner (``none`` uses antenna 1)."""
    if kind == COMBINER_NONE:
        w = np.zeros(geometry.r_common[user].size, dtype=complex)
        w[0] = 1.0
        return w
    if kind == COMBINER_MINMAX:
        return minmax_combiner(geometry, alloc, user)[1]
    if kind == COMBINER_MRC:
        return mrc_combiner(geometry, user)
    if kind == COMBINER_MMSEC:
        return mmsec_combiner(geometry, alloc, user)
    raise ValueError(f"unknown combiner kind {kind!r}")
