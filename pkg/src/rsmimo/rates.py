"""Instantaneous and ergodic rates of the rate-splitting downlink.

The common stream is decoded first (through one of the combiners) and removed
by successive interference cancellation, so the private rate of a user is the
log-det capacity of its filtered effective channel against the remaining
multiuser interference plus noise.

The ergodic sum rate follows a two-level Monte Carlo protocol: an outer loop
draws channel estimates, an inner loop draws estimation errors and averages
the instantaneous rates conditioned on the estimate.  Precoders are designed
once per estimate; the common-stream power is chosen per estimate by
maximizing the conditional sum rate over the inner error ensemble, then held
fixed.  Realizations use pre-assigned random sub-streams and an
order-independent reduction, so results are bit-identical for any worker
count.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass

import numpy as np

from . import channel as channel_mod
from .combining import (
    COMBINER_MINMAX,
    COMBINER_MMSEC,
    COMBINER_MRC,
    COMBINER_NONE,
    ReceiveGeometry,
    combiner_weights,
    sinr_general,
)
from .model import (
    CSIT_PERFECT,
    ConfigurationError,
    PowerAllocation,
    PowerBudgetError,
    RateReport,
    SystemConfig,
    check_power_budget,
    rx_offsets,
)
from .precoding import PrecoderSet, build_precoders

_LOG2 = np.log(2.0)
BUDGET_SLACK = 1e-9


def common_rate(gamma: float) -> float:
    """Rate of the common stream at SINR ``gamma``: ``log2(1 + gamma)``."""
    if gamma < 0.0:
        raise ValueError(f"SINR must be nonnegative, got {gamma}")
    return float(np.log1p(gamma) / _LOG2)


def private_rate(
    user: int,
    geometry: ReceiveGeometry,
    rx_filters: tuple[np.ndarray, ...],
    alloc: PowerAllocation,
) -> float:
    """Private rate of one user after the common stream has been cancelled.

    ``log2 det(I + F P_k diag(a_k^2) P_k^H F^H R_zz^{-1})`` with
    ``F = G_k H_k^T`` applied to the geometry's channel side and ``R_zz`` the
    covariance of the filtered multiuser interference plus noise.
    """
    g = rx_filters[user]
    f_streams = g @ geometry.r_streams[user]
    own = geometry.layout.slice(user)
    weighted = f_streams * alloc.a_private ** 2
    total = weighted @ f_streams.conj().T
    own_term = weighted[:, own] @ f_streams[:, own].conj().T
    noise = geometry.noise_var * np.eye(g.shape[0])
    r_zz = total - own_term + noise
    _, logdet_full = np.linalg.slogdet(r_zz + own_term)
    _, logdet_noise = np.linalg.slogdet(r_zz)
    return float((logdet_full - logdet_noise) / _LOG2)


def sum_rate(common_per_user, private_per_user) -> RateReport:
    """Assemble a :class:`RateReport`; the sum is ``min(common) + sum(private)``."""
    return RateReport(
        common_per_user=tuple(float(r) for r in common_per_user),
        private_per_user=tuple(float(r) for r in private_per_user),
    )


def instantaneous_report(
    geometry: ReceiveGeometry,
    precoders: PrecoderSet,
    alloc: PowerAllocation,
    combiner: str,
) -> RateReport:
    """Single-allocation rate report through the per-user reference path."""
    commons = []
    privates = []
    for k in range(geometry.n_users):
        w = combiner_weights(combiner, geometry, alloc, k)
        commons.append(common_rate(sinr_general(w, geometry, alloc, k)))
        privates.append(private_rate(k, geometry, precoders.rx_filters, alloc))
    return sum_rate(commons, privates)


# ---------------------------------------------------------------------------
# Batched evaluation
#
# The same formulas as above, written with free leading batch axes so that an
# error ensemble (axis E) and a power-allocation grid (axis G) evaluate in
# single vectorized calls.  Stream vectors carry shape (E, 1, N_k[, M]) while
# the allocation arrays carry (G,) / (G, M); everything broadcasts to (E, G).
# ---------------------------------------------------------------------------


def _batched_sinr(rc, rp, ac2, gains2, noise_var, combiner):
    if combiner in (COMBINER_MINMAX, COMBINER_NONE):
        signal = ac2[..., None] * np.abs(rc) ** 2
        interference = np.einsum("...im,...m->...i", np.abs(rp) ** 2, gains2)
        gammas = signal / (interference + noise_var)
        if combiner == COMBINER_NONE:
            return gammas[..., 0]
        return gammas.max(axis=-1)
    if combiner == COMBINER_MRC:
        norm2 = np.einsum("...i,...i->...", rc, rc.conj()).real
        w = rc / norm2[..., None]
    elif combiner == COMBINER_MMSEC:
        cov = ac2[..., None, None] * np.einsum("...i,...j->...ij", rc, rc.conj())
        cov = cov + np.einsum("...im,...m,...jm->...ij", rp, gains2, rp.conj())
        cov = cov + noise_var * np.eye(rc.shape[-1])
        rhs = np.broadcast_to(rc[..., None], cov.shape[:-1] + (1,))
        w = np.linalg.solve(cov, rhs)[..., 0]
    else:
        raise ValueError(f"unknown combiner kind {combiner!r}")
    signal = ac2 * np.abs(np.einsum("...i,...i->...", w.conj(), rc)) ** 2
    cross = np.abs(np.einsum("...i,...im->...m", w.conj(), rp)) ** 2
    interference = np.einsum("...m,...m->...", gains2, cross)
    noise = np.einsum("...i,...i->...", w, w.conj()).real * noise_var
    return signal / (interference + noise)


def _batched_private(f_streams, gains2, own, noise_var):
    weighted = f_streams * gains2[..., None, :]
    total = np.einsum("...am,...bm->...ab", weighted, f_streams.conj())
    own_term = np.einsum(
        "...am,...bm->...ab", weighted[..., :, own], f_streams[..., :, own].conj()
    )
    eye = noise_var * np.eye(f_streams.shape[-2])
    _, logdet_full = np.linalg.slogdet(total + eye)
    _, logdet_noise = np.linalg.slogdet(total - own_term + eye)
    return (logdet_full - logdet_noise) / _LOG2


def conditional_rate_table(
    h_true_ensemble: np.ndarray,
    rx_antennas: tuple[int, ...],
    precoders: PrecoderSet,
    a_common: np.ndarray,
    gains: np.ndarray,
    noise_var: float,
    combiner: str,
):
    """Conditional mean rates over an ensemble for a grid of allocations.

    ``h_true_ensemble`` has shape ``(E, n_tx, n_rx)``, ``a_common`` shape
    ``(G,)`` and ``gains`` shape ``(G, M)``.  Returns the ensemble-averaged
    per-user common rates, shape ``(G, K)``, and the ensemble-averaged summed
    private rate, shape ``(G,)``.
    """
    p_all = np.concatenate([precoders.p_common[:, None], precoders.p_private], axis=1)
    r_all = np.swapaxes(h_true_ensemble, -2, -1) @ p_all        # (E, N_r, M+1)
    r_all = r_all[:, None, :, :]                                # (E, 1, ...)
    ac2 = np.asarray(a_common, dtype=float) ** 2                # (G,)
    gains2 = np.asarray(gains, dtype=float) ** 2                # (G, M)
    layout = precoders.layout
    offsets = rx_offsets(rx_antennas)
    commons = []
    private_sum = 0.0
    for k, n_k in enumerate(rx_antennas):
        rows = slice(offsets[k], offsets[k] + n_k)
        rc = r_all[..., rows, 0]
        rp = r_all[..., rows, 1:]
        gammas = _batched_sinr(rc, rp, ac2, gains2, noise_var, combiner)
        commons.append((np.log1p(gammas) / _LOG2).mean(axis=0))
        f_streams = np.einsum("ab,...bm->...am", precoders.rx_filters[k], rp)
        private_sum = private_sum + _batched_private(
            f_streams, gains2, layout.slice(k), noise_var
        ).mean(axis=0)
    return np.stack(commons, axis=-1), private_sum


# ---------------------------------------------------------------------------
# Ergodic sum rate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EsrPoint:
    """Ergodic sum rate with its decomposition and outer-loop standard error."""

    esr: float
    common: float
    private: float
    stderr: float
    max_power: float


def _power_grid(precoders, config, rs_enabled, grid_size, common_grid):
    """Common-power grid and matching uniform private gains.

    Returns ``(a_common (G,), gains (G, M))`` such that every row meets the
    transmit power budget exactly.
    """
    if not rs_enabled:
        grid = np.zeros(1)
    elif common_grid is not None:
        grid = np.asarray(common_grid, dtype=float)
        if grid.size == 0 or np.any(grid < 0.0) or np.any(
            grid > config.total_power * (1.0 + 1e-12)
        ):
            raise ConfigurationError("common_grid values must lie in [0, total_power]")
    else:
        if grid_size < 2:
            raise ConfigurationError(f"grid_size must be >= 2, got {grid_size}")
        grid = np.linspace(0.0, config.total_power, grid_size)
    col_norms = np.sum(np.abs(precoders.p_private) ** 2, axis=0)
    remaining = np.clip(config.total_power - grid, 0.0, None)
    abar = np.sqrt(remaining / np.sum(col_norms))
    gains = np.broadcast_to(abar[:, None], (grid.size, col_norms.size))
    return np.sqrt(grid), gains


def _error_ensemble(config, n_errors, seed, index):
    """Stacked estimation-error draws of one realization (zeros when perfect)."""
    if config.csit == CSIT_PERFECT:
        n_errors = 1
    return np.stack([
        channel_mod.sample_error(
            config, config.snr_linear,
            channel_mod.RngSeed(seed, channel_mod.error_stream(index, j)),
        )
        for j in range(n_errors)
    ])


def _realization_stats(args):
    """Conditional rates of one channel realization (one outer-loop draw).

    Designs precoders from the estimate, picks the common power that
    maximizes the conditional sum rate over the realization's error ensemble,
    and returns the conditional rates at that allocation together with the
    transmit power it uses.
    """
    (config, precoder_kind, combiner, rs_enabled, grid_size, common_grid,
     n_errors, seed, index) = args
    h_est = channel_mod.sample_channel(
        config, channel_mod.RngSeed(seed, channel_mod.channel_stream(index))
    )
    channels_est = channel_mod.compose_channel(
        h_est, np.zeros_like(h_est), config.rx_antennas
    )
    precoders = build_precoders(precoder_kind, channels_est, config)
    a_common, gains = _power_grid(precoders, config, rs_enabled, grid_size, common_grid)

    errors = _error_ensemble(config, n_errors, seed, index)
    cond_common, cond_private = conditional_rate_table(
        h_est[None, :, :] + errors, config.rx_antennas, precoders,
        a_common, gains, config.noise_var, combiner,
    )
    totals = cond_common.min(axis=-1) + cond_private
    best = int(np.argmax(totals))

    alloc = PowerAllocation(a_common=float(a_common[best]), a_private=np.asarray(gains[best]))
    power = check_power_budget(precoders, alloc, config)
    if power > config.total_power * (1.0 + BUDGET_SLACK):
        raise PowerBudgetError(f"allocation uses {power} of budget {config.total_power}")
    return cond_common[best], float(cond_private[best]), power


def ergodic_sum_rate(
    config: SystemConfig,
    precoder: str,
    combiner: str,
    rs_enabled: bool,
    n_channels: int,
    n_errors: int,
    seed: int,
    *,
    grid_size: int = 33,
    common_grid=None,
    min_of_means: bool = False,
    workers: int = 1,
) -> EsrPoint:
    """Monte Carlo ergodic sum rate of one operating point.

    By default the common contribution is the outer mean of the per-estimate
    minimum conditional common rate; ``min_of_means`` instead takes the
    minimum over users of the outer means.  Under perfect CSIT the inner loop
    collapses to a single exact draw.  The reported standard error is the
    outer-loop standard error of the per-estimate conditional sum rates.
    """
    if n_channels < 1 or n_errors < 1:
        raise ConfigurationError("realization counts must be >= 1")
    if not rs_enabled and combiner != COMBINER_NONE:
        raise ConfigurationError("combiners require rate splitting to be enabled")
    jobs = [
        (config, precoder, combiner, rs_enabled, grid_size, common_grid,
         n_errors, seed, i)
        for i in range(n_channels)
    ]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_realization_stats, jobs)
    else:
        results = [_realization_stats(job) for job in jobs]

    cond_common = np.stack([r[0] for r in results])      # (n_channels, K)
    cond_private = np.array([r[1] for r in results])     # (n_channels,)
    max_power = max(r[2] for r in results)

    per_channel_min = cond_common.min(axis=1)
    if min_of_means:
        common_part = float(cond_common.mean(axis=0).min())
    else:
        common_part = float(per_channel_min.mean())
    private_part = float(cond_private.mean())
    totals = per_channel_min + cond_private
    stderr = float(totals.std(ddof=1) / np.sqrt(n_channels)) if n_channels > 1 else 0.0
    return EsrPoint(
        esr=common_part + private_part,
        common=common_part,
        private=private_part,
        stderr=stderr,
        max_power=float(max_power),
    )
