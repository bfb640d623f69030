"""Linear precoders for the downlink and the common-stream power search.

Two private-precoder families are provided:

* ``rbd``: a two-stage design.  The first stage suppresses the channels of
  the other users through a regularized inverse square root built from the
  SVD of the deflated estimate (the user's own columns removed); the second
  stage diagonalizes the resulting per-user effective channel with another
  SVD, which also yields the per-user receive filter.
* ``mmse``: the single-stage transmit Wiener filter, regularized by
  ``n_rx * noise_var / total_power`` and scaled by one global scalar so that
  uniform stream gains meet the power budget exactly.

All precoders are functions of the channel *estimate* only; the estimation
error never enters the design.  SVD factors are phase-fixed (largest-modulus
entry of each right-singular vector made real positive) so results are
reproducible across linear-algebra providers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    ChannelSet,
    ConfigurationError,
    PowerAllocation,
    StreamLayout,
    SystemConfig,
    build_layout,
)


def _fix_svd_phases(u: np.ndarray, s: np.ndarray, vh: np.ndarray):
    """Fix the phase ambiguity of an SVD in place.

    For every right-singular vector the largest-modulus entry is rotated to be
    real positive; paired left vectors rotate with it so the product is
    unchanged.  Unpaired (null-space) columns of ``u`` are fixed the same way.
    """
    k = s.size
    n = vh.shape[0]
    idx = np.argmax(np.abs(vh), axis=1)
    c = vh[np.arange(n), idx]
    c = c / np.abs(c)
    vh *= np.conj(c)[:, None]
    u[:, : min(k, n)] *= c[: min(k, n)][None, :]
    m = u.shape[1]
    if m > k:
        idx_u = np.argmax(np.abs(u[:, k:]), axis=0)
        cu = u[idx_u, np.arange(k, m)]
        cu = cu / np.abs(cu)
        u[:, k:] *= np.conj(cu)[None, :]
    return u, s, vh


def svd_fixed(a: np.ndarray):
    """Full SVD ``a = u @ diag_rect(s) @ vh`` with deterministic phases."""
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    return _fix_svd_phases(u, s, vh)


@dataclass(frozen=True)
class FirstStageFactors:
    """First RBD stage of one user: suppression filter plus its SVD inputs."""

    p_a: np.ndarray          # (n_tx, n_tx)
    s_deflated: np.ndarray   # singular values of the deflated estimate (transposed)
    v_deflated: np.ndarray   # (n_tx, n_tx) right singular vectors, full basis


@dataclass(frozen=True)
class RbdUserFactors:
    """Both RBD stages of one user.

    ``h_eff`` is the estimate-side effective channel ``H_k^T @ p_a`` with SVD
    ``u_eff @ diag_rect(s_eff) @ vh_eff`` (full matrices, so ``vh_eff`` is
    ``n_tx x n_tx``).
    """

    p_a: np.ndarray
    s_deflated: np.ndarray
    v_deflated: np.ndarray
    h_eff: np.ndarray        # (n_k, n_tx)
    u_eff: np.ndarray        # (n_k, n_k)
    s_eff: np.ndarray        # (min(n_k, n_tx),)
    vh_eff: np.ndarray       # (n_tx, n_tx)


@dataclass(frozen=True)
class PrecoderSet:
    """Common precoder, private precoder columns and receive filters.

    ``p_common`` is unit norm; stream powers are carried entirely by the
    :class:`~rsmimo.model.PowerAllocation` gains.  For the RBD family the
    per-user SVD factors are kept for the closed-form rate analysis.
    """

    kind: str
    p_common: np.ndarray                    # (n_tx,)
    p_private: np.ndarray                   # (n_tx, M)
    rx_filters: tuple[np.ndarray, ...]      # per user, (M_k, N_k)
    layout: StreamLayout
    rbd: tuple[RbdUserFactors, ...] | None = None
    regularization: float | None = None

    def private_block(self, user: int) -> np.ndarray:
        return self.p_private[:, self.layout.slice(user)]


def regularization_constant(config: SystemConfig) -> float:
    """Loading term ``n_rx * noise_var / total_power`` shared by both designs."""
    return config.n_rx * config.noise_var / config.total_power


def first_stage_filter(h_deflated: np.ndarray, reg: float) -> FirstStageFactors:
    """First-stage suppression filter for one user.

    ``h_deflated`` is the estimate with the user's own columns removed, shape
    ``(n_tx, n_rx - n_k)``.  The filter is ``V (S^T S + reg I)^{-1/2}`` where
    ``U S V^H`` is the SVD of ``h_deflated.T``; the bracketed matrix is
    diagonal, so the inverse square root is taken entrywise.
    """
    if reg <= 0.0:
        raise ConfigurationError("regularization must be positive (noise_var > 0)")
    n_tx = h_deflated.shape[0]
    _, s, vh = svd_fixed(h_deflated.T)
    weights = np.zeros(n_tx)
    weights[: s.size] = s ** 2
    inv_root = 1.0 / np.sqrt(weights + reg)
    p_a = vh.conj().T * inv_root[None, :]
    return FirstStageFactors(p_a=p_a, s_deflated=s, v_deflated=vh.conj().T)


def rbd_first_stage(channels: ChannelSet, config: SystemConfig) -> tuple[FirstStageFactors, ...]:
    """First-stage filters for all users, computed from the estimate."""
    reg = regularization_constant(config)
    return tuple(
        first_stage_filter(channels.deflated(k, which="est"), reg)
        for k in range(config.n_users)
    )


def rbd_second_stage(
    channels: ChannelSet,
    config: SystemConfig,
    first: tuple[FirstStageFactors, ...],
) -> tuple[RbdUserFactors, ...]:
    """Diagonalize each user's effective channel and keep all SVD factors."""
    factors = []
    for k, stage in enumerate(first):
        h_eff = channels.user_block(k, which="est").T @ stage.p_a
        u, s, vh = svd_fixed(h_eff)
        factors.append(
            RbdUserFactors(
                p_a=stage.p_a,
                s_deflated=stage.s_deflated,
                v_deflated=stage.v_deflated,
                h_eff=h_eff,
                u_eff=u,
                s_eff=s,
                vh_eff=vh,
            )
        )
    return tuple(factors)


def common_precoder(channels: ChannelSet) -> np.ndarray:
    """Dominant transmit direction of the estimate, used for the common stream.

    Returns the leading right-singular vector of ``h_est.T`` (unit norm, phase
    fixed), i.e. the direction that maximizes ``||h_est.T @ p||``.
    """
    h = channels.h_est
    if not np.any(h):
        raise ConfigurationError("cannot build a common precoder for an all-zero channel")
    _, _, vh = svd_fixed(h.T)
    return vh[0].conj()


def build_rbd_precoders(channels: ChannelSet, config: SystemConfig) -> PrecoderSet:
    """Two-stage RBD private precoders with their receive filters."""
    layout = build_layout(config)
    factors = rbd_second_stage(channels, config, rbd_first_stage(channels, config))
    columns = []
    filters = []
    for k, f in enumerate(factors):
        m_k = layout.streams[k]
        p_b = f.vh_eff.conj().T[:, :m_k]
        columns.append(f.p_a @ p_b)
        filters.append(f.u_eff.conj().T[:m_k, :])
    return PrecoderSet(
        kind="rbd",
        p_common=common_precoder(channels),
        p_private=np.concatenate(columns, axis=1),
        rx_filters=tuple(filters),
        layout=layout,
        rbd=factors,
        regularization=regularization_constant(config),
    )


def transmit_mmse_filter(h_est: np.ndarray, reg: float) -> np.ndarray:
    """Unscaled transmit Wiener filter for the link ``y = h_est.T @ x + n``.

    ``T^H (T T^H + reg I)^{-1}`` with ``T = h_est.T``; for ``reg -> 0`` and a
    square invertible ``T`` this tends to ``T^{-1}``, the channel-inverting
    limit.
    """
    t = h_est.T
    n_rx = t.shape[0]
    gram = t @ t.conj().T
    return t.conj().T @ np.linalg.inv(gram + reg * np.eye(n_rx))


def mmse_precoder(channels: ChannelSet, config: SystemConfig) -> np.ndarray:
    """Regularized channel-inversion private precoder, globally power-scaled.

    Each receive antenna maps to one column; users with fewer streams than
    antennas keep the leading columns of their block.  A single scalar scales
    the whole matrix so the Frobenius norm squared equals the power budget,
    which makes uniform unit gains meet the budget exactly.
    """
    layout = build_layout(config)
    raw = transmit_mmse_filter(channels.h_est, regularization_constant(config))
    start = 0
    columns = []
    for k, n_k in enumerate(config.rx_antennas):
        columns.append(raw[:, start : start + layout.streams[k]])
        start += n_k
    p = np.concatenate(columns, axis=1)
    scale = np.sqrt(config.total_power / np.sum(np.abs(p) ** 2))
    return scale * p


def build_mmse_precoders(channels: ChannelSet, config: SystemConfig) -> PrecoderSet:
    """MMSE private precoders with identity receive filters."""
    layout = build_layout(config)
    filters = tuple(
        np.eye(layout.streams[k], config.rx_antennas[k], dtype=complex)
        for k in range(config.n_users)
    )
    return PrecoderSet(
        kind="mmse",
        p_common=common_precoder(channels),
        p_private=mmse_precoder(channels, config),
        rx_filters=filters,
        layout=layout,
        regularization=regularization_constant(config),
    )


PRECODER_BUILDERS = {
    "rbd": build_rbd_precoders,
    "mmse": build_mmse_precoders,
}


def build_precoders(kind: str, channels: ChannelSet, config: SystemConfig) -> PrecoderSet:
    try:
        builder = PRECODER_BUILDERS[kind]
    except KeyError:
        raise ConfigurationError(f"unknown precoder kind {kind!r}") from None
    return builder(channels, config)


def uniform_private_gains(
    precoders: PrecoderSet, config: SystemConfig, common_power: float
) -> PowerAllocation:
    """Equal private gains that exhaust the budget left by the common stream.

    All private streams share one amplitude ``a`` with
    ``a^2 = (total_power - common_power) / sum_j ||p_j||^2``, so the transmit
    power constraint binds exactly.
    """
    if common_power < 0.0 or common_power > config.total_power * (1.0 + 1e-12):
        raise ConfigurationError("common-stream power outside the budget")
    col_norms = np.sum(np.abs(precoders.p_private) ** 2, axis=0)
    remaining = max(config.total_power - common_power, 0.0)
    a = np.sqrt(remaining / np.sum(col_norms))
    return PowerAllocation(
        a_common=float(np.sqrt(common_power)),
        a_private=np.full(precoders.p_private.shape[1], a),
    )


def power_search(
    precoders: PrecoderSet,
    channels: ChannelSet,
    config: SystemConfig,
    grid_size: int = 33,
    *,
    combiner: str = "none",
    common_grid=None,
    h_true_ensemble: np.ndarray | None = None,
) -> PowerAllocation:
    """Exhaustive search of the common-stream power on a uniform grid.

    Evaluates the sum rate on a grid of common powers in ``[0, total_power]``
    (``grid_size`` points, or the explicit ``common_grid`` values) with the
    remaining power spread uniformly over the private streams, and returns the
    maximizing allocation.  By default the rates come from the channel set's
    true side; passing ``h_true_ensemble`` (shape ``(E, n_tx, n_rx)``) instead
    maximizes the conditional mean sum rate over an ensemble, which is how the
    Monte Carlo engine picks the split knowing only the estimate and the error
    statistics.  Ties break toward the smaller common power because the grid
    is ascending.
    """
    from . import rates

    if common_grid is None and grid_size < 2:
        raise ConfigurationError(f"grid_size must be >= 2, got {grid_size}")
    a_common, gains = rates._power_grid(precoders, config, True, grid_size, common_grid)
    if h_true_ensemble is None:
        h_true_ensemble = channels.h_true[None, :, :]
    cond_common, cond_private = rates.conditional_rate_table(
        h_true_ensemble, channels.rx_antennas, precoders,
        a_common, gains, config.noise_var, combiner,
    )
    totals = cond_common.min(axis=-1) + cond_private
    best = int(np.argmax(totals))
    return PowerAllocation(a_common=float(a_common[best]), a_private=np.asarray(gains[best]))
