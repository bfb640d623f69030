"""Closed-form rate expressions for the RBD design, used as cross-checks.

For RBD precoding every quantity entering the common-stream SINR and the
received-signal decomposition can be rewritten in terms of the design's SVD
factors instead of the composed precoder matrices.  This module implements
those factored forms and verifies them numerically against the direct
definitions; the equivalence suite is the package's strongest correctness
gate because the two routes share almost no intermediate results.

Published versions of these closed forms carry a handful of algebraic slips
(a missing square on a cosine, a transpose dropped on a channel product, the
receive-side unitary misplaced between the antenna and the filtered domain, a
singular value entering unsquared, a wrong per-user gain block).  The
implementations here use the algebraically consistent forms; every correction
is recorded as a :class:`DeviationRecord` together with the largest residual
observed when the corrected form is checked against the direct evaluation,
and :func:`write_deviations` emits them as a line-oriented text file.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .channel import RngSeed, compose_channel, sample_channel, sample_error
from .combining import ReceiveGeometry, mrc_combiner, receive_geometry, sinr_general
from .model import (
    CSIT_FIXED,
    CSIT_PERFECT,
    ChannelSet,
    ConfigurationError,
    PowerAllocation,
    StreamLayout,
    SystemConfig,
    build_layout,
)
from .precoding import PrecoderSet, build_rbd_precoders

_LOG2 = np.log(2.0)

#: relative tolerance for closed-form vs direct checks; exact algebraic
#: identities use IDENTITY_TOL.  Residuals are relative with an absolute
#: floor: values below RESIDUAL_FLOOR are compared against the floor, which
#: makes the pass criterion |a - b| <= max(tol * |b|, tol * floor).
REL_TOL = 1e-8
IDENTITY_TOL = 1e-10
RESIDUAL_FLOOR = 1e-4


def _residual(value, reference) -> float:
    """Largest elementwise relative error, floored to stay meaningful near 0."""
    value = np.asarray(value)
    reference = np.asarray(reference)
    scale = np.maximum(np.abs(reference), RESIDUAL_FLOOR)
    return float(np.max(np.abs(value - reference) / scale))


@dataclass(frozen=True)
class RbdAnalysisFactors:
    """SVD-factored coupling matrices of one RBD realization.

    ``coupling[k][j]`` is the antenna-domain response of user ``k`` to user
    ``j``'s private streams, ``H_k^T P^a_j V_j[:, :M_j]`` built from the true
    channel; ``coupling_err`` uses only the estimation error.  ``filtered``
    and ``filtered_err`` are the same matrices left-multiplied by ``U_k^H``
    (the user's receive filter).  ``lam[q]`` holds the diagonal weights of the
    first-stage filter, ``1 / sqrt(E_tr * s_deflated^2 + n_rx * noise_var)``,
    and ``cross_basis[q] = V_deflated diag(lam) V_eff[:, :M_q]`` expands the
    composed precoder of user ``q`` without forming it.
    """

    layout: StreamLayout
    total_power: float
    noise_var: float
    h_rows: tuple[np.ndarray, ...]
    r_common: tuple[np.ndarray, ...]
    coupling: tuple[tuple[np.ndarray, ...], ...]
    coupling_err: tuple[tuple[np.ndarray, ...], ...]
    filtered: tuple[tuple[np.ndarray, ...], ...]
    filtered_err: tuple[tuple[np.ndarray, ...], ...]
    s_eff: tuple[np.ndarray, ...]
    u_eff: tuple[np.ndarray, ...]
    lam: tuple[np.ndarray, ...]
    cross_basis: tuple[np.ndarray, ...]

    def own_coupling_matrix(self, user: int) -> np.ndarray:
        """Antenna-domain own-stream matrix: estimate part plus error part."""
        m_k = self.layout.streams[user]
        est_part = self.u_eff[user][:, :m_k] * self.s_eff[user][:m_k][None, :]
        return est_part + self.coupling_err[user][user]

    def stream_owner(self, stream: int) -> int:
        for q in range(self.layout.n_users):
            if stream in self.layout.membership(q):
                return q
        raise ConfigurationError(f"stream index {stream} out of range")


def analysis_factors(
    channels: ChannelSet, precoders: PrecoderSet, config: SystemConfig
) -> RbdAnalysisFactors:
    """Assemble the factored coupling matrices for one RBD realization."""
    if precoders.rbd is None:
        raise ConfigurationError("analysis factors require RBD precoders")
    layout = precoders.layout
    k_users = config.n_users
    h_rows = tuple(channels.user_block(k, "true").T for k in range(k_users))
    r_common = tuple(h_rows[k] @ precoders.p_common for k in range(k_users))
    stages = []
    lam = []
    cross_basis = []
    for j in range(k_users):
        fj = precoders.rbd[j]
        v_lead = fj.vh_eff.conj().T[:, : layout.streams[j]]
        stages.append(fj.p_a @ v_lead)
        s_pad = np.zeros(config.n_tx)
        s_pad[: fj.s_deflated.size] = fj.s_deflated
        lam_j = 1.0 / np.sqrt(config.total_power * s_pad ** 2 + config.n_rx * config.noise_var)
        lam.append(lam_j)
        cross_basis.append((fj.v_deflated * lam_j[None, :]) @ v_lead)

    coupling = []
    coupling_err = []
    filtered = []
    filtered_err = []
    for k in range(k_users):
        herr_k = channels.user_block(k, "err").T
        u_h = precoders.rbd[k].u_eff.conj().T
        row = tuple(h_rows[k] @ stages[j] for j in range(k_users))
        row_err = tuple(herr_k @ stages[j] for j in range(k_users))
        coupling.append(row)
        coupling_err.append(row_err)
        filtered.append(tuple(u_h @ m for m in row))
        filtered_err.append(tuple(u_h @ m for m in row_err))
    return RbdAnalysisFactors(
        layout=layout,
        total_power=config.total_power,
        noise_var=config.noise_var,
        h_rows=h_rows,
        r_common=r_common,
        coupling=tuple(coupling),
        coupling_err=tuple(coupling_err),
        filtered=tuple(filtered),
        filtered_err=tuple(filtered_err),
        s_eff=tuple(f.s_eff for f in precoders.rbd),
        u_eff=tuple(f.u_eff for f in precoders.rbd),
        lam=tuple(lam),
        cross_basis=tuple(cross_basis),
    )


@dataclass(frozen=True)
class DecompositionTerms:
    """Per-user coefficients of the filtered received-signal decomposition.

    After applying the receive-side unitary ``U_k^H``, the received vector
    splits into a common term, an own-stream term (rectangular diagonal of the
    effective singular values plus the filtered error coupling), one cross
    term per interfering user, and filtered noise:

        U_k^H y_k = a_c s_c common
                    + own @ (a_k * s_k)
                    + sum_{j != k} cross[j] @ (a_j * s_j)
                    + noise_filter @ n_k
    """

    common: tuple[np.ndarray, ...]
    own: tuple[np.ndarray, ...]
    cross: tuple[tuple[np.ndarray | None, ...], ...]
    noise_filter: tuple[np.ndarray, ...]


def rbd_received_decomposition(
    channels: ChannelSet, precoders: PrecoderSet, config: SystemConfig
) -> DecompositionTerms:
    """Structured received-signal terms of the RBD design (filtered domain)."""
    factors = analysis_factors(channels, precoders, config)
    layout = factors.layout
    common = []
    own = []
    cross = []
    noise_filter = []
    for k in range(layout.n_users):
        u_h = precoders.rbd[k].u_eff.conj().T
        common.append(u_h @ factors.r_common[k])
        n_k = factors.u_eff[k].shape[0]
        m_k = layout.streams[k]
        psi = np.zeros((n_k, m_k))
        np.fill_diagonal(psi, factors.s_eff[k][:m_k])
        own.append(psi + factors.filtered_err[k][k])
        cross.append(
            tuple(
                factors.filtered[k][j] if j != k else None
                for j in range(layout.n_users)
            )
        )
        noise_filter.append(u_h)
    return DecompositionTerms(
        common=tuple(common),
        own=tuple(own),
        cross=tuple(cross),
        noise_filter=tuple(noise_filter),
    )


def minmax_rate_closed_form(
    factors: RbdAnalysisFactors, alloc: PowerAllocation, user: int, antenna: int
) -> float:
    """Per-antenna common rate of the antenna-selection combiner, factored form.

    The own-stream interference collects
    ``|s_eff_t u_eff[i, t] + err-coupling[i, t]|^2`` over the user's streams;
    the cross terms use the antenna-domain couplings of the other users.
    """
    layout = factors.layout
    own_gains2 = alloc.a_private[layout.slice(user)] ** 2
    m_k = layout.streams[user]
    own_coef = (
        factors.s_eff[user][:m_k] * factors.u_eff[user][antenna, :m_k]
        + factors.coupling_err[user][user][antenna, :]
    )
    rho2 = float(np.dot(own_gains2, np.abs(own_coef) ** 2))
    mui = 0.0
    for j in range(layout.n_users):
        if j == user:
            continue
        gains2 = alloc.a_private[layout.slice(j)] ** 2
        mui += float(np.dot(gains2, np.abs(factors.coupling[user][j][antenna, :]) ** 2))
    signal = alloc.a_common ** 2 * np.abs(factors.r_common[user][antenna]) ** 2
    return float(np.log1p(signal / (rho2 + mui + factors.noise_var)) / _LOG2)


def mrc_norm_closed_form(factors: RbdAnalysisFactors, user: int, stream: int) -> float:
    """Squared norm of one effective stream vector at ``user``, factored form.

    For the user's own streams the norm combines the effective-channel
    singular value with the antenna-domain error coupling (so it reduces to
    the squared singular value under perfect estimation).  For another user's
    stream the composed precoder column is expanded through the first-stage
    weights ``lam`` and both right-singular bases:
    ``E_tr * || H_k^T V_deflated diag(lam) v_eff ||^2`` where the deflated
    singular values enter ``lam`` squared.
    """
    layout = factors.layout
    owner = factors.stream_owner(stream)
    t = stream - layout.offsets[owner]
    if owner == user:
        vec = (
            factors.s_eff[user][t] * factors.u_eff[user][:, t]
            + factors.coupling_err[user][user][:, t]
        )
        return float(np.vdot(vec, vec).real)
    vec = factors.h_rows[user] @ factors.cross_basis[owner][:, t]
    return float(factors.total_power * np.vdot(vec, vec).real)


def mrc_sinr_closed_form(
    geometry: ReceiveGeometry, alloc: PowerAllocation, user: int
) -> float:
    """MRC common-stream SINR through squared norms and squared cosines.

    The interference terms are ``a_j^2 ||r_j||^2 cos^2(beta_j)`` with
    ``cos^2(beta_j) = |r_c^H r_j|^2 / (||r_c||^2 ||r_j||^2)``; the cosine
    enters squared because the weights appear inside a squared modulus.
    """
    rc = geometry.r_common[user]
    rp = geometry.r_streams[user]
    norm_c = float(np.vdot(rc, rc).real)
    norms = np.sum(np.abs(rp) ** 2, axis=0)
    cos2 = np.abs(rc.conj() @ rp) ** 2 / (norm_c * norms)
    denom = float(np.dot(alloc.a_private ** 2, norms * cos2)) + geometry.noise_var
    return float(alloc.a_common ** 2 * norm_c / denom)


def mmsec_terms_closed_form(
    factors: RbdAnalysisFactors,
    geometry: ReceiveGeometry,
    alloc: PowerAllocation,
    user: int,
) -> tuple[float, float]:
    """Own-stream and interference powers at the MMSE combiner, trace forms.

    Both are quadratic forms in ``x = R_yy^{-1} r_c``: the own term uses the
    antenna-domain own-coupling matrix with the user's gain block, the
    interference term sums the antenna-domain cross couplings, each with the
    interfering user's own gain block.
    """
    layout = factors.layout
    cov = geometry.covariance(user, alloc)
    x = np.linalg.solve(cov, geometry.r_common[user])
    d_k = factors.own_coupling_matrix(user)
    own_gains2 = alloc.a_private[layout.slice(user)] ** 2
    own = float(np.dot(own_gains2, np.abs(x.conj() @ d_k) ** 2))
    mui = 0.0
    for j in range(layout.n_users):
        if j == user:
            continue
        gains2 = alloc.a_private[layout.slice(j)] ** 2
        mui += float(np.dot(gains2, np.abs(x.conj() @ factors.coupling[user][j]) ** 2))
    return own, mui


def mmsec_quadratic_identities(
    geometry: ReceiveGeometry, alloc: PowerAllocation, user: int
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Weight-free expressions for the MMSE combiner's SINR ingredients.

    Returns ``{name: (closed, direct)}`` where the closed side only touches
    the explicit covariance inverse and the direct side evaluates the
    combining weights: the filtered noise power ``tr(R^{-2} r_c r_c^H)
    sigma^2``, the per-stream powers ``r_j^H R^{-1} r_c r_c^H R^{-1} r_j`` and
    the signal power ``(r_c^H R^{-1} r_c)^2``.
    """
    rc = geometry.r_common[user]
    rp = geometry.r_streams[user]
    cov = geometry.covariance(user, alloc)
    inv = np.linalg.inv(cov)
    w = np.linalg.solve(cov, rc)

    noise_closed = float(np.trace(inv @ inv @ np.outer(rc, rc.conj())).real)
    noise_closed *= geometry.noise_var
    noise_direct = float(np.vdot(w, w).real) * geometry.noise_var

    streams_closed = np.abs(rc.conj() @ inv @ rp) ** 2
    streams_direct = np.abs(w.conj() @ rp) ** 2

    signal_closed = float((rc.conj() @ inv @ rc).real) ** 2
    signal_direct = float(np.abs(np.vdot(w, rc)) ** 2)

    return {
        "noise": (np.asarray(noise_closed), np.asarray(noise_direct)),
        "streams": (streams_closed, streams_direct),
        "signal": (np.asarray(signal_closed), np.asarray(signal_direct)),
    }


# ---------------------------------------------------------------------------
# Equivalence suite
# ---------------------------------------------------------------------------

_DEVIATION_TABLE = (
    (
        "mrc-sinr-cosine",
        "interference terms a_j^2 ||r_j||^2 cos(beta_j)",
        "interference terms a_j^2 ||r_j||^2 cos^2(beta_j)",
    ),
    (
        "mmsec-weights-transpose",
        "w = R_yy^{-1} H_k p_c",
        "w = R_yy^{-1} H_k^T p_c",
    ),
    (
        "rbd-decomposition-domain",
        "mixed domains: own term U_k Psi_k + filtered err-coupling, common term unfiltered",
        "uniformly filtered by U_k^H: common U_k^H H_k^T p_c, own Psi_k + filtered err-coupling, cross filtered couplings, noise U_k^H n_k",
    ),
    (
        "minmax-closed-form-domain",
        "signal |h_j^T p_c|^2; coupling entries from the U_k^H-filtered matrices; own-stream offset n_jk",
        "signal |h_i^T p_c|^2 at the evaluated antenna; coupling entries in the antenna domain (err-coupling for the own user, full coupling for others); own-stream offset n_k",
    ),
    (
        "cross-norm-weights",
        "lam_n = (E_tr s_n + n_rx sigma^2)^{-1/2}",
        "lam_n = (E_tr s_n^2 + n_rx sigma^2)^{-1/2}",
    ),
    (
        "mmsec-own-trace",
        "D_k = U_k Psi_k + filtered err-coupling",
        "D_k = U_k Psi_k + antenna-domain err-coupling (= H_k^T P_k)",
    ),
    (
        "mmsec-interference-trace",
        "sum over j of tr(r_c^H R^{-1} filtered-err-coupling J_k filtered-err-coupling^H R^{-1} r_c)",
        "sum over j of tr(r_c^H R^{-1} C_kj J_j C_kj^H R^{-1} r_c) with C_kj the antenna-domain full coupling and J_j the interferer's gains",
    ),
)

_DEVIATION_CHECKS = {
    "mrc-sinr-cosine": "mrc-sinr",
    "mmsec-weights-transpose": "mmsec-identities",
    "rbd-decomposition-domain": "decomposition",
    "minmax-closed-form-domain": "minmax-rate",
    "cross-norm-weights": "cross-norm",
    "mmsec-own-trace": "mmsec-own-power",
    "mmsec-interference-trace": "mmsec-interference-power",
}

_CHECK_TOLERANCES = {
    "decomposition": IDENTITY_TOL,
    "minmax-rate": REL_TOL,
    "own-norm": REL_TOL,
    "cross-norm": REL_TOL,
    "mmsec-own-power": REL_TOL,
    "mmsec-interference-power": REL_TOL,
    "mmsec-identities": IDENTITY_TOL,
    "mrc-sinr": IDENTITY_TOL,
}


@dataclass(frozen=True)
class EquationCheck:
    name: str
    instances: int
    max_residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance


@dataclass(frozen=True)
class DeviationRecord:
    anchor: str
    printed: str
    implemented: str
    max_residual: float


@dataclass(frozen=True)
class SuiteReport:
    instances: int
    checks: tuple[EquationCheck, ...]
    deviations: tuple[DeviationRecord, ...]
    elapsed_seconds: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def random_rbd_instance(seed: int, index: int, n_tx: int = 8, rx_antennas=(2, 2, 2, 2)):
    """One random system draw for the equivalence suite.

    Alternates perfect and imperfect CSIT, draws the budget log-uniformly over
    30 dB and uses non-uniform private gains so that per-user gain blocks are
    distinguishable in the trace forms.
    """
    scalars = RngSeed(seed, 4 * index).generator()
    total_power = float(10.0 ** scalars.uniform(0.0, 3.0))
    perfect = index % 2 == 0
    config = SystemConfig(
        n_tx=n_tx,
        rx_antennas=tuple(rx_antennas),
        total_power=total_power,
        noise_var=1.0,
        csit=CSIT_PERFECT if perfect else CSIT_FIXED,
        error_var=0.0 if perfect else float(scalars.uniform(0.02, 0.3)),
    )
    h_est = sample_channel(config, RngSeed(seed, 4 * index + 1))
    h_err = sample_error(config, config.snr_linear, RngSeed(seed, 4 * index + 2))
    channels = compose_channel(h_est, h_err, config.rx_antennas)
    precoders = build_rbd_precoders(channels, config)

    layout = build_layout(config)
    common_frac = float(scalars.uniform(0.0, 0.8))
    gains = scalars.uniform(0.3, 1.0, size=layout.total_private)
    col_norms = np.sum(np.abs(precoders.p_private) ** 2, axis=0)
    used = float(np.dot(gains ** 2, col_norms))
    remaining = (1.0 - common_frac) * total_power
    alloc = PowerAllocation(
        a_common=float(np.sqrt(common_frac * total_power)),
        a_private=gains * np.sqrt(remaining / used),
    )
    return config, channels, precoders, alloc


def _check_instance(config, channels, precoders, alloc, residuals: dict[str, float]) -> None:
    layout = precoders.layout
    factors = analysis_factors(channels, precoders, config)
    geometry = receive_geometry(channels, precoders, config.noise_var, which="true")
    terms = rbd_received_decomposition(channels, precoders, config)

    def track(name: str, value: float) -> None:
        if value > residuals[name]:
            residuals[name] = value

    for k in range(layout.n_users):
        u_h = precoders.rbd[k].u_eff.conj().T
        rc = geometry.r_common[k]
        rp = geometry.r_streams[k]

        # decomposition coefficients against the filtered direct products
        track("decomposition", _residual(terms.common[k], u_h @ rc))
        track("decomposition", _residual(terms.own[k], u_h @ rp[:, layout.slice(k)]))
        for j in range(layout.n_users):
            if j != k:
                track(
                    "decomposition",
                    _residual(terms.cross[k][j], u_h @ rp[:, layout.slice(j)]),
                )

        # antenna-selection rates against the per-antenna direct evaluation
        for i in range(rc.size):
            signal = alloc.a_common ** 2 * np.abs(rc[i]) ** 2
            denom = float(np.dot(alloc.a_private ** 2, np.abs(rp[i]) ** 2))
            direct = float(np.log1p(signal / (denom + config.noise_var)) / _LOG2)
            track("minmax-rate", _residual(minmax_rate_closed_form(factors, alloc, k, i), direct))

        # squared stream norms, own and cross user
        for j in range(layout.total_private):
            direct = float(np.vdot(rp[:, j], rp[:, j]).real)
            name = "own-norm" if factors.stream_owner(j) == k else "cross-norm"
            track(name, _residual(mrc_norm_closed_form(factors, k, j), direct))

        # MMSE combiner trace forms against the direct weighted sums
        w = np.linalg.solve(geometry.covariance(k, alloc), rc)
        stream_power = alloc.a_private ** 2 * np.abs(w.conj() @ rp) ** 2
        own_direct = float(np.sum(stream_power[layout.slice(k)]))
        mui_direct = float(np.sum(stream_power)) - own_direct
        own_closed, mui_closed = mmsec_terms_closed_form(factors, geometry, alloc, k)
        track("mmsec-own-power", _residual(own_closed, own_direct))
        track("mmsec-interference-power", _residual(mui_closed, mui_direct))

        for closed, direct in mmsec_quadratic_identities(geometry, alloc, k).values():
            track("mmsec-identities", _residual(closed, direct))

        # MRC SINR through norms and squared cosines
        gamma_direct = sinr_general(mrc_combiner(geometry, k), geometry, alloc, k)
        track("mrc-sinr", _residual(mrc_sinr_closed_form(geometry, alloc, k), gamma_direct))


def run_equivalence_suite(
    n_instances: int = 1000,
    seed: int = 20240901,
    *,
    n_tx: int = 8,
    rx_antennas=(2, 2, 2, 2),
) -> SuiteReport:
    """Check every factored expression against its direct definition.

    Draws ``n_instances`` random systems (mixed perfect and imperfect CSIT)
    and tracks the worst relative residual per expression family.
    """
    start = time.perf_counter()
    residuals: dict[str, float] = {name: 0.0 for name in _CHECK_TOLERANCES}
    for index in range(n_instances):
        config, channels, precoders, alloc = random_rbd_instance(
            seed, index, n_tx=n_tx, rx_antennas=rx_antennas
        )
        _check_instance(config, channels, precoders, alloc, residuals)
    elapsed = time.perf_counter() - start
    checks = tuple(
        EquationCheck(
            name=name,
            instances=n_instances,
            max_residual=residuals[name],
            tolerance=_CHECK_TOLERANCES[name],
        )
        for name in sorted(residuals)
    )
    deviations = tuple(
        DeviationRecord(
            anchor=anchor,
            printed=printed,
            implemented=implemented,
            max_residual=residuals[_DEVIATION_CHECKS[anchor]],
        )
        for anchor, printed, implemented in _DEVIATION_TABLE
    )
    return SuiteReport(
        instances=n_instances,
        checks=checks,
        deviations=deviations,
        elapsed_seconds=elapsed,
    )


def write_deviations(records, path) -> None:
    """Write deviation records as tab-separated lines (one per correction)."""
    lines = ["# anchor\tprinted\timplemented\tmax_residual"]
    for r in records:
        lines.append(f"{r.anchor}\t{r.printed}\t{r.implemented}\t{r.max_residual:.3e}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
