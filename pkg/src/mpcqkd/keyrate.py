"""Per-link secret-key rates for BB84, MDI and TF, and the MPC cell bandwidth.

All rates are returned in kbps.  Two models share one interface:

``simplified``
    BB84 ``R = f_src * eta_d * Y * T(L)`` with ``T(L) = 10**(-alpha*L/10)``;
    MDI ``kappa_mdi * f_src * eta_d * Y * T(L1) * T(L2)``;
    TF ``kappa_tf * f_src * eta_d * Y * sqrt(T(L1) * T(L2))``.

``gllp``
    Asymptotic decoy-state BB84 (infinite decoys) with the GLLP secret
    fraction ``q * (Q1 * (1 - H2(e1)) - f * Q_mu * H2(E_mu))``.  MDI and TF
    keep their simplified forms but are anchored to the GLLP BB84 rate at
    zero distance so the protocol ordering survives the model switch.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

from .errors import InvalidInput


class ModelKind(str, Enum):
    SIMPLIFIED = "simplified"
    GLLP = "gllp"


@dataclass(frozen=True)
class RateParams:
    alpha_db_per_km: float = 0.2
    detector_eff: float = 0.1
    dark_count_prob: float = 1e-6
    misalignment_err: float = 0.015
    error_correction_eff: float = 1.16
    source_rate_hz: float = 1e9
    model_kind: ModelKind = ModelKind.SIMPLIFIED
    yield_factor: float = 0.1
    kappa_mdi: float = 1e-4
    kappa_tf: float = 1e-3
    mu_signal: float = 0.5
    sifting: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "model_kind", ModelKind(self.model_kind))
        checks = [
            (self.alpha_db_per_km >= 0, "alpha_db_per_km must be >= 0"),
            (0 < self.detector_eff <= 1, "detector_eff must lie in (0, 1]"),
            (self.dark_count_prob >= 0, "dark_count_prob must be >= 0"),
            (0 <= self.misalignment_err < 0.5, "misalignment_err must lie in [0, 0.5)"),
            (self.error_correction_eff >= 1, "error_correction_eff must be >= 1"),
            (self.source_rate_hz > 0, "source_rate_hz must be > 0"),
            (self.yield_factor > 0, "yield_factor must be > 0"),
            (0 < self.kappa_mdi < 1, "kappa_mdi must lie in (0, 1)"),
            (0 < self.kappa_tf <= 1, "kappa_tf must lie in (0, 1]"),
            (self.mu_signal > 0, "mu_signal must be > 0"),
            (0 < self.sifting <= 1, "sifting must lie in (0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidInput(msg)

    def to_dict(self):
        d = asdict(self)
        d["model_kind"] = self.model_kind.value
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def transmittance(length_km, params):
    return 10.0 ** (-params.alpha_db_per_km * length_km / 10.0)


def binary_entropy(x):
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def _check_len(*lengths):
    for L in lengths:
        if L < 0 or math.isnan(L):
            raise InvalidInput(f"link length must be >= 0, got {L}")


def gllp_fraction(eta, params):
    """Secret bits per pulse for decoy BB84 at overall transmittance ``eta``."""
    mu = params.mu_signal
    y0 = params.dark_count_prob
    e0 = 0.5
    ed = params.misalignment_err
    y1 = y0 + eta - y0 * eta
    q1 = y1 * mu * math.exp(-mu)
    e1 = (e0 * y0 + ed * eta) / y1 if y1 > 0 else 0.5
    q_mu = y0 + 1.0 - math.exp(-eta * mu)
    e_mu = (e0 * y0 + ed * (1.0 - math.exp(-eta * mu))) / q_mu if q_mu > 0 else 0.5
    r = params.sifting * (q1 * (1.0 - binary_entropy(e1))
                          - params.error_correction_eff * q_mu * binary_entropy(e_mu))
    return max(r, 0.0)


def _scale_kbps(params):
    return params.source_rate_hz * params.detector_eff * params.yield_factor / 1000.0


def _anchor_kbps(params):
    if params.model_kind is ModelKind.GLLP:
        return params.source_rate_hz * gllp_fraction(params.detector_eff, params) / 1000.0
    return _scale_kbps(params)


def bb84_rate(length_km, params):
    _check_len(length_km)
    T = transmittance(length_km, params)
    if params.model_kind is ModelKind.GLLP:
        return params.source_rate_hz * gllp_fraction(params.detector_eff * T, params) / 1000.0
    return max(_scale_kbps(params) * T, 0.0)


def mdi_rate(len_up_km, len_pv_km, params):
    _check_len(len_up_km, len_pv_km)
    T = transmittance(len_up_km, params) * transmittance(len_pv_km, params)
    return params.kappa_mdi * _anchor_kbps(params) * T


def tf_rate(len_up_km, len_pv_km, params):
    _check_len(len_up_km, len_pv_km)
    T = transmittance(len_up_km, params) * transmittance(len_pv_km, params)
    return params.kappa_tf * _anchor_kbps(params) * math.sqrt(T)


def csc_bandwidth(r_b_up, r_b_pv, beta):
    """MPC cell key bandwidth: ``beta * r1 * r2 / (r1 + r2)``."""
    if r_b_up < 0 or r_b_pv < 0:
        raise InvalidInput("rates must be >= 0")
    if not 0 <= beta <= 1:
        raise InvalidInput(f"beta must lie in [0, 1], got {beta}")
    total = r_b_up + r_b_pv
    if total == 0:
        return 0.0
    return beta * (r_b_up * r_b_pv / total)


@dataclass(frozen=True)
class LinkRates:
    """Rates for every edge of one network.

    ``r_b`` is keyed by canonical C2C edge ``(u, v)``; ``r_m`` and ``r_tf``
    by canonical CSC key ``(u, p, v)``.  MDI and TF rates are symmetric so
    the reversed orientation shares the entry.
    """

    r_b: dict
    r_m: dict
    r_tf: dict

    def bb84(self, u, v):
        return self.r_b[(min(u, v), max(u, v))]

    def _csc(self, table, u, p, v):
        return table[(u, p, v)] if u < v else table[(v, p, u)]

    def mdi(self, u, p, v):
        return self._csc(self.r_m, u, p, v)

    def tf(self, u, p, v):
        return self._csc(self.r_tf, u, p, v)

    def mpc(self, u, p, v, beta):
        return csc_bandwidth(self.bb84(u, p), self.bb84(p, v), beta)


def link_rates(network, params):
    r_b = {(u, v): bb84_rate(L, params) for u, v, L in network.c2c_edges}
    r_m = {}
    r_tf = {}
    for e in network.csc_edges:
        r_m[e.key] = mdi_rate(e.len_up_km, e.len_pv_km, params)
        r_tf[e.key] = tf_rate(e.len_up_km, e.len_pv_km, params)
    return LinkRates(r_b, r_m, r_tf)


def rate_table(lengths_km, params, beta=0.9):
    """Rows of ``(length, bb84, mdi, tf, mpc)`` with MDI/TF/MPC split at the midpoint."""
    rows = []
    for L in lengths_km:
        half = L / 2.0
        rb_half = bb84_rate(half, params)
        rows.append((L, bb84_rate(L, params), mdi_rate(half, half, params),
                     tf_rate(half, half, params), csc_bandwidth(rb_half, rb_half, beta)))
    return rows
