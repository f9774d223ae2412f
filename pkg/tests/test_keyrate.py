import math

import pytest
from hypothesis import given, strategies as st

from mpcqkd import keyrate as kr
from mpcqkd.errors import InvalidInput
from mpcqkd.netmodel import Network

from oracles import gllp_kbps

rates = st.floats(0, 1e6, allow_nan=False)
lengths = st.floats(0, 400, allow_nan=False)


def test_zero_length_simplified_identity():
    p = kr.RateParams(source_rate_hz=1e6, detector_eff=1.0, yield_factor=1.0)
    # 1e6 bit/s == 1000 kbps
    assert kr.bb84_rate(0.0, p) == 1000.0


def test_bb84_monotone():
    p = kr.RateParams()
    assert kr.bb84_rate(50, p) > kr.bb84_rate(100, p) > 0


def test_negative_length_rejected():
    with pytest.raises(InvalidInput):
        kr.bb84_rate(-1.0, kr.RateParams())
    with pytest.raises(InvalidInput):
        kr.mdi_rate(1.0, -1.0, kr.RateParams())


@pytest.mark.parametrize("length", [0.0, 10.0, 50.0, 100.0, 150.0])
def test_gllp_matches_independent_evaluation(length):
    p = kr.RateParams(model_kind="gllp")
    ref = gllp_kbps(length, p.alpha_db_per_km, p.detector_eff, p.dark_count_prob,
                    p.misalignment_err, p.error_correction_eff, p.source_rate_hz,
                    p.mu_signal, p.sifting)
    assert ref > 0
    assert kr.bb84_rate(length, p) == pytest.approx(ref, rel=1e-9)


def test_gllp_clamps_to_zero_far_away():
    assert kr.bb84_rate(1000.0, kr.RateParams(model_kind="gllp")) == 0.0


def test_mdi_hand_evaluation():
    p = kr.RateParams()
    anchor = p.source_rate_hz * p.detector_eff * p.yield_factor / 1000
    expected = p.kappa_mdi * anchor * 10 ** (-0.2 * 50 / 10) * 10 ** (-0.2 * 50 / 10)
    assert kr.mdi_rate(50, 50, p) == pytest.approx(expected, rel=1e-12)


def test_tf_hand_evaluation():
    p = kr.RateParams()
    anchor = p.source_rate_hz * p.detector_eff * p.yield_factor / 1000
    expected = p.kappa_tf * anchor * math.sqrt(10 ** (-0.2 * 200 / 10))
    assert kr.tf_rate(100, 100, p) == pytest.approx(expected, rel=1e-12)


@given(a=lengths, b=lengths)
def test_mdi_tf_symmetric(a, b):
    p = kr.RateParams()
    assert kr.mdi_rate(a, b, p) == kr.mdi_rate(b, a, p)
    assert kr.tf_rate(a, b, p) == kr.tf_rate(b, a, p)


@pytest.mark.parametrize("kind", ["simplified", "gllp"])
def test_protocol_ordering(kind):
    p = kr.RateParams(model_kind=kind)
    assert kr.mdi_rate(0, 0, p) < kr.bb84_rate(0, p)
    assert kr.tf_rate(100, 100, p) > kr.mdi_rate(100, 100, p)


@given(a=lengths, b=lengths, d=st.floats(0.1, 50))
def test_rates_nonincreasing_in_length(a, b, d):
    p = kr.RateParams()
    assert kr.bb84_rate(a + d, p) <= kr.bb84_rate(a, p)
    assert kr.mdi_rate(a + d, b, p) <= kr.mdi_rate(a, b, p)
    assert kr.tf_rate(a, b + d, p) <= kr.tf_rate(a, b, p)


def test_csc_bandwidth_examples():
    assert kr.csc_bandwidth(100, 100, 0.9) == 45
    assert kr.csc_bandwidth(0, 123.0, 0.7) == 0
    assert kr.csc_bandwidth(300, 100, 1.0) == 75
    assert kr.csc_bandwidth(0, 0, 0.5) == 0


@given(r1=rates, r2=rates, beta=st.floats(0, 1))
def test_csc_bandwidth_properties(r1, r2, beta):
    v = kr.csc_bandwidth(r1, r2, beta)
    assert v == kr.csc_bandwidth(r2, r1, beta)
    assert v <= beta * min(r1, r2) * (1 + 1e-12)
    assert v == pytest.approx(beta * kr.csc_bandwidth(r1, r2, 1.0), rel=1e-12, abs=1e-300)
    assert kr.csc_bandwidth(r1, r2, 0.0) == 0


def test_csc_bandwidth_validates():
    with pytest.raises(InvalidInput):
        kr.csc_bandwidth(-1, 1, 0.5)
    with pytest.raises(InvalidInput):
        kr.csc_bandwidth(1, 1, 1.5)


def test_link_rates_cover_network():
    net = Network(3, ((0, 1, 20.0), (1, 2, 60.0)))
    p = kr.RateParams()
    lr = kr.link_rates(net, p)
    assert lr.bb84(1, 0) == kr.bb84_rate(20.0, p)
    assert lr.mdi(2, 1, 0) == lr.mdi(0, 1, 2) == kr.mdi_rate(20.0, 60.0, p)
    assert lr.mpc(0, 1, 2, 0.9) == kr.csc_bandwidth(lr.bb84(0, 1), lr.bb84(1, 2), 0.9)
    assert all(r >= 0 for r in lr.r_b.values())


def test_rate_params_validation():
    with pytest.raises(InvalidInput):
        kr.RateParams(kappa_mdi=1.5)
    with pytest.raises(InvalidInput):
        kr.RateParams(misalignment_err=0.5)
    assert kr.RateParams.from_dict(kr.RateParams().to_dict()) == kr.RateParams()


def test_rate_table_rows():
    rows = kr.rate_table([0, 100], kr.RateParams())
    assert len(rows) == 2 and rows[1][0] == 100
    assert rows[0][1] > rows[1][1]
