import math

import pytest

from driftbound.hier_model import (
    ModelConfig,
    data_center,
    default_large_set,
    drift_offset_b,
    lambda_T,
    synth_dataset,
)
from driftbound.minorization import (
    EpsilonReport,
    MinorizationError,
    SmallSetBox,
    _pair_overlap,
    build_epsilon_report,
    epsilon_lower_bound,
    overlap_oracle_mc,
    q_mass_lower_bound,
    uniform_component_band_mass,
)
from driftbound.numerics import RngStream

TIGHT = ModelConfig(V=8e-4, prior_shape_a=3.0, prior_scale_b=0.2, delta_margin=0.08)


@pytest.fixture(scope="module")
def tight100():
    ds = synth_dataset(100, 0.1, TIGHT, RngStream(7, 0), exact_center=True)
    spec = default_large_set(ds, TIGHT)
    b = drift_offset_b(ds, TIGHT, spec)
    d = 2.5 * b / (1.0 - lambda_T(spec, TIGHT.V))
    return ds, spec, d


def test_box_validation():
    with pytest.raises(MinorizationError):
        SmallSetBox(theta_bar_halfwidth=0.1, A_halfwidth=0.3, A_center=0.2,
                    theta_bar_center=0.0)
    with pytest.raises(MinorizationError):
        SmallSetBox(theta_bar_halfwidth=0.0, A_halfwidth=0.1, A_center=0.5,
                    theta_bar_center=0.0)


def test_box_from_level(tight100):
    ds, _, d = tight100
    box = SmallSetBox.from_level(d, ds, TIGHT)
    assert box.theta_bar_halfwidth == pytest.approx(math.sqrt(d / ds.n))
    assert box.A_halfwidth == box.theta_bar_halfwidth
    assert box.A_center == pytest.approx(data_center(ds, TIGHT))
    assert box.theta_bar_center == ds.y_bar


def test_collapsed_box_volume_is_nearly_full(tight100):
    ds, _, _ = tight100
    box = SmallSetBox.from_level(1e-12, ds, TIGHT)
    eps = epsilon_lower_bound(box, ds, TIGHT)
    # singleton infima integrate the exact conditional densities
    assert 0.95 < eps <= 1.0


def test_volume_nonincreasing_in_box_width(tight100):
    ds, _, d = tight100
    values = []
    for factor in (0.1, 0.3, 0.6, 1.0, 1.5):
        box = SmallSetBox.from_level(d * factor, ds, TIGHT)
        values.append(epsilon_lower_bound(box, ds, TIGHT))
    for wide, narrow in zip(values[1:], values[:-1]):
        assert wide <= narrow * (1.0 + 1e-6)
    assert all(0.0 < v <= 1.0 for v in values)


def test_quadrature_volume_below_mc_overlap(tight100):
    ds, _, d = tight100
    box = SmallSetBox.from_level(d, ds, TIGHT)
    eps = epsilon_lower_bound(box, ds, TIGHT)
    overlap, se = overlap_oracle_mc(box, ds, TIGHT, RngStream(13, 2), 20_000)
    assert eps <= overlap + 3.0 * se
    assert eps > 0.0


def test_identical_states_overlap_exactly_one(tight100):
    ds, _, _ = tight100
    state = (ds.y_bar, data_center(ds, TIGHT))
    est, se = _pair_overlap(state, state, ds, TIGHT, RngStream(19, 0), 5_000)
    assert est == 1.0
    assert se == 0.0


def test_pair_overlap_symmetric_within_error(tight100):
    ds, _, d = tight100
    hw = math.sqrt(d / ds.n)
    c = data_center(ds, TIGHT)
    a_state = (ds.y_bar - hw, c)
    b_state = (ds.y_bar + hw, c)
    e1, s1 = _pair_overlap(a_state, b_state, ds, TIGHT, RngStream(19, 1), 50_000)
    e2, s2 = _pair_overlap(b_state, a_state, ds, TIGHT, RngStream(19, 2), 50_000)
    assert 0.0 < e1 < 1.0 and 0.0 < e2 < 1.0
    assert abs(e1 - e2) <= 4.0 * math.hypot(s1, s2)


def test_q_mass_lower_bound_examples():
    assert q_mass_lower_bound(0.2, 0.02) == pytest.approx(0.9, rel=1e-15)
    assert q_mass_lower_bound(0.2, 0.0) == 1.0
    assert q_mass_lower_bound(0.2, 0.5) == 0.0
    with pytest.raises(MinorizationError):
        q_mass_lower_bound(0.0, 0.1)
    with pytest.raises(MinorizationError):
        q_mass_lower_bound(0.2, -0.1)


def test_band_mass_bounds(tight100):
    ds, spec, d = tight100
    box = SmallSetBox.from_level(d, ds, TIGHT)
    q = uniform_component_band_mass(box, ds, TIGHT, spec, )
    assert 0.0 <= q <= 1.0
    assert q > 0.9
    from driftbound.hier_model import LargeSetSpec
    wide = LargeSetSpec(T=1e-7, center=spec.center)
    # the widened band still cuts the far upper tail, so the mass is close
    # to one only up to that genuine tail contribution
    assert uniform_component_band_mass(box, ds, TIGHT, wide) == pytest.approx(1.0, abs=1e-4)


def test_epsilon_report_guard_trips():
    with pytest.raises(MinorizationError, match="guard"):
        EpsilonReport(epsilon_quadrature=0.5, epsilon_mc_overlap=0.1,
                      mc_standard_error=0.01)
    rep = EpsilonReport(epsilonquadrature := 0.05, 0.1, 0.01)
    assert rep.epsilon_quadrature == epsilonquadrature
    assert rep.s_density_drops_cross_term


def test_build_epsilon_report_runs(tight100):
    ds, _, d = tight100
    box = SmallSetBox.from_level(d, ds, TIGHT)
    rep = build_epsilon_report(box, ds, TIGHT, RngStream(23, 0), n_samples=10_000)
    assert rep.epsilon_quadrature > 0.0
    assert rep.epsilon_quadrature <= rep.epsilon_mc_overlap + 3.0 * rep.mc_standard_error
