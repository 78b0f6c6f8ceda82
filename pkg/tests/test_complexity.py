from fractions import Fraction

import numpy as np
import pytest

import slowtorus.complexity as cx
import slowtorus.diffeo as df
from slowtorus.params import StageParams
from slowtorus.scaling import ScalingFamily


def rotation_system(alpha=Fraction(1, 4), q=4):
    st = StageParams(
        n=1, p=1, q=q, k=1, l=1, l_prime=4,
        alpha=Fraction(1, q), eps=Fraction(1, 8), m_smooth=0,
    )
    return df.AbCSystem(H=df.Rotation(Fraction(0)), alpha_next=alpha, stage=st)


IDENT_SYS = rotation_system(alpha=Fraction(0))
ROT_SYS = rotation_system(alpha=Fraction(1, 4))


# -- Bowen distance ----------------------------------------------------------


def test_bowen_identity_is_static_distance():
    x, y = np.array([0.1, 0.2]), np.array([0.4, 0.9])
    d0 = float(df.torus_dist(x, y))
    for m in (1, 5, 50):
        assert cx.bowen_dist(IDENT_SYS, x, y, m) == pytest.approx(d0, abs=1e-15)


def test_bowen_rotation_is_isometry():
    x, y = np.array([0.15, 0.33]), np.array([0.58, 0.41])
    d0 = float(df.torus_dist(x, y))
    for m in (1, 10, 100):
        assert cx.bowen_dist(ROT_SYS, x, y, m) == pytest.approx(d0, abs=1e-12)


def test_bowen_monotone_in_horizon(untwisted_sys2):
    x, y = np.array([0.12, 0.37]), np.array([0.13, 0.37])
    vals = [cx.bowen_dist(untwisted_sys2, x, y, m) for m in (1, 4, 16, 64, 256)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_bowen_jump_at_separation_time(untwisted_sys2):
    # two witness points straddling a rotation-kernel boundary reach a gap
    # of at least 1/4 within the stage horizon
    pts = cx.witness_set(8, 0.125, 0.125)
    p1, p2 = pts[0], pts[1]
    d = cx.bowen_dist(untwisted_sys2, p1, p2, untwisted_sys2.q_next)
    assert d >= 0.25


# -- greedy packing/cover ----------------------------------------------------


def test_separated_rotation_grid_count():
    cfg = cx.BowenConfig(n_time=10, eps=0.3, grid=16)
    res = cx.max_separated(ROT_SYS, cfg)
    assert res.count == 9  # 3 x 3 packing of radius-0.3 sup balls
    assert res.witnesses.shape == (9, 2)


def test_separated_everything_within_half():
    cfg = cx.BowenConfig(n_time=5, eps=0.51, grid=8)
    assert cx.max_separated(ROT_SYS, cfg).count == 1


def test_cover_identity_coarse():
    cfg = cx.BowenConfig(n_time=1, eps=0.26, grid=16)
    assert cx.min_cover(IDENT_SYS, cfg) <= 16


def test_cover_rotation_independent_of_horizon():
    counts = {
        m: cx.min_cover(ROT_SYS, cx.BowenConfig(n_time=m, eps=0.3, grid=16))
        for m in (1, 10, 100)
    }
    assert counts[1] == counts[10] == counts[100]


def test_counts_monotone_in_horizon(untwisted_sys2):
    seps, covs = [], []
    for m in (1, 8, 64):
        cfg = cx.BowenConfig(n_time=m, eps=0.125, grid=20)
        seps.append(cx.max_separated(untwisted_sys2, cfg).count)
        covs.append(cx.min_cover(untwisted_sys2, cfg))
    assert all(b >= a for a, b in zip(seps, seps[1:]))
    assert all(b >= a for a, b in zip(covs, covs[1:]))


def test_packing_cover_chain(untwisted_sys2):
    # S(2e) <= N(e) <= S(e) on the same grid and horizon
    for m in (8, 64):
        s2 = cx.max_separated(
            untwisted_sys2, cx.BowenConfig(n_time=m, eps=0.25, grid=20)
        ).count
        n1 = cx.min_cover(untwisted_sys2, cx.BowenConfig(n_time=m, eps=0.125, grid=20))
        s1 = cx.max_separated(
            untwisted_sys2, cx.BowenConfig(n_time=m, eps=0.125, grid=20)
        ).count
        assert s2 <= n1 <= s1


def test_grid_must_resolve_radius():
    with pytest.raises(cx.GridError):
        cx.BowenConfig(n_time=1, eps=0.1, grid=16)


def test_explicit_candidate_list():
    pts = np.array([[0.1, 0.1], [0.2, 0.1], [0.6, 0.1], [0.6, 0.7]])
    cfg = cx.BowenConfig(n_time=3, eps=0.2, points=pts)
    res = cx.max_separated(ROT_SYS, cfg)
    # (0.1,0.1) excludes (0.2,0.1); the other two stay
    assert res.count == 3
    assert np.array_equal(res.witnesses[0], pts[0])


def test_stride_subsamples_orbit_times():
    cfg = cx.BowenConfig(n_time=8, eps=0.3, grid=16, stride=2)
    assert cfg.times() == [0, 2, 4, 6]
    full = cx.min_cover(ROT_SYS, cx.BowenConfig(n_time=8, eps=0.3, grid=16))
    strided = cx.min_cover(ROT_SYS, cfg)
    assert strided == full  # isometry: sampling times cannot change counts


# -- witness sets ------------------------------------------------------------


def test_witness_count_formula():
    pts = cx.witness_set(8, 0.125, 0.125)
    assert len(pts) == (8 // 2) * (int(1 / (4 * 0.125)) + 1) == 12


def test_witness_untwisted_desk(untwisted_sys2):
    rep = cx.witness_untwisted(untwisted_sys2, eps=0.125)
    assert rep.count == rep.expected_count == 12
    assert rep.all_separated
    assert rep.min_pair_separation >= 0.125
    assert not rep.partial


def test_witness_partial_flag(untwisted_sys3):
    rep = cx.witness_untwisted(untwisted_sys3, eps=0.125, max_horizon=256)
    assert rep.partial
    assert rep.horizon == 256


def test_witness_levels_separate_without_dynamics():
    # distinct levels differ by at least eps in y at time zero
    pts = cx.witness_set(8, 0.125, 0.125)
    ys = sorted(set(round(float(p[1]), 12) for p in pts))
    assert all(b - a >= 0.125 - 1e-12 for a, b in zip(ys, ys[1:]))


# -- coded orbits ------------------------------------------------------------


def test_code_orbit_identity_constant():
    part = cx.GridPartition(4, 4)
    w = cx.code_orbit(IDENT_SYS, part, np.array([0.3, 0.7]), 20)
    assert len(set(w.tolist())) == 1


def test_code_orbit_rotation_cycles():
    part = cx.GridPartition(4, 1)
    w = cx.code_orbit(ROT_SYS, part, np.array([0.0, 0.0]), 4)
    assert w.tolist() == [0, 1, 2, 3]


def test_pushforward_partition_labels(untwisted_sys2):
    base = cx.GridPartition(4, 4)
    push = cx.PushforwardPartition(base, untwisted_sys2.H)
    rng = np.random.Generator(np.random.Philox(3))
    pts = rng.random((500, 2))
    expect = base.labels(untwisted_sys2.H.inverse(pts))
    assert np.array_equal(push.labels(pts), expect)


def test_hamming_identity_needs_all_cells():
    part = cx.GridPartition(2, 2)
    res = cx.hamming_cover(IDENT_SYS, part, 10, eps=0.1, sample_size=1200, seed=4)
    assert res.count == 4


def test_hamming_rotation_cyclic_words():
    part = cx.GridPartition(4, 1)
    res = cx.hamming_cover(ROT_SYS, part, 40, eps=0.3, sample_size=1000, seed=5)
    assert res.count <= 4


def test_hamming_sample_size_floor():
    with pytest.raises(ValueError):
        cx.hamming_cover(IDENT_SYS, cx.GridPartition(2, 2), 5, 0.1, 50, seed=0)


def test_coded_agreement_tracks_proximity():
    # a chain satisfying the step condition keeps one-stage-apart systems
    # pointwise close over the allowed horizon; coded orbits then disagree
    # at most on the boundary collars of the partition
    from slowtorus.experiments import build_systems, desk_profile

    prof = desk_profile([(1, 2, 4), (1, 4096, 2), (1, 1, 64)])
    built = build_systems("untwisted", prof, 2)
    sys1, sys2 = built.system(1), built.system(2)
    horizon = 2 * 8  # l'_2 * q_2
    rng = np.random.Generator(np.random.Philox(6))
    pts = rng.random((400, 2))
    o1 = cx.orbit_array(sys1, pts, range(horizon))
    o2 = cx.orbit_array(sys2, pts, range(horizon))
    delta = float(np.max(df.torus_dist(o1, o2)))
    assert delta <= 3.0 / (1 * 8)  # the proximity bound for k = 1, q = 8
    m = 4
    part = cx.GridPartition(m, m)
    w1 = part.labels(o1.reshape(-1, 2)).reshape(horizon, -1)
    w2 = part.labels(o2.reshape(-1, 2)).reshape(horizon, -1)
    disagree = float(np.mean(w1 != w2))
    collar = min(1.0, 4.0 * m * delta)
    assert disagree <= collar + 0.05


# -- sandwich and report -----------------------------------------------------


def test_sandwich_identity_trivial():
    res = cx.sandwich_check(IDENT_SYS, IDENT_SYS, m=4, eps=0.125, grid=20)
    assert res.ok and res.upgrade_ok


def test_sandwich_nearby_rotations():
    a = rotation_system(Fraction(1, 4))
    b = rotation_system(Fraction(1, 4) + Fraction(1, 64))
    res = cx.sandwich_check(a, b, m=8, eps=0.125, grid=20)
    assert res.ok


def test_slow_entropy_report_threshold_flags():
    fam = ScalingFamily("pol")
    records = [
        cx.CountRecord(stage=2, q=4, horizon=16, eps=0.1, count_kind="cover", count=16),
        cx.CountRecord(stage=3, q=16, horizon=256, eps=0.1, count_kind="cover", count=256),
    ]
    rep = cx.slow_entropy_report(records, [(fam, [0.5, 1.0, 2.0])])
    # counts equal m**1: increasing ratio below t=1, decreasing above
    assert rep.trend[("pol", 0.5, "cover")] == "increasing"
    assert rep.trend[("pol", 2.0, "cover")] == "decreasing"
    assert rep.trend[("pol", 1.0, "cover")] == "flat"


def test_slow_entropy_report_rotation_decreasing():
    fam = ScalingFamily("pol")
    records = []
    for stage, m in [(1, 8), (2, 64)]:
        c = cx.min_cover(ROT_SYS, cx.BowenConfig(n_time=m, eps=0.3, grid=16))
        records.append(cx.CountRecord(stage, 4, m, 0.3, "cover", c))
    rep = cx.slow_entropy_report(records, [(fam, [0.5, 1.0])])
    assert rep.trend[("pol", 0.5, "cover")] == "decreasing"
    assert rep.trend[("pol", 1.0, "cover")] == "decreasing"


def test_witness_counts_increase_under_int1_below_one(untwisted_built):
    # separated-set lower bounds at the stage horizons, normalized by the
    # intermediate scale: the tail rises for t < 1 (the asymptotic threshold
    # at t = 1 itself needs the idealized growth and is out of reach here)
    fam = ScalingFamily("int1", 4, 2)
    records = []
    for n in (2, 3):
        st = next(s for s in untwisted_built.chain if s.n == n)
        count = (st.q // 2) * 3  # witness cardinality at eps = 1/8
        records.append(
            cx.CountRecord(st.n, st.q, st.q_next, 0.125, "separated", count)
        )
    rep = cx.slow_entropy_report(records, [(fam, [0.5, 1.0])])
    assert rep.trend[(fam.label(), 0.5, "separated")] == "increasing"
    assert rep.trend[(fam.label(), 1.0, "separated")] == "increasing"


def test_report_csv_columns():
    fam = ScalingFamily("int1", 4, 2)
    records = [
        cx.CountRecord(2, 4, 16, 0.125, "cover", 10),
        cx.CountRecord(3, 16, 64, 0.125, "cover", 20),
    ]
    rep = cx.slow_entropy_report(records, [(fam, [1.0])])
    lines = rep.csv_lines()
    assert lines[0] == "stage,horizon,eps,count_kind,count,family,t,log_ratio"
    assert len(lines) == 3


def test_report_rejects_packing_violation():
    records = [
        cx.CountRecord(2, 4, 16, 0.25, "separated", 30),
        cx.CountRecord(2, 4, 16, 0.25, "cover", 10),
        cx.CountRecord(3, 4, 64, 0.25, "cover", 12),
    ]
    with pytest.raises(AssertionError, match="packing/covering"):
        cx.slow_entropy_report(records, [(ScalingFamily("pol"), [1.0])])


def test_packing_chain_property_random_rotations():
    from fractions import Fraction as F
    from hypothesis import given, settings
    from hypothesis import strategies as hst

    @settings(max_examples=15, deadline=None)
    @given(
        num=hst.integers(min_value=0, max_value=11),
        den=hst.integers(min_value=2, max_value=12),
        eps_num=hst.integers(min_value=3, max_value=7),
        m=hst.integers(min_value=1, max_value=12),
    )
    def run(num, den, eps_num, m):
        sysm = rotation_system(F(num % den, den))
        eps = eps_num / 20.0
        s2 = cx.max_separated(sysm, cx.BowenConfig(m, 2 * eps, grid=17)).count
        n1 = cx.min_cover(sysm, cx.BowenConfig(m, eps, grid=17))
        s1 = cx.max_separated(sysm, cx.BowenConfig(m, eps, grid=17)).count
        assert s2 <= n1 <= s1

    run()
