import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ifseg.fuzzy import (
    ConstantSliceWarning,
    MembershipSpec,
    NegationSpec,
    export_ifs,
    hesitation,
    ifs_encode,
    load_ifs,
    normalize_membership,
    nonmembership,
    standard_nonmembership,
    sugeno_nonmembership,
    yager_nonmembership,
)
from ifseg.data.io import read_pgm

unit = st.floats(0.0, 1.0, allow_nan=False)
lam_st = st.floats(1e-6, 2.0, allow_nan=False)
w_st = st.floats(0.1, 1.0, allow_nan=False)


def sugeno_pi(mu, lam):
    # closed form of 1 - mu - (1 - mu) / (1 + lam mu)
    return lam * mu * (1 - mu) / (1 + lam * mu)


# ---------------------------------------------------------------- examples


def test_sugeno_examples():
    assert sugeno_nonmembership(np.array(0.4), 0.5) == pytest.approx(0.6 / 1.2, abs=1e-15)
    assert float(sugeno_nonmembership(np.array(0.4), 0.5)) == pytest.approx(0.5, abs=1e-15)
    assert float(sugeno_nonmembership(np.array(0.5), 1.2)) == pytest.approx(0.3125, abs=1e-15)
    for lam in (0.1, 1.0, 7.0):
        np.testing.assert_array_equal(sugeno_nonmembership(np.array([0.0, 1.0]), lam), [1.0, 0.0])


@pytest.mark.parametrize("lam", [0.0, -1.0])
def test_sugeno_rejects_nonpositive_lambda(lam):
    with pytest.raises(ValueError, match="lambda"):
        sugeno_nonmembership(np.array([0.5]), lam)
    with pytest.raises(ValueError):
        NegationSpec.sugeno(lam)


def test_yager_examples():
    mu = np.linspace(0, 1, 11)
    np.testing.assert_allclose(yager_nonmembership(mu, 1.0), 1 - mu, atol=1e-15)
    assert float(yager_nonmembership(np.array(0.0), 3.0)) == 1.0
    assert float(yager_nonmembership(np.array(0.6), 2.0)) == pytest.approx(math.sqrt(1 - 0.36), abs=1e-15)
    assert float(yager_nonmembership(np.array(0.6), 2.0)) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(ValueError, match="w"):
        yager_nonmembership(mu, 0.0)


def test_hesitation_examples():
    assert float(hesitation(np.array(0.4), np.array(0.5))) == pytest.approx(0.1, abs=1e-15)
    mu = np.linspace(0, 1, 33)
    np.testing.assert_array_equal(hesitation(mu, standard_nonmembership(mu)), 0.0)
    for lam in (0.5, 1.5):
        b = np.array([0.0, 1.0])
        np.testing.assert_array_equal(hesitation(b, sugeno_nonmembership(b, lam)), 0.0)


def test_hesitation_rejects_atanassov_violation():
    with pytest.raises(ValueError, match="mu \\+ nu > 1"):
        hesitation(np.array([0.2, 0.7]), np.array([0.2, 0.4]))
    # within tolerance is accepted and clipped
    assert float(hesitation(np.array(0.5), np.array(0.5 + 5e-13))) == 0.0


def test_membership_rejects_out_of_range():
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        sugeno_nonmembership(np.array([1.2]), 1.0)


def test_membership_spec_parse_round_trip():
    for text in ("minmax", "gaussian:0.4,0.2", "sigmoid:8,0.5"):
        assert MembershipSpec.parse(str(MembershipSpec.parse(text))) == MembershipSpec.parse(text)
    with pytest.raises(ValueError):
        MembershipSpec.parse("triangle")


def test_membership_families():
    x = np.linspace(0, 1, 5)
    g = normalize_membership(x, MembershipSpec("gaussian", center=0.5, width=0.25))
    assert g[2] == 1.0 and np.all(g <= 1)
    s = normalize_membership(x, MembershipSpec("sigmoid", center=0.5, slope=10.0))
    assert s[2] == 0.5 and np.all(np.diff(s) > 0)
    assert np.all(np.isfinite(normalize_membership(np.array([-1e6, 1e6]), MembershipSpec("sigmoid"))))
    with pytest.raises(ValueError, match="non-finite"):
        normalize_membership(np.array([0.0, np.nan]))


# ---------------------------------------------------------------- encoding


def test_constant_image_degenerate():
    with pytest.warns(ConstantSliceWarning):
        mu = normalize_membership(np.full((4, 4), 37.0))
    np.testing.assert_array_equal(mu, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ifs = ifs_encode(np.full((4, 4), 37.0), negation=NegationSpec.sugeno(1.0))
    assert ifs.degenerate
    np.testing.assert_array_equal(ifs.mu, 0.0)
    np.testing.assert_array_equal(ifs.nu, 1.0)
    np.testing.assert_array_equal(ifs.pi, 0.0)


@pytest.mark.parametrize("lam", [0.5, 0.9, 1.2, 1.5])
def test_binary_image_has_no_hesitation(lam):
    img = np.where(np.arange(64).reshape(8, 8) % 3 == 0, 255.0, 0.0)
    np.testing.assert_array_equal(ifs_encode(img, negation=NegationSpec.sugeno(lam)).pi, 0.0)


def test_ramp_peak_hesitation_location():
    ramp = np.arange(256.0).reshape(16, 16)
    ifs = ifs_encode(ramp, negation=NegationSpec.sugeno(1.0))
    # maximizer of mu(1-mu)/(1+mu): derivative zero at mu^2 + 2 mu - 1 = 0
    mu_star = math.sqrt(2) - 1
    mus = np.arange(256) / 255
    expected = int(np.argmin(np.abs(mus - mu_star)))
    assert int(np.argmax(ifs.pi)) == expected
    assert mus[expected] == pytest.approx(0.4142, abs=2e-3)


def test_stack_channel_order():
    ifs = ifs_encode(np.arange(16.0).reshape(4, 4), negation=NegationSpec.sugeno(0.9))
    s = ifs.stack()
    assert s.shape == (3, 4, 4)
    np.testing.assert_array_equal(s[0], ifs.mu)
    np.testing.assert_array_equal(s[1], ifs.nu)
    np.testing.assert_array_equal(s[2], ifs.pi)


def test_encoding_is_bit_identical_on_repeat():
    img = np.random.default_rng(3).uniform(0, 300, (12, 12))
    a = ifs_encode(img, negation=NegationSpec.sugeno(1.2)).stack()
    b = ifs_encode(img.copy(), negation=NegationSpec.sugeno(1.2)).stack()
    assert a.tobytes() == b.tobytes()


def test_export_round_trip(tmp_path):
    img = np.random.default_rng(4).uniform(0, 255, (8, 6))
    ifs = ifs_encode(img, negation=NegationSpec.sugeno(1.5))
    export_ifs(ifs, tmp_path / "s0.ifs", preview_dir=tmp_path)
    back = load_ifs(tmp_path / "s0.ifs")
    for name in ("mu", "nu", "pi"):
        assert getattr(back, name).tobytes() == getattr(ifs, name).tobytes()
        preview = read_pgm(tmp_path / f"s0_{name}.pgm")
        np.testing.assert_array_equal(preview, np.rint(getattr(ifs, name) * 255))


# ---------------------------------------------------------------- properties


@given(mu=unit, lam=lam_st)
def test_sugeno_bounds_and_hesitation_identity(mu, lam):
    nu = float(sugeno_nonmembership(np.array(mu), lam))
    assert 0.0 <= nu <= 1.0
    pi = float(hesitation(np.array(mu), np.array(nu)))
    assert abs(pi - sugeno_pi(mu, lam)) <= 1e-12
    assert pi >= 0.0
    assert abs(mu + nu + pi - 1.0) <= 1e-12


@given(a=unit, b=unit, lam=lam_st)
def test_sugeno_strictly_decreasing(a, b, lam):
    # strictness is only observable above float resolution
    assume(abs(a - b) > 1e-9)
    lo, hi = min(a, b), max(a, b)
    vals = sugeno_nonmembership(np.array([lo, hi]), lam)
    assert vals[0] > vals[1]


@given(mu=st.floats(1e-6, 1 - 1e-6), w=st.sampled_from([0.5, 1.0, 2.0]))
def test_yager_involution(mu, w):
    twice = yager_nonmembership(yager_nonmembership(np.array(mu), w), w)
    assert abs(float(twice) - mu) <= 1e-10


@settings(max_examples=50)
@given(
    seed=st.integers(0, 2**31 - 1),
    membership=st.sampled_from(["minmax", "gaussian:0.5,0.25", "sigmoid:10,0.5"]),
    negation=st.one_of(lam_st.map(NegationSpec.sugeno), w_st.map(NegationSpec.yager), st.just(NegationSpec("standard"))),
)
def test_planes_partition_unity(seed, membership, negation):
    img = np.random.default_rng(seed).uniform(0, 1, (6, 6))
    ifs = ifs_encode(img, MembershipSpec.parse(membership), negation)
    for plane in (ifs.mu, ifs.nu, ifs.pi):
        assert plane.min() >= 0.0 and plane.max() <= 1.0
    assert np.max(np.abs(ifs.mu + ifs.nu + ifs.pi - 1.0)) <= 1e-12


def test_fuzzy_set_reduction_small_lambda():
    mu = np.linspace(0, 1, 100_001)
    assert np.max(np.abs(sugeno_nonmembership(mu, 1e-8) - (1 - mu))) < 1e-7


def test_nonmembership_dispatch():
    mu = np.array([0.3])
    assert nonmembership(mu, NegationSpec("standard")) == pytest.approx(0.7)
    assert nonmembership(mu, NegationSpec.sugeno(1.0)) == pytest.approx(0.7 / 1.3)
    assert nonmembership(mu, NegationSpec.yager(2.0)) == pytest.approx(math.sqrt(0.91))


def test_yager_above_one_violates_atanassov():
    img = np.arange(16.0).reshape(4, 4)
    with pytest.raises(ValueError, match="Yager w = 2.0 > 1"):
        ifs_encode(img, negation=NegationSpec.yager(2.0))
    # boundary-only memberships stay valid
    ifs = ifs_encode(np.array([[0.0, 1.0]]), negation=NegationSpec.yager(2.0))
    np.testing.assert_array_equal(ifs.pi, 0.0)
