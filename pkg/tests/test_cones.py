import numpy as np
import pytest

from acctrack.cones import (DEDUPE_TOL, BracketTree, Combination, HConeElement, LinealPair, certify, default_states,
                            generate_H, generate_Z, membership_residual, span_rank)
from acctrack.geometry import VectorField
from acctrack.models import flat_system, hovercraft, sample_states, submarine

SUB = submarine()
HOV = hovercraft()
STATES = default_states(SUB, 20, seed=3)


def _labels(family):
    return [t.label for t in family]


def test_level_zero_is_inputs():
    assert _labels(generate_Z(SUB, 0, states=STATES)) == ["Y1", "Y2", "Y3"]


def test_submarine_level_one_members_and_pruning():
    pruned = []
    fam = generate_Z(SUB, 1, states=STATES, pruned=pruned)
    assert set(_labels(fam)[3:]) == {"<Y2:Y3>", "<Y1:Y3>"}
    zero = {p["label"] for p in pruned if p["reason"] == "zero"}
    assert {"<Y1:Y2>", "<Y1:Y1>", "<Y2:Y2>", "<Y3:Y3>"} <= zero


@pytest.mark.parametrize("inputs,value", [("momentum", -0.5), ("velocity", -1.5)])
def test_submarine_level_two_triple(inputs, value):
    sys = submarine(inputs=inputs)
    fam = generate_Z(sys, 2, states=STATES)
    top = [t for t in fam if t.level == 2]
    assert len(top) == 1
    q = STATES[0][:12]
    v = top[0].field(q)
    assert np.allclose(v, [0, 0, value, 0, 0, 0], atol=1e-6)


def test_pruned_trees_stay_zero_at_fresh_states():
    pruned = []
    generate_Z(SUB, 2, states=STATES, pruned=pruned)
    fresh = sample_states(SUB, 10, np.random.default_rng(99))
    for p in pruned:
        if p["reason"] == "zero":
            vals = [p["tree"].recompute(SUB)(x[:12]) for x in fresh]
            assert np.max(np.abs(vals)) < DEDUPE_TOL


def test_bracket_tree_cache_matches_recursion():
    fam = generate_Z(SUB, 2, states=STATES)
    rng = np.random.default_rng(4)
    for t in fam:
        for x in sample_states(SUB, 3, rng):
            assert np.allclose(t.field(x[:12]), t.recompute(SUB)(x[:12]), atol=1e-6)
        if not t.is_leaf:
            assert t.level == max(t.left.level, t.right.level) + 1


@pytest.mark.parametrize("level,rank", [(0, 3), (1, 5), (2, 6)])
def test_submarine_ranks(level, rank):
    fam = [t for t in generate_Z(SUB, 2, states=STATES) if t.level <= level]
    assert all(span_rank(fam, x) == rank for x in STATES)


def test_rank_monotone_in_level():
    fam = generate_Z(SUB, 3, states=STATES)
    for x in STATES[:5]:
        ranks = [span_rank([t for t in fam if t.level <= l], x) for l in range(4)]
        assert ranks == sorted(ranks)


def test_hovercraft_rank_with_self_product():
    Y = [BracketTree.leaf(HOV, a) for a in (1, 2)]
    fam = Y + [BracketTree.sym(HOV, Y[0], Y[0])]
    states = default_states(HOV, 20)
    assert all(span_rank(Y, x) == 2 for x in states)
    assert all(span_rank(fam, x) == 3 for x in states)
    with pytest.raises(ValueError):
        span_rank([], states[0])


def test_hovercraft_self_product_not_in_span():
    Y = [BracketTree.leaf(HOV, a) for a in (1, 2)]
    states = default_states(HOV, 20)
    res = membership_residual(BracketTree.sym(HOV, Y[0], Y[0]), Y, states)
    p = HOV.params
    # relative residual: the whole dv1 component (2c/e) is missed
    assert res.residual == pytest.approx(1.0, abs=1e-6)
    assert 2 * p.c / p.e == pytest.approx(1.0)


def test_membership_exact_and_roundtrip():
    fam = generate_Z(SUB, 2, states=STATES)
    states = STATES
    target = VectorField(fam[0].field.chart, lambda q: 2.0 * fam[0].field(q) - 0.3 * fam[3].field(q), dim=6)
    res, coefs = membership_residual(target, fam[:5], states)
    assert res < 1e-10
    for s, c in zip(states, coefs):
        q = s[:12]
        fit = sum(ci * f.field(q) for ci, f in zip(c, fam[:5]))
        assert np.max(np.abs(fit - target(q))) <= res + 1e-12


def test_membership_needs_enough_states():
    with pytest.raises(ValueError):
        membership_residual(SUB.base_controls[0], SUB.base_controls, STATES[:5])


def test_membership_flags_rank_deficiency():
    Y = SUB.base_controls
    res = membership_residual(Y[0], [Y[0], Y[0]], STATES)
    assert res.residual < 1e-12 and len(res.rank_deficient) == len(STATES)


@pytest.mark.parametrize("inputs", ["momentum", "velocity"])
def test_submarine_zz_products_vanish(inputs):
    sys = submarine(inputs=inputs)
    fam = generate_Z(sys, 2, states=STATES)
    for t in fam:
        zz = BracketTree.sym(sys, t, t)
        assert membership_residual(zz, fam[:3], STATES).residual < 1e-8


def test_certify_submarine():
    rep = certify(SUB)
    assert rep.verdicts["sym1"].status == "violated"
    assert max(rep.ranks["Sym1"]) == 5
    assert rep.verdicts["corollary_Z"].status == "satisfied" and rep.verdicts["corollary_Z"].level == 2
    assert rep.exit_code() == 0 and "corollary_Z at l=2" in rep.summary()


def test_certify_hovercraft():
    rep = certify(HOV)
    assert rep.verdicts["sym1"].status == "violated"
    assert rep.verdicts["corollary_H"].status == "satisfied" and rep.verdicts["corollary_H"].level == 1
    assert rep.verdicts["corollary_Z"].status == "violated"


def test_certify_fully_actuated_flat():
    rep = certify(flat_system(3))
    assert rep.verdicts["sym1"].status == "satisfied" and rep.verdicts["sym1"].level == 0


def test_certify_underactuated_flat_is_violated():
    rep = certify(flat_system(2, [0]))
    assert not rep.certified and rep.exit_code() == 2


def test_certify_level_cap():
    with pytest.raises(ValueError):
        certify(SUB, max_level=5)


@pytest.mark.parametrize("make", [submarine, lambda: submarine(inputs="velocity")])
def test_z_certificate_implies_h(make):
    rep = certify(make())
    lz = rep.verdicts["corollary_Z"].level
    lh = rep.verdicts["corollary_H"]
    assert lh.status == "satisfied" and lh.level <= lz


def test_report_serialization():
    rep = certify(HOV)
    kv = dict(line.split("=", 1) for line in rep.to_kv().splitlines())
    assert kv["verdict.corollary_H"] == "satisfied" and kv["exit_code"] == "0"
    assert "checks hold at these states only" in rep.to_text()


def test_h_element_field_and_validation():
    Y = HOV.base_controls
    G = Combination(Y, [1.0, -1.0])
    el = HConeElement(HOV, (), [(0.5, G)], level=1)
    for x in default_states(HOV, 5):
        q = x[:3]
        want = -0.5 * HOV.symmetric_product(G.field, G.field)(q)
        assert np.allclose(el.field(q), want, atol=1e-6)
    with pytest.raises(ValueError):
        HConeElement(HOV, (), [(-1.0, G)], level=1)
    with pytest.raises(ValueError):
        HConeElement(HOV, [(1.0, el)], (), level=1)
    pair = LinealPair(Combination(Y, [1.0, 0.0]), Combination(Y, [-1.0, 0.0]))
    el2 = HConeElement(HOV, [(1.0, el)], [(1.0, pair)], level=2)
    assert el2.level == 2


def test_combination_with_function_coefficients():
    Y = HOV.base_controls
    w = lambda q: np.cos(q[2])
    C = Combination(Y, [w, 1.0])
    q = np.array([0.2, -0.1, 0.7])
    assert np.allclose(C.field(q), np.cos(0.7) * Y[0](q) + Y[1](q))
    assert np.allclose(C.negate().field(q), -C.field(q))
    with pytest.raises(ValueError):
        C.weights()


def test_generate_h_hovercraft_contents():
    gens = generate_H(HOV)
    labels = [g.label for g in gens]
    assert labels[:4] == ["Y1", "-Y1", "Y2", "-Y2"]
    q = default_states(HOV, 1)[0][:3]
    vals = np.array([g.field(q) for g in gens[4:]])
    # the conic part reaches both signs of the dv1 direction
    assert vals[:, 1].max() > 0.5 and vals[:, 1].min() < -0.5
    with pytest.raises(NotImplementedError):
        generate_H(HOV, level=2)
