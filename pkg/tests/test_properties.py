import numpy as np
import pytest

from relukit.properties import (Box, LinearAtom, Property, PropertyParseError,
                                emit_smtlib, parse_smtlib, property_equal,
                                robustness_property)

BASIC = """
(declare-const X_0 Real)
(declare-const Y_0 Real)
(assert (<= X_0 1.0))
(assert (>= X_0 0.0))
(assert (>= Y_0 0.5))
"""


def random_property(rng):
    d = int(rng.integers(1, 4))
    m = int(rng.integers(2, 5))
    lo = rng.uniform(-1, 0, size=d)
    hi = lo + rng.uniform(0.1, 1, size=d)
    disjuncts = []
    for _ in range(int(rng.integers(1, 4))):
        atoms = []
        for _ in range(int(rng.integers(1, 3))):
            coeffs = np.round(rng.normal(size=m), 3)
            if not np.any(coeffs):
                coeffs[0] = 1.0
            atoms.append(LinearAtom("Y", coeffs, float(np.round(rng.normal(), 3))))
        disjuncts.append(atoms)
    return Property(Box(lo, hi), disjuncts, num_outputs=m)


class TestParse:
    def test_basic_box_and_disjunct(self):
        p = parse_smtlib(BASIC)
        assert p.input_box.lo == pytest.approx([0.0])
        assert p.input_box.hi == pytest.approx([1.0])
        assert len(p.violation) == 1 and len(p.violation[0]) == 1
        atom = p.violation[0][0]
        # (>= Y_0 0.5) normalizes to -Y_0 <= -0.5
        assert atom.coeffs == pytest.approx([-1.0]) and atom.rhs == -0.5

    def test_or_makes_two_disjuncts(self):
        text = """(declare-const X_0 Real)
(declare-const Y_0 Real)(declare-const Y_1 Real)(declare-const Y_2 Real)
(assert (and (>= X_0 0.0) (<= X_0 1.0)))
(assert (or (>= Y_0 Y_1) (>= Y_2 Y_1)))"""
        p = parse_smtlib(text)
        assert len(p.violation) == 2

    def test_non_box_input_rejected(self):
        text = """(declare-const X_0 Real)(declare-const X_1 Real)
(declare-const Y_0 Real)
(assert (<= (+ X_0 X_1) 1.0))
(assert (>= X_0 0.0))(assert (<= X_0 1.0))
(assert (>= X_1 0.0))(assert (<= X_1 1.0))
(assert (>= Y_0 0.5))"""
        with pytest.raises(PropertyParseError, match="non-box"):
            parse_smtlib(text)

    def test_unknown_symbol(self):
        with pytest.raises(PropertyParseError, match="unknown symbol"):
            parse_smtlib("(declare-const Z_0 Real)")
        with pytest.raises(PropertyParseError, match="unknown symbol"):
            parse_smtlib(BASIC + "(assert (<= frobnicate 1.0))")

    def test_dnf_cap(self):
        decls = "(declare-const X_0 Real)" + "".join(
            f"(declare-const Y_{j} Real)" for j in range(2))
        box = "(assert (>= X_0 0.0))(assert (<= X_0 1.0))"
        # (or a b)^7 conjoined -> 2^7 = 128 > 64 disjuncts
        clause = "(or (>= Y_0 0.0) (>= Y_1 0.0))"
        body = f"(assert (and {' '.join([clause] * 7)}))"
        with pytest.raises(PropertyParseError, match="cap"):
            parse_smtlib(decls + box + body)

    def test_unbounded_input_rejected(self):
        with pytest.raises(PropertyParseError, match="bounded"):
            parse_smtlib("(declare-const X_0 Real)(declare-const Y_0 Real)"
                         "(assert (>= X_0 0.0))(assert (>= Y_0 0.5))")

    def test_mixed_input_output_atom_rejected(self):
        with pytest.raises(PropertyParseError, match="mixes"):
            parse_smtlib("(declare-const X_0 Real)(declare-const Y_0 Real)"
                         "(assert (>= X_0 0.0))(assert (<= X_0 1.0))"
                         "(assert (<= (- Y_0 X_0) 0.0))")

    def test_syntax_error_has_position(self):
        with pytest.raises(PropertyParseError, match="unbalanced"):
            parse_smtlib("(assert (<= X_0 1.0)")
        with pytest.raises(PropertyParseError, match="line 1"):
            parse_smtlib("(assert (<= X_0 1.0)))")

    def test_comments_and_ignored_commands(self):
        p = parse_smtlib("; a comment\n(set-logic QF_LRA)\n" + BASIC)
        assert p.input_box.dim == 1

    def test_strict_relations_weakened(self):
        p = parse_smtlib(BASIC.replace(">= Y_0", "> Y_0"))
        assert p.violation[0][0].rhs == -0.5


class TestEmit:
    def test_round_trip_basic(self):
        p = parse_smtlib(BASIC)
        assert property_equal(p, parse_smtlib(emit_smtlib(p)))

    def test_declares_all_consts(self):
        p = random_property(np.random.default_rng(0))
        text = emit_smtlib(p)
        for i in range(p.input_box.dim):
            assert f"(declare-const X_{i} Real)" in text
        for j in range(p.num_outputs):
            assert f"(declare-const Y_{j} Real)" in text

    def test_100_random_round_trips(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            p = random_property(rng)
            assert property_equal(p, parse_smtlib(emit_smtlib(p)))


class TestRobustnessProperty:
    DOMAIN = Box(np.zeros(3), np.ones(3))

    def test_zero_epsilon_point_box(self):
        x0 = np.array([0.2, 0.5, 0.9])
        p = robustness_property(x0, 1, 0.0, self.DOMAIN, 4)
        assert np.array_equal(p.input_box.lo, x0)
        assert np.array_equal(p.input_box.hi, x0)

    def test_binary_single_disjunct(self):
        p = robustness_property(np.array([0.5, 0.5, 0.5]), 0, 0.1,
                                self.DOMAIN, 2)
        assert len(p.violation) == 1
        atom = p.violation[0][0]
        # Y_1 >= Y_0 encoded as Y_0 - Y_1 <= 0
        assert atom.coeffs == pytest.approx([1.0, -1.0]) and atom.rhs == 0.0

    def test_clipped_to_domain(self):
        p = robustness_property(np.array([0.05, 0.5, 0.98]), 0, 0.1,
                                self.DOMAIN, 2)
        assert p.input_box.lo == pytest.approx([0.0, 0.4, 0.88])
        assert p.input_box.hi == pytest.approx([0.15, 0.6, 1.0])

    def test_x0_outside_domain_rejected(self):
        with pytest.raises(ValueError, match="domain"):
            robustness_property(np.array([1.5, 0.5, 0.5]), 0, 0.1,
                                self.DOMAIN, 2)

    def test_carries_label_metadata(self):
        p = robustness_property(np.array([0.5, 0.5, 0.5]), 2, 0.05,
                                self.DOMAIN, 3)
        assert p.source["type"] == "robustness"
        assert p.source["label"] == 2


class TestModelInvariants:
    def test_box_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            Box([1.0], [0.0])

    def test_property_needs_disjuncts(self):
        with pytest.raises(ValueError):
            Property(Box([0.0], [1.0]), [], num_outputs=1)

    def test_atom_rejects_zero_coeffs(self):
        with pytest.raises(ValueError):
            LinearAtom("Y", [0.0, 0.0], 1.0)
