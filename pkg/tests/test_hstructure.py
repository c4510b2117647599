import json
import unittest
from pathlib import Path

import numpy as np
from dotenv import load_dotenv
from hypothesis import given, settings as hypothesis_settings, strategies as st

# Load environment variables from .env in the project root
ROOT_DIR = Path(__file__).parent.parent
load_dotenv(dotenv_path=ROOT_DIR / ".env")

from qslant.errors import DimensionMismatchError, StructureError
from qslant.hstructure import HypercomplexStructure, canonical_hypercomplex, conjugate, load_structure, validate
from qslant.numkernel import random_orthogonal


def unit(dim, i):
    v = np.zeros(dim)
    v[i] = 1.0
    return v


class TestCanonical(unittest.TestCase):
    def test_block_images(self):
        h = canonical_hypercomplex(1)
        e = [unit(4, i) for i in range(4)]
        np.testing.assert_array_equal(h.I @ e[0], e[1])
        np.testing.assert_array_equal(h.I @ e[2], e[3])
        np.testing.assert_array_equal(h.J @ e[0], e[2])
        np.testing.assert_array_equal(h.J @ e[1], -e[3])
        np.testing.assert_array_equal(h.K @ e[0], e[3])
        np.testing.assert_array_equal(h.K @ e[1], e[2])

    def test_quaternion_relations(self):
        h = canonical_hypercomplex(1)
        np.testing.assert_array_equal(h.I @ h.J, h.K)
        np.testing.assert_array_equal(h.J @ h.I, -h.K)
        h3 = canonical_hypercomplex(3)
        np.testing.assert_array_equal(h3.K @ h3.K, -np.eye(12))

    def test_entries_are_signs(self):
        for _, r in canonical_hypercomplex(2).items():
            self.assertTrue(set(np.unique(r)).issubset({-1.0, 0.0, 1.0}))

    def test_invalid_m(self):
        with self.assertRaises(ValueError):
            canonical_hypercomplex(0)

    def test_metric_compatible(self):
        h = canonical_hypercomplex(2)
        rng = np.random.default_rng(2)
        for _ in range(100):
            x, y = rng.standard_normal(8), rng.standard_normal(8)
            for _, r in h.items():
                self.assertAlmostEqual(np.dot(r @ x, r @ y), np.dot(x, y), delta=1e-13)


class TestValidate(unittest.TestCase):
    def test_canonical_passes_exactly(self):
        report = validate(canonical_hypercomplex(3))
        self.assertTrue(report.passed)
        self.assertEqual(report.worst, 0.0)
        self.assertIn("KI-J", report.residuals)
        self.assertIn("It+I", report.residuals)

    def test_flipped_sign(self):
        h = canonical_hypercomplex(1)
        bad_i = h.I.copy()
        bad_i[1, 0] = -1.0
        report = validate(HypercomplexStructure(bad_i, h.J, h.K))
        self.assertFalse(report.passed)
        self.assertEqual(report.residuals["II+id"], 2.0)

    def test_shape_errors(self):
        h = canonical_hypercomplex(1)
        with self.assertRaises(DimensionMismatchError):
            validate(HypercomplexStructure(np.eye(3), np.eye(3), np.eye(3)))
        with self.assertRaises(DimensionMismatchError):
            validate(HypercomplexStructure(h.I, h.J, np.eye(8)))

    @hypothesis_settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=1, max_value=3))
    def test_conjugation_preserves_axioms(self, seed, m):
        h = canonical_hypercomplex(m)
        hq = conjugate(h, random_orthogonal(4 * m, np.random.default_rng(seed)))
        report = validate(hq, tol=1e-12)
        self.assertTrue(report.passed, report.residuals)


class TestLoadStructure(unittest.TestCase):
    def document(self, h):
        return {"dim": h.dim, "I": h.I.tolist(), "J": h.J.tolist(), "K": h.K.tolist()}

    def test_round_trip(self):
        h = canonical_hypercomplex(2)
        loaded = load_structure(json.dumps(self.document(h)))
        np.testing.assert_array_equal(loaded.K, h.K)

    def test_rejects_broken_relations(self):
        h = canonical_hypercomplex(1)
        doc = self.document(h)
        doc["K"] = (-h.K).tolist()
        with self.assertRaises(StructureError):
            load_structure(doc)

    def test_rejects_wrong_shapes(self):
        doc = self.document(canonical_hypercomplex(1))
        doc["dim"] = 8
        with self.assertRaises(DimensionMismatchError):
            load_structure(doc)
        with self.assertRaises(StructureError):
            load_structure({"dim": 4, "I": []})


if __name__ == "__main__":
    unittest.main()
