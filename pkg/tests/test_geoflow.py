import unittest
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

# Load environment variables from .env in the project root
ROOT_DIR = Path(__file__).parent.parent
load_dotenv(dotenv_path=ROOT_DIR / ".env")

from qslant.config import PACKAGE_DIR
from qslant.errors import PreconditionError
from qslant.exprmap import VectorFieldExpr, load_map_spec
from qslant.files import read_json
from qslant.geoflow import (
    Field,
    fiber_decomposition_residual,
    harmonicity_report,
    integrability_D1_residual,
    integrability_D2_residual,
    omega_parallel_residual,
    oneill_A,
    oneill_T,
    parallel_structure_residuals,
    point_calculi,
    product_decomposition_residual,
    second_fundamental_form,
    tension,
    totally_geodesic_residual,
    umbilical_report,
    vertical_connection,
)
from qslant.hstructure import TAGS, canonical_hypercomplex, conjugate
from qslant.numkernel import random_orthogonal
from qslant.slantlab import classify, semi_slant_decompose, split_tangent

CORPUS = PACKAGE_DIR / "corpus"
CORPUS_NAMES = sorted(path.stem for path in CORPUS.glob("*.json"))
SPHERE_POINTS = [np.array([0.9, 0.6, -0.7, 0.8]), np.array([1.2, -0.5, 0.6, 0.55])]


def corpus_map(name):
    return load_map_spec(read_json(CORPUS / f"{name}.json"))


def corpus_point(name, seed=0):
    document = read_json(CORPUS / f"{name}.json")
    box = document.get("sample_box", {"low": -1.0, "high": 1.0})
    return np.random.default_rng(seed).uniform(box["low"], box["high"], document["domain_dim"])


def unit(dim, i):
    v = np.zeros(dim)
    v[i] = 1.0
    return v


def classified(name, points=None):
    f = corpus_map(name)
    h = canonical_hypercomplex(f.domain_dim // 4)
    if points is None:
        points = list(np.random.default_rng(1).uniform(-1, 1, (2, f.domain_dim)))
    return f, h, classify(f, h, points)


class TestPointwiseTensors(unittest.TestCase):
    def test_second_fundamental_form_of_sphere(self):
        f = corpus_map("sphere_norm")
        p = 2 * unit(4, 0)
        value = second_fundamental_form(f, p, unit(4, 1), unit(4, 1))
        self.assertAlmostEqual(value.value[0], 0.5, places=12)
        np.testing.assert_allclose(value.range_component, value.value, atol=1e-14)
        self.assertEqual(value.range_perp_component.shape, (1,))
        self.assertAlmostEqual(second_fundamental_form(f, p, unit(4, 0), unit(4, 0)).value[0], 0.0, places=12)

    def test_second_fundamental_form_of_affine_map(self):
        f = corpus_map("example_5_8")
        p = np.random.default_rng(2).uniform(-1, 1, 12)
        value = second_fundamental_form(f, p, unit(12, 4), unit(12, 6))
        self.assertEqual(np.max(np.abs(value.value)), 0.0)

    def test_tension(self):
        f = corpus_map("sphere_norm")
        for p in SPHERE_POINTS:
            self.assertAlmostEqual(np.linalg.norm(tension(f, p)), 3 / np.linalg.norm(p), places=10)
        g = corpus_map("example_5_7")
        self.assertEqual(np.max(np.abs(tension(g, np.ones(12)))), 0.0)

    def test_tension_in_random_frames(self):
        rng = np.random.default_rng(3)
        for name in CORPUS_NAMES:
            f = corpus_map(name)
            p = corpus_point(name)
            base = tension(f, p)
            for _ in range(5):
                np.testing.assert_allclose(tension(f, p, random_orthogonal(f.domain_dim, rng)), base, atol=1e-9, err_msg=name)

    def test_oneill_tensors_of_sphere(self):
        f = corpus_map("sphere_norm")
        p = 2 * unit(4, 0)
        np.testing.assert_allclose(oneill_T(f, p, unit(4, 1), unit(4, 1)), -0.5 * unit(4, 0), atol=1e-7)
        np.testing.assert_allclose(oneill_T(f, p, unit(4, 1), unit(4, 2)), np.zeros(4), atol=1e-7)
        np.testing.assert_allclose(oneill_A(f, p, unit(4, 0), unit(4, 0)), np.zeros(4), atol=1e-7)

    def test_oneill_tensors_are_linear_in_the_second_slot(self):
        rng = np.random.default_rng(5)
        for name in CORPUS_NAMES:
            f = corpus_map(name)
            p = corpus_point(name)
            split = split_tangent(f, p)
            e, w, z = rng.standard_normal((3, f.domain_dim))
            for tensor in (oneill_T, oneill_A):
                value = tensor(f, p, e, w, split)
                np.testing.assert_allclose(tensor(f, p, e, 2.5 * w, split), 2.5 * value, atol=1e-8, err_msg=name)
                np.testing.assert_allclose(
                    tensor(f, p, e, w + z, split), value + tensor(f, p, e, z, split), atol=1e-8, err_msg=name
                )

    def test_T_is_symmetric_on_vertical_pairs(self):
        rng = np.random.default_rng(6)
        for name in CORPUS_NAMES:
            f = corpus_map(name)
            p = corpus_point(name)
            split = split_tangent(f, p)
            pair = split.vertical.basis @ rng.standard_normal((split.vertical.dim, 2))
            x, y = pair[:, 0], pair[:, 1]
            txy = oneill_T(f, p, x, y, split)
            np.testing.assert_allclose(txy, oneill_T(f, p, y, x, split), atol=1e-6, err_msg=name)
            if name == "sphere_norm":
                # fibers are round spheres of radius |p|
                np.testing.assert_allclose(txy, -np.dot(x, y) * p / np.dot(p, p), atol=1e-6)

    def test_oneill_tensors_ignore_the_extension(self):
        f, h, classification = classified("sphere_norm", [2 * unit(4, 0)])
        calc = point_calculi(f, h, classification)[0]
        constant = np.array([2.0, 1.0, 1.0, 0.0])
        curved = VectorFieldExpr.parse(["2 + x2*x3 - x4", "1 + (x1 - 2)^2 + x4", "1 + x2 - x3*x1", "x1*x2 + sin(x3)"])
        np.testing.assert_allclose(calc.value(Field(curved)), constant, atol=1e-15)
        # vertical direction for T, horizontal for A
        for e, tensor in ((unit(4, 1) + 0.5 * unit(4, 3), calc.T), (unit(4, 0), calc.A)):
            expected = tensor(e, constant)
            extended = [
                calc.P_H @ calc.covariant(Field(seed, ("V",)), e) + calc.P_V @ calc.covariant(Field(seed, ("H",)), e)
                for seed in (constant, curved)
            ]
            for value in extended:
                np.testing.assert_allclose(value, expected, atol=10 * calc.fd_error + 1e-9)


class TestConnections(unittest.TestCase):
    def test_vertical_connection_on_sphere(self):
        f = corpus_map("sphere_norm")
        y = VectorFieldExpr.parse(["-x2", "x1", "-x4", "x3"])
        result = vertical_connection(f, unit(4, 0), unit(4, 2), y)
        np.testing.assert_allclose(result, unit(4, 3), atol=1e-12)

    def test_vertical_connection_needs_vertical_x(self):
        f = corpus_map("sphere_norm")
        with self.assertRaises(PreconditionError):
            vertical_connection(f, unit(4, 0), unit(4, 0), unit(4, 1))

    def test_omega_parallel_on_affine_map(self):
        f = corpus_map("example_5_7")
        h = canonical_hypercomplex(3)
        p = np.random.default_rng(4).uniform(-1, 1, 12)
        report = semi_slant_decompose(split_tangent(f, p), h.I, structure_tag="I")
        x = report.d2.basis[:, 0]
        y = report.split.vertical.basis[:, 1]
        defects = omega_parallel_residual(f, p, report, x, y, h)
        self.assertLess(defects.omega, 1e-8)
        self.assertLess(defects.phi, 1e-8)
        self.assertIsNotNone(defects.fiber_balance)
        self.assertLess(defects.fiber_balance, 1e-8)

    def test_omega_parallel_needs_vertical_x(self):
        f = corpus_map("example_5_7")
        h = canonical_hypercomplex(3)
        report = semi_slant_decompose(split_tangent(f, np.zeros(12)), h.I, structure_tag="I")
        with self.assertRaises(PreconditionError):
            omega_parallel_residual(f, np.zeros(12), report, report.split.horizontal.basis[:, 0], unit(12, 8), h)

    def test_omega_parallel_needs_the_matching_structure(self):
        f = corpus_map("example_5_7")
        h = canonical_hypercomplex(3)
        p = np.zeros(12)
        report = semi_slant_decompose(split_tangent(f, p), h.I, structure_tag="I")
        rotated = conjugate(h, random_orthogonal(12, np.random.default_rng(9)))
        with self.assertRaises(PreconditionError):
            omega_parallel_residual(f, p, report, report.d2.basis[:, 0], unit(12, 8), rotated)
        untagged = semi_slant_decompose(split_tangent(f, p), h.I)
        with self.assertRaises(PreconditionError):
            omega_parallel_residual(f, p, untagged, untagged.d2.basis[:, 0], unit(12, 8), h)


class TestPointCalculi(unittest.TestCase):
    def test_requires_semi_slant_verdict(self):
        f = load_map_spec({"domain_dim": 4, "codomain_dim": 1, "components": ["2*x1"]})
        h = canonical_hypercomplex(1)
        classification = classify(f, h, [np.ones(4)])
        with self.assertRaises(PreconditionError):
            point_calculi(f, h, classification)
        with self.assertRaises(PreconditionError):
            totally_geodesic_residual(f, h, classification)

    def test_frames_span_distributions(self):
        f, h, classification = classified("example_5_7")
        calc = point_calculi(f, h, classification)[0]
        for op, dim in (("V", 8), ("H", 4), ("D1:I", 4), ("D2:J", 4)):
            frame = np.column_stack([calc.value(x) for x in calc.frames(op)])
            self.assertEqual(np.linalg.matrix_rank(frame, tol=1e-9), dim, op)


class TestParallelStructure(unittest.TestCase):
    def assert_all_pass(self, results):
        self.assertEqual(len(results), 8 * len(TAGS))
        for r in results:
            self.assertTrue(r.passed, (r.condition_id, r.structure_tag, r.max_residual, r.tolerance))
            self.assertIsNone(r.agrees)

    def test_sphere(self):
        f, h, classification = classified("sphere_norm", SPHERE_POINTS[:1])
        self.assert_all_pass(parallel_structure_residuals(f, h, classification))

    def test_example_5_7(self):
        f, h, classification = classified("example_5_7")
        results = parallel_structure_residuals(f, h, classification)
        self.assert_all_pass(results)
        self.assertLess(max(r.max_residual for r in results), 1e-5)


class TestConditions(unittest.TestCase):
    def test_integrability_of_affine_maps(self):
        for name in ("example_5_5", "example_5_7"):
            f, h, classification = classified(name)
            calcs = point_calculi(f, h, classification)
            for r in integrability_D1_residual(f, h, classification, calcs) + integrability_D2_residual(f, h, classification, calcs):
                self.assertTrue(r.passed, (name, r.condition_id, r.structure_tag))
                self.assertLess(r.oracle_residual, 1e-9)
                self.assertTrue(r.agrees)

    def test_affine_map_is_totally_geodesic_and_a_product(self):
        f, h, classification = classified("example_5_8")
        calcs = point_calculi(f, h, classification)
        for r in totally_geodesic_residual(f, h, classification, calcs):
            self.assertTrue(r.passed)
            self.assertEqual(r.oracle_residual, 0.0)
            self.assertEqual(set(r.parts), {"vertical_pairs", "mixed_pairs", "range_normal_hypothesis"})
        for r in product_decomposition_residual(f, h, classification, calcs):
            self.assertTrue(r.passed)
        for r in fiber_decomposition_residual(f, h, classification, calcs):
            self.assertTrue(r.passed)

    def test_sphere_is_not_totally_geodesic(self):
        f, h, classification = classified("sphere_norm", SPHERE_POINTS)
        calcs = point_calculi(f, h, classification)
        for r in totally_geodesic_residual(f, h, classification, calcs):
            self.assertFalse(r.passed, r.structure_tag)
            self.assertTrue(r.agrees, r.structure_tag)
        for r in product_decomposition_residual(f, h, classification, calcs):
            self.assertFalse(r.passed)
            self.assertTrue(r.agrees)
            self.assertGreater(r.frame_pairs_evaluated, 0)


class TestCurvature(unittest.TestCase):
    def test_sphere_harmonicity(self):
        f, h, classification = classified("sphere_norm", SPHERE_POINTS)
        for summary in harmonicity_report(f, h, classification):
            r = np.linalg.norm(summary.point)
            self.assertAlmostEqual(np.linalg.norm(summary.tension), 3 / r, places=9)
            self.assertFalse(summary.flags["harmonic"])
            self.assertTrue(summary.flags["range_mean_curvature_zero"])
            self.assertTrue(summary.flags["sufficient_conditions_consistent"])

    def test_affine_map_is_harmonic(self):
        f, h, classification = classified("example_5_7")
        for summary in harmonicity_report(f, h, classification):
            self.assertTrue(summary.flags["harmonic"])
            self.assertTrue(summary.flags["sufficient_conditions_consistent"])
            self.assertTrue(summary.flags["harmonic_by_trace_I"])
            self.assertEqual(summary.horizontal_range_defect, 0.0)

    def test_sphere_fibers_are_umbilical(self):
        f, h, classification = classified("sphere_norm", SPHERE_POINTS)
        for summary in umbilical_report(f, h, classification):
            r = np.linalg.norm(summary.point)
            self.assertTrue(summary.flags["umbilical"])
            self.assertFalse(summary.flags["minimal_fibers"])
            self.assertAlmostEqual(np.linalg.norm(summary.fiber_mean_curvature), 1 / r, delta=1e-6)
            np.testing.assert_allclose(summary.fiber_mean_curvature, -summary.point / r**2, atol=1e-6)
            for tag in TAGS:
                self.assertTrue(summary.flags[f"mean_curvature_in_omega_d2_{tag}"], tag)

    def test_complex_case_fibers_are_minimal(self):
        f, h, classification = classified("example_5_9")
        for summary in umbilical_report(f, h, classification):
            self.assertTrue(summary.flags["umbilical"])
            self.assertTrue(summary.flags["minimal_when_complex_I"])
            self.assertNotIn("minimal_when_complex_J", summary.flags)

    def test_merge_keeps_both_halves(self):
        f, h, classification = classified("sphere_norm", SPHERE_POINTS[:1])
        calcs = point_calculi(f, h, classification)
        merged = harmonicity_report(f, h, classification, calcs)[0].merge(umbilical_report(f, h, classification, calcs)[0])
        self.assertIsNotNone(merged.tension)
        self.assertIsNotNone(merged.fiber_mean_curvature)
        self.assertIn("umbilical", merged.flags)
        self.assertIn("harmonic", merged.flags)


if __name__ == "__main__":
    unittest.main()
