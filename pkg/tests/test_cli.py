import contextlib
import io
import json
import logging
import shutil
import unittest
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env in the project root
ROOT_DIR = Path(__file__).parent.parent
load_dotenv(dotenv_path=ROOT_DIR / ".env")

from qslant.config import PACKAGE_DIR
from qslant.logger import configure_logging, logger
from qslant.main import main


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        status = main(list(argv))
    return status, out.getvalue(), err.getvalue()


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = Path("tests/temp_test_cli")
        if self.tmp.exists():
            shutil.rmtree(self.tmp)
        self.tmp.mkdir(parents=True, exist_ok=True)

    def tearDown(self):
        if self.tmp.exists():
            shutil.rmtree(self.tmp)

    def test_identities_on_corpus_example(self):
        status, out, _ = run_cli("identities", "example_5_7", "--points", "2")
        self.assertEqual(status, 0)
        report = json.loads(out)
        self.assertEqual(report["classification"]["verdict"], "h_semi_slant")
        self.assertEqual(report["checks"], ["classify", "identities"])
        self.assertEqual(report["conditions"], [])

    def test_analyze_with_param_and_checks(self):
        status, out, _ = run_cli("analyze", "example_5_8", "--points", "1", "--checks", "classify,geodesic", "--param", "alpha=0.25")
        self.assertEqual(status, 0)
        report = json.loads(out)
        self.assertEqual(report["params"]["alpha"], 0.25)
        self.assertEqual({c["condition_id"] for c in report["conditions"]}, {"totally_geodesic"})

    def test_json_output_file(self):
        target = self.tmp / "out" / "report.json"
        status, out, _ = run_cli("analyze", "example_5_9", "--points", "1", "--checks", "classify", "--json", str(target))
        self.assertEqual(status, 0)
        self.assertEqual(out, "")
        self.assertTrue(target.exists())
        self.assertTrue(json.loads(target.read_text(encoding="utf-8"))["passed"])

    def test_not_riemannian_exits_one(self):
        spec = self.tmp / "scaled.json"
        spec.write_text(json.dumps({"domain_dim": 4, "codomain_dim": 1, "components": ["2*x1"]}), encoding="utf-8")
        status, out, _ = run_cli("analyze", str(spec), "--checks", "classify")
        self.assertEqual(status, 1)
        self.assertFalse(json.loads(out)["passed"])

    def test_bad_spec_exits_two(self):
        spec = self.tmp / "bad.json"
        spec.write_text(json.dumps({"domain_dim": 4, "codomain_dim": 1, "components": ["x1 +"]}), encoding="utf-8")
        status, out, err = run_cli("analyze", str(spec))
        self.assertEqual(status, 2)
        self.assertEqual(out, "")
        self.assertEqual(json.loads(err.strip().splitlines()[-1])["code"], "syntax_error")

    def test_missing_map_exits_two(self):
        status, _, err = run_cli("identities", "no_such_example")
        self.assertEqual(status, 2)
        self.assertEqual(json.loads(err.strip().splitlines()[-1])["code"], "configuration_error")

    def test_empty_corpus_dir_exits_two(self):
        status, _, _ = run_cli("verify-corpus", "--corpus-dir", str(self.tmp))
        self.assertEqual(status, 2)

    def test_verify_corpus_is_byte_identical(self):
        first = run_cli("verify-corpus", "--seed", "42")
        second = run_cli("verify-corpus", "--seed", "42")
        self.assertEqual(first[0], 0)
        self.assertEqual(first[1], second[1])
        self.assertTrue(json.loads(first[1])["passed"])

    def test_verify_corpus_names_failing_example(self):
        corpus = self.tmp / "corpus"
        corpus.mkdir()
        document = json.loads((PACKAGE_DIR / "corpus" / "example_5_9.json").read_text(encoding="utf-8"))
        document["expected"]["cos_theta"]["J"] = "cos(pi/4)"
        (corpus / "example_5_9.json").write_text(json.dumps(document), encoding="utf-8")
        status, out, _ = run_cli("verify-corpus", "--corpus-dir", str(corpus))
        self.assertEqual(status, 1)
        rows = json.loads(out)["rows"]
        self.assertEqual([(r["example"], r["passed"]) for r in rows], [("example_5_9", False)])
        self.assertTrue(any("theta_J" in failure for failure in rows[0]["failures"]))

    def test_log_level_override(self):
        try:
            status, _, _ = run_cli("identities", "example_5_9", "--points", "1", "--log-level", "debug")
            self.assertEqual(status, 0)
            self.assertEqual(logger.level, logging.DEBUG)
        finally:
            configure_logging()

    def test_unknown_log_level_exits_two(self):
        status, out, err = run_cli("identities", "example_5_9", "--log-level", "chatty")
        self.assertEqual(status, 2)
        self.assertEqual(out, "")
        self.assertEqual(json.loads(err.strip().splitlines()[-1])["code"], "configuration_error")

    def test_rejects_unknown_check(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                main(["analyze", "example_5_7", "--checks", "classify,curvature"])
        self.assertEqual(ctx.exception.code, 2)

    def test_rejects_malformed_param(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                main(["analyze", "example_5_7", "--param", "alpha"])


if __name__ == "__main__":
    unittest.main()
