import contextlib
import io
import json
import math
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from LoopRes.main.cli import RunContext, commands, error_line, get_handler, main, run
from LoopRes.main.fdtd.transmission import FluxResult
from LoopRes.main.utils.config import COMMANDS, RunConfig, parse_config
from LoopRes.main.utils.errors import ConfigError, InstabilityError, NumericalSingularityError
from LoopRes.main.utils.exit_code import ExitCode

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

QUICK_FDTD = """
command = fdtd-run

[fdtd]
geometry = waveguide
cell = 60
wavelength = 600
max_cycles = 60
window_cycles = 5
snapshot = true
"""

SLAB_SWEEP = """
command = fdtd-sweep

[fdtd]
cell = 60
lambda_min = 560
lambda_max = 580
lambda_points = 81
slab_eps = 4.0
compare_slab_eps = 4.1
prominence = 0.1
"""


def slab_lines(scene, wavelengths, threads=None, serial=False):
    """Подмена развёртки: при eps пластинки 4.1 первая линия уходит на 1 нм."""
    first = 571.0 if scene.geometry.slab.eps > 4.05 else 570.0
    results = []
    for w in wavelengths:
        value = 1.0 - 0.8 / (1 + ((w - first) / 0.5) ** 2) - 0.8 / (1 + ((w - 575.0) / 0.5) ** 2)
        results.append(FluxResult(w, value, value, True))

    return results


class TestCli(unittest.TestCase):
    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.output = Path(self.temp_dir.name)

    def tearDown(self):
        self.temp_dir.cleanup()

    def call(self, *argv: str):
        stdout, stderr = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            code = main([*argv, "--quiet"])

        return code, stdout.getvalue(), stderr.getvalue()

    def write_config(self, text: str) -> Path:
        path = self.output / "run.cfg"
        path.write_text(text, encoding="utf-8")
        return path

    def test_spectrum(self):
        code, _, _ = self.call("spectrum", str(CONFIG_DIR / "symmetric_spectrum.cfg"), "--output", str(self.output))
        self.assertEqual(code, 0)

        lines = (self.output / "spectrum.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], "delta,T,R,occ_a1,occ_b1,phi_a")
        self.assertEqual(len(lines), 2002)
        self.assertTrue((self.output / "resonances.csv").exists())

    def test_periodicity_prints_classification(self):
        code, stdout, _ = self.call("periodicity", str(CONFIG_DIR / "periodicity.cfg"), "--output", str(self.output))
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(stdout.strip().splitlines()[-1])["classification"], "pi-periodic")
        self.assertTrue((self.output / "eigen_curves.csv").exists())
        self.assertTrue((self.output / "eigen_power.csv").exists())

    def test_average_writes_both_phases(self):
        code, _, _ = self.call("average", str(CONFIG_DIR / "periodicity.cfg"), "--output", str(self.output))
        self.assertEqual(code, 0)
        self.assertTrue((self.output / "average_phi12.csv").exists())
        self.assertTrue((self.output / "average_phi22.csv").exists())

    def test_shipped_model_configs_run(self):
        for path in sorted(CONFIG_DIR.glob("*.cfg")):
            config = parse_config(path.read_text(encoding="utf-8"))
            if config.command.startswith("fdtd"):
                continue

            out = self.output / path.stem
            code, _, stderr = self.call(config.command, str(path), "--output", str(out))
            self.assertEqual(code, 0, f"{path.name}: {stderr}")
            self.assertTrue(any(out.glob("*.csv")), path.name)

    def test_sensing_outputs(self):
        code, _, _ = self.call("sense-slab", str(CONFIG_DIR / "slab_shift.cfg"), "--output", str(self.output))
        self.assertEqual(code, 0)
        for name in ("spectrum_baseline.csv", "spectrum_perturbed.csv", "shifts.csv"):
            self.assertTrue((self.output / name).exists(), name)

    def test_bad_config_exit_code(self):
        path = self.write_config("command = spectrum\n[system]\nxi12 = thirty\n[sweep]\n")
        code, _, stderr = self.call("spectrum", str(path), "--output", str(self.output))

        self.assertEqual(code, ExitCode.CONFIG_ERROR)
        payload = json.loads(stderr.strip().splitlines()[-1])
        self.assertEqual(payload["code"], 2)
        self.assertEqual(payload["error"], "ConfigError")
        self.assertEqual(payload["line"], 3)

    def test_missing_config_file(self):
        code, _, _ = self.call("spectrum", str(self.output / "absent.cfg"))
        self.assertEqual(code, ExitCode.CONFIG_ERROR)

    def test_quick_fdtd_run(self):
        path = self.write_config(QUICK_FDTD)
        code, _, _ = self.call("fdtd-run", str(path), "--output", str(self.output))
        self.assertIn(code, (ExitCode.OK, ExitCode.FDTD_UNCONVERGED))

        lines = (self.output / "flux.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(lines), 2)
        self.assertEqual(float(lines[1].split(",")[2]), 1.0)

        meta = (self.output / "hz_snapshot.txt").read_text(encoding="utf-8")
        self.assertIn("component = hz", meta)
        self.assertTrue((self.output / "hz_snapshot.bin").stat().st_size > 0)

    def test_fdtd_sweep_with_comparison(self):
        async def fake(*args, **kwargs):
            return slab_lines(*args, **kwargs)

        path = self.write_config(SLAB_SWEEP)
        with mock.patch("LoopRes.main.cli.sweep_wavelength", side_effect=fake):
            code, _, _ = self.call("fdtd-sweep", str(path), "--output", str(self.output))

        self.assertEqual(code, ExitCode.OK)
        self.assertTrue((self.output / "flux.csv").exists())
        self.assertTrue((self.output / "flux_perturbed.csv").exists())

        rows = [line.split(",") for line in (self.output / "shifts.csv").read_text(encoding="utf-8").splitlines()[1:]]
        shifts = sorted(float(row[3]) for row in rows if row[0] == "T-dip")
        self.assertEqual(len(shifts), 2)
        self.assertAlmostEqual(shifts[0], 0.0, delta=0.02)
        self.assertAlmostEqual(shifts[1], 1.0, delta=0.02)

    def test_failed_sweep_point_exit_code(self):
        async def fake(scene, wavelengths, threads=None, serial=False):
            results = slab_lines(scene, wavelengths)
            results[5] = FluxResult(wavelengths[5], math.nan, math.nan, False, error="InstabilityError: boom")
            return results

        path = self.write_config(SLAB_SWEEP)
        with mock.patch("LoopRes.main.cli.sweep_wavelength", side_effect=fake):
            code, _, _ = self.call("fdtd-sweep", str(path), "--output", str(self.output))

        self.assertEqual(code, ExitCode.NUMERICAL_ERROR)
        self.assertTrue((self.output / "flux.csv").exists())
        self.assertFalse((self.output / "shifts.csv").exists())

    def test_exit_code_for_error(self):
        self.assertEqual(ExitCode.for_error(ConfigError("bad", 1)), ExitCode.CONFIG_ERROR)
        self.assertEqual(ExitCode.for_error(NumericalSingularityError("singular")), ExitCode.NUMERICAL_ERROR)
        self.assertEqual(ExitCode.for_error(InstabilityError(10, 1e9, 1e6)), ExitCode.NUMERICAL_ERROR)
        self.assertEqual(ExitCode.for_error(FileNotFoundError("absent.cfg")), ExitCode.CONFIG_ERROR)

    def test_error_line(self):
        payload = json.loads(error_line(ExitCode.CONFIG_ERROR, ConfigError("bad value", 7)))
        self.assertEqual(payload, {"code": 2, "error": "ConfigError", "message": "line 7: bad value", "line": 7})

    def test_registered_commands(self):
        self.assertEqual(commands(), sorted(COMMANDS))


class TestRun(unittest.IsolatedAsyncioTestCase):
    async def asyncSetUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.output = Path(self.temp_dir.name)

    async def asyncTearDown(self):
        self.temp_dir.cleanup()

    async def test_eigen(self):
        config = parse_config("command = eigen\n[system]\npreset = closed_loop\n")
        code = await run(config, self.output)

        self.assertEqual(code, ExitCode.OK)
        lines = (self.output / "eigen.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], "re_lambda,im_lambda,decay_rate")
        self.assertEqual(len(lines), 7)

    async def test_taylor(self):
        code = await run(parse_config((CONFIG_DIR / "taylor.cfg").read_text(encoding="utf-8")), self.output)
        self.assertEqual(code, ExitCode.OK)
        self.assertEqual(len((self.output / "taylor.csv").read_text(encoding="utf-8").splitlines()), 2002)

    async def test_handler_checks_blocks(self):
        with self.assertRaises(ConfigError):
            await get_handler("taylor")(RunConfig(command="taylor"), RunContext(output=self.output))

    async def test_unknown_command(self):
        with self.assertRaises(ConfigError):
            get_handler("plot")


if __name__ == "__main__":
    unittest.main()
