import cmath
import math
import unittest
from pathlib import Path

from LoopRes.main.cli import get_handler
from LoopRes.main.utils.config import (COMMAND_BLOCKS, COMMANDS, format_config, parse_config)
from LoopRes.main.utils.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

SPECTRUM = """
command = spectrum   # комментарий
output = out/spectrum

[system]
xi11 = 30
xi12 = 30, 0.2
xi31 = 30
delta = 0
kappa = critical

[sweep]
delta_min = -50
delta_max = 50
points = 101
"""


class TestConfig(unittest.TestCase):
    def test_parse_spectrum(self):
        config = parse_config(SPECTRUM)
        self.assertEqual(config.command, "spectrum")
        self.assertEqual(config.output, "out/spectrum")
        self.assertEqual(config.sweep.points, 101)
        self.assertIsNone(config.system.kappa)

        sys = config.system.to_system()
        self.assertAlmostEqual(sys.coupling(1, 2), cmath.rect(30.0, 0.2 * math.pi))
        self.assertAlmostEqual(sys.coupling(1, 3), 30.0)
        self.assertTrue(sys.is_critical)
        self.assertAlmostEqual(sys.kappa, math.sqrt(900.25))

    def test_preset_with_override(self):
        config = parse_config("command = eigen\n[system]\npreset = weak_loop\nxi23 = 7, -0.5\n")
        sys = config.system.to_system()
        self.assertAlmostEqual(sys.coupling(2, 3), -7j)
        self.assertAlmostEqual(sys.coupling(1, 1), 50.0)

    def test_command_line_overrides_file(self):
        config = parse_config(SPECTRUM, command="eigen")
        self.assertEqual(config.command, "eigen")

    def test_missing_command(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("[system]\nxi11 = 1\n")

        self.assertIn("missing command", str(ctx.exception))
        self.assertIsNone(ctx.exception.line)

    def test_unknown_key_reports_line(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("command = spectrum\n[system]\nxi11 = 1\nfoo = 2\n[sweep]\n")

        self.assertEqual(ctx.exception.line, 4)
        self.assertIn("unknown key 'foo'", str(ctx.exception))

    def test_malformed_number_reports_line(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("command = spectrum\n[system]\n\nxi12 = thirty, 0\n[sweep]\n")

        self.assertEqual(ctx.exception.line, 4)

    def test_unknown_block(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("command = spectrum\n[spectrum]\n")

        self.assertEqual(ctx.exception.line, 2)

    def test_duplicate_keys(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("command = eigen\n[system]\nxi12 = 1\nxi21 = 2\n")

        self.assertEqual(ctx.exception.line, 4)

        with self.assertRaises(ConfigError):
            parse_config("command = eigen\n[system]\n[system]\n")

    def test_missing_block_for_command(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("command = taylor\n[system]\npreset = open_feed\n[sweep]\n")

        self.assertIn("[taylor]", str(ctx.exception))

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            parse_config("command = spectrum\n[system]\n[sweep]\ndelta_min = 10\ndelta_max = -10\n")

        with self.assertRaises(ConfigError):
            parse_config("command = eigen\n[system]\npreset = unknown\n")

        with self.assertRaises(ConfigError):
            parse_config("command = periodicity\n[system]\n[phase]\nwhich = 1, 4\n")

        with self.assertRaises(ConfigError):
            parse_config("command = eigen\n[system]\ngamma = 0\n")

        with self.assertRaises(ConfigError):
            parse_config("command = fdtd-sweep\n[fdtd]\nlambda_min = 560\n")

    def test_broadcast_values(self):
        config = parse_config("command = eigen\n[system]\ndelta = 2.5\ngamma = 1, 0.5, 0.25\nkappa = 3\n")
        self.assertEqual(config.system.delta, (2.5, 2.5, 2.5))
        self.assertEqual(config.system.gamma, (1.0, 0.5, 0.25))
        self.assertEqual(config.system.kappa, 3.0)

    def test_fdtd_wavelengths(self):
        band = parse_config("command = fdtd-sweep\n[fdtd]\nlambda_min = 560\nlambda_max = 580\nlambda_points = 5\n")
        self.assertEqual(band.fdtd.wavelength_list(), [560.0, 565.0, 570.0, 575.0, 580.0])

        explicit = parse_config("command = fdtd-sweep\n[fdtd]\nwavelengths = 571.8, 572\n")
        self.assertEqual(explicit.fdtd.wavelength_list(), [571.8, 572.0])

        single = parse_config("command = fdtd-run\n[fdtd]\nwavelength = 571.8\nsnapshot = true\n")
        self.assertEqual(single.fdtd.wavelength_list(), [571.8])
        self.assertTrue(single.fdtd.snapshot)

    def test_fdtd_comparison_block(self):
        config = parse_config(
            "command = fdtd-sweep\n[fdtd]\nlambda_min = 565\nlambda_max = 580\nlambda_points = 31\n"
            "slab_eps = 4.0\ncompare_slab_eps = 4.1\n"
        )
        compared = config.fdtd.compared()
        self.assertEqual(compared.slab_eps, 4.1)
        self.assertEqual(compared.wavelength_list(), config.fdtd.wavelength_list())
        self.assertIsNone(parse_config("command = fdtd-sweep\n[fdtd]\nwavelength = 571.8\n").fdtd.compared())

        with self.assertRaises(ConfigError):
            parse_config("command = fdtd-sweep\n[fdtd]\ngeometry = waveguide\ncompare_particle_theta = 180\n")

        with self.assertRaises(ConfigError):
            parse_config("command = fdtd-sweep\n[fdtd]\nwavelength = 571.8\nprominence = 0\n")

    def test_round_trip(self):
        config = parse_config(SPECTRUM)
        self.assertEqual(parse_config(format_config(config)), config)

    def test_shipped_configs_parse_and_round_trip(self):
        paths = sorted(CONFIG_DIR.glob("*.cfg"))
        self.assertTrue(paths)

        for path in paths:
            config = parse_config(path.read_text(encoding="utf-8"))
            self.assertEqual(parse_config(format_config(config)), config, path.name)

    def test_handlers_declare_the_same_blocks(self):
        for command in COMMANDS:
            self.assertEqual(get_handler(command).required_blocks, COMMAND_BLOCKS[command], command)


if __name__ == "__main__":
    unittest.main()
