import math
import tempfile
import unittest
from pathlib import Path

from LoopRes.main.utils.flux_cache import FluxCache


class TestFluxCache(unittest.IsolatedAsyncioTestCase):
    async def asyncSetUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.temp_db_path: Path = Path(self.temp_dir.name) / "cache"
        FluxCache.set_db_path(self.temp_db_path)
        await FluxCache.start()

    async def asyncTearDown(self):
        await FluxCache.stop()
        self.temp_dir.cleanup()

    async def test_put_and_get(self):
        record = {"flux": 1.25, "converged": True, "change": 0.001, "windows": 4, "steps": 1200}
        await FluxCache.put("scene", 571.8, record)
        self.assertEqual(await FluxCache.get("scene", 571.8), record)

    async def test_missing_record(self):
        self.assertIsNone(await FluxCache.get("scene", 600.0))

    async def test_survives_restart(self):
        await FluxCache.put("scene", 571.8, {"flux": 2.0, "converged": False, "change": math.inf})
        await FluxCache.stop()
        await FluxCache.start()

        record = await FluxCache.get("scene", 571.8)
        self.assertEqual(record["flux"], 2.0)
        self.assertFalse(record["converged"])
        self.assertTrue(math.isinf(record["change"]))

    async def test_wavelength_is_part_of_key(self):
        await FluxCache.put("scene", 571.8, {"flux": 1.0})
        await FluxCache.put("scene", 572.0, {"flux": 3.0})
        self.assertEqual((await FluxCache.get("scene", 572.0))["flux"], 3.0)
        self.assertEqual(await FluxCache.count(), 2)

    async def test_delete(self):
        await FluxCache.put("scene", 571.8, {"flux": 1.0})
        await FluxCache.put("scene", 572.0, {"flux": 3.0})
        await FluxCache.put("other", 571.8, {"flux": 5.0})

        await FluxCache.delete("scene", 571.8)
        self.assertIsNone(await FluxCache.get("scene", 571.8))
        self.assertEqual(await FluxCache.count(), 2)

        await FluxCache.delete("scene")
        self.assertEqual(await FluxCache.count(), 1)
        self.assertEqual((await FluxCache.get("other", 571.8))["flux"], 5.0)

    async def test_replace_record(self):
        await FluxCache.put("scene", 571.8, {"flux": 1.0})
        await FluxCache.put("scene", 571.8, {"flux": 4.0})
        self.assertEqual((await FluxCache.get("scene", 571.8))["flux"], 4.0)
        self.assertEqual(await FluxCache.count(), 1)

    def test_fingerprint_is_stable(self):
        description = {"cell": 30.0, "rings": [[1.0, 2.0]], "slab": None}
        self.assertEqual(FluxCache.fingerprint(description), FluxCache.fingerprint(dict(description)))
        self.assertNotEqual(FluxCache.fingerprint(description), FluxCache.fingerprint({**description, "cell": 60.0}))


if __name__ == "__main__":
    unittest.main()
