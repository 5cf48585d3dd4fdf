import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import aiosqlite
import msgpack

logger = logging.getLogger("LRES:FluxCache")


class FluxCache:
    """Постоянный кэш опорных прогонов FDTD (сцена без резонаторов).

    Ключ - отпечаток опорной сцены и длина волны, значение - упакованный
    msgpack словарь с потоком и признаком сходимости.
    """

    _connection: Optional[aiosqlite.Connection] = None

    _cache: Dict[Tuple[str, float], Dict[str, Any]] = {}
    _db_path: Optional[Path] = None
    _db_name: str = "flux_cache.db"

    # Сеттеры и геттеры
    @classmethod
    def get_db_path(cls) -> Optional[Path]:
        return cls._db_path

    @classmethod
    def set_db_path(cls, value: str | Path) -> None:
        cls._db_path = Path(value)

    @classmethod
    def is_running(cls) -> bool:
        return cls._connection is not None

    # Вспомогательное
    @staticmethod
    def fingerprint(description: Dict[str, Any]) -> str:
        """Отпечаток описания сцены: sha256 от msgpack-представления."""
        return hashlib.sha256(msgpack.packb(description, use_bin_type=True)).hexdigest()

    # Инициализация БД
    @classmethod
    async def start(cls) -> None:
        try:
            if cls._db_path is None:
                raise ValueError("Cache path is not set.")

            cls._db_path.mkdir(parents=True, exist_ok=True)

            cls._connection = await aiosqlite.connect(cls._db_path / cls._db_name)
            await cls._connection.execute("""
                CREATE TABLE IF NOT EXISTS reference_flux (
                    scene TEXT NOT NULL,
                    wavelength REAL NOT NULL,
                    record BLOB NOT NULL,
                    PRIMARY KEY (scene, wavelength)
                )
            """)
            await cls._connection.commit()

        except Exception as err:
            logger.error(f"Error initializing flux cache: {err}")
            raise

    @classmethod
    async def stop(cls) -> None:
        if cls._connection:
            await cls._connection.close()
            cls._connection = None

        cls._cache.clear()

    # Работа с записями
    @classmethod
    async def get(cls, scene: str, wavelength: float) -> Optional[Dict[str, Any]]:
        if not cls._connection:
            logger.error("Connection not set")
            return None

        key = (scene, float(wavelength))
        if key in cls._cache:
            return cls._cache[key]

        async with cls._connection.execute(
            "SELECT record FROM reference_flux WHERE scene = ? AND wavelength = ?", key
        ) as cursor:
            row = await cursor.fetchone()
            if row:
                record = msgpack.unpackb(row[0])
                cls._cache[key] = record
                return record

        return None

    @classmethod
    async def put(cls, scene: str, wavelength: float, record: Dict[str, Any]) -> None:
        if not cls._connection:
            logger.error("Connection not set")
            return

        key = (scene, float(wavelength))
        await cls._connection.execute(
            "INSERT OR REPLACE INTO reference_flux (scene, wavelength, record) VALUES (?, ?, ?)",
            (*key, msgpack.packb(record)),
        )
        await cls._connection.commit()
        cls._cache[key] = dict(record)
        logger.debug(f"Cached reference flux for {scene[:12]} at {wavelength} nm")

    @classmethod
    async def delete(cls, scene: str, wavelength: Optional[float] = None) -> None:
        if not cls._connection:
            logger.error("Connection not set")
            return

        if wavelength is None:
            await cls._connection.execute("DELETE FROM reference_flux WHERE scene = ?", (scene,))
            for key in [key for key in cls._cache if key[0] == scene]:
                cls._cache.pop(key)

        else:
            await cls._connection.execute(
                "DELETE FROM reference_flux WHERE scene = ? AND wavelength = ?",
                (scene, float(wavelength)),
            )
            cls._cache.pop((scene, float(wavelength)), None)

        await cls._connection.commit()

    @classmethod
    async def count(cls) -> int:
        if not cls._connection:
            logger.error("Connection not set")
            return 0

        try:
            async with cls._connection.execute("SELECT COUNT(*) FROM reference_flux") as cursor:
                row = await cursor.fetchone()
                return int(row[0]) if row else 0

        except Exception as err:
            logger.error(f"Error counting cached records: {err}")
            return 0
