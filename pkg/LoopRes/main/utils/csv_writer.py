import math
from pathlib import Path
from typing import Iterable, Sequence, Tuple

import aiofiles
import numpy as np


def format_value(value) -> str:
    """Число с 17 значащими цифрами (точный round-trip для float64)."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))

    if isinstance(value, (int, np.integer)):
        return str(int(value))

    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"

        return "{:.17g}".format(value)

    return str(value)


async def write_table(
    path: Path | str,
    header: Sequence[str],
    rows: Iterable[Sequence],
    chunk_rows: int = 4096,
) -> Path:
    """Асинхронная запись CSV-таблицы блоками по chunk_rows строк.

    Args:
        path (Path | str): Путь к файлу. Родительские каталоги создаются.
        header (Sequence[str]): Заголовок.
        rows (Iterable[Sequence]): Строки значений.
        chunk_rows (int, optional): Размер блока записи. По умолчанию 4096.

    Returns:
        Path: Путь к записанному файлу.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    async with aiofiles.open(path, "w", encoding="utf-8", newline="") as file:
        await file.write(",".join(header) + "\n")

        chunk = []
        for row in rows:
            chunk.append(",".join(format_value(v) for v in row))
            if len(chunk) >= chunk_rows:
                await file.write("\n".join(chunk) + "\n")
                chunk.clear()

        if chunk:
            await file.write("\n".join(chunk) + "\n")

    return path


async def write_snapshot(
    path: Path | str,
    field: np.ndarray,
    cell: float,
    component: str,
    time_steps: int,
) -> Tuple[Path, Path]:
    """Снимок поля: плоский little-endian float64 (построчно) + текстовый файл с размерами.

    Returns:
        Tuple[Path, Path]: Пути к .bin и .txt.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    data_path = path.with_suffix(".bin")
    meta_path = path.with_suffix(".txt")

    field = np.ascontiguousarray(field, dtype="<f8")
    nx, ny = field.shape

    async with aiofiles.open(data_path, "wb") as file:
        await file.write(field.tobytes(order="C"))

    async with aiofiles.open(meta_path, "w", encoding="utf-8") as file:
        await file.write(
            f"nx = {nx}\nny = {ny}\ncell_nm = {format_value(float(cell))}\n"
            f"component = {component}\ntime_steps = {time_steps}\n"
        )

    return data_path, meta_path
