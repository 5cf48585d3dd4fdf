from pathlib import Path

from setuptools import find_packages, setup


def read_version():
    init_file = Path("LoopRes") / "version.py"
    with init_file.open("r", encoding="utf-8") as f:
        for line in f:
            if line.startswith("__version__"):
                delim = '"' if '"' in line else "'"
                return line.split(delim)[1]

    raise RuntimeError("Не удалось прочитать версию.")


long_description = Path("README.md").read_text(encoding="utf-8")

setup(
    name="LoopRes",
    version=read_version(),
    packages=find_packages(exclude=["Tests", "Tests.*"]),
    install_requires=["numpy", "scipy", "pydantic>=2", "aiofiles", "aiosqlite", "msgpack"],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["loopres = LoopRes.main.cli:main"]},
    description="Спектры трёх связанных резонаторов в петле: модель связанных мод и 2D FDTD",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.10",
    license="GPL-3.0",
)
