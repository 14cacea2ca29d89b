from setuptools import setup, find_packages

setup(
    name="latent_rom_tool",
    version="1.0.0",
    packages=find_packages(include=["src", "src.*"]),
    install_requires=[
        "pandas>=1.4.0",
        "PyYAML>=6.0",
        "numpy>=1.22",
        "scipy>=1.8",
        "torch>=1.12",
    ],
    entry_points={
        "console_scripts": [
            "rom-tool=src.main:cli",
        ],
    },
    python_requires=">=3.8",
)

#pyinstaller --onefile --name RomTool --add-data "config;config" --distpath bin --hidden-import=pandas --hidden-import=yaml --hidden-import=logging.config --hidden-import=scipy.special src/main.py
