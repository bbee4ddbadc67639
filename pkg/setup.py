from setuptools import find_packages, setup

with open("README.md", "r", encoding="utf-8") as f:
    long_description = f.read()

setup(
    name="scene_stylizer",
    version="1.0.0",
    description="Coarse-to-fine neural field stylization of sparse-view scenes",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="scene_stylizer contributors",
    license="MIT",
    packages=find_packages(exclude=["examples", "examples.*"]),
    zip_safe=False,
    include_package_data=True,
    install_requires=[
        "numpy>=1.24",
        "Pillow>=10.0.0",
        "tqdm>=4.65",
    ],
    extras_require={
        "dev": [
            "pytest>=7.4",
        ],
    },
    entry_points={
        "console_scripts": [
            "scene-stylizer=scene_stylizer.api.cli:main",
        ],
    },
)
