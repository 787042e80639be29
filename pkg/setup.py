from setuptools import setup

version = open("marlcpc/__version__.py").read().split("=")[-1].strip().strip('"')
long_description = open("README.md", "r", encoding="utf-8").read()
requirements = open("requirements.txt", "r", encoding="utf-8").read().strip().split()

setup_args = {
    "name": "marlcpc",
    "version": version,
    "license": "MIT",
    "description": "Reward-independent emergent communication for multi-agent RL",
    "long_description": long_description,
    "long_description_content_type": "text/markdown",
    "keywords": [
        "reinforcement learning",
        "multi-agent",
        "emergent communication",
        "predictive coding",
        "ppo",
    ],
    "packages": ["marlcpc"],
    "include_package_data": True,
    "platforms": "any",
    "data_files": [("marlcpc", ["marlcpc/data/presets.json"])],
    "install_requires": requirements,
    "python_requires": ">=3.8",
    "entry_points": {"console_scripts": ["marlcpc=marlcpc.cli:main"]},
    "classifiers": [
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
}

setup(**setup_args)
