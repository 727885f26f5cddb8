from setuptools import setup, find_packages

setup(
    name="dmcv-keyrate",
    version="0.1.0",
    description="Certified finite-size key rates for QPSK discrete-modulated CV-QKD",
    package_dir={"": "backend"},
    packages=find_packages(where="backend", exclude=["tests"]),
    python_requires=">=3.9",
    install_requires=[
        "numpy",
        "scipy",
        "cvxpy",
        "pandas",
        "tqdm",
        "pydantic>=2.0,<3.0",
        "python-dotenv",
        "fastapi",
        "uvicorn",
    ],
    extras_require={
        "test": ["pytest", "httpx"],
    },
    entry_points={
        "console_scripts": [
            "dmcv-keyrate=src.cli:main",
        ],
    },
)
