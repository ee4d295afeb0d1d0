from setuptools import setup, find_packages


def setup_package():
    setup(
        name="sensor-scheduler",
        version="0.1.0",
        author="jungyoung",
        description="Randomized greedy sensor scheduling for Kalman filtering, with curvature "
                    "and balanced measurement-exchange experiments",
        packages=find_packages(exclude=["tests"]),
        python_requires=">=3.10",
        install_requires=[
            "numpy",
            "scipy",
            "tomli; python_version<'3.11'",
        ],
        extras_require={
            "test": ["pytest", "hypothesis"],
        },
        entry_points={
            "console_scripts": [
                "sensor_sched = sensor_scheduler.__main__:main",
            ],
        },
    )


if __name__ == "__main__":
    setup_package()
