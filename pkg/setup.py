from setuptools import Extension, setup

setup(
    ext_modules=[
        Extension(
            "lutgemm._native",
            sources=["src/lutgemm/_native.c"],
            extra_compile_args=["-O3", "-std=c11", "-Wall", "-Wno-unused-function"],
        )
    ]
)
