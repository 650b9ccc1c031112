import os

import hypothesis
import pytest

hypothesis.settings.register_profile(
    "default", deadline=None, max_examples=50, derandomize=True
)
hypothesis.settings.register_profile(
    "thorough", deadline=None, max_examples=400
)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def table_m3():
    from fgnmix.ar1fit import load_packaged_table

    return load_packaged_table(3)


@pytest.fixture(scope="session")
def table_m4():
    from fgnmix.ar1fit import load_packaged_table

    return load_packaged_table(4)
