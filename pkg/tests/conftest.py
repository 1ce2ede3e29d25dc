"""Test-wide configuration.

Keeping a conftest at the tests root puts this directory on sys.path, so
test modules can import the shared `helpers` and `gap_oracle` modules.
"""

from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")
