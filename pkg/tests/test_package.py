from __future__ import annotations

import importlib.metadata

import morpho_nlg as m


def test_version():
    assert importlib.metadata.version("morpho_nlg") == m.__version__
