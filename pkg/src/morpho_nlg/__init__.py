"""
Copyright (c) 2024 morpho-nlg developers. All rights reserved.

morpho-nlg: data-to-text NLG for morphologically rich languages
"""

from __future__ import annotations

from ._version import version as __version__

__all__ = ["__version__"]
