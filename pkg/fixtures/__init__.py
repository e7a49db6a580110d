"""Procedural model generators for validation, optimization and benchmark scenarios."""

from fixtures.generators import FIXTURES, build_fixture

__all__ = ["FIXTURES", "build_fixture"]
