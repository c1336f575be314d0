"""Unit test package for recsim."""
