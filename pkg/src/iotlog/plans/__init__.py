"""Bundled enrichment plans for the generated truck pick-up scenario."""
