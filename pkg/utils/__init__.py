"""Medidas, núcleos de calor, normas, concentración y experimentos."""
