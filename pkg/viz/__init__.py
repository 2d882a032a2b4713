"""Tablas y salida de la línea de comandos."""
