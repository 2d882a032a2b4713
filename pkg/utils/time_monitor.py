import time

import pandas as pd


def elapsed_ms(start):
    """Milisegundos desde `start` (valor de time.perf_counter())."""
    return (time.perf_counter() - start) * 1000.0


def utc_timestamp():
    now = pd.Timestamp.now(tz="UTC")
    # Redondear al segundo para los informes
    return now.floor("s").strftime("%Y-%m-%dT%H:%M:%SZ")
