import json
import sys

import numpy as np


def _plain(obj):
    # tipos numpy a tipos JSON
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def render_json(payload, stream=None):
    stream = stream or sys.stdout
    stream.write(json.dumps(payload, indent=2, sort_keys=True, default=_plain))
    stream.write("\n")


def render_csv(frame, stream=None):
    """Tabla como CSV sin índice."""
    stream = stream or sys.stdout
    frame.to_csv(stream, index=False)


def render_plan(kind, job, stream=None):
    """Plan de ejecución de --dry-run: la configuración ya validada."""
    render_json({"subcommand": kind, "dry_run": True, "config": job.model_dump(mode="json", by_alias=True)},
                stream)


def render_verdict(result, stream=None):
    """PASS/FAIL con las magnitudes que fallaron (a stderr)."""
    stream = stream or sys.stderr
    verdict = "PASS" if result.passed else "FAIL"
    stream.write(f"{result.experiment}: {verdict}\n")
    for failure in result.failures:
        stream.write(f"  - {failure}\n")
