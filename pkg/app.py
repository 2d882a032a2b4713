# app.py
"""Línea de comandos: normas de Sobolev negativas de medidas empíricas.

Códigos de salida: 0 éxito, 1 fallo de aserción o de réplica,
2 error de uso, de configuración o de régimen.
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

# Importaciones de módulos propios
from utils.concentration import sigma_check_grid
from utils.config import load_job
from utils.errors import ConfigError, ReplicaError, SobolevError
from utils.experiments import report_write, run_experiment
from utils.measures import sample
from utils.norms import norm, s_n_field
from utils.time_monitor import elapsed_ms
from viz.charts import b0_summary, gaussian_norm_frame, rate_curve_frame, tail_curve_frame
from viz.components import render_csv, render_json, render_plan, render_verdict

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_USAGE = 2

SUBCOMMANDS = {
    "norm": "norma de una muestra empírica",
    "gaussian-norm": "tabla de ‖Φ_ε‖ sobre una rejilla de ε",
    "b0": "B0, SB0 y normas cerradas para unos parámetros",
    "rate-sweep": "barrido de tasas en N",
    "identity-check": "identidad del segundo momento (p = 2)",
    "tail-sweep": "barrido de colas y constante C",
    "sigma-check": "comparación de la cota σ con la norma de Φ_ε",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="sobemp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in SUBCOMMANDS.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="archivo JSON de configuración (o un summary.json previo)")
        cmd.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                         help="override sobre la configuración, p.ej. params.alpha=1.5")
        cmd.add_argument("--output-dir", help="directorio de artefactos")
        cmd.add_argument("--seed", type=int, help="semilla base")
        cmd.add_argument("--threads", type=int, help="hilos para réplicas (por defecto SOBEMP_THREADS o el valor del archivo)")
        cmd.add_argument("--dry-run", action="store_true", help="valida e imprime el plan sin calcular")
        cmd.add_argument("-v", "--verbose", action="store_true")
    return parser


def _write_json(output_dir, name, payload):
    if output_dir:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / name, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)


def _write_csv(output_dir, name, frame):
    if output_dir:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out / name, index=False)


def run_norm(job, args):
    start = time.perf_counter()
    smp = sample(job.model, job.n, job.seed)
    est = norm(s_n_field(smp, job.model, job.params.eps), job.params, job.space, job.quad)
    payload = {"norm": est.value, "refinement_error": est.refinement_error, "space": est.space,
               "N": job.n, "seed": job.seed, "wall_time_ms": elapsed_ms(start)}
    render_json(payload)
    _write_json(args.output_dir, "norm.json", payload)
    return EXIT_OK


def run_gaussian_norm(job, args):
    frame = gaussian_norm_frame(job.params, job.eps_grid)
    render_csv(frame)
    _write_csv(args.output_dir, "gaussian_norm.csv", frame)
    return EXIT_OK


def run_b0(job, args):
    payload = b0_summary(job.params)
    render_json(payload)
    _write_json(args.output_dir, "b0.json", payload)
    return EXIT_OK


def run_sigma_check(job, args):
    radius_grid = np.logspace(-6, 3, job.radius_points)
    frame = sigma_check_grid(
        job.model,
        job.alpha_grid or [job.params.alpha],
        job.p_grid or [job.params.p],
        job.eps_grid or [job.params.eps],
        job.quad,
        radius_grid,
    )
    render_csv(frame)
    _write_csv(args.output_dir, "sigma_check.csv", frame)
    computed = frame[frame["skipped"] == ""]
    ratios = computed["ratio"].to_numpy(dtype=float)
    ok = ratios.size > 0 and bool(np.all(np.isfinite(ratios) & (ratios > 0)))
    return EXIT_OK if ok else EXIT_ASSERTION


CURVE_FRAMES = {"rate_sweep": rate_curve_frame, "tail_sweep": tail_curve_frame}


def run_experiment_command(job, args):
    result = run_experiment(job)
    if args.output_dir:
        report_write(result, args.output_dir)
    # barridos: curva lista para graficar en stdout; identidad: resumen JSON
    if result.experiment in CURVE_FRAMES:
        render_csv(CURVE_FRAMES[result.experiment](result))
    else:
        render_json({"experiment": result.experiment, "passed": result.passed,
                     "failures": result.failures, "summary": result.summary})
    render_verdict(result)
    return EXIT_OK if result.passed else EXIT_ASSERTION


HANDLERS = {
    "norm": run_norm,
    "gaussian-norm": run_gaussian_norm,
    "b0": run_b0,
    "sigma-check": run_sigma_check,
    "rate-sweep": run_experiment_command,
    "identity-check": run_experiment_command,
    "tail-sweep": run_experiment_command,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)

    try:
        job = load_job(args.subcommand, args.config, args.overrides, args.seed, args.threads)
    except ConfigError as err:
        print(f"error de configuración: {err}", file=sys.stderr)
        return EXIT_USAGE

    if args.dry_run:
        render_plan(args.subcommand, job)
        return EXIT_OK

    try:
        return HANDLERS[args.subcommand](job, args)
    except ReplicaError as err:
        print(f"error en réplica: {err}", file=sys.stderr)
        return EXIT_ASSERTION
    except SobolevError as err:
        where = f" [config={args.config}]" if args.config else ""
        print(f"error: {err}{where}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
