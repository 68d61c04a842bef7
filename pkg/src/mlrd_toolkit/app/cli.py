"""Command-line front end.

Exit codes: 0 all checks passed, 1 a tolerance failed, 2 invalid input or violated hypothesis
(error JSON on stderr). Machine-readable summaries go to stdout, logs to stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from mlrd_toolkit import __version__
from mlrd_toolkit.app import io as path_io
from mlrd_toolkit.app.schemas import ExperimentConfig, config_keys, load_config
from mlrd_toolkit.app.selftest import run_selftest
from mlrd_toolkit.common.errors import ConfigurationError, MLRDError
from mlrd_toolkit.common.logging_utils import get_run_id, run_id_scope, set_run_id, setup_logging
from mlrd_toolkit.core import hermite, normalize
from mlrd_toolkit.core.model import check_conditions, ensure_admissible, gamma_sequence, r_matrix
from mlrd_toolkit.core.simulate import simulate
from mlrd_toolkit.experiments.functions import resolve_functions
from mlrd_toolkit.experiments.kinds import Experiment
from mlrd_toolkit.experiments.montecarlo import run_experiment
from mlrd_toolkit.experiments.report import to_matrix, write_report

logger = logging.getLogger("app.cli")

FORMATS = ("json", "csv", "both")

VERIFY = {
    "verify-clt": Experiment.CLT,
    "verify-fclt": Experiment.FCLT,
    "verify-subordination": Experiment.SUBORDINATION,
    "verify-autocov": Experiment.AUTOCOV,
}


def config_digest(config: ExperimentConfig) -> str:
    blob = json.dumps(config.echo(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def derive_run_id(config: Optional[ExperimentConfig]) -> str:
    if config is None:
        return "selftest"
    return hashlib.sha256(f"{config_digest(config)}:{config.seed}".encode("utf-8")).hexdigest()[:12]


def _write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


# --- subcommands ---------------------------------------------------------------


def cmd_simulate(config: ExperimentConfig, out: Path, fmt: str) -> Dict[str, Any]:
    spec = config.to_spec()
    ensure_admissible(spec)
    M = config.truncation_for(config.n)
    path = simulate(spec, config.n, config.seed, M=M, cap=config.gaussian_cap)
    written = [path_io.write_path_binary(path.values, out / "path.mlrdpath")]
    meta = {
        "n": path.n,
        "d": path.d,
        "seed": path.seed,
        "generator": path.generator,
        "spec_digest": path.spec_digest,
        "truncation": path.truncation,
        "meta": path.meta,
        "version": __version__,
    }
    written.append(_write_json(out / "path_meta.json", meta))
    if fmt in ("csv", "both"):
        written.append(path_io.write_path_csv(path.values, out / "path.csv"))
    return {"written": [str(p) for p in written], "passed": True}


def cmd_gamma(config: ExperimentConfig, out: Path, fmt: str) -> Dict[str, Any]:
    spec = config.to_spec()
    report = check_conditions(spec)
    M = config.truncation_for(max(config.n, config.max_lag + 1))
    gam = gamma_sequence(spec, config.max_lag, M)
    payload: Dict[str, Any] = {
        "spec_digest": spec.digest(),
        "max_lag": config.max_lag,
        "truncation": M,
        "gamma": [to_matrix(g) for g in gam],
        "conditions": report.to_dict(),
    }
    if spec.memory is not None and report.ordering:
        payload["R"] = to_matrix(r_matrix(spec))
    written: List[Path] = []
    if fmt in ("json", "both"):
        written.append(_write_json(out / "gamma.json", payload))
    if fmt in ("csv", "both"):
        written.append(path_io.write_matrix_stack_csv(gam, out / "gamma.csv"))
    return {"written": [str(p) for p in written], "passed": report.ok}


def cmd_normalize(config: ExperimentConfig, out: Path, fmt: str) -> Dict[str, Any]:
    spec = config.to_spec()
    ensure_admissible(spec)
    n = config.n
    exact = normalize.exact_normalization(spec, n, config.truncation_for(n))
    payload: Dict[str, Any] = {
        "n": n,
        "sigma_sq": to_matrix(exact.sigma_sq),
        "sigma_inv": to_matrix(exact.inv_sqrt),
        "route_gap": exact.route_gap,
    }
    blocks = [exact.sigma_sq, exact.inv_sqrt]
    if spec.memory is not None:
        asym = normalize.asymptotic_normalization(r_matrix(spec), spec.memory, 1)
        a_n = normalize.asymptotic_normalizer(asym, n)
        payload.update({
            "x_matrix": to_matrix(asym.x_matrix),
            "a_factor": to_matrix(asym.a_factor),
            "A_inv_n": to_matrix(a_n),
            "asymptotic_form_gap": float(np.max(np.abs(a_n @ exact.sigma_sq @ a_n.T - np.eye(spec.dimension)))),
        })
        blocks.append(a_n)
        if all(d < 0.25 for d in spec.memory.values):
            b_inv = normalize.operator_normalizer(spec.memory, n)
            payload["B_inv_n"] = to_matrix(b_inv)
            blocks.append(b_inv)
    written: List[Path] = []
    if fmt in ("json", "both"):
        written.append(_write_json(out / "normalizers.json", payload))
    if fmt in ("csv", "both"):
        written.append(path_io.write_matrix_stack_csv(np.stack(blocks), out / "normalizers.csv", index_name="block"))
    return {"written": [str(p) for p in written], "passed": True}


def cmd_hermite(config: ExperimentConfig, out: Path, fmt: str) -> Dict[str, Any]:
    sub = config.subordination
    fns = resolve_functions(sub.functions, config.dimension)
    coeffs = hermite.expand_subordination(fns, sub.l_max, sub.quad_order, sub.rank_tol)
    payload = {
        "functions": sub.functions,
        "rank": coeffs.rank,
        "coefficients": to_matrix(coeffs.coefficients),
        "quad_order": coeffs.quad_order,
        "tol": coeffs.tol,
    }
    written: List[Path] = []
    if fmt in ("json", "both"):
        written.append(_write_json(out / "hermite.json", payload))
    if fmt in ("csv", "both"):
        written.append(path_io.write_matrix_stack_csv(coeffs.coefficients[None], out / "hermite.csv", index_name="block"))
    return {"written": [str(p) for p in written], "passed": True}


def cmd_verify(experiment: Experiment) -> Callable[[ExperimentConfig, Path, str, Optional[int]], Dict[str, Any]]:
    def run(config: ExperimentConfig, out: Path, fmt: str, threads: Optional[int] = None) -> Dict[str, Any]:
        report = run_experiment(config, experiment, threads)
        written = write_report(report, out, fmt)
        return {"written": [str(p) for p in written], "passed": report.passed, "digest": report.digest}

    return run


SIMPLE: Dict[str, Callable[[ExperimentConfig, Path, str], Dict[str, Any]]] = {
    "simulate": cmd_simulate,
    "gamma": cmd_gamma,
    "normalize": cmd_normalize,
    "hermite": cmd_hermite,
}


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    keys = ", ".join(config_keys())
    epilog = f"config keys: {keys}"
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, help="worker threads (fallback: MLRD_THREADS, then 1)")
    common.add_argument("--format", choices=FORMATS, default="json", help="report format")

    parser = argparse.ArgumentParser(
        prog="mlrd", description="Multivariate long-range dependence toolkit", epilog=epilog,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "simulate one path and write it as MLRDPATH binary (and CSV)",
        "gamma": "theoretical autocovariances γ(0..max_lag), R and the admissibility report",
        "normalize": "exact and asymptotic normalization matrices at n",
        "hermite": "Hermite coefficients and rank of the subordination functions",
        "verify-clt": "Monte Carlo check of the CLT with exact normalization",
        "verify-fclt": "Monte Carlo check of finite-dimensional OFBM convergence",
        "verify-subordination": "Monte Carlo check of subordinated partial sums",
        "verify-autocov": "Monte Carlo check of sample autocovariance limits",
        "selftest": "closed-form sanity checks",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text, epilog=epilog)
    return parser


def _error(payload: Dict[str, Any]) -> None:
    sys.stderr.write(json.dumps(payload, sort_keys=True, ensure_ascii=False) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    # the caller's run id is restored when the command returns
    with run_id_scope(None):
        return _run(args)


def _run(args: argparse.Namespace) -> int:
    try:
        if args.command == "selftest":
            set_run_id(derive_run_id(None))
            results = run_selftest()
            passed = all(r.passed for r in results)
            sys.stdout.write(json.dumps({
                "passed": passed,
                "run_id": get_run_id(),
                "results": [{"name": r.name, "passed": r.passed, "message": r.message} for r in results],
            }, sort_keys=True) + "\n")
            return 0 if passed else 1

        if args.config is None:
            raise ConfigurationError(f"{args.command} needs --config")
        config = load_config(args.config).with_overrides(seed=args.seed, threads=args.threads)
        set_run_id(derive_run_id(config))
        logger.info("command_start command=%s config=%s seed=%d", args.command, args.config, config.seed)

        if args.command in VERIFY:
            summary = cmd_verify(VERIFY[args.command])(config, args.out, args.format, args.threads)
        else:
            summary = SIMPLE[args.command](config, args.out, args.format)
    except MLRDError as e:
        logger.error("command_failed command=%s code=%s", args.command, e.code)
        _error(e.to_payload())
        return e.exit_code
    except OSError as e:
        logger.error("command_failed command=%s code=io_error", args.command)
        _error({"error": "io_error", "message": str(e), "details": {}})
        return 2

    summary["run_id"] = get_run_id()
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0 if summary.get("passed", True) else 1


if __name__ == "__main__":
    raise SystemExit(main())
