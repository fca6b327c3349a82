#!/usr/bin/env python3
"""
main.py - Command line entry point of the vortex stretching laboratory

    python main.py simulate --config run.json --set n_r=64 --set n_z=64
    python main.py oracle --set spectral_n=64

Modes: simulate, euler, compare, kappa, oracle, verify. Every run writes a
manifest (config hash, versions, wall clock, threads) into the output
directory, also when it fails; failures add a structured error document.
Exit status: 0 when every enabled check passed, 1 on a failed check or a
laboratory error, 2 on configuration errors.
"""

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import numpy as np
import scipy

from config import AppConstants, RunConfig, init_config
from utils.errors import ConfigError, VortexLabError
from utils.field_io import write_json
from utils.parallel import set_thread_count

logger = logging.getLogger(__name__)


class ExperimentRunner:
    """Resolves the configuration, runs one mode and writes the artifacts"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config: Optional[RunConfig] = None
        self.raw_config: Dict[str, Any] = {}
        self.output_dir = args.output_dir or "results"
        self.started = 0.0
        self.started_at = ""
        self.threads = 1
        self.status = 1
        self.summary: Dict[str, Any] = {}

    def initialize(self) -> None:
        """Parse the config file and overrides; raises ConfigError"""
        manager = init_config(self.args.config)
        self.raw_config = manager.config

        overrides = [f"mode={json.dumps(self.args.mode)}"] + list(self.args.set or [])
        if self.args.output_dir:
            overrides.append(f"output_dir={json.dumps(self.args.output_dir)}")
        if self.args.threads is not None:
            overrides.append(f"threads={self.args.threads}")
        if self.args.log_level:
            overrides.append(f"log_level={json.dumps(self.args.log_level)}")
        manager.apply_overrides(overrides)

        self.config = manager.validate_config()
        self.output_dir = self.config.output_dir
        os.makedirs(self.output_dir, exist_ok=True)
        manager.save_config(os.path.join(self.output_dir, AppConstants.RESOLVED_CONFIG_FILE))
        setup_logging(self.config.log_level)
        self.threads = self.config.thread_count()
        set_thread_count(self.threads)
        logger.info(f"{AppConstants.APP_NAME} v{AppConstants.VERSION}: mode {self.config.mode}, "
                    f"{self.threads} thread(s), output in {self.output_dir}")

    def run(self) -> int:
        self.started = time.perf_counter()
        self.started_at = datetime.now(timezone.utc).isoformat()
        try:
            self.initialize()
            passed = self._dispatch()
            self.status = 0 if passed else 1
            if not passed:
                logger.warning("One or more checks failed")
        except ConfigError as e:
            self.status = 2
            self._write_error(e.to_dict())
            logger.error(e.message)
        except VortexLabError as e:
            self.status = e.exit_code
            self._write_error(e.to_dict())
            logger.error(f"{type(e).__name__}: {e.message}")
        except KeyboardInterrupt:
            self.status = 1
            self._write_error({"error": "KeyboardInterrupt", "message": "interrupted", "details": {}})
            logger.error("Interrupted")
        except Exception as e:
            self.status = 1
            self._write_error({"error": type(e).__name__, "message": str(e), "details": {}})
            logger.exception(f"Unexpected {type(e).__name__}: {e}")
        finally:
            self.shutdown()
        return self.status

    def shutdown(self) -> None:
        """Write the manifest; never raises"""
        try:
            write_json(os.path.join(self.output_dir, AppConstants.MANIFEST_FILE), self._manifest())
        except OSError as e:
            logger.error(f"Could not write manifest: {e}")

    def _dispatch(self) -> bool:
        handlers = {
            "simulate": self._simulate,
            "euler": self._euler,
            "compare": self._compare,
            "kappa": self._kappa,
            "oracle": self._oracle,
            "verify": self._verify,
        }
        return handlers[self.config.mode]()

    def _simulate(self) -> bool:
        from dynamics import run_ivse

        report = run_ivse(self.config, self.output_dir)
        self.summary = {"termination": report.termination, "steps": report.steps,
                        "lower_curve_violations": report.lower_curve_violations,
                        "predicted_T_upper": report.predicted_T_upper,
                        "observed_blowup_time_estimate": report.observed_blowup_time_estimate}
        return report.passed

    def _euler(self) -> bool:
        from euler_axi import run_euler

        report = run_euler(self.config, self.output_dir)
        self.summary = {"termination": report.termination, "energy_drift": report.energy_drift,
                        "kappa_bound_ok": report.kappa_bound_ok}
        return report.passed

    def _compare(self) -> bool:
        from euler_axi import compare_ivse_vs_euler

        report = compare_ivse_vs_euler(self.config, self.output_dir)
        self.summary = {"factor": report.factor, "depletion_from_t1": report.depletion_from(1.0)}
        return report.factor_ok and report.depletion_from(1.0)

    def _kappa(self) -> bool:
        from dynamics import initial_field
        from kappa import kappa_of_field
        from quadrature import make_rule

        scalar = initial_field(self.config)
        rule = make_rule(self.config.rule_order, self.config.rule_levels)
        estimate = kappa_of_field(scalar, self.config.ivse_threshold * scalar.sup_norm(), rule,
                                  self.config.kappa_schedule, self.config.kappa_safety)
        write_json(os.path.join(self.output_dir, AppConstants.REPORT_JSON), estimate.to_dict())
        self.summary = {"kappa": estimate.value, "conservative": estimate.conservative}
        return True

    def _oracle(self) -> bool:
        from spectral_oracle import run_identity_suite

        report = run_identity_suite(self.config)
        write_json(os.path.join(self.output_dir, AppConstants.REPORT_JSON), report.to_dict())
        self.summary = {"checks": len(report.checks),
                        "failed": [c.name for c in report.checks if not c.passed]}
        return report.passed

    def _verify(self) -> bool:
        report = run_verification(self.config)
        write_json(os.path.join(self.output_dir, AppConstants.REPORT_JSON), report)
        self.summary = {"failed": [k for k, v in report["checks"].items() if not v["passed"]]}
        return report["passed"]

    def _write_error(self, document: Dict[str, Any]) -> None:
        try:
            write_json(os.path.join(self.output_dir, AppConstants.ERROR_FILE), document)
        except OSError as e:
            logger.error(f"Could not write error document: {e}")

    def _manifest(self) -> Dict[str, Any]:
        resolved = self.config.to_dict() if self.config else None
        canonical = json.dumps(resolved or self.raw_config, sort_keys=True, default=str)
        return {
            "app": AppConstants.APP_NAME,
            "version": AppConstants.VERSION,
            "mode": self.config.mode if self.config else self.args.mode,
            "config": resolved,
            "config_hash": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
            "versions": {"python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__},
            "started_at": self.started_at,
            "wall_clock_seconds": time.perf_counter() - self.started,
            "threads": self.threads,
            "exit_status": self.status,
            "summary": self.summary,
        }


def run_verification(config: RunConfig) -> Dict[str, Any]:
    """dQ/dt identity, Euler factor 2 and structure checks at t = 0 without a full run"""
    from axifield import validate_geometry
    from biot_savart_axi import MeridianBiotSavart, delta_sensitivity, mirror_check
    from dynamics import growth_rate, initial_field, mirror_points, step_exponential, verify_dQdt
    from euler_axi import factor_at_start, initial_euler_field
    from kappa import kappa_of_field
    from quadrature import make_rule

    rule = make_rule(config.rule_order, config.rule_levels)
    scalar = initial_field(config)
    checks: Dict[str, Dict[str, Any]] = {}

    geometry = validate_geometry(scalar)
    checks["geometry"] = {"passed": geometry.passed, **geometry.to_dict()}

    solver = MeridianBiotSavart(scalar.grid, rule, config.delta, method="table", axial=False)
    estimate = kappa_of_field(scalar, config.ivse_threshold * scalar.sup_norm(), rule,
                              config.kappa_schedule, config.kappa_safety)
    dqdt = verify_dQdt(scalar, rule, config.delta, kappa=estimate.value, solver=solver)
    checks["dQdt_identity"] = {"passed": dqdt.relative_residual <= 0.01, **dqdt.to_dict()}
    checks["riccati_lower_bound"] = {"passed": bool(dqdt.lower_bound_ok),
                                     "rhs": dqdt.rhs, "kappa_Q2": dqdt.kappa_Q2}

    mirror = mirror_check(scalar, mirror_points(scalar), rule, solver.delta)
    checks["mirror_symmetry"] = {"passed": mirror.radial_even_residual <= 1e-12
                                 and mirror.axial_odd_residual <= 1e-12, **mirror.to_dict()}

    rate = growth_rate(scalar, solver.u_r(scalar))
    dt = config.cfl_factor / max(float(np.max(np.abs(rate))), 1e-300)
    stepped = step_exponential(scalar, dt, rule, solver=solver)
    checks["step_structure"] = {
        "passed": bool(np.all(stepped.values <= 0)
                       and np.array_equal(stepped.values != 0, scalar.values != 0)),
        "dt": dt,
    }

    euler_field = initial_euler_field(config)
    euler_solver = MeridianBiotSavart(euler_field.grid, rule, config.delta, method="table", axial=True)
    rate_ivse, rate_euler = factor_at_start(euler_field, euler_solver)
    factor = rate_euler / rate_ivse if rate_ivse else float("nan")
    checks["euler_factor"] = {"passed": 1.98 <= factor <= 2.02, "factor": factor,
                              "dQdt_ivse": rate_ivse, "dQdt_euler": rate_euler}

    # informational, outside the pass/fail checks
    sensitivity = delta_sensitivity(scalar, rule, config.delta)

    passed = all(c["passed"] for c in checks.values())
    return {"passed": passed, "kappa": estimate.to_dict(), "checks": checks,
            "delta_sensitivity": sensitivity}


def setup_logging(level: str = "INFO") -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO),
                        format=AppConstants.LOG_FORMAT, datefmt=AppConstants.LOG_DATE_FORMAT,
                        force=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=AppConstants.APP_NAME,
        description="Axisymmetric vortex stretching laboratory",
    )
    parser.add_argument("mode", help="simulate | euler | compare | kappa | oracle | verify")
    parser.add_argument("--config", help="flat JSON configuration file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    parser.add_argument("--output-dir", dest="output_dir", help="artifact directory")
    parser.add_argument("--threads", type=int, help=f"thread count (else ${AppConstants.THREADS_ENV_VAR})")
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--version", action="version",
                        version=f"{AppConstants.APP_NAME} {AppConstants.VERSION}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    runner = ExperimentRunner(args)
    return runner.run()


if __name__ == "__main__":
    sys.exit(main())
