"""Command-line entry point: ``weylhom <subcommand> [options]``.

Every subcommand writes a JSON report (stdout, or ``--out``) and exits with
0 on pass, 1 on a logical failure, 2 on an ambiguous rank or numerical/resource
abort and 3 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

import numpy as np

from . import __version__
from .algebra import Tolerances, UnsupportedAlgebraError, algebra_from_name, identity_suite
from .bianchi import SystemTooLargeError, verify_proposition
from .geometry import DomainError, MetricParams, geometry_report
from .numerics import RankPolicy, ResourceLimitError
from .roots import RootDecompositionError, table1_row

SCHEMA_VERSION = "1.0"
EXIT_PASS, EXIT_FAIL, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 3

DEFAULT_ALGEBRAS = {
    "verify-identities": ["su2", "su3", "su4", "so5", "so7", "sp2", "sp3", "g2"],
    "verify-proposition": ["su3", "sp2", "g2", "su4"],
    "table1": ["su3", "su4", "sp2", "sp3", "so7", "g2"],
}
# tolerance keys beyond the algebra ones
EXTRA_TOLS = {"proposition": 1e-8, "spectrum": 1e-6, "weyl": 1e-6, "obstruction": 1e-4,
              "rel_eps": 2.0**-46, "min_gap_ratio": 1e3}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = ""
    algebra: list = field(default_factory=list)
    tol: dict = field(default_factory=dict)
    mode: str = "both"  # restricted | unrestricted | both
    method: str = "auto"
    seed: int = 0
    threads: int = 1
    out: str | None = None
    mem_cap_gb: float | None = None
    n: int = 5
    lam: float = 1.0
    eps: int = 1
    D: dict = field(default_factory=lambda: {"1,2": 1.0})
    ab_family: str = "const"
    samples: int = 20

    def tolerances(self) -> Tolerances:
        known = {k: v for k, v in self.tol.items() if k in Tolerances.__dataclass_fields__}
        return Tolerances().override(**known)

    def extra_tol(self, key) -> float:
        return float(self.tol.get(key, EXTRA_TOLS[key]))

    def policy(self) -> RankPolicy:
        return RankPolicy(rel_eps=self.extra_tol("rel_eps"), min_gap_ratio=self.extra_tol("min_gap_ratio"))

    def mem_cap_bytes(self):
        return None if self.mem_cap_gb is None else int(self.mem_cap_gb * 2**30)

    def metric_params(self) -> MetricParams:
        D = np.zeros((self.n - 1, self.n - 1))
        for key, val in self.D.items():
            i, j = (int(s) for s in key.split(","))
            if not (1 <= i <= self.n - 1 and 1 <= j <= self.n - 1) or i == j:
                raise UsageError(f"D entry {key} out of range")
            D[i - 1, j - 1], D[j - 1, i - 1] = val, -val
        return MetricParams(n=self.n, lam=self.lam, eps=self.eps, D=D, ab_family=self.ab_family)

    def to_dict(self):
        d = asdict(self)
        d.pop("out")
        return d


# ---------------------------------------------------------------- commands


def _map(config: RunConfig, fn, items):
    """Per-algebra work in parallel; results keep input order."""
    if config.threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        return list(pool.map(fn, items))


def _algebras(config, algebras):
    if algebras is not None:
        return list(algebras)
    names = config.algebra or DEFAULT_ALGEBRAS[config.command]
    try:
        return [algebra_from_name(name) for name in names]
    except (UnsupportedAlgebraError, ValueError) as err:
        raise UsageError(str(err)) from err


def cmd_verify_identities(config: RunConfig, algebras=None):
    tol = config.tolerances()

    def run(g):
        checks = identity_suite(g, tol, seed=config.seed)
        failed = [c["name"] for c in checks if not c["passed"]]
        return {"algebra": g.name, "n": g.dim_n, "passed": not failed,
                "first_failure": failed[0] if failed else None, "checks": checks}

    results = _map(config, run, _algebras(config, algebras))
    code = EXIT_PASS if all(r["passed"] for r in results) else EXIT_FAIL
    return results, code


def _proposition_entry(config, g, threads):
    try:
        rep = verify_proposition(g, config.policy(), method=config.method, tol=config.extra_tol("proposition"),
                                 threads=threads,
                                 mem_cap_bytes=config.mem_cap_bytes())
    except (ResourceLimitError, SystemTooLargeError) as err:
        return {"algebra": g.name, "n": g.dim_n, "status": "resource_abort", "message": str(err)}
    d = rep.to_dict()
    if config.mode != "both" and d["status"] not in ("outside_hypothesis", "ambiguous"):
        part = rep.restricted if config.mode == "restricted" else rep.unrestricted
        if config.mode == "restricted":
            ok = part.dimension == 0
        else:
            tol = rep.tol
            ok = (part.dimension == g.dim_n**2 and part.max_phi_norm <= tol
                  and part.max_K_ad_residual <= tol and part.max_residual <= tol)
        d["status"] = "pass" if ok else "fail"
    if config.mode != "both":
        d.pop("unrestricted" if config.mode == "restricted" else "restricted")
    return d


def cmd_verify_proposition(config: RunConfig, algebras=None):
    algs = _algebras(config, algebras)
    # a single algebra gets the threads for its Gram accumulation instead
    inner = config.threads if len(algs) == 1 else 1
    results = _map(config, lambda g: _proposition_entry(config, g, inner), algs)
    statuses = {r["status"] for r in results}
    if statuses & {"ambiguous", "resource_abort"}:
        code = EXIT_NUMERICAL
    elif "fail" in statuses:
        code = EXIT_FAIL
    else:
        code = EXIT_PASS
    return results, code


def cmd_table1(config: RunConfig, algebras=None):
    policy = config.policy()

    def run(g):
        try:
            return table1_row(g, policy)
        except RootDecompositionError as err:
            return {"algebra": g.name, "rank": None, "m": None, "reference_rank": None, "reference_m": None,
                    "ambiguous": True, "match": False, "message": str(err)}

    results = _map(config, run, _algebras(config, algebras))
    if any(r["ambiguous"] for r in results):
        code = EXIT_NUMERICAL
    elif any(r["match"] is False for r in results):
        code = EXIT_FAIL
    else:
        code = EXIT_PASS
    return results, code


def cmd_geometry(config: RunConfig, algebras=None):
    try:
        p = config.metric_params()
        rep = geometry_report(p, config.samples, config.seed)
    except ValueError as err:  # includes DomainError
        if isinstance(err, DomainError):
            return {"error": str(err)}, EXIT_NUMERICAL
        raise UsageError(str(err)) from err
    rel = []
    for s in rep["obstruction_samples"]:
        scale = max(abs(s["rhs"]), 1e-12)
        rel.append(abs(s["lhs"] - s["rhs"]) / scale if s["rhs"] != 0 else abs(s["lhs"]))
    checks = {
        "spectrum": rep["spectrum_deviation"] <= config.extra_tol("spectrum") * max(abs(p.kappa), 1.0),
        "weyl": rep["weyl_certificate"] is not None and rep["weyl_certificate"] <= config.extra_tol("weyl"),
        "obstruction": max(rel) <= config.extra_tol("obstruction"),
    }
    rep["obstruction_max_rel_error"] = max(rel)
    rep["obstruction_nonzero"] = any(abs(s["lhs"]) > 1e-8 for s in rep["obstruction_samples"])
    rep["checks"] = checks
    return rep, EXIT_PASS if all(checks.values()) else EXIT_FAIL


COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "verify-proposition": cmd_verify_proposition,
    "table1": cmd_table1,
    "geometry": cmd_geometry,
}


# ---------------------------------------------------------------- parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, val = text.split("=", 1)
    try:
        return key.strip(), float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value of {key} is not a number") from None


def build_parser():
    parser = _Parser(prog="weylhom", description="Numerical checks for Weyl-homogeneity on compact Lie groups.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    # defaults are None so config-file values survive unless a flag is given
    common.add_argument("--config", help="JSON file with the same keys as the flags")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--tol", type=_kv, nargs="+", metavar="KEY=VALUE")
    for name in ("verify-identities", "verify-proposition", "table1"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--algebra", nargs="+", metavar="NAME")
        if name == "verify-proposition":
            group = p.add_mutually_exclusive_group()
            for mode in ("restricted", "unrestricted", "both"):
                group.add_argument(f"--{mode}", dest="mode", action="store_const", const=mode)
            p.add_argument("--gram", dest="method", action="store_const", const="gram",
                           help="use Gram accumulation for the rank decision")
            p.add_argument("--method", dest="method", choices=["auto", "qr", "gram"])
            p.add_argument("--mem-cap-gb", type=float, help="abort if the factor would exceed this")
    g = sub.add_parser("geometry", parents=[common])
    g.add_argument("--n", type=int)
    g.add_argument("--lam", type=float)
    g.add_argument("--eps", type=int, choices=[1, -1])
    g.add_argument("--D", nargs="*", metavar="I,J=V", help="entries D_IJ (1-based); no values means D = 0")
    g.add_argument("--ab-family", choices=["const", "sine"])
    g.add_argument("--samples", type=int)
    return parser


def config_from_args(ns) -> RunConfig:
    base = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config: {err}") from err
        unknown = set(base) - {f.name for f in fields(RunConfig)}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    flags = {k: v for k, v in vars(ns).items() if v is not None and k != "config"}
    if "tol" in flags:
        flags["tol"] = {**base.get("tol", {}), **dict(flags["tol"])}
    if "D" in flags:
        flags["D"] = dict(item.split("=", 1) for item in flags["D"])
        flags["D"] = {k: float(v) for k, v in flags["D"].items()}
    try:
        cfg = RunConfig(**{**base, **flags})
    except TypeError as err:
        raise UsageError(str(err)) from err
    if cfg.threads < 1:
        raise UsageError("--threads must be positive")
    unknown_tol = set(cfg.tol) - set(Tolerances.__dataclass_fields__) - set(EXTRA_TOLS)
    if unknown_tol:
        raise UsageError(f"unknown tolerance keys: {sorted(unknown_tol)}")
    return cfg


def run(config: RunConfig, algebras=None) -> tuple[dict, int]:
    results, code = COMMANDS[config.command](config, algebras)
    report = {"schema_version": SCHEMA_VERSION, "command": config.command, "version": __version__,
              "config": config.to_dict(), "exit_code": code, "results": results}
    return report, code


def load_schema() -> dict:
    return json.loads(resources.files("weylhom").joinpath("report.schema.json").read_text())


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        config = config_from_args(ns)
        report, code = run(config)
    except (UsageError, KeyError) as err:
        print(f"weylhom: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    text = json.dumps(report, indent=2, allow_nan=False)
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if config.command == "verify-identities":
        for r in report["results"]:
            if not r["passed"]:
                print(f"{r['algebra']}: {r['first_failure']} failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
