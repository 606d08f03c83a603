"""Command line front end: JSON experiment configs in, CSV or JSON reports out.

    wonhamsplit run CONFIG [--output PATH] [--seed S] [--threads T]
    wonhamsplit validate CONFIG
    wonhamsplit selftest [--suite fast|oracle|variance|acceptance]

Exit status: 0 success, 1 failed self-test, 2 invalid usage or config,
3 I/O error, 4 numerical failure.

The report file holds only quantities that are a pure function of the
config and seed, so reruns are byte-identical at any thread count.  Wall
times go to stderr and to a ``<output>.timing.json`` sidecar.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .engine import SCHEMES, replicate, run_scheme, survivor_paths
from .errors import ConfigError, NumericalError, UsageError
from .model import SwitchingModel
from .simulate import DYNAMICS, MARGINAL
from .splitting import LevelSchedule

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3, 4
FORMATS = ("csv", "json")


def _fmt(v):
    return "%.17g" % v


@dataclass(frozen=True)
class EngineConfig:
    seed: int
    scheme: str = "both"
    dynamics: str = "both"
    n_particles: int = 1000
    replicates: int = 10
    step_h: float = 1e-3

    @property
    def schemes(self):
        return SCHEMES if self.scheme == "both" else (self.scheme,)

    @property
    def dynamics_list(self):
        return DYNAMICS if self.dynamics == "both" else (self.dynamics,)

    def to_dict(self):
        return {"scheme": self.scheme, "dynamics": self.dynamics,
                "n_particles": self.n_particles, "replicates": self.replicates,
                "seed": self.seed, "step_h": self.step_h}

    @classmethod
    def from_dict(cls, cfg, path="engine"):
        if not isinstance(cfg, dict):
            raise ConfigError([(path, "must be an object")])
        problems = []
        out = dict(cfg)
        unknown = set(cfg) - {"scheme", "dynamics", "n_particles", "replicates", "seed", "step_h"}
        for key in sorted(unknown):
            problems.append((f"{path}.{key}", "unknown field"))
        if "seed" not in cfg:
            problems.append((f"{path}.seed", "required (no implicit seeding)"))
        elif not _is_int(cfg["seed"]) or not 0 <= cfg["seed"] < 2 ** 64:
            problems.append((f"{path}.seed", "must be an integer in [0, 2^64)"))
        if cfg.get("scheme", "both") not in SCHEMES + ("both",):
            problems.append((f"{path}.scheme", "must be weighted, resampled or both"))
        if cfg.get("dynamics", "both") not in DYNAMICS + ("both",):
            problems.append((f"{path}.dynamics", "must be joint, marginal or both"))
        for key, lo in (("n_particles", 2), ("replicates", 1)):
            if key in cfg and (not _is_int(cfg[key]) or cfg[key] < lo):
                problems.append((f"{path}.{key}", f"must be an integer >= {lo}"))
        if "step_h" in cfg:
            h = cfg["step_h"]
            if not _is_number(h) or not math.isfinite(h) or h <= 0:
                problems.append((f"{path}.step_h", "must be a positive number"))
            else:
                out["step_h"] = float(h)
        if problems:
            raise ConfigError(problems)
        return cls(**out)


@dataclass(frozen=True)
class OutputConfig:
    format: str = "csv"
    path: str | None = None
    dump_survivor_paths: bool = False

    def to_dict(self):
        return {"format": self.format, "path": self.path,
                "dump_survivor_paths": self.dump_survivor_paths}

    @classmethod
    def from_dict(cls, cfg, path="output"):
        if not isinstance(cfg, dict):
            raise ConfigError([(path, "must be an object")])
        problems = []
        for key in sorted(set(cfg) - {"format", "path", "dump_survivor_paths"}):
            problems.append((f"{path}.{key}", "unknown field"))
        if cfg.get("format", "csv") not in FORMATS:
            problems.append((f"{path}.format", f"must be one of {FORMATS}"))
        if cfg.get("path") is not None and not isinstance(cfg["path"], str):
            problems.append((f"{path}.path", "must be a string or null"))
        if not isinstance(cfg.get("dump_survivor_paths", False), bool):
            problems.append((f"{path}.dump_survivor_paths", "must be true or false"))
        if problems:
            raise ConfigError(problems)
        return cls(**cfg)


@dataclass(frozen=True)
class ExperimentConfig:
    model: SwitchingModel
    levels: LevelSchedule
    engine: EngineConfig
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self):
        return {"model": self.model.to_dict(), "levels": self.levels.to_dict(),
                "engine": self.engine.to_dict(), "output": self.output.to_dict()}

    @classmethod
    def from_dict(cls, cfg):
        if not isinstance(cfg, dict):
            raise ConfigError([("", "top level must be a JSON object")])
        problems = []
        for key in sorted(set(cfg) - {"model", "levels", "engine", "output"}):
            problems.append((key, "unknown section"))
        parts = {}
        for key, parser, required in (("model", SwitchingModel.from_dict, True),
                                      ("levels", LevelSchedule.from_dict, True),
                                      ("engine", EngineConfig.from_dict, True),
                                      ("output", OutputConfig.from_dict, False)):
            if key not in cfg:
                if required:
                    problems.append((key, "required section"))
                continue
            try:
                parts[key] = parser(cfg[key], key)
            except ConfigError as exc:
                problems.extend(exc.violations)
        model, levels, engine = parts.get("model"), parts.get("levels"), parts.get("engine")
        if model is not None and levels is not None and levels.phi == "coordinate" \
                and not 0 <= levels.coord_index < model.d:
            problems.append(("levels.phi.coord_index",
                             f"must lie in 0..{model.d - 1} for d = {model.d}"))
        if model is not None and engine is not None:
            rate = model.rates.max_exit_rate()
            if engine.step_h * rate >= 1.0:
                problems.append(("engine.step_h",
                                 f"step_h * max exit rate = {engine.step_h * rate:g} must be < 1"))
        if levels is not None and engine is not None and engine.step_h > levels.horizon:
            problems.append(("engine.step_h", "must not exceed levels.horizon_T"))
        if problems:
            raise ConfigError(problems)
        return cls(model, levels, engine, parts.get("output", OutputConfig()))


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def load_config(source):
    """Parse and validate a config given as a path, JSON text or dict."""
    if isinstance(source, dict):
        return ExperimentConfig.from_dict(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        text = Path(text).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"JSON parse error: {exc}")]) from None
    return ExperimentConfig.from_dict(cfg)


# -- reporting -----------------------------------------------------------------

def _columns(n):
    return (["scheme", "dynamics", "replicate", "seed", "estimate", "log_estimate"]
            + [f"p_hat_{k}" for k in range(1, n + 1)] + ["extinct_at"])


def _rows(report, n):
    for cell in report.cells:
        for r, res in enumerate(cell.results):
            p = [_fmt(v) for v in res.p_hat] + [""] * (n - len(res.p_hat))
            yield ([cell.scheme, cell.dynamics, str(r), str(res.seed), _fmt(res.estimate),
                    _fmt(res.log_estimate)] + p
                   + ["" if res.extinct_at is None else str(res.extinct_at)])


def render_csv(report, levels):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_columns(levels.n))
    w.writerows(_rows(report, levels.n))
    buf.write("\n# summary\n")
    w.writerow(["scheme", "dynamics", "replicates", "mean", "variance", "relative_variance"])
    for c in report.cells:
        w.writerow([c.scheme, c.dynamics, c.replicates, _fmt(c.mean), _fmt(c.variance),
                    _fmt(c.relative_variance)])
    return buf.getvalue()


def _json_float(v):
    return v if math.isfinite(v) else None


def render_json(report, levels, config):
    rows = [dict(zip(_columns(levels.n), row)) for row in _rows(report, levels.n)]
    for row, res in zip(rows, (r for c in report.cells for r in c.results)):
        row["replicate"] = int(row["replicate"])
        row["seed"] = res.seed
        row["estimate"] = res.estimate
        row["log_estimate"] = _json_float(res.log_estimate)
        for k in range(1, levels.n + 1):
            row[f"p_hat_{k}"] = res.p_hat[k - 1] if k <= len(res.p_hat) else None
        row["extinct_at"] = res.extinct_at
    summary = [{"scheme": c.scheme, "dynamics": c.dynamics, "replicates": c.replicates,
                "mean": c.mean, "variance": c.variance,
                "relative_variance": _json_float(c.relative_variance)} for c in report.cells]
    doc = {"config": config.to_dict(), "rows": rows, "summary": summary}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def dump_survivors(config, report):
    """Surviving full paths of replicate 0 in every cell, as a JSON document."""
    out = []
    eng = config.engine
    for cell in report.cells:
        res = cell.results[0]
        res = run_scheme(cell.scheme, config.model, config.levels, eng.n_particles,
                         cell.dynamics, eng.step_h, res.seed, keep_ancestry=True)
        if res.extinct_at is not None:
            continue
        for slot, seg, marks in survivor_paths(config.model, config.levels, res, eng.step_h):
            out.append({"scheme": cell.scheme, "dynamics": cell.dynamics, "replicate": 0,
                        "seed": res.seed, "slot": slot, "times": seg.times.tolist(),
                        "x": seg.points.tolist(),
                        ("filter" if cell.dynamics == MARGINAL else "mode"): marks.tolist()})
    return json.dumps(out) + "\n"


def run_experiment(config, output=None, threads=1, log=sys.stderr):
    """Run every configured cell and write the report; returns written paths."""
    eng = config.engine
    report = replicate(config.model, config.levels, eng.n_particles, eng.step_h, eng.seed,
                       eng.replicates, schemes=eng.schemes, dynamics=eng.dynamics_list,
                       threads=threads, seeds=[eng.seed + r for r in range(eng.replicates)])
    for c in report.cells:
        if any(r.filter_diagnostics[2] < 0 for r in c.results):
            raise NumericalError(f"negative filter component in cell {c.scheme}/{c.dynamics}")
    text = (render_csv(report, config.levels) if config.output.format == "csv"
            else render_json(report, config.levels, config))
    path = output or config.output.path
    written = []
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
        written.append(Path(path))
        timing = {f"{c.scheme}/{c.dynamics}": c.wall_time for c in report.cells}
        side = Path(str(path) + ".timing.json")
        side.write_text(json.dumps(timing, indent=2) + "\n")
        if config.output.dump_survivor_paths:
            dump = Path(str(path) + ".survivors.json")
            dump.write_text(dump_survivors(config, report))
            written.append(dump)
    for c in report.cells:
        print(f"{c.scheme}/{c.dynamics}: mean {c.mean:.6g}  var {c.variance:.3g}  "
              f"wall {c.wall_time:.2f}s", file=log)
    return report, written


# -- entry point ---------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="wonhamsplit", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a JSON config")
    run.add_argument("config")
    run.add_argument("--output", help="report path (overrides output.path; default stdout)")
    run.add_argument("--seed", type=int, help="override engine.seed")
    run.add_argument("--threads", type=int, default=1, help="worker threads (results unchanged)")
    val = sub.add_parser("validate", help="check a config and print it with defaults applied")
    val.add_argument("config")
    st = sub.add_parser("selftest", help="run a packaged check suite")
    st.add_argument("--suite", default="fast", choices=("fast", "oracle", "variance", "acceptance"))
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "selftest":
            from .checks import run_suite
            return EXIT_OK if run_suite(args.suite) else EXIT_FAILED
        config = load_config(args.config)
        if args.command == "validate":
            print(json.dumps(config.to_dict(), indent=2))
            return EXIT_OK
        if args.seed is not None:
            cfg = config.to_dict()
            cfg["engine"]["seed"] = args.seed
            config = load_config(cfg)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        run_experiment(config, output=args.output, threads=args.threads)
        return EXIT_OK
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
