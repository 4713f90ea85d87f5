"""Command-line harness: datasets, references, solver runs and robust-loss evaluation.

Experiment configs are INI-style text (``key = value`` under section headers).
Keys are unique across sections, so any key can be overridden with
``--key value`` on the command line.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, SynthSpec, load_libsvm, read_dataset, synth_generate, write_dataset
from .errors import DivergenceError, ParseError
from .eval import cached_reference, robust_loss_w, test_metrics
from .model import Iterate, LinkFunction, ProblemParams
from .solvers import (EvalHooks, SevrConfig, SolverTrace, SpprrConfig, extragda_run, extrasgda_run,
                      gda_run, sevr_run, sgda_run, spprr_run, ssg_run, subgrad_run)

CSV_HEADER = ["algo", "seed", "epoch", "data_passes", "component_evals", "subopt", "gap", "wall_ms"]
THRESHOLD = 1e-3

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

DEFAULTS = {
    "dataset": {},
    "params": {"delta": "0.1", "kappa": "1.0", "link": "canonical-logistic"},
    "solver": {"algo": "spprr", "seed": "0", "max_passes": "20", "checkpoint_every": "0.5"},
    "output": {},
}
DATASET_KEYS = ("path", "libsvm", "synth_n")


class UsageError(Exception):
    """Bad command line or configuration."""


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    values: dict[str, dict[str, str]]
    source: Path | None = None

    def get(self, key: str, default=None):
        for sec in self.values.values():
            if key in sec:
                return sec[key]
        return default

    def num(self, key: str, default=None, kind=float):
        raw = self.get(key)
        if raw is None:
            if default is None:
                raise UsageError(f"missing config key '{key}'")
            return default
        try:
            return kind(float(raw)) if kind is int else kind(raw)
        except ValueError:
            raise UsageError(f"config key '{key}' has bad value {raw!r}") from None

    def set(self, key: str, value: str) -> None:
        for sec in self.values.values():
            if key in sec:
                sec[key] = value
                return
        section = "dataset" if key.startswith("synth_") or key in DATASET_KEYS else "solver"
        self.values.setdefault(section, {})[key] = value

    def params(self) -> ProblemParams:
        try:
            return ProblemParams(delta=self.num("delta"), kappa=self.num("kappa"),
                                 link=LinkFunction(self.get("link")))
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def dataset(self) -> Dataset:
        sources = [k for k in DATASET_KEYS if self.get(k) is not None]
        if len(sources) != 1:
            raise UsageError("config needs exactly one dataset source: path, libsvm or synth_n")
        src = sources[0]
        if src == "path":
            return read_dataset(self._resolve(self.get("path")))
        if src == "libsvm":
            return load_libsvm(self._resolve(self.get("libsvm")))
        spec = SynthSpec(n=self.num("synth_n", kind=int), d=self.num("synth_d", 100, int),
                         noise_var=self.num("synth_noise", 0.2), seed=self.num("synth_seed", 0, int))
        return synth_generate(spec)[0]

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p


def load_config(path: Path | str | None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    values = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    source = None
    if path is not None:
        source = Path(path)
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            with open(source, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise UsageError(f"{source}: {exc}") from None
        for sec in parser.sections():
            values.setdefault(sec, {}).update(parser[sec])
    cfg = ExperimentConfig(values, source)
    for k, v in (overrides or {}).items():
        cfg.set(k, v)
    return cfg


def parse_overrides(extra: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--") or len(tok) <= 2:
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            val = next(it, None)
            if val is None:
                raise UsageError(f"--{key} needs a value")
        out[key] = val
    return out


# --------------------------------------------------------------------------
# solver dispatch
# --------------------------------------------------------------------------

def _iters(budget_passes: float, n: int, cost: int) -> int:
    return max(1, math.ceil(budget_passes * n / cost))


def run_algo(cfg: ExperimentConfig, ds: Dataset, p: ProblemParams, ref=None) -> SolverTrace:
    algo = cfg.get("algo", "").lower()
    seed = cfg.num("seed", 0, int)
    passes = cfg.num("max_passes", 20.0)
    every = cfg.num("checkpoint_every", 0.5)
    hooks = EvalHooks(ds, p, ref, every_passes=every, max_passes=passes)
    n = ds.n
    if algo == "sevr":
        B = cfg.num("batch", 32, int)
        k0 = cfg.num("k0", 0, int) or None
        S = cfg.num("epochs", 5, int)
        if k0 is None:
            # fill the pass budget: S + 4 B k0 (2^S - 1) / n passes
            k0 = max(1, math.floor((passes - S) * n / (4 * B * (2 ** S - 1))))
        sc = SevrConfig(eta=cfg.num("eta"), k0=k0, epochs_S=S, batch_B=B, seed=seed,
                        checkpoint_every_passes=every)
        return sevr_run(ds, p, sc, hooks, report=cfg.get("report", "raw"))
    if algo == "spprr":
        M = cfg.num("M", 2, int)
        S = cfg.num("epochs", 0, int) or max(1, math.ceil(passes / M))
        sc = SpprrConfig(eta=cfg.num("eta"), epochs_S=S, fixed_point_M=M, seed=seed,
                         checkpoint_every_passes=every)
        return spprr_run(ds, p, sc, hooks, report=cfg.get("report", "avg"))
    if algo == "gda":
        return gda_run(ds, p, cfg.num("eta"), cfg.num("iters", _iters(passes, n, n), int), hooks)
    if algo == "extragda":
        return extragda_run(ds, p, cfg.num("eta"), cfg.num("iters", _iters(passes, n, 2 * n), int), hooks)
    if algo in ("sgda", "extrasgda", "ssg"):
        B = cfg.num("batch", 32, int)
        iters = cfg.num("iters", _iters(passes, n, B), int)
        fn = {"sgda": sgda_run, "extrasgda": extrasgda_run, "ssg": ssg_run}[algo]
        return fn(ds, p, cfg.num("eta0"), iters, batch=B, seed=seed, hooks=hooks)
    if algo == "sg":
        return subgrad_run(ds, p, cfg.num("eta0"), cfg.num("iters", _iters(passes, n, n), int), hooks)
    raise UsageError(f"unknown algo {algo!r}")


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def fmt_num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def trace_rows(trace: SolverTrace) -> list[list[str]]:
    return [[trace.algo, str(trace.seed), str(r.epoch), fmt_num(r.data_passes), str(r.component_evals),
             fmt_num(r.suboptimality), fmt_num(r.gap), fmt_num(r.wall_ms)] for r in trace.records]


def atomic_write(path: Path | str, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def render_csv(rows: list[list[str]], header=CSV_HEADER) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_iterate(it: Iterate, path: Path | str) -> None:
    lines = [f"lambda {fmt_num(it.lam)}", f"beta {len(it.beta)}", *(fmt_num(b) for b in it.beta)]
    atomic_write(path, "\n".join(lines) + "\n")


def read_beta(path: Path | str) -> np.ndarray:
    lines = Path(path).read_text().split("\n")
    try:
        pos = next(i for i, ln in enumerate(lines) if ln.startswith("beta "))
        d = int(lines[pos].split()[1])
        beta = np.array([float(v) for v in lines[pos + 1: pos + 1 + d]])
    except (StopIteration, ValueError, IndexError):
        raise ParseError(f"{path}: not an iterate file") from None
    if len(beta) != d:
        raise ParseError(f"{path}: truncated iterate file")
    return beta


def passes_to(rows: list[list[str]], threshold: float = THRESHOLD) -> float | None:
    for r in rows:
        if r[5] and float(r[5]) <= threshold:
            return float(r[3])
    return None


def summarize(rows_by_run: list[tuple[str, str, list[list[str]]]]) -> str:
    lines = [["algo", "seed", "passes_to_1e-3", "final_subopt"]]
    for algo, seed, rows in rows_by_run:
        pt = passes_to(rows)
        final = rows[-1][5] if rows else ""
        lines.append([algo, seed, "" if pt is None else fmt_num(pt), final])
    return render_csv(lines[1:], header=lines[0])


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _reference_for(cfg: ExperimentConfig, ds: Dataset, p: ProblemParams):
    mode = cfg.get("reference", "auto")
    if mode == "none":
        return None
    ref, _ = cached_reference(ds, p, tol_target=cfg.num("tol", 1e-10))
    return ref


def execute(cfg: ExperimentConfig) -> tuple[SolverTrace, list[list[str]]]:
    ds = cfg.dataset()
    p = cfg.params()
    ref = _reference_for(cfg, ds, p)
    trace = run_algo(cfg, ds, p, ref)
    return trace, trace_rows(trace)


def cmd_datagen(args) -> int:
    spec = SynthSpec(n=args.n, d=args.d, noise_var=args.noise, seed=args.seed)
    ds, _ = synth_generate(spec)
    write_dataset(ds, args.out)
    print(f"n={ds.n} d={ds.d} scale={ds.scale!r}")
    return EXIT_OK


def cmd_run(args, extra) -> int:
    cfg = load_config(args.config, parse_overrides(extra))
    trace, rows = execute(cfg)
    text = render_csv(rows)
    out = args.out or cfg.get("out")
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)
    if args.iterate_out:
        it = trace.averaged_iterate if cfg.get("report", "") == "avg" and trace.averaged_iterate else trace.final_iterate
        write_iterate(it, args.iterate_out)
    return EXIT_OK


def _compare_one(path: str, overrides: dict[str, str]):
    cfg = load_config(path, overrides)
    try:
        trace, rows = execute(cfg)
    except DivergenceError as exc:
        return path, None, None, str(exc)
    return path, trace.algo, str(trace.seed), rows


def cmd_compare(args, extra) -> int:
    d = Path(args.config_dir)
    if not d.is_dir():
        raise UsageError(f"{d} is not a directory")
    configs = sorted(str(f) for f in d.iterdir() if f.suffix in (".cfg", ".ini", ".conf"))
    if not configs:
        raise UsageError(f"no configs (*.cfg, *.ini, *.conf) in {d}")
    overrides = parse_overrides(extra)
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_compare_one, configs, [overrides] * len(configs)))
    else:
        results = [_compare_one(c, overrides) for c in configs]
    merged, runs, failed = [], [], False
    for path, algo, seed, rows in results:
        if algo is None:
            print(f"diverged: {path}: {rows}", file=sys.stderr)
            failed = True
            continue
        merged.extend(rows)
        runs.append((algo, seed, rows))
    atomic_write(args.out, render_csv(merged))
    summary = summarize(runs)
    atomic_write(args.summary or str(Path(args.out).with_suffix(".summary.csv")), summary)
    sys.stdout.write(summary)
    return EXIT_DIVERGED if failed else EXIT_OK


def cmd_reference(args, extra) -> int:
    overrides = parse_overrides(extra)
    if args.data:
        overrides["path"] = args.data
    cfg = load_config(args.config, overrides)
    ds = cfg.dataset()
    p = cfg.params()
    ref, hit = cached_reference(ds, p, tol_target=args.tol, budget=args.budget)
    if hit:
        print("cached")
    print(f"f_star={fmt_num(ref.f_star)} tolerance={fmt_num(ref.tolerance)} lambda_star={fmt_num(ref.lambda_star)}"
          + (" warning=gap-above-target" if ref.warning else ""))
    return EXIT_OK


def cmd_eval_robust(args, extra) -> int:
    overrides = parse_overrides(extra)
    if args.data:
        overrides["path"] = args.data
    cfg = load_config(args.config, overrides)
    ds = cfg.dataset()
    p = cfg.params()
    beta = read_beta(args.iterate)
    if len(beta) != ds.d:
        raise UsageError(f"iterate has d={len(beta)} but dataset has d={ds.d}")
    try:
        deltas = [float(x) for x in args.deltas.split(",")]
    except ValueError:
        raise UsageError(f"bad --deltas {args.deltas!r}") from None
    rows = []
    for delta in deltas:
        rep = robust_loss_w(beta, ds, delta, p)
        rows.append([fmt_num(delta), fmt_num(rep.value), fmt_num(rep.argmin_lambda)])
    err, loss = test_metrics(beta, ds, p)
    sys.stdout.write(render_csv(rows, header=["delta", "robust_loss", "argmin_lambda"]))
    print(f"error_rate={fmt_num(err)} mean_loss={fmt_num(loss)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wdrsl", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("datagen", help="generate a synthetic dataset file")
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--d", type=int, default=100)
    g.add_argument("--noise", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="run one solver config and emit a trace CSV")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--iterate-out")

    c = sub.add_parser("compare", help="run every config in a directory")
    c.add_argument("config_dir")
    c.add_argument("--out", required=True)
    c.add_argument("--summary")
    c.add_argument("--jobs", type=int, default=1)

    f = sub.add_parser("reference", help="compute or load the cached reference solution")
    f.add_argument("config", nargs="?")
    f.add_argument("--data")
    f.add_argument("--tol", type=float, default=1e-10)
    f.add_argument("--budget", type=int, default=20000)

    e = sub.add_parser("eval-robust", help="Wasserstein robust loss and test metrics of an iterate")
    e.add_argument("config", nargs="?")
    e.add_argument("--data")
    e.add_argument("--iterate", required=True)
    e.add_argument("--deltas", default="0,0.05,0.1,0.2")
    return ap


COMMANDS = {"datagen": lambda a, x: cmd_datagen(a), "run": cmd_run, "compare": cmd_compare,
            "reference": cmd_reference, "eval-robust": cmd_eval_robust}


def _split_overrides(parser: argparse.ArgumentParser, argv: list[str]) -> tuple[list[str], list[str]]:
    """Separate ``--key value`` config overrides from the subcommand's own arguments.

    Done before argparse runs so an override's value is never taken for an
    optional positional argument.
    """
    if not argv or argv[0].startswith("-"):
        return argv, []
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    cmd = sub.choices.get(argv[0])
    if cmd is None:
        return argv, []
    known = {opt for a in cmd._actions for opt in a.option_strings}
    own, extra = [argv[0]], []
    it = iter(argv[1:])
    for tok in it:
        name = tok.split("=", 1)[0]
        if tok.startswith("--") and name not in known:
            extra.append(tok)
            if "=" not in tok:
                nxt = next(it, None)
                if nxt is not None:
                    extra.append(nxt)
        else:
            own.append(tok)
    return own, extra


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    own, extra = _split_overrides(parser, argv)
    try:
        args = parser.parse_args(own)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if extra and args.command == "datagen":
            raise UsageError(f"unexpected arguments {extra}")
        return COMMANDS[args.command](args, extra)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ParseError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
