"""Command-line orchestration of the rule-induction pipeline.

Subcommands: gen, trace, train, extract, compare, select, grid, markov.
Every option can come from flags or from a ``key: value`` config file
(``--config``); explicit flags win. All randomness derives from one named
seed per run, so reruns of the same invocation reproduce byte-identical
artifacts.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from . import dataset as ds
from . import dissimilarity as dd
from . import extraction as ex
from . import fsa as fa
from . import rnn
from .seeding import derive_seed

SUMMARY_COLUMNS = (
    "status,cell,hidden,dropout,train_size,seed,checkpoint,"
    "train_loss,test_misclassification,deterministic,iterations,states,delta,"
    "model_path,fsa_path,dot_path"
)


@dataclass(frozen=True)
class ExperimentSpec:
    """One grid run: every axis the experiment sweeps plus shared knobs."""

    target: str = fa.SECURITY_TARGET_PATTERN
    alphabet: str = "tps"
    cells: tuple[str, ...] = ("gru",)
    hidden_sizes: tuple[int, ...] = (4,)
    dropouts: tuple[float, ...] = (0.0,)
    train_sizes: tuple[int, ...] = (800,)
    test_size: int = 10000
    checkpoints: tuple[int, ...] = (500, 1000, 3000, 5000)
    seeds: tuple[int, ...] = (0,)
    learning_rate: float = 0.02
    min_len: int = 1
    max_len: int = 20
    samples: int = 10000
    max_iterations: int = 100
    time_limit: float = 600.0
    workers: int = 1
    out_dir: str = "grid-out"

    def grid_cells(self) -> list[tuple[str, int, float, int, int]]:
        return [
            (cell, hidden, dropout, train_size, seed)
            for cell in self.cells
            for hidden in self.hidden_sizes
            for dropout in self.dropouts
            for train_size in self.train_sizes
            for seed in self.seeds
        ]


@dataclass
class RunRecord:
    """Result of one grid cell at one checkpoint, with artifact paths."""

    status: str
    cell: str
    hidden: int
    dropout: float
    train_size: int
    seed: int
    checkpoint: int
    train_loss: float = math.nan
    misclassification: float = math.nan
    deterministic: bool = False
    iterations: int = 0
    states: int = 0
    delta: float = math.nan
    model_path: str = ""
    fsa_path: str = ""
    dot_path: str = ""
    config_snapshot: dict = field(default_factory=dict)

    def csv_row(self) -> str:
        delta = "inf" if self.delta == math.inf else (
            "" if math.isnan(self.delta) else f"{self.delta:.6f}")
        loss = "" if math.isnan(self.train_loss) else f"{self.train_loss:.6e}"
        err = "" if math.isnan(self.misclassification) else f"{self.misclassification:.6f}"
        return ",".join([
            self.status, self.cell, str(self.hidden), str(self.dropout),
            str(self.train_size), str(self.seed), str(self.checkpoint),
            loss, err, str(self.deterministic).lower(), str(self.iterations),
            str(self.states), delta, self.model_path, self.fsa_path, self.dot_path,
        ])


def load_target(spec: str, alphabet: fa.Alphabet) -> fa.Fsa:
    """A target is either a machine file path or a regex pattern."""
    if os.path.exists(spec):
        return fa.read_fsa(spec)
    return fa.regex_to_fsa(spec, alphabet)


def _parse_alphabet(text: str) -> fa.Alphabet:
    return fa.Alphabet(tuple(text))


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


# ---------------------------------------------------------------------------
# gen / trace / markov


def cmd_gen(args) -> int:
    alphabet = _parse_alphabet(args.alphabet)
    target = load_target(args.target, alphabet)
    train_cfg = ds.SamplerConfig(
        count=args.count, min_len=args.min_len, max_len=args.max_len,
        positive_ratio=args.ratio, seed=derive_seed(args.seed, "gen-train"))
    train_set = ds.sample_strings(target, train_cfg)
    test_cfg = ds.SamplerConfig(
        count=args.test_count, min_len=args.min_len, max_len=args.max_len,
        positive_ratio=args.ratio, seed=derive_seed(args.seed, "gen-test"))
    test_set = ds.sample_strings(target, test_cfg, exclude=set(train_set.words()))
    os.makedirs(args.out, exist_ok=True)
    train_path = os.path.join(args.out, "train.dataset")
    test_path = os.path.join(args.out, "test.dataset")
    ds.write_dataset(train_set, train_path)
    ds.write_dataset(test_set, test_path)
    with open(os.path.join(args.out, "gen.meta"), "w", encoding="utf-8") as fh:
        fh.write(
            f"target: {args.target}\nalphabet: {args.alphabet}\n"
            f"count: {args.count}\ntest_count: {args.test_count}\n"
            f"min_len: {args.min_len}\nmax_len: {args.max_len}\n"
            f"ratio: {args.ratio}\nseed: {args.seed}\n"
            "length_stratification: uniform over feasible lengths\n")
    print(f"wrote {train_path} ({len(train_set)} examples) and "
          f"{test_path} ({len(test_set)} examples)")
    return 0


def _markov_lines(markov: ds.MarkovAnnotation, threshold: float) -> list[str]:
    lines = []
    for state in sorted(markov.rows):
        row = markov.rows[state]
        cells = " ".join(f"{sym}:{row[sym]:.3f}" for sym in sorted(row))
        lines.append(f"state {state}: {cells}")
    flagged = markov.underrepresented(threshold)
    for state, symbol, prob in flagged:
        lines.append(
            f"UNDERREPRESENTED state {state} symbol {symbol}: {prob:.3f} < {threshold}")
    if not flagged:
        lines.append(f"no symbol below the {threshold} threshold")
    return lines


def cmd_trace(args) -> int:
    alphabet = _parse_alphabet(args.alphabet)
    target = load_target(args.target, alphabet)
    merged: dict[str, bool] = {}
    for asm_path in args.asm:
        graph = ds.read_asm(asm_path)
        traced = ds.trace_asm(graph, args.k, target)
        for example in traced:
            merged.setdefault(example.word, example.label)
    data = ds.Dataset(alphabet, [ds.LabeledString(w, l) for w, l in merged.items()],
                      args.seed)
    labels = {ex.label for ex in data}
    # raise rare positives up to the requested share; corpora already at or
    # above it are left alone
    if len(labels) == 2 and data.positive_fraction() < args.ratio:
        data = ds.rebalance(data, args.ratio, derive_seed(args.seed, "trace-rebalance"))
    markov = ds.estimate_markov(target, data)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "trace.dataset")
    ds.write_dataset(data, out_path)
    markov_path = os.path.join(args.out, "markov.txt")
    lines = _markov_lines(markov, args.threshold)
    with open(markov_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out_path} ({len(data)} examples, "
          f"{data.positive_fraction():.2f} positive)")
    for ln in lines:
        print(ln)
    return 0


def cmd_markov(args) -> int:
    alphabet = _parse_alphabet(args.alphabet)
    target = load_target(args.target, alphabet)
    data = ds.read_dataset(args.dataset)
    markov = ds.estimate_markov(target, data)
    lines = _markov_lines(markov, args.threshold)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# train / extract


def cmd_train(args) -> int:
    train_set = ds.read_dataset(args.train)
    test_set = ds.read_dataset(args.test) if args.test else ds.Dataset(
        train_set.alphabet, [], train_set.seed)
    cfg = rnn.ModelConfig(
        cell=args.cell, hidden_size=args.hidden, input_size=len(train_set.alphabet),
        dropout=args.dropout, epochs=args.epochs, learning_rate=args.lr,
        seed=args.seed)
    model = rnn.RnnModel.initialize(cfg, train_set.alphabet)
    checkpoints = args.checkpoints or ()
    report = rnn.train(model, train_set, test_set, checkpoints=checkpoints)
    os.makedirs(args.out, exist_ok=True)
    model_path = os.path.join(args.out, "model.rnn")
    rnn.save_model(model, model_path)
    for epoch, snapshot in report.snapshots.items():
        rnn.save_model(snapshot, os.path.join(args.out, f"model_ep{epoch}.rnn"))
    report_path = os.path.join(args.out, "train_report.csv")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss\n")
        for epoch, loss in enumerate(report.losses, start=1):
            fh.write(f"{epoch},{loss:.8e}\n")
    history_path = os.path.join(args.out, "test_history.csv")
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,test_misclassification\n")
        for epoch, err in report.test_history:
            fh.write(f"{epoch},{err:.6f}\n")
    final_err = report.test_history[-1][1] if report.test_history else math.nan
    print(f"wrote {model_path}; final loss {report.losses[-1] if report.losses else math.nan:.3e}; "
          f"test misclassification {final_err}")
    return 0


def cmd_extract(args) -> int:
    model = rnn.load_model(args.model)
    trace_set = ds.read_dataset(args.traces)
    train_set = ds.read_dataset(args.train) if args.train else trace_set
    traces = rnn.record_traces(model, trace_set)
    cfg = ex.ExtractionConfig(max_iterations=args.max_iterations)
    machine = ex.extract(traces, cfg, alphabet=model.alphabet)
    machine.initial_state = ex.choose_initial_state(machine, train_set)
    os.makedirs(args.out, exist_ok=True)
    meta_path = os.path.join(args.out, "extracted.meta")
    ex.write_extraction_meta(machine, meta_path)
    if not machine.deterministic and not args.force:
        print(f"extraction stayed nondeterministic after {machine.iterations} "
              f"iterations; rerun with --force for a majority projection "
              f"(metadata in {meta_path})", file=sys.stderr)
        return 1
    projected = fa.minimize(ex.to_fsa(machine, force=not machine.deterministic))
    fsa_path = os.path.join(args.out, "extracted.fsa")
    dot_path = os.path.join(args.out, "extracted.dot")
    fa.write_fsa(projected, fsa_path)
    with open(dot_path, "w", encoding="utf-8") as fh:
        fh.write(fa.to_dot(projected))
    print(f"wrote {fsa_path} ({len(projected.states)} states, "
          f"deterministic={machine.deterministic})")
    return 0


# ---------------------------------------------------------------------------
# compare / select


def cmd_compare(args) -> int:
    alphabet = _parse_alphabet(args.alphabet)
    machine_a = load_target(args.machine_a, alphabet)
    machine_b = load_target(args.machine_b, alphabet)
    report = dd.dissimilarity(machine_a, machine_b, n_samples=args.samples,
                              seed=args.seed, max_len=args.max_len)
    print(dd.report_text(report), end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dd.REPORT_CSV_HEADER + "\n" + dd.report_csv_row(report) + "\n")
    return 0


def cmd_select(args) -> int:
    if len(args.machines) < 2:
        print("select needs at least two machine files", file=sys.stderr)
        return 2
    alphabet = _parse_alphabet(args.alphabet)
    machines = [load_target(path, alphabet) for path in args.machines]
    matrix = dd.pairwise_matrix(machines, n_samples=args.samples, seed=args.seed,
                                max_len=args.max_len)
    os.makedirs(args.out, exist_ok=True)
    matrix_path = os.path.join(args.out, "matrix.csv")
    with open(matrix_path, "w", encoding="utf-8") as fh:
        fh.write(dd.matrix_csv(matrix))
    try:
        best = dd.select_representative(matrix)
    except ValueError as exc:
        print(f"selection failed: {exc}", file=sys.stderr)
        return 1
    print(f"representative: {args.machines[best]} (index {best})")
    if args.target:
        target = load_target(args.target, alphabet)
        for path, machine in zip(args.machines, machines):
            delta = dd.dissimilarity(machine, target, n_samples=args.samples,
                                     seed=args.seed, max_len=args.max_len).delta
            print(f"delta to target: {path}: "
                  f"{'inf' if delta == math.inf else f'{float(delta):.6f}'}")
    print(f"wrote {matrix_path}")
    return 0


# ---------------------------------------------------------------------------
# grid


def _cell_name(cell: str, hidden: int, dropout: float, train_size: int, seed: int) -> str:
    return f"{cell}_n{hidden}_d{dropout}_tr{train_size}_s{seed}"


def run_grid_cell(spec: ExperimentSpec,
                  cell_cfg: tuple[str, int, float, int, int]) -> list[RunRecord]:
    """Train one configuration, extract and score at every checkpoint.

    Failures are captured per checkpoint; the caller always receives one
    record per checkpoint."""
    cell, hidden, dropout, train_size, seed = cell_cfg
    name = _cell_name(*cell_cfg)
    cell_dir = os.path.join(spec.out_dir, name)
    os.makedirs(cell_dir, exist_ok=True)
    base = dict(cell=cell, hidden=hidden, dropout=dropout,
                train_size=train_size, seed=seed)
    snapshot = dict(base, target=spec.target, learning_rate=spec.learning_rate,
                    min_len=spec.min_len, max_len=spec.max_len,
                    test_size=spec.test_size, samples=spec.samples,
                    max_iterations=spec.max_iterations)
    started = time.monotonic()

    def make_record(checkpoint: int, status: str) -> RunRecord:
        return RunRecord(status=status, checkpoint=checkpoint,
                         config_snapshot=dict(snapshot), **base)

    alphabet = _parse_alphabet(spec.alphabet)
    records: list[RunRecord] = []
    try:
        target = load_target(spec.target, alphabet)
        train_set = ds.sample_strings(target, ds.SamplerConfig(
            count=train_size, min_len=spec.min_len, max_len=spec.max_len,
            seed=derive_seed(seed, f"{name}-train")))
        test_set = ds.sample_strings(target, ds.SamplerConfig(
            count=spec.test_size, min_len=spec.min_len, max_len=spec.max_len,
            seed=derive_seed(seed, f"{name}-test")),
            exclude=set(train_set.words()))
        cfg = rnn.ModelConfig(
            cell=cell, hidden_size=hidden, input_size=len(alphabet),
            dropout=dropout, epochs=max(spec.checkpoints),
            learning_rate=spec.learning_rate, seed=seed)
        model = rnn.RnnModel.initialize(cfg, alphabet)
        report = rnn.train(model, train_set, test_set, checkpoints=spec.checkpoints,
                           eval_every=0, time_limit=spec.time_limit)
    except Exception:
        return [make_record(checkpoint, "error") for checkpoint in spec.checkpoints]

    for checkpoint in spec.checkpoints:
        record = make_record(checkpoint, "ok")
        records.append(record)
        if checkpoint not in report.snapshots:
            record.status = "timeout" if report.timed_out else "error"
            continue
        if time.monotonic() - started > spec.time_limit:
            record.status = "timeout"
            continue
        snapshot_model = report.snapshots[checkpoint]
        record.train_loss = report.losses[checkpoint - 1]
        record.misclassification = rnn.evaluate(snapshot_model, test_set)
        model_path = os.path.join(cell_dir, f"model_ep{checkpoint}.rnn")
        rnn.save_model(snapshot_model, model_path)
        record.model_path = model_path
        try:
            traces = rnn.record_traces(snapshot_model, train_set)
            machine = ex.extract(
                traces, ex.ExtractionConfig(max_iterations=spec.max_iterations),
                alphabet=alphabet)
            machine.initial_state = ex.choose_initial_state(machine, train_set)
            record.deterministic = machine.deterministic
            record.iterations = machine.iterations
            record.states = machine.ssm.n_states
            ex.write_extraction_meta(
                machine, os.path.join(cell_dir, f"extracted_ep{checkpoint}.meta"))
            projected = fa.minimize(ex.to_fsa(machine, force=not machine.deterministic))
            fsa_path = os.path.join(cell_dir, f"extracted_ep{checkpoint}.fsa")
            dot_path = os.path.join(cell_dir, f"extracted_ep{checkpoint}.dot")
            fa.write_fsa(projected, fsa_path)
            with open(dot_path, "w", encoding="utf-8") as fh:
                fh.write(fa.to_dot(projected))
            record.fsa_path = fsa_path
            record.dot_path = dot_path
            delta = dd.dissimilarity(
                projected, target, n_samples=spec.samples,
                seed=derive_seed(seed, f"{name}-delta")).delta
            record.delta = float(delta) if delta != math.inf else math.inf
        except Exception:
            record.status = "error"
        with open(os.path.join(cell_dir, f"record_ep{checkpoint}.txt"), "w",
                  encoding="utf-8") as fh:
            for key, value in snapshot.items():
                fh.write(f"{key}: {value}\n")
            fh.write(f"checkpoint: {checkpoint}\nstatus: {record.status}\n"
                     f"test_misclassification: {record.misclassification}\n"
                     f"deterministic: {record.deterministic}\n"
                     f"delta: {record.delta}\n")
    return records


def _grid_cell_job(payload):
    return run_grid_cell(*payload)


def run_grid(spec: ExperimentSpec) -> list[RunRecord]:
    """Run every grid cell (optionally on a worker pool) and write the
    summary CSV. Record order follows the cell declaration order."""
    cells = spec.grid_cells()
    os.makedirs(spec.out_dir, exist_ok=True)
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            per_cell = list(pool.map(_grid_cell_job, [(spec, c) for c in cells]))
    else:
        per_cell = [run_grid_cell(spec, c) for c in cells]
    records = [record for cell_records in per_cell for record in cell_records]
    summary_path = os.path.join(spec.out_dir, "summary.csv")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(SUMMARY_COLUMNS + "\n")
        for record in records:
            fh.write(record.csv_row() + "\n")
    return records


def cmd_grid(args) -> int:
    if not args.cells or not args.hidden or not args.checkpoints:
        print("grid needs at least one cell kind, hidden size and checkpoint",
              file=sys.stderr)
        return 2
    spec = ExperimentSpec(
        target=args.target, alphabet=args.alphabet,
        cells=args.cells, hidden_sizes=args.hidden, dropouts=args.dropouts,
        train_sizes=args.train_sizes, test_size=args.test_size,
        checkpoints=args.checkpoints, seeds=args.seeds,
        learning_rate=args.lr, min_len=args.min_len, max_len=args.max_len,
        samples=args.samples, max_iterations=args.max_iterations,
        time_limit=args.time_limit, workers=args.workers, out_dir=args.out)
    records = run_grid(spec)
    for record in records:
        delta = "inf" if record.delta == math.inf else (
            "-" if math.isnan(record.delta) else f"{record.delta:.4f}")
        print(f"{record.status:7s} {_cell_name(record.cell, record.hidden, record.dropout, record.train_size, record.seed)}"
              f" ep={record.checkpoint} err={record.misclassification if not math.isnan(record.misclassification) else '-'}"
              f" det={str(record.deterministic).lower()} delta={delta}")
    print(f"summary: {os.path.join(spec.out_dir, 'summary.csv')}")
    return 0 if all(r.status == "ok" for r in records) else 1


# ---------------------------------------------------------------------------
# Argument plumbing


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            key, sep, value = ln.partition(":")
            if not sep:
                raise ValueError(f"malformed config line {ln!r}")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if not getattr(args, "config", None):
        return
    for key, raw in _read_config_file(args.config).items():
        if not hasattr(args, key):
            continue
        default = parser.get_default(key)
        if getattr(args, key) != default:
            continue  # explicit flag wins
        if isinstance(default, bool):
            value: object = raw.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            value = int(raw)
        elif isinstance(default, float):
            value = float(raw)
        elif isinstance(default, tuple):
            sample = default[0] if default else ""
            caster = {int: _int_list, float: _float_list}.get(type(sample), _str_list)
            value = caster(raw)
        else:
            value = raw
        setattr(args, key, value)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="ruleminer",
        description="Induce finite-state analysis rules from labeled path strings.")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    def common(p, seed=True):
        p.add_argument("--config", help="key:value file supplying flag defaults")
        p.add_argument("--alphabet", default="tps",
                       help="alphabet symbols in one-hot order (default tps)")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen", help="sample a labeled train/test corpus from a target")
    common(p)
    p.add_argument("--target", default=fa.SECURITY_TARGET_PATTERN,
                   help="regex pattern or machine file (default: security analysis)")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--test-count", type=int, default=10000)
    p.add_argument("--min-len", type=int, default=1)
    p.add_argument("--max-len", type=int, default=20)
    p.add_argument("--ratio", type=float, default=0.5,
                   help="positive fraction (default 0.5 for synthetic corpora)")
    p.add_argument("--out", default="gen-out")
    p.set_defaults(func=cmd_gen)
    subparsers["gen"] = p

    p = sub.add_parser("trace", help="trace graph files into a labeled corpus")
    common(p)
    p.add_argument("--asm", nargs="+", required=True, help="graph file(s)")
    p.add_argument("-k", type=int, default=10, help="paths per graph")
    p.add_argument("--target", default=fa.SECURITY_TARGET_PATTERN)
    p.add_argument("--ratio", type=float, default=0.3,
                   help="positive share rare positives are rebalanced up to "
                        "(default 0.3 for traced corpora)")
    p.add_argument("--threshold", type=float, default=0.1,
                   help="Markov under-representation threshold")
    p.add_argument("--out", default="trace-out")
    p.set_defaults(func=cmd_trace)
    subparsers["trace"] = p

    p = sub.add_parser("markov", help="per-state symbol statistics of a corpus")
    common(p, seed=False)
    p.add_argument("--dataset", required=True)
    p.add_argument("--target", default=fa.SECURITY_TARGET_PATTERN)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_markov)
    subparsers["markov"] = p

    p = sub.add_parser("train", help="train a recurrent classifier on a corpus")
    common(p)
    p.add_argument("--train", required=True, help="training dataset file")
    p.add_argument("--test", default="", help="test dataset file")
    p.add_argument("--cell", choices=("gru", "lstm"), default="gru")
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=5000)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--checkpoints", type=_int_list, default=(),
                   help="comma-separated snapshot epochs")
    p.add_argument("--out", default="train-out")
    p.set_defaults(func=cmd_train)
    subparsers["train"] = p

    p = sub.add_parser("extract", help="crystallize a machine out of a trained model")
    common(p, seed=False)
    p.add_argument("--model", required=True)
    p.add_argument("--traces", required=True,
                   help="dataset whose words are traced through the model")
    p.add_argument("--train", default="",
                   help="dataset for initial-state selection (default: --traces)")
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--force", action="store_true",
                   help="project nondeterministic machines by majority outcome")
    p.add_argument("--out", default="extract-out")
    p.set_defaults(func=cmd_extract)
    subparsers["extract"] = p

    p = sub.add_parser("compare", help="sampled dissimilarity of two machines")
    common(p)
    p.add_argument("machine_a")
    p.add_argument("machine_b")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--max-len", type=int, default=30)
    p.add_argument("--out", default="", help="optional CSV output path")
    p.set_defaults(func=cmd_compare)
    subparsers["compare"] = p

    p = sub.add_parser("select", help="pick the representative among machines")
    common(p)
    p.add_argument("machines", nargs="+", help="two or more machine files")
    p.add_argument("--target", default="", help="optional reference machine")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--max-len", type=int, default=30)
    p.add_argument("--out", default="select-out")
    p.set_defaults(func=cmd_select)
    subparsers["select"] = p

    p = sub.add_parser(
        "grid", help="train/extract/score a whole configuration grid",
        description="Summary CSV columns: " + SUMMARY_COLUMNS)
    common(p, seed=False)
    p.add_argument("--target", default=fa.SECURITY_TARGET_PATTERN)
    p.add_argument("--cells", type=_str_list, default=("gru",))
    p.add_argument("--hidden", type=_int_list, default=(4,))
    p.add_argument("--dropouts", type=_float_list, default=(0.0,))
    p.add_argument("--train-sizes", type=_int_list, default=(800,))
    p.add_argument("--test-size", type=int, default=10000)
    p.add_argument("--checkpoints", type=_int_list, default=(500, 1000, 3000, 5000))
    p.add_argument("--seeds", type=_int_list, default=(0,))
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--min-len", type=int, default=1)
    p.add_argument("--max-len", type=int, default=20)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--time-limit", type=float, default=600.0,
                   help="per-cell wall-clock budget in seconds")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="grid-out")
    p.set_defaults(func=cmd_grid)
    subparsers["grid"] = p

    return parser, subparsers


def main(argv: list[str] | None = None) -> int:
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    _apply_config_file(args, subparsers[args.command])
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
