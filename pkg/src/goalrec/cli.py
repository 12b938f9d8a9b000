"""Command-line pipeline: generate data, train, evaluate, infer, recommend.

Metrics go to stdout as ``name<TAB>value`` lines; a readable table and
diagnostics go to stderr. A flat ``key=value`` file given with ``--config``
supplies defaults for any flag (dashes become underscores); explicit flags win.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .domain import Semester
from .encode import ModelKind, Threshold
from .evaluate import goal_match_rates, grade_prediction_metrics, majority_baseline, prereq_accuracy
from .inference import (TOP_K, CandidateFilterContext, course_availability, infer_prereqs, read_prereq_pairs,
                        recommend)
from .net import init_params
from .optim import TrainConfig, finite_diff_check, train
from .persist import atomic_write, load_model, save_model
from .pipeline import candidate_pools, load_dataset, prepare
from .synth import SynthConfig, generate, random_recall_baseline

SYNTH_KEYS = tuple(f for f in SynthConfig.__dataclass_fields__ if f != "dag_edges")


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def emit(records, title: str = "") -> None:
    """Records to stdout and an aligned table to stderr."""
    records = list(records)
    for name, value in records:
        print(f"{name}\t{_fmt(value)}")
    if records:
        width = max(len(n) for n, _ in records)
        if title:
            print(title, file=sys.stderr)
        for name, value in records:
            print(f"  {name:<{width}}  {_fmt(value)}", file=sys.stderr)


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6g}"
    return str(value)


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise UsageError(f"{args.command}: missing " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _pairs(path):
    return read_prereq_pairs(path) if path else []


# subcommands

def cmd_gen(args, extra: dict) -> None:
    _need(args, "out")
    values = {k: v for k, v in extra.items() if k in SYNTH_KEYS}
    for key in SYNTH_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = str(flag)
    config = SynthConfig.from_mapping(values)
    data = generate(config)
    os.makedirs(args.out, exist_ok=True)
    atomic_write(os.path.join(args.out, "enrollments.csv"), data.enrollments_csv())
    atomic_write(os.path.join(args.out, "prereq_pairs.csv"), data.prereq_csv())
    emit([("students", len(data.dataset.students)), ("records", len(data.dataset.records)),
          ("courses", len(data.courses)), ("prereq_pairs", len(data.dag))], "generated")


def _train_config(args) -> TrainConfig:
    return TrainConfig(learning_rate=args.learning_rate, lr_decay=args.lr_decay, weight_decay=args.weight_decay,
                       clip_norm=args.clip_norm, dropout_rate=args.dropout, batch_size=args.batch_size,
                       epochs=args.epochs, seed=args.seed, hidden_dim=args.hidden, side_dim=args.side_dim)


def cmd_train(args, extra: dict) -> None:
    _need(args, "data", "out")
    threshold = Threshold.parse(args.threshold)
    dataset, vocab = load_dataset(args.data, args.min_enrollments)
    prep = prepare(dataset, vocab, args.split, threshold)
    config = _train_config(args)

    def progress(stats):
        print(f"epoch {stats.epoch:3d}  train {stats.train_loss:.4f}  val {stats.val_loss:.4f}  "
              f"acc {stats.val_accuracy:.2f}", file=sys.stderr)

    result = train(ModelKind(int(args.model)), prep.train, prep.val, config, vocab.n, vocab.m, vocab.k,
                   threshold, progress=progress if args.verbose else None)
    save_model(result.model, vocab, args.out)
    best = result.history[result.best_epoch - 1] if result.best_epoch else None
    records = [("n_courses", vocab.n), ("n_majors", vocab.k), ("n_train", len(prep.train)),
               ("n_val", len(prep.val)), ("n_test", len(prep.test)), ("best_epoch", result.best_epoch)]
    if best is not None:
        records += [("train_loss", best.train_loss), ("val_loss", best.val_loss),
                    ("val_letter_accuracy", best.val_accuracy)]
    emit(records, "training")


def cmd_eval_grades(args, extra: dict) -> None:
    _need(args, "model_file", "data")
    model, vocab = load_model(args.model_file)
    dataset, _ = load_dataset(args.data, vocab=vocab)
    prep = prepare(dataset, vocab, args.split, model.threshold)
    metrics = grade_prediction_metrics(model, prep.test)
    base = majority_baseline(prep.test, prep.train, vocab.m)
    emit(metrics.records("model_") + base.records("baseline_") + [("n_letter", metrics.n_letter),
                                                                  ("n_pnp", metrics.n_pnp)], "grade prediction")


def cmd_eval_prereq(args, extra: dict) -> None:
    _need(args, "model_file", "prereqs")
    model, vocab = load_model(args.model_file)
    pairs = [p for p in _pairs(args.prereqs)
             if p.target in vocab.course_index and p.prerequisite in vocab.course_index]
    if not pairs:
        raise ValueError("no prerequisite pair has both courses in the model vocabulary")
    metrics, _ = prereq_accuracy(model, pairs, vocab, top_k=args.top_k)
    pools = candidate_pools(vocab, pairs, model.threshold)
    chance = random_recall_baseline(pools, pairs, args.top_k, trials=args.trials, seed=args.seed)
    emit([("pair_accuracy", metrics.pair_accuracy), ("target_accuracy", metrics.target_accuracy),
          ("random_pair_accuracy", 100.0 * chance), ("n_pairs", metrics.n_pairs),
          ("n_targets", metrics.n_targets)], "prerequisite recovery")


def cmd_eval_goal(args, extra: dict) -> None:
    _need(args, "model_file", "data", "prereqs", "target_semester", "rec_semester")
    model, vocab = load_model(args.model_file)
    dataset, _ = load_dataset(args.data, vocab=vocab)
    pairs = _pairs(args.prereqs)
    if args.targets:
        targets = [vocab.find(t) for t in args.targets.split(",")]
    else:
        targets = sorted({p.target for p in pairs if p.target in vocab.course_index}, key=lambda c: c.key)
    goal = Threshold.parse(args.goal) if args.goal else model.threshold
    report = goal_match_rates(model, dataset, vocab, targets, Semester.parse(args.target_semester),
                              Semester.parse(args.rec_semester), goal, pairs, args.top_k, workers=args.threads)
    s = report.summary
    emit([("pos_rate", s.pos_rate), ("neg_rate", s.neg_rate), ("n_pos", s.n_pos), ("n_neg", s.n_neg)],
         "goal-based recommendation")
    for course, m in report.per_course.items():
        if m is not None:
            key = course.id.replace(" ", "_")
            emit([(f"{key}.pos_rate", m.pos_rate), (f"{key}.neg_rate", m.neg_rate)])


def _print_ranked(recs) -> None:
    for rank, r in enumerate(recs, 1):
        print(f"{rank}\t{r.course.id}\t{r.probability:.6f}")
        print(f"  {rank:2d}. {r.course.id:<28} {r.probability:.4f}", file=sys.stderr)


def cmd_infer_prereq(args, extra: dict) -> None:
    _need(args, "model_file", "target")
    model, vocab = load_model(args.model_file)
    target = vocab.find(args.target)
    ctx = CandidateFilterContext(tuple(_pairs(args.prereqs)), target, model.threshold)
    _print_ranked(infer_prereqs(model, target, vocab, ctx, top_k=args.top_k))


def cmd_recommend(args, extra: dict) -> None:
    _need(args, "model_file", "data", "student", "target")
    model, vocab = load_model(args.model_file)
    dataset, _ = load_dataset(args.data, vocab=vocab)
    student = dataset.student(args.student)
    target = vocab.find(args.target)
    if args.semester:
        semester = Semester.parse(args.semester)
    else:
        semester = student.semesters[-1].semester.next_regular()
    history = student.before(semester).semesters
    goal = Threshold.parse(args.goal) if args.goal else model.threshold
    ctx = CandidateFilterContext(tuple(_pairs(args.prereqs)), target, goal, course_availability(dataset, semester))
    _print_ranked(recommend(model, history, target, goal, ctx, vocab, args.top_k))


def cmd_gradcheck(args, extra: dict) -> None:
    from .encode import EncodedSequence, MaskGroup
    records = []
    worst = 0.0
    for kind in (ModelKind.MODEL1, ModelKind.MODEL2, ModelKind.MODEL3):
        err = 0.0
        for seed in range(args.seeds):
            rng = np.random.default_rng(seed)
            model = init_params(kind, args.n, 2, args.k, args.d, seed=seed)
            model = model.replace_params({k: v + 0.1 * rng.standard_normal(v.shape) for k, v in model.params.items()})
            seqs = [_random_sequence(rng, args.n, args.k, args.steps, EncodedSequence, MaskGroup) for _ in range(2)]
            err = max(err, finite_diff_check(model, seqs))
        worst = max(worst, err)
        records.append((f"model{int(kind)}_max_rel_error", err))
    records.append(("tolerance", args.tolerance))
    emit(records, "gradient check")
    if worst >= args.tolerance:
        raise RuntimeError(f"gradient check failed: {worst:.3g} >= {args.tolerance:g}")


def _random_sequence(rng, n, k, T, EncodedSequence, MaskGroup, m=2):
    w = m + 2
    grades = np.zeros((T, w * n))
    courses = (rng.random((T, n)) < 0.6).astype(float)
    courses[:, 0] = 1.0
    masks = np.zeros((T, n), dtype=np.int8)
    for t in range(T):
        for i in np.flatnonzero(courses[t]):
            if rng.random() < 0.25:
                grades[t, i * w + m + rng.integers(2)] = 1.0
                masks[t, i] = MaskGroup.PASS_NO_PASS
            else:
                grades[t, i * w + rng.integers(m)] = 1.0
                masks[t, i] = MaskGroup.LETTER
    next_courses = np.zeros_like(courses)
    next_courses[:-1] = courses[1:]
    labels = np.zeros_like(grades)
    labels[:-1] = grades[1:]
    label_masks = np.zeros_like(masks)
    label_masks[:-1] = masks[1:]
    majors = (rng.random((T, k)) < 0.5).astype(float)
    return EncodedSequence("rand", grades, next_courses, majors, labels, label_masks)


COMMANDS = {
    "gen": cmd_gen, "train": cmd_train, "eval-grades": cmd_eval_grades, "eval-prereq": cmd_eval_prereq,
    "eval-goal": cmd_eval_goal, "infer-prereq": cmd_infer_prereq, "recommend": cmd_recommend,
    "gradcheck": cmd_gradcheck,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="goalrec", description="Grade prediction and goal-based course recommendation.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value file supplying flag defaults")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--top-k", type=int, default=TOP_K)
    model_file = _Parser(add_help=False)
    model_file.add_argument("--model-file")
    data = _Parser(add_help=False)
    data.add_argument("--data", help="enrollments CSV")
    split = _Parser(add_help=False)
    split.add_argument("--split", default="2015:Fall,2016:Spring,2017:Spring",
                       help="training end, validation and test semesters")

    p = sub.add_parser("gen", parents=[common], help="write a synthetic dataset")
    p.add_argument("--out")
    for key in SYNTH_KEYS:
        if key != "seed":
            p.add_argument("--" + key.replace("_", "-"), dest=key)

    p = sub.add_parser("train", parents=[common, data, split], help="train a grade model")
    p.add_argument("--model", choices=("1", "2", "3"), default="2")
    p.add_argument("--threshold", default="B")
    p.add_argument("--out")
    p.add_argument("--min-enrollments", type=int, default=20)
    defaults = TrainConfig()
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    p.add_argument("--lr-decay", type=float, default=defaults.lr_decay)
    p.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    p.add_argument("--clip-norm", type=float, default=defaults.clip_norm)
    p.add_argument("--dropout", type=float, default=defaults.dropout_rate)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--hidden", type=int, default=defaults.hidden_dim)
    p.add_argument("--side-dim", type=int, default=defaults.side_dim)
    p.add_argument("--verbose", action="store_true", help="per-epoch progress on stderr")

    sub.add_parser("eval-grades", parents=[common, model_file, data, split], help="grade prediction metrics")

    p = sub.add_parser("eval-prereq", parents=[common, model_file], help="prerequisite recovery metrics")
    p.add_argument("--prereqs", help="prerequisite pairs CSV")
    p.add_argument("--trials", type=int, default=2000)

    p = sub.add_parser("eval-goal", parents=[common, model_file, data], help="goal-based match rates")
    p.add_argument("--prereqs")
    p.add_argument("--target-semester")
    p.add_argument("--rec-semester")
    p.add_argument("--goal")
    p.add_argument("--targets", help="comma-separated courses (default: every listed target)")

    p = sub.add_parser("infer-prereq", parents=[common, model_file], help="rank likely prerequisites")
    p.add_argument("--target")
    p.add_argument("--prereqs")

    p = sub.add_parser("recommend", parents=[common, model_file, data], help="recommend preparation courses")
    p.add_argument("--student")
    p.add_argument("--target")
    p.add_argument("--goal")
    p.add_argument("--prereqs")
    p.add_argument("--semester", help="semester to recommend for (default: after the last one on record)")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--steps", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def _with_config(parser, argv):
    """Parse once to find the subcommand and config, then reparse with the
    config values installed as defaults so explicit flags override them."""
    args = parser.parse_args(argv)
    if not args.config:
        return args, {}
    values = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults, extra = {}, {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None or key in ("config", "help"):
            if args.command == "gen" and key in SYNTH_KEYS:
                extra[key] = raw
                continue
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(raw) if action.type else raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv), extra


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = _with_config(parser, argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        COMMANDS[args.command](args, extra)
        return 0
    except UsageError as exc:
        print(f"goalrec: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"goalrec: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
