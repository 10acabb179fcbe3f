"""Command line front end.

Subcommands: make-data, train, fit-dknn, attack, sweep, report. The dataset
root defaults to the KNNADV_DATA environment variable (then the current
directory); attack flags mirror the AttackConfig fields and a --config file
provides defaults that the flags override.
"""

import argparse
import os
import sys

import numpy as np

from knnadv import corpus, datasets, dknn, evaluation, knn, nn
from knnadv.attacks import AttackConfig, load_config


def _data_root(args) -> str:
    return args.data or os.environ.get("KNNADV_DATA", ".")


def _load_pools(args):
    root = _data_root(args)
    train = datasets.load_idx(os.path.join(root, corpus.TRAIN_IMAGES),
                              os.path.join(root, corpus.TRAIN_LABELS))
    pool = datasets.load_idx(os.path.join(root, corpus.TEST_IMAGES),
                             os.path.join(root, corpus.TEST_LABELS))
    return train, pool


def _load_splits(args):
    train, pool = _load_pools(args)
    if getattr(args, "train_limit", 0):
        train = train.subset(np.arange(min(args.train_limit, train.n)))
    calib, test = datasets.split_calibration(
        pool, datasets.SplitSpec(args.calib_per_class, args.split_seed))
    if getattr(args, "limit", 0):
        test = test.subset(np.arange(min(args.limit, test.n)))
    return train, calib, test


def _add_data_args(p, with_split=True):
    p.add_argument("--data", help="dataset root (default: $KNNADV_DATA or .)")
    p.add_argument("--train-limit", type=int, default=0,
                   help="use only the first N training samples")
    if with_split:
        p.add_argument("--calib-per-class", type=int, default=20)
        p.add_argument("--split-seed", type=int, default=1)
        p.add_argument("--limit", type=int, default=0,
                       help="attack only the first N test samples")


def _add_attack_args(p):
    p.add_argument("--config", help="attack config file (key = value lines)")
    p.add_argument("--norm", choices=["l2", "linf"])
    p.add_argument("--eps", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--iters", type=int, dest="max_iterations")
    p.add_argument("--bs-steps", type=int, dest="binary_search_steps")
    p.add_argument("--m", type=int)
    p.add_argument("--seed", type=int)


def _attack_config(args) -> AttackConfig:
    cfg = load_config(args.config) if args.config else AttackConfig()
    overrides = {name: getattr(args, name)
                 for name in ("norm", "eps", "alpha", "max_iterations",
                              "binary_search_steps", "m", "seed")
                 if getattr(args, name, None) is not None}
    iters = overrides.get("max_iterations")
    if iters is not None and max(cfg.check_iterations, default=0) > iters:
        # keep the same relative check schedule under the new budget
        old_max = cfg.max_iterations
        overrides["check_iterations"] = tuple(
            sorted({max(1, t * iters // old_max) for t in cfg.check_iterations}))
    return cfg.with_overrides(**overrides) if overrides else cfg


def _hidden(text):
    return tuple(int(t) for t in text.split(","))


def cmd_make_data(args):
    corpus.write_corpus(args.out_dir, n_train=args.n_train, n_test=args.n_test,
                        seed=args.seed)
    print(f"wrote corpus to {args.out_dir}")
    return 0


def cmd_train(args):
    train, _ = _load_pools(args)
    if args.train_limit:
        train = train.subset(np.arange(min(args.train_limit, train.n)))
    spec = nn.NetworkSpec(train.dim, args.hidden)
    params = nn.train_network(spec, train,
                              nn.TrainConfig(args.epochs, args.batch,
                                             args.lr, args.seed))
    nn.persist_params(params, args.out)
    acc = float(np.mean(nn.predict_batch(params, train.samples.astype(np.float64))
                        == train.labels))
    print(f"saved weights to {args.out} (train accuracy {acc:.4f})")
    return 0


def cmd_fit_dknn(args):
    train, calib, test = _load_splits(args)
    params = nn.restore_params(args.network)
    model = dknn.dknn_fit(params, train, calib, args.k)
    dknn.save_scores(model, args.scores_out)
    if test.n:
        labels = dknn.dknn_labels(model, test.samples.astype(np.float64))
        acc = float(np.mean(labels == test.labels))
        print(f"saved {len(model.calibration_scores)} calibration scores to "
              f"{args.scores_out} (test accuracy {acc:.4f})")
    else:
        print(f"saved {len(model.calibration_scores)} calibration scores to "
              f"{args.scores_out}")
    return 0


def _build_models(args, train, calib, classifier):
    params = None
    if classifier in ("dknn", "net") or args.network:
        if not args.network:
            raise SystemExit("this classifier needs --network WEIGHTS")
        params = nn.restore_params(args.network)
    km = knn.KnnModel(train.samples, train.labels, args.k, metric=args.metric)
    dm = (dknn.dknn_fit(params, train, calib, args.k)
          if params is not None else None)
    return evaluation.ExperimentModels(train, km, dm, params)


def cmd_attack(args):
    train, calib, test = _load_splits(args)
    models = _build_models(args, train, calib, args.classifier)
    cfg = _attack_config(args)
    rep = evaluation.evaluate_attack(models, args.attack, args.classifier,
                                     test, cfg)
    print(f"{args.attack}-{args.classifier} norm={cfg.norm} eps={cfg.eps} "
          f"n={len(rep.records)}")
    print(f"attack accuracy      {rep.attack_accuracy:.4f}")
    print(f"mean l2 distortion   {rep.mean_l2_distortion:.4f}")
    if args.classifier == "dknn":
        print(f"mean credibility     {rep.mean_credibility:.4f}")
    if args.records_out:
        evaluation.write_csv(args.records_out,
                             ["index", "success", "l2", "linf", "credibility",
                              "iterations", "final_c"],
                             [(r["index"], r["success"], r["l2"], r["linf"],
                               r["credibility"], r["iterations"], r["final_c"])
                              for r in rep.records])
        print(f"wrote {args.records_out}")
    return 0


def cmd_sweep(args):
    train, calib, test = _load_splits(args)
    models = _build_models(args, train, calib, "dknn")
    cfg = _attack_config(args)
    eps_list = sorted(float(t) for t in args.eps_list.split(","))
    points, _ = evaluation.epsilon_sweep(models, args.attack, test, eps_list,
                                         cfg, warm_start=not args.no_warm_start)
    evaluation.write_csv(args.out, ["eps", "attack_accuracy",
                                    "mean_credibility"],
                         [(p.eps, p.attack_accuracy, p.mean_credibility)
                          for p in points])
    for p in points:
        print(f"eps={p.eps:g} accuracy={p.attack_accuracy:.4f} "
              f"credibility={p.mean_credibility:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_report(args):
    overrides = {}
    if args.out_dir:
        overrides["out_dir"] = args.out_dir
    if args.data:
        overrides["data_root"] = args.data
    status, out_dir = evaluation.run_experiment(args.config, overrides)
    print(f"experiment {'complete' if status == 0 else 'failed'}; "
          f"outputs in {out_dir}")
    return status


def build_parser():
    parser = argparse.ArgumentParser(prog="knnadv")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="generate the digit corpus")
    p.add_argument("out_dir")
    p.add_argument("--n-train", type=int, default=10000)
    p.add_argument("--n-test", type=int, default=1200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("train", help="train the base network")
    _add_data_args(p, with_split=False)
    p.add_argument("--out", default="network.bin")
    p.add_argument("--hidden", type=_hidden, default=(256, 128, 64, 10),
                   help="comma-separated layer widths")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit-dknn", help="fit the deep kNN and save its "
                                        "calibration scores")
    _add_data_args(p)
    p.add_argument("--network", required=True)
    p.add_argument("--k", type=int, default=75)
    p.add_argument("--scores-out", default="calibration-scores.txt")
    p.set_defaults(func=cmd_fit_dknn)

    p = sub.add_parser("attack", help="run one attack over the test split")
    p.add_argument("attack", choices=["mean", "naive", "gradient", "baseline"])
    p.add_argument("classifier", choices=["knn", "dknn", "net"])
    _add_data_args(p)
    p.add_argument("--network")
    p.add_argument("--k", type=int, default=75)
    p.add_argument("--metric", choices=["euclidean", "cosine"],
                   default="euclidean")
    _add_attack_args(p)
    p.add_argument("--records-out", help="per-sample results CSV")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep", help="linf epsilon sweep against the deep kNN")
    _add_data_args(p)
    p.add_argument("--network", required=True)
    p.add_argument("--k", type=int, default=75)
    p.add_argument("--metric", choices=["euclidean", "cosine"],
                   default="euclidean")
    p.add_argument("--attack", choices=["gradient", "baseline"],
                   default="gradient")
    p.add_argument("--eps-list", required=True,
                   help="comma-separated epsilons")
    p.add_argument("--no-warm-start", action="store_true")
    p.add_argument("--out", default="sweep.csv")
    _add_attack_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="run a full experiment from a config "
                                      "file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--data")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
