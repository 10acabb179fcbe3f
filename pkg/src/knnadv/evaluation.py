"""Experiment harness: attack batches of test samples, aggregate the metrics,
run epsilon sweeps and credibility analyses, and emit machine-readable
artifacts (CSV + raw f32 blobs + manifest)."""

from dataclasses import dataclass, replace
import os
import struct

import numpy as np

from knnadv import datasets, knn, nn, dknn
from knnadv.attacks import AttackConfig
from knnadv.attacks.heuristic import mean_attack, naive_attack
from knnadv.attacks.gradient import (knn_gradient_attack_batch,
                                     dknn_baseline_attack_batch,
                                     dknn_gradient_attack_batch)

_FMT = "%.9g"


@dataclass
class AttackReport:
    attack: str
    classifier: str
    attack_accuracy: float
    mean_l2_distortion: float   # over successes with delta > 0; nan if none
    mean_credibility: float     # over successes (DkNN only); nan otherwise
    records: list               # per-sample dicts, sorted by sample index


@dataclass
class SweepPoint:
    eps: float
    attack_accuracy: float
    mean_credibility: float


@dataclass
class ExperimentModels:
    """Everything the harness attacks: the train set and fitted classifiers."""
    train: object
    knn_model: object = None
    dknn_model: object = None
    net_params: object = None

    def classify(self, name):
        if name == "knn":
            return lambda X: knn.knn_predict_batch(self.knn_model, np.atleast_2d(X))
        if name == "dknn":
            return lambda X: dknn.dknn_labels(self.dknn_model, np.atleast_2d(X))
        if name == "net":
            return lambda X: nn.predict_batch(self.net_params, np.atleast_2d(X))
        raise ValueError(f"unknown classifier {name!r}")


def run_attack_batch(models: ExperimentModels, attack: str, classifier: str,
                     Z, Y, cfg: AttackConfig, z_init=None):
    """Dispatch one batched attack; returns a list of AttackResult."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    Y = np.atleast_1d(np.asarray(Y, dtype=np.int64))
    if attack == "mean":
        classify = models.classify(classifier)
        single = lambda x: int(classify(x[None, :])[0])
        results = [mean_attack(single, models.train, Z[b], int(Y[b]),
                               steps=cfg.binary_search_steps)
                   for b in range(Z.shape[0])]
    elif attack == "naive":
        if classifier != "knn":
            raise ValueError("the naive attack targets the kNN classifier")
        results = [naive_attack(models.knn_model, Z[b], int(Y[b]),
                                steps=cfg.binary_search_steps)
                   for b in range(Z.shape[0])]
    elif attack == "gradient" and classifier == "knn":
        results = knn_gradient_attack_batch(models.knn_model, Z, Y, cfg)
    elif attack == "gradient" and classifier == "dknn":
        results = dknn_gradient_attack_batch(models.dknn_model, Z, Y, cfg,
                                             z_init=z_init)
    elif attack == "baseline":
        if classifier != "dknn":
            raise ValueError("the baseline attack targets the DkNN classifier")
        results = dknn_baseline_attack_batch(models.dknn_model, Z, Y, cfg,
                                             z_init=z_init)
    else:
        raise ValueError(f"unknown attack {attack!r} on {classifier!r}")
    if classifier == "dknn":
        for r in results:
            if r.credibility is None:
                r.credibility = dknn.dknn_predict(models.dknn_model,
                                                  r.z_hat).credibility
    return results


def _aggregate(attack, classifier, results):
    records = []
    for i, r in enumerate(results):
        records.append(dict(index=i, success=int(r.success),
                            l2=r.l2_distortion, linf=r.linf_distortion,
                            credibility=(np.nan if r.credibility is None
                                         else r.credibility),
                            iterations=r.iterations_used,
                            final_c=(np.nan if r.final_c is None else r.final_c)))
    acc = float(np.mean([not r.success for r in results]))
    dists = [r.l2_distortion for r in results if r.success and r.l2_distortion > 0]
    creds = [r.credibility for r in results
             if r.success and r.credibility is not None]
    return AttackReport(attack, classifier, acc,
                        float(np.mean(dists)) if dists else float("nan"),
                        float(np.mean(creds)) if creds else float("nan"),
                        records)


def evaluate_attack(models: ExperimentModels, attack: str, classifier: str,
                    test, cfg: AttackConfig) -> AttackReport:
    """Attack every test sample and aggregate. Samples the classifier already
    misclassifies count as zero-distortion successes."""
    results = run_attack_batch(models, attack, classifier,
                               test.samples.astype(np.float64), test.labels, cfg)
    return _aggregate(attack, classifier, results)


def epsilon_sweep(models: ExperimentModels, attack: str, test, eps_list,
                  cfg: AttackConfig, warm_start: bool = True):
    """One linf attack per eps (ascending). With warm_start, each run starts
    from the previous solution and a sample that was already defeated keeps
    its old adversarial example whenever the fresh attack fails, which makes
    attack accuracy nonincreasing by construction.

    Returns (sweep points, per-eps result lists).
    """
    if list(eps_list) != sorted(eps_list):
        raise ValueError("eps_list must be ascending")
    Z = test.samples.astype(np.float64)
    Y = test.labels
    points, all_results = [], []
    prev = None
    for eps in eps_list:
        run_cfg = replace(cfg, norm="linf", eps=float(eps))
        z_init = None
        if warm_start and prev is not None:
            z_init = np.array([r.z_hat for r in prev])
        results = run_attack_batch(models, attack, "dknn", Z, Y, run_cfg,
                                   z_init=z_init)
        if warm_start and prev is not None:
            results = [old if (old.success and not new.success) else new
                       for old, new in zip(prev, results)]
        rep = _aggregate(attack, "dknn", results)
        points.append(SweepPoint(float(eps), rep.attack_accuracy,
                                 rep.mean_credibility))
        all_results.append(results)
        prev = results
    return points, all_results


def credibility_report(dknn_model, clean, adversarial, threshold_grid,
                       bins: int = 20):
    """Threshold tradeoff table plus credibility histograms.

    Returns (rows, clean_hist, adv_hist): rows are tuples of (threshold,
    clean_accuracy_after_reject, adversarial_pass_rate); histograms have
    `bins` uniform bins on [0, 1].
    """
    preds = dknn.dknn_predict_batch(dknn_model, clean.samples.astype(np.float64))
    clean_cred = np.array([p.credibility for p in preds])
    correct = np.array([p.label for p in preds]) == clean.labels
    adv_cred = np.array([r.credibility for r in adversarial if r.success])
    rows = []
    for t in threshold_grid:
        acc = float(np.mean(correct & (clean_cred >= t)))
        passed = float(np.mean(adv_cred >= t)) if adv_cred.size else float("nan")
        rows.append((float(t), acc, passed))
    edges = np.linspace(0.0, 1.0, bins + 1)
    clean_hist = np.histogram(clean_cred, bins=edges)[0]
    adv_hist = np.histogram(adv_cred, bins=edges)[0]
    return rows, clean_hist, adv_hist


# ---------------------------------------------------------------------------
# artifact writers

def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_FMT % v if isinstance(v, float) else str(v)
                             for v in row) + "\n")


def write_f32_blob(path, X) -> None:
    """Header: little-endian u32 count and dim, then f32 rows."""
    X = np.asarray(X, dtype="<f4")
    with open(path, "wb") as f:
        f.write(struct.pack("<II", X.shape[0], X.shape[1]))
        f.write(np.ascontiguousarray(X).tobytes())


def read_f32_blob(path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(8)
        if len(head) != 8:
            raise ValueError(f"{path}: truncated blob header")
        count, dim = struct.unpack("<II", head)
        data = np.frombuffer(f.read(4 * count * dim), dtype="<f4")
        if data.size != count * dim:
            raise ValueError(f"{path}: truncated blob payload")
    return data.reshape(count, dim).copy()


def write_neighbor_dump(path, dknn_model, Z) -> None:
    """Per adversarial example and layer: the k neighbor indices and labels."""
    rows = []
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    reps = nn.forward_all_batch(dknn_model.params, Z)
    for lam, index in enumerate(dknn_model.layer_indexes):
        idx, _ = knn.knn_neighbors_batch(index, reps[lam])
        for b in range(Z.shape[0]):
            for rank in range(idx.shape[1]):
                j = int(idx[b, rank])
                rows.append((b, lam, rank, j, int(index.labels[j])))
    rows.sort()
    write_csv(path, ["sample", "layer", "rank", "neighbor", "label"], rows)


# ---------------------------------------------------------------------------
# experiment runner

_EXP_KEYS = {
    "data_root": str, "dataset": str, "train_limit": int, "test_limit": int,
    "calibration_per_class": int, "split_seed": int,
    "k": int, "metric": str,
    "network": str, "hidden": lambda s: tuple(int(t) for t in s.split()),
    "epochs": int, "batch": int, "train_lr": float, "net_seed": int,
    "attacks": lambda s: tuple(s.split()),
    "out_dir": str, "dump_neighbors": int,
    "sweep_eps": lambda s: tuple(float(t) for t in s.split()),
    "sweep_attack": str,
    "cred_thresholds": lambda s: tuple(float(t) for t in s.split()),
    # AttackConfig fields
    "norm": str, "eps": float, "c_init": float, "alpha": float, "m": int,
    "max_iterations": int,
    "check_iterations": lambda s: tuple(int(t) for t in s.split()),
    "binary_search_steps": int, "learning_rate": float, "seed": int,
}

_DEFAULTS = dict(dataset="idx", train_limit=0, test_limit=0,
                 calibration_per_class=20, split_seed=1, k=75,
                 metric="euclidean", network="", hidden=(256, 128, 64, 10),
                 epochs=20, batch=64, train_lr=0.1, net_seed=0,
                 attacks=(), out_dir="out", dump_neighbors=0,
                 sweep_eps=(), sweep_attack="gradient",
                 cred_thresholds=())


def load_experiment_config(path) -> dict:
    cfg = dict(_DEFAULTS)
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, raw = (p.strip() for p in line.split("=", 1))
            if key not in _EXP_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            cfg[key] = _EXP_KEYS[key](raw)
    return cfg


def _attack_config(cfg: dict) -> AttackConfig:
    kw = {k: cfg[k] for k in ("norm", "eps", "c_init", "alpha", "m",
                              "max_iterations", "check_iterations",
                              "binary_search_steps", "learning_rate", "seed")
          if k in cfg}
    return AttackConfig(**kw)


def load_experiment_data(cfg: dict):
    """Returns (train, calibration, test) per the experiment config."""
    if cfg["dataset"] == "blobs":
        train = datasets.synth_blobs(cfg.get("seed", 0), 100, 3, 8, 0.12)
        pool = datasets.synth_blobs(cfg.get("seed", 0) + 1, 40, 3, 8, 0.12)
    else:
        root = cfg.get("data_root") or os.environ.get("KNNADV_DATA", ".")
        train = datasets.load_idx(os.path.join(root, "train-images-idx3-ubyte"),
                                  os.path.join(root, "train-labels-idx1-ubyte"))
        pool = datasets.load_idx(os.path.join(root, "t10k-images-idx3-ubyte"),
                                 os.path.join(root, "t10k-labels-idx1-ubyte"))
    if cfg["train_limit"]:
        train = train.subset(np.arange(min(cfg["train_limit"], train.n)))
    calib, test = datasets.split_calibration(
        pool, datasets.SplitSpec(cfg["calibration_per_class"], cfg["split_seed"]))
    if cfg["test_limit"]:
        test = test.subset(np.arange(min(cfg["test_limit"], test.n)))
    return train, calib, test


def build_models(cfg: dict, train, calib) -> ExperimentModels:
    need_net = any(c in spec for spec in cfg["attacks"] for c in ("dknn", "net")) \
        or cfg["sweep_eps"] or cfg["network"]
    params = None
    if need_net:
        if cfg["network"]:
            params = nn.restore_params(cfg["network"])
        else:
            spec = nn.NetworkSpec(train.dim, cfg["hidden"])
            params = nn.train_network(spec, train,
                                      nn.TrainConfig(cfg["epochs"], cfg["batch"],
                                                     cfg["train_lr"],
                                                     cfg["net_seed"]))
    km = knn.KnnModel(train.samples, train.labels, cfg["k"], metric=cfg["metric"])
    dm = dknn.dknn_fit(params, train, calib, cfg["k"]) if params is not None else None
    return ExperimentModels(train, km, dm, params)


def run_experiment(config_path, overrides: dict | None = None):
    """Orchestrate fit -> attack -> report. Returns (exit_status, out_dir)."""
    cfg = load_experiment_config(config_path)
    for key, raw in (overrides or {}).items():
        if key not in _EXP_KEYS:
            raise ValueError(f"unknown override {key!r}")
        cfg[key] = _EXP_KEYS[key](raw) if isinstance(raw, str) else raw

    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    declared, written = [], []
    manifest = os.path.join(out_dir, "manifest.txt")

    try:
        train, calib, test = load_experiment_data(cfg)
    except (OSError, ValueError) as err:
        with open(manifest, "w") as f:
            f.write(f"status = failed\nerror = {err}\n")
        return 2, out_dir

    models = build_models(cfg, train, calib)
    acfg = _attack_config(cfg)

    report_rows = []
    results_by_spec = {}
    for spec in cfg["attacks"]:
        parts = spec.split("-")
        if len(parts) == 2:
            attack, classifier = parts
            run_cfg = acfg
        elif len(parts) == 3:
            attack, classifier, norm = parts
            run_cfg = replace(acfg, norm=norm)
        else:
            raise ValueError(f"bad attack spec {spec!r} "
                             "(want attack-classifier[-norm])")
        results = run_attack_batch(models, attack, classifier,
                                   test.samples.astype(np.float64),
                                   test.labels, run_cfg)
        results_by_spec[spec] = results
        rep = _aggregate(attack, classifier, results)
        report_rows.append((spec, classifier, run_cfg.norm, run_cfg.eps,
                            len(rep.records), rep.attack_accuracy,
                            rep.mean_l2_distortion, rep.mean_credibility))
        rec_path = os.path.join(out_dir, f"records_{spec}.csv")
        write_csv(rec_path,
                  ["index", "success", "l2", "linf", "credibility",
                   "iterations", "final_c"],
                  [(r["index"], r["success"], r["l2"], r["linf"],
                    r["credibility"], r["iterations"], r["final_c"])
                   for r in rep.records])
        written.append(rec_path)
        blob_path = os.path.join(out_dir, f"adv_{spec}.f32")
        hats = np.array([r.z_hat for r in results])
        write_f32_blob(blob_path, hats)
        written.append(blob_path)
        if cfg["dump_neighbors"] and classifier == "dknn":
            npath = os.path.join(out_dir, f"neighbors_{spec}.csv")
            write_neighbor_dump(npath, models.dknn_model, hats)
            written.append(npath)

    report_path = os.path.join(out_dir, "report.csv")
    write_csv(report_path,
              ["attack", "classifier", "norm", "eps", "n",
               "attack_accuracy", "mean_l2_distortion", "mean_credibility"],
              report_rows)
    written.append(report_path)

    if cfg["sweep_eps"]:
        points, per_eps = epsilon_sweep(models, cfg["sweep_attack"], test,
                                        list(cfg["sweep_eps"]), acfg)
        sweep_path = os.path.join(out_dir, "sweep.csv")
        write_csv(sweep_path, ["eps", "attack_accuracy", "mean_credibility"],
                  [(p.eps, p.attack_accuracy, p.mean_credibility)
                   for p in points])
        written.append(sweep_path)
        if cfg["cred_thresholds"]:
            rows, clean_hist, adv_hist = credibility_report(
                models.dknn_model, test, per_eps[-1], cfg["cred_thresholds"])
            tpath = os.path.join(out_dir, "credibility_thresholds.csv")
            write_csv(tpath, ["threshold", "clean_accuracy", "adv_pass_rate"],
                      rows)
            written.append(tpath)
            hpath = os.path.join(out_dir, "credibility_hist.csv")
            write_csv(hpath, ["bin", "clean_count", "adv_count"],
                      [(i, int(c), int(a))
                       for i, (c, a) in enumerate(zip(clean_hist, adv_hist))])
            written.append(hpath)
    elif cfg["cred_thresholds"] and models.dknn_model is not None:
        dknn_specs = [s for s in cfg["attacks"] if s.split("-")[1] == "dknn"]
        if dknn_specs:
            results = results_by_spec[dknn_specs[-1]]
            rows, clean_hist, adv_hist = credibility_report(
                models.dknn_model, test, results, cfg["cred_thresholds"])
            tpath = os.path.join(out_dir, "credibility_thresholds.csv")
            write_csv(tpath, ["threshold", "clean_accuracy", "adv_pass_rate"],
                      rows)
            written.append(tpath)
            hpath = os.path.join(out_dir, "credibility_hist.csv")
            write_csv(hpath, ["bin", "clean_count", "adv_count"],
                      [(i, int(c), int(a))
                       for i, (c, a) in enumerate(zip(clean_hist, adv_hist))])
            written.append(hpath)

    with open(manifest, "w") as f:
        f.write("status = complete\n")
        for path in written:
            f.write(f"output = {os.path.basename(path)}\n")
    return 0, out_dir
