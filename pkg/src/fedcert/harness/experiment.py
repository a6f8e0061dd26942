"""End-to-end runs: data, federated training, per-client certification, reports."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import deform, federation, nn, smoothing
from . import report
from .config import ExperimentConfig
from .data import Dataset, gen_synthetic, load_idx
from .metrics import CurveTable, acr, certified_accuracy_curve, correctness, radius_grid

log = logging.getLogger(__name__)

_TAG_TEST_SPLIT = 11
_TAG_TEST_SUBSET = 12
_TAG_CERTIFY = 13

_DEFORMATIONS = {"rotation": deform.Rotation, "translation": deform.Translation, "affine": deform.Affine}


class ExperimentError(RuntimeError):
    pass


def load_datasets(cfg: ExperimentConfig):
    d = cfg.data
    if d.source == "idx":
        train = load_idx(cfg.resolve(d.train_images), cfg.resolve(d.train_labels), d.num_classes, "train")
        test = load_idx(cfg.resolve(d.test_images), cfg.resolve(d.test_labels), d.num_classes, "test")
    elif d.source == "synthetic":
        train = gen_synthetic(d.synthetic_n, d.synthetic_side, d.synthetic_classes,
                              [d.synthetic_seed, 0], d.synthetic_noise, "train")
        test = gen_synthetic(d.synthetic_test_n, d.synthetic_side, d.synthetic_classes,
                             [d.synthetic_seed, 1], d.synthetic_noise, "test")
    else:
        raise ValueError(f"unknown data.source {d.source!r}")
    if d.train_limit:
        train = train.subset(np.arange(min(d.train_limit, len(train))))
    if d.test_limit:
        test = test.subset(np.arange(min(d.test_limit, len(test))))
    return train.downsample(d.downsample), test.downsample(d.downsample)


def build_network(cfg: ExperimentConfig, dataset: Dataset) -> nn.NetworkSpec:
    shape = dataset.images.shape[1:]
    if cfg.net.arch == "cnn":
        return nn.cnn(shape, dataset.num_classes, cfg.net.channels, cfg.net.kernel)
    if cfg.net.arch == "mlp":
        return nn.mlp(shape, dataset.num_classes, cfg.net.hidden)
    raise ValueError(f"unknown net.arch {cfg.net.arch!r}")


def _policy(kind, sigma, distribution):
    if not kind or kind == "none":
        return federation.NO_AUGMENTATION
    return federation.AugmentationPolicy(kind, sigma, distribution or None)


def federation_config(cfg: ExperimentConfig) -> federation.FederationConfig:
    f = cfg.federation
    if f.scheme == "local":
        scheme = federation.Local()
    elif f.scheme == "fedavg":
        scheme = federation.FedAvg()
    elif f.scheme == "personalize":
        a = cfg.augment
        override = _policy(a.personalize_kind, a.personalize_sigma, a.distribution) \
            if a.personalize_kind else None
        scheme = federation.FedAvgThenPersonalize(f.personalize_epochs, f.personalize_lr, override)
    elif f.scheme == "mixture":
        scheme = federation.Mixture(f.mixture_lambda, f.mixture_gamma, f.mixture_sync)
    else:
        raise ValueError(f"unknown federation.scheme {f.scheme!r}")
    schedule = nn.LrSchedule(f.lr, f.lr_decay, f.lr_decay_every)
    return federation.FederationConfig(f.n_clients, f.rounds, f.local_epochs, f.batch_size,
                                       schedule, scheme, cfg.seed)


def smoothing_config(cfg: ExperimentConfig) -> smoothing.SmoothingConfig:
    s = cfg.smoothing
    if s.family == "pixel":
        family = None
    elif s.family in _DEFORMATIONS:
        family = _DEFORMATIONS[s.family]()
    else:
        raise ValueError(f"unknown smoothing.family {s.family!r}")
    return smoothing.SmoothingConfig(s.sigma, family, s.distribution or None)


def certify_config(cfg: ExperimentConfig) -> smoothing.CertifyConfig:
    c = cfg.certify
    return smoothing.CertifyConfig(c.n0, c.n, c.alpha, c.batch_size)


def experiment_grid(cfg: ExperimentConfig) -> np.ndarray:
    return radius_grid(cfg.smoothing.sigma, cfg.eval.radius_points, cfg.eval.radius_max)


@dataclass
class TrainOutcome:
    net: nn.NetworkSpec
    clients: list
    log: list


def train(cfg: ExperimentConfig, train_set: Dataset = None) -> TrainOutcome:
    if train_set is None:
        train_set, _ = load_datasets(cfg)
    net = build_network(cfg, train_set)
    fed = federation_config(cfg)
    policy = _policy(cfg.augment.kind, cfg.augment.sigma, cfg.augment.distribution)
    try:
        clients, rows = federation.run_scheme(train_set, fed, net, policy)
    except Exception as exc:
        raise ExperimentError(f"training phase ({fed.scheme}) failed: {exc}") from exc
    return TrainOutcome(net, clients, rows)


def test_subsets(cfg: ExperimentConfig, test_size: int) -> list:
    """Fixed random evaluation indices into the test set, one array per client."""
    n = cfg.federation.n_clients
    parts = federation.partition(test_size, n, [cfg.seed, _TAG_TEST_SPLIT])
    subsets = []
    for cid, part in enumerate(parts):
        rng = np.random.default_rng([cfg.seed, _TAG_TEST_SUBSET, cid])
        size = min(cfg.eval.samples_per_client, len(part))
        subsets.append(rng.choice(part, size=size, replace=False))
    return subsets


def certify_clients(cfg: ExperimentConfig, net: nn.NetworkSpec, params_by_client: dict,
                    test_set: Dataset):
    """Certify every client's model on its test subset.

    Returns the curve table and one result row per certified sample.
    """
    smooth = smoothing_config(cfg)
    cert = certify_config(cfg)
    grid = experiment_grid(cfg)
    subsets = test_subsets(cfg, len(test_set))
    curves, acrs, rows = {}, {}, []
    for cid, params in params_by_client.items():

        def classify(batch, params=params):
            return nn.predict(net, params, batch)

        results, labels = [], []
        for idx in subsets[cid]:
            idx = int(idx)
            try:
                res = smoothing.certify(classify, test_set.images[idx], smooth, cert,
                                        [cfg.seed, _TAG_CERTIFY, cid, idx], net.num_classes)
            except Exception as exc:
                raise ExperimentError(f"certification of client {cid}, sample {idx} failed: {exc}") from exc
            results.append(res)
            labels.append(int(test_set.labels[idx]))
            rows.append({"client_id": cid, "sample": idx, "label": labels[-1],
                         "prediction": res.prediction, "pa_lower": res.pa_lower,
                         "radius": res.radius, "norm": res.norm})
        ok = correctness(results, labels)
        curves[cid] = certified_accuracy_curve(results, ok, grid)
        acrs[cid] = acr(results, ok)
        log.info("client %d: clean certified accuracy %.3f, ACR %.4f", cid, curves[cid][0], acrs[cid])
    return CurveTable(grid, curves, acrs), rows


def checkpoint_path(out_dir, client_id: int) -> Path:
    return Path(out_dir) / "params" / f"client_{client_id:03d}.ckpt"


def save_training(outcome: TrainOutcome, out_dir) -> None:
    for c in outcome.clients:
        report.save_params(c.params, checkpoint_path(out_dir, c.id))
    report.emit_log_csv(outcome.log, Path(out_dir) / "train_log.csv")


def load_checkpoints(cfg: ExperimentConfig, out_dir) -> dict:
    params = {}
    for cid in range(cfg.federation.n_clients):
        path = checkpoint_path(out_dir, cid)
        if not path.exists():
            raise ExperimentError(f"missing checkpoint for client {cid}: {path}")
        params[cid] = report.load_params(path)
    return params


def write_reports(cfg: ExperimentConfig, table: CurveTable, rows, out_dir) -> None:
    out_dir = Path(out_dir)
    report.emit_csv(table, out_dir / "curves.csv")
    report.emit_results_csv(rows, out_dir / "certifications.csv")
    if cfg.output.svg:
        title = f"{cfg.federation.scheme}, {cfg.smoothing.family} sigma={cfg.smoothing.sigma}"
        report.emit_svg(table, out_dir / "curves.svg", title=title)


def run_experiment(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> CurveTable:
    """Train, certify and (optionally) write every artifact; deterministic in ``cfg``."""
    train_set, test_set = load_datasets(cfg)
    outcome = train(cfg, train_set)
    params = {c.id: c.params for c in outcome.clients}
    table, rows = certify_clients(cfg, outcome.net, params, test_set)
    if write:
        out_dir = cfg.resolve(cfg.output.dir) if out_dir is None else Path(out_dir)
        save_training(outcome, out_dir)
        write_reports(cfg, table, rows, out_dir)
    return table
