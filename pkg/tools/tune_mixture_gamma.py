"""Pick the mixture step size gamma per lambda on held-out training digits.

Every (lambda, gamma) pair on the grid is trained on the desk config for
seeds 0-2; accuracy is measured on train digits 2000-3999, which the desk
runs never train on or certify. Prints one line per pair.

    python tools/tune_mixture_gamma.py
"""
import sys
from pathlib import Path

import numpy as np

from fedcert import nn
from fedcert.harness import experiment, load_config
from fedcert.harness.data import load_idx

GRID = (0.1, 0.3, 0.5, 0.7, 1.0)


def main(config_path):
    cfg = load_config(config_path)
    full = load_idx(cfg.resolve(cfg.data.train_images), cfg.resolve(cfg.data.train_labels))
    full = full.downsample(cfg.data.downsample)
    train = full.subset(np.arange(cfg.data.train_limit))
    held_out = full.subset(np.arange(cfg.data.train_limit, len(full)))
    for lam in (0.1, 1.0):
        best = None
        for gamma in GRID:
            accs = []
            for seed in (0, 1, 2):
                c = cfg.with_overrides(seed=seed, federation__scheme="mixture", federation__mixture_lambda=lam,
                                       federation__mixture_gamma=gamma, federation__mixture_sync="step")
                out = experiment.train(c, train)
                accs.append(np.mean([(nn.predict(out.net, cl.params, held_out.images) == held_out.labels).mean()
                                     for cl in out.clients]))
            print(f"lambda {lam} gamma {gamma}: " + " ".join(f"{a:.3f}" for a in accs)
                  + f"  mean {np.mean(accs):.4f}", flush=True)
            if best is None or np.mean(accs) > best[1]:
                best = (gamma, np.mean(accs))
        print(f"lambda {lam}: best gamma {best[0]}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent.parent / "configs" / "desk_mnist_rotation.cfg")
