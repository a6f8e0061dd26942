"""Simulated federated training: local, FedAvg, fine-tuning and model mixtures.

Every client minimizes ``lam * L_i(theta_i) + (1 - lam) * ||theta_i - theta_bar||^2``
in one of four ways (see :func:`run_scheme`). Randomness is keyed by
``(seed, client id, epoch)`` so the order in which clients are simulated
never changes the result.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import deform, nn

log = logging.getLogger(__name__)

_TAG_INIT = 0
_TAG_PARTITION = 1
_TAG_EPOCH = 3

_FAMILIES = {"rotation": deform.Rotation, "translation": deform.Translation, "affine": deform.Affine}


@dataclass(frozen=True)
class AugmentationPolicy:
    """One noise draw per training sample.

    ``kind`` is one of ``none``, ``pixel``, ``rotation``, ``translation``,
    ``affine``. Rotations default to uniform noise on ``[-sigma, sigma]``,
    everything else to Gaussian.
    """

    kind: str = "none"
    sigma: float = 0.0
    distribution: Optional[str] = None

    def __post_init__(self):
        if self.kind not in _FAMILIES and self.kind not in ("none", "pixel"):
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        if self.kind != "none" and not self.sigma > 0:
            raise ValueError(f"augmentation {self.kind!r} needs sigma > 0, got {self.sigma}")
        dist = self.distribution or ("uniform" if self.kind == "rotation" else "gaussian")
        if dist not in ("uniform", "gaussian"):
            raise ValueError(f"unknown distribution {dist!r}")
        if self.kind == "pixel" and dist != "gaussian":
            raise ValueError("pixel augmentation is Gaussian only")
        object.__setattr__(self, "distribution", dist)


NO_AUGMENTATION = AugmentationPolicy()


def draw_noise(policy: AugmentationPolicy, shape, rng) -> Optional[np.ndarray]:
    """Noise for a batch of images of ``shape``: pixel noise or parameter offsets."""
    if policy.kind == "none":
        return None
    if policy.kind == "pixel":
        return policy.sigma * rng.standard_normal(shape)
    size = (shape[0], _FAMILIES[policy.kind].n_params)
    if policy.distribution == "uniform":
        return rng.uniform(-policy.sigma, policy.sigma, size)
    return policy.sigma * rng.standard_normal(size)


def augment_batch(images, policy: AugmentationPolicy, rng=None, noise=None) -> np.ndarray:
    """Apply one independent draw of ``policy`` to each image of a batch.

    ``noise`` overrides the draw (pixel noise of the batch shape, or a
    ``(B, k)`` array of parameter offsets). Pixel noise is not clipped.
    """
    images = np.asarray(images, dtype=np.float64)
    if policy.kind == "none":
        return images
    if noise is None:
        noise = draw_noise(policy, images.shape, rng)
    if policy.kind == "pixel":
        return images + noise
    return deform.deform_image(images, _FAMILIES[policy.kind](), noise)


def augment(img, policy: AugmentationPolicy, rng=None, noise=None) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if noise is not None:
        noise = np.asarray(noise)[None]
    return augment_batch(img[None], policy, rng, noise)[0]


@dataclass(frozen=True)
class ClientState:
    id: int
    params: nn.ParamVector
    indices: np.ndarray
    augmentation: AugmentationPolicy = NO_AUGMENTATION


@dataclass(frozen=True)
class Local:
    pass


@dataclass(frozen=True)
class FedAvg:
    pass


@dataclass(frozen=True)
class FedAvgThenPersonalize:
    """FedAvg, then each client fine-tunes the final global model.

    ``lr`` defaults to the schedule's rate at the last federated epoch and
    ``augmentation`` to each client's own policy.
    """

    epochs: int = 4
    lr: Optional[float] = None
    augmentation: Optional[AugmentationPolicy] = None


@dataclass(frozen=True)
class Mixture:
    """Clients take mixture steps and keep their own models.

    ``gamma`` is the step size at epoch 0 and decays with the learning-rate
    schedule. ``sync`` sets how often the server recomputes the average
    model: after every local-epoch block (``"round"``) or after every step
    (``"step"``).
    """

    lam: float = 0.1
    gamma: float = 0.1
    sync: str = "round"

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.sync not in ("round", "step"):
            raise ValueError(f"sync must be 'round' or 'step', got {self.sync!r}")


Scheme = Union[Local, FedAvg, FedAvgThenPersonalize, Mixture]


@dataclass(frozen=True)
class FederationConfig:
    n_clients: int = 10
    rounds: int = 45
    local_epochs: int = 2
    batch_size: int = 64
    lr_schedule: nn.LrSchedule = field(default_factory=nn.LrSchedule)
    scheme: Scheme = field(default_factory=FedAvg)
    seed: int = 0

    def __post_init__(self):
        if self.n_clients < 1 or self.rounds < 0 or self.local_epochs < 0 or self.batch_size < 1:
            raise ValueError(f"invalid federation config {self}")
        if not isinstance(self.scheme, (Local, FedAvg, FedAvgThenPersonalize, Mixture)):
            raise TypeError(f"unknown scheme {self.scheme!r}")
        if isinstance(self.scheme, FedAvgThenPersonalize) and self.scheme.epochs < 0:
            raise ValueError("personalization epochs must be >= 0")

    @property
    def total_epochs(self) -> int:
        return self.rounds * self.local_epochs


def epoch_rng(seed, client_id: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, _TAG_EPOCH, client_id, epoch])


def initial_params(net: nn.NetworkSpec, seed) -> nn.ParamVector:
    return nn.init_params(net, [seed, _TAG_INIT])


def partition(dataset_size: int, n_clients: int, seed) -> list:
    """Random disjoint split into ``n_clients`` chunks whose sizes differ by at most one."""
    if n_clients < 1:
        raise ValueError(f"need at least one client, got {n_clients}")
    if dataset_size < n_clients:
        raise ValueError(f"cannot split {dataset_size} samples across {n_clients} clients")
    entropy = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    perm = np.random.default_rng(entropy + [_TAG_PARTITION]).permutation(dataset_size)
    return [np.sort(chunk) for chunk in np.array_split(perm, n_clients)]


def _batches(indices, batch_size, rng):
    order = rng.permutation(indices)
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def local_train(client: ClientState, net: nn.NetworkSpec, dataset, epochs: int,
                lr_schedule: nn.LrSchedule, batch_size: int, seed, start_epoch: int = 0,
                policy: Optional[AugmentationPolicy] = None):
    """Shuffled mini-batch SGD over the client's data for ``epochs`` epochs.

    Epoch ``e`` (counted globally from ``start_epoch``) uses learning rate
    ``lr_at_epoch(lr_schedule, e)`` and the random stream
    ``epoch_rng(seed, client.id, e)``, which both shuffles and augments.
    Returns the updated client and the mean training loss of each epoch.
    """
    if len(client.indices) == 0:
        raise ValueError(f"client {client.id} has no training data")
    policy = client.augmentation if policy is None else policy
    params = client.params
    losses = []
    for epoch in range(start_epoch, start_epoch + epochs):
        rng = epoch_rng(seed, client.id, epoch)
        lr = nn.lr_at_epoch(lr_schedule, epoch)
        total = 0.0
        for batch_idx in _batches(client.indices, batch_size, rng):
            images = augment_batch(dataset.images[batch_idx], policy, rng)
            loss, grads = nn.backward(net, params, images, dataset.labels[batch_idx])
            params = nn.sgd_step(params, grads, lr)
            total += loss * len(batch_idx)
        losses.append(total / len(client.indices))
    return replace(client, params=params), losses


def fedavg_round(clients: Sequence[ClientState], net, dataset, round_index: int,
                 config: FederationConfig):
    """Local training on every client, then average and broadcast.

    Returns the updated clients (all holding the average) and the average.
    """
    if not clients:
        raise ValueError("a round needs at least one client")
    start = round_index * config.local_epochs
    trained, losses = [], {}
    for client in clients:
        updated, loss = local_train(client, net, dataset, config.local_epochs, config.lr_schedule,
                                    config.batch_size, config.seed, start_epoch=start)
        trained.append(updated)
        losses[client.id] = loss
    theta_bar = nn.average_params([c.params for c in trained])
    return [replace(c, params=theta_bar) for c in trained], theta_bar, losses


def mixture_step(client: ClientState, theta_bar: nn.ParamVector, lam: float, gamma: float,
                 batch, net: nn.NetworkSpec):
    """``theta - gamma * (lam * grad L_i(theta) + 2 (1 - lam) (theta - theta_bar))``.

    ``batch`` is an ``(images, labels)`` pair, already augmented.
    """
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    images, labels = batch
    loss, grads = nn.backward(net, client.params, images, labels)
    theta = client.params.data
    direction = lam * grads.data + 2.0 * (1.0 - lam) * (theta - theta_bar.data)
    return replace(client, params=nn.ParamVector(theta - gamma * direction, client.params.layout)), loss


def personalize(client: ClientState, theta_bar: nn.ParamVector, net, dataset, epochs: int,
                lr: float, batch_size: int, seed, start_epoch: int = 0,
                policy: Optional[AugmentationPolicy] = None):
    """Fine-tune the global model on the client's data at a constant rate ``lr``."""
    schedule = nn.LrSchedule(base_lr=lr, decay_factor=1.0, decay_every=1)
    start = replace(client, params=theta_bar)
    return local_train(start, net, dataset, epochs, schedule, batch_size, seed,
                       start_epoch=start_epoch, policy=policy)


def _mixture_rounds(clients, net, dataset, config, log_rows):
    scheme = config.scheme
    gamma_schedule = replace(config.lr_schedule, base_lr=scheme.gamma)
    theta_bar = nn.average_params([c.params for c in clients])
    for r in range(config.rounds):
        for epoch in range(r * config.local_epochs, (r + 1) * config.local_epochs):
            gamma = nn.lr_at_epoch(gamma_schedule, epoch)
            rngs = [epoch_rng(config.seed, c.id, epoch) for c in clients]
            streams = [list(_batches(c.indices, config.batch_size, g)) for c, g in zip(clients, rngs)]
            totals = [0.0] * len(clients)
            steps = max(len(s) for s in streams)
            for t in range(steps):
                for i, client in enumerate(clients):
                    if t >= len(streams[i]):
                        continue
                    idx = streams[i][t]
                    images = augment_batch(dataset.images[idx], client.augmentation, rngs[i])
                    clients[i], loss = mixture_step(client, theta_bar, scheme.lam, gamma,
                                                    (images, dataset.labels[idx]), net)
                    totals[i] += loss * len(idx)
                if scheme.sync == "step":
                    theta_bar = nn.average_params([c.params for c in clients])
            for c, total in zip(clients, totals):
                log_rows.append({"phase": "mixture", "round": r, "epoch": epoch, "client": c.id,
                                 "loss": total / len(c.indices)})
        theta_bar = nn.average_params([c.params for c in clients])
    return clients


def make_clients(dataset_size: int, net, config: FederationConfig, augmentation=None):
    """Clients holding the shared initialization and a random share of the data.

    ``augmentation`` is one policy for all clients or a list with one per client.
    """
    parts = partition(dataset_size, config.n_clients, config.seed)
    if augmentation is None or isinstance(augmentation, AugmentationPolicy):
        augmentation = [augmentation or NO_AUGMENTATION] * config.n_clients
    if len(augmentation) != config.n_clients:
        raise ValueError(f"{len(augmentation)} augmentation policies for {config.n_clients} clients")
    init = initial_params(net, config.seed)
    return [ClientState(i, init, parts[i], augmentation[i]) for i in range(config.n_clients)]


def run_scheme(dataset, config: FederationConfig, net, augmentation=None, clients=None):
    """Train every client under ``config.scheme``.

    * ``Local``: each client trains alone for the full epoch budget.
    * ``FedAvg``: rounds of local training followed by averaging; every
      client ends with the global model.
    * ``FedAvgThenPersonalize``: FedAvg, then per-client fine-tuning.
    * ``Mixture``: rounds of mixture steps; clients keep their own models.

    Returns ``(clients, log)`` where ``log`` is a list of per-epoch rows.
    """
    if clients is None:
        clients = make_clients(len(dataset.labels), net, config, augmentation)
    clients = list(clients)
    rows = []
    scheme = config.scheme
    if isinstance(scheme, Local):
        for i, client in enumerate(clients):
            clients[i], losses = local_train(client, net, dataset, config.total_epochs,
                                             config.lr_schedule, config.batch_size, config.seed)
            rows += [{"phase": "local", "round": e // max(config.local_epochs, 1), "epoch": e,
                      "client": client.id, "loss": l} for e, l in enumerate(losses)]
        return clients, rows

    if isinstance(scheme, Mixture):
        return _mixture_rounds(clients, net, dataset, config, rows), rows

    for r in range(config.rounds):
        clients, _, losses = fedavg_round(clients, net, dataset, r, config)
        for cid, ls in losses.items():
            rows += [{"phase": "fedavg", "round": r, "epoch": r * config.local_epochs + j,
                      "client": cid, "loss": l} for j, l in enumerate(ls)]
        log.debug("round %d mean loss %.4f", r, np.mean([ls[-1] for ls in losses.values()] or [0]))

    if isinstance(scheme, FedAvgThenPersonalize):
        theta_bar = clients[0].params
        last_epoch = max(config.total_epochs - 1, 0)
        lr = scheme.lr if scheme.lr is not None else nn.lr_at_epoch(config.lr_schedule, last_epoch)
        for i, client in enumerate(clients):
            clients[i], losses = personalize(client, theta_bar, net, dataset, scheme.epochs, lr,
                                             config.batch_size, config.seed,
                                             start_epoch=config.total_epochs,
                                             policy=scheme.augmentation)
            rows += [{"phase": "personalize", "round": config.rounds, "epoch": config.total_epochs + j,
                      "client": client.id, "loss": l} for j, l in enumerate(losses)]
    return clients, rows
