"""
Four ways to train ten clients
==============================

Each client holds a small share of the data. Local training overfits that
share, FedAvg pools what every client learns into one model, fine-tuning
starts from the pooled model, and the mixture keeps one model per client
pulled towards the average.
"""

import numpy as np

from fedcert import federation, nn
from fedcert.federation import FedAvg, FedAvgThenPersonalize, FederationConfig, Local, Mixture
from fedcert.harness.data import gen_synthetic

train = gen_synthetic(300, 10, 5, seed=1, noise=0.35)
test = gen_synthetic(1000, 10, 5, seed=2, noise=0.35)
net = nn.cnn((10, 10, 1), 5, channels=(4,), kernel=3)

schemes = {
    "local": Local(),
    "fedavg": FedAvg(),
    "fedavg + fine-tune": FedAvgThenPersonalize(epochs=2),
    "mixture lambda=0.1": Mixture(lam=0.1, gamma=0.5, sync="step"),
}
for name, scheme in schemes.items():
    cfg = FederationConfig(n_clients=10, rounds=6, local_epochs=2, batch_size=16, scheme=scheme, seed=0)
    clients, log = federation.run_scheme(train, cfg, net)
    acc = [(nn.predict(net, c.params, test.images) == test.labels).mean() for c in clients]
    print(f"{name:20s} test accuracy mean {np.mean(acc):.3f}  min {min(acc):.3f}  max {max(acc):.3f}")

# With one client FedAvg is ordinary training, and lambda = 1 is local training.
one = FederationConfig(n_clients=1, rounds=2, local_epochs=1, scheme=FedAvg())
print("single-client run:", len(federation.run_scheme(train, one, net)[0]), "model")
