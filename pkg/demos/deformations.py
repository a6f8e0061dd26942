"""
Rotations, translations and affine flows
========================================

Deformations are displacement fields over normalized pixel coordinates in
``[-1, 1]``; images are resampled bilinearly with zero padding. Smoothing
over a rotation angle certifies the angle itself.
"""

import numpy as np

from fedcert import deform, nn, smoothing
from fedcert.harness.data import gen_synthetic

shades = " .:-=+*#%@"


def show(img):
    for row in img[..., 0]:
        print("".join(shades[min(int(v * len(shades)), len(shades) - 1)] for v in row))
    print()


# A bar, then the same bar at +30 degrees and shifted two pixels to the right.
img = np.zeros((11, 11, 1))
img[5, 2:9] = 1.0
show(img)
show(deform.deform_image(img, deform.Rotation(np.pi / 6)))
# (size - 1) / 2 pixels per unit of normalized offset; a negative u moves content right
show(deform.deform_image(img, deform.Translation(-2 / 5, 0.0)))

# Affine flows contain both families exactly.
beta = 0.4
c, s = np.cos(beta), np.sin(beta)
same = np.array_equal(deform.flow_affine(c - 1, -s, s, c - 1, 0, 0, 11, 11), deform.flow_rotation(beta, 11, 11))
print("affine embedding of a rotation is exact:", same)

# Certifying rotations of a synthetic blob with a tiny trained network.
data = gen_synthetic(400, 10, 4, seed=0)
net = nn.mlp((10, 10, 1), 4, hidden=(16,))
params = nn.init_params(net, 0)
rng = np.random.default_rng(0)
for epoch in range(30):
    for b in np.array_split(rng.permutation(len(data)), 8):
        _, g = nn.backward(net, params, data.images[b], data.labels[b])
        params = nn.sgd_step(params, g, 0.3)
print("clean accuracy", (nn.predict(net, params, data.images) == data.labels).mean())

cfg = smoothing.SmoothingConfig(0.3, deform.Rotation())
res = smoothing.certify(lambda batch: nn.predict(net, params, batch), data.images[0], cfg,
                        smoothing.CertifyConfig(n0=100, n=2000), seed=0, num_classes=4)
print(f"label {data.labels[0]} -> prediction {res.prediction}, certified for "
      f"|angle| <= {res.radius:.3f} rad ({res.norm})")
