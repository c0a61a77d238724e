"""
Training a weight-sharing supernet
==================================

One set of weights serves all 4^11 sub-networks: a narrower layer uses the
first channels of the shared tensor. Each step trains the widest, the
narrowest and two random sub-networks on the same batch.
"""

import numpy as np

from snas.archspace import decode, default_skeleton
from snas.datasets import generate
from snas.supernet import TrainConfig, accuracy, init_weights, train_supernet

skeleton = default_skeleton()
train, val = generate(seed=0)
print("train", train.images.shape, "val", val.images.shape)

# loss sits near ln(4) for the first few epochs before the stripes are picked up
cfg = TrainConfig(epochs=30, seed=0)
weights, history = train_supernet(init_weights(skeleton, 0), skeleton, train, cfg)
for rec in history.to_records():
    print("epoch", rec["epoch"], "losses (max, min, rand, rand):",
          np.round(rec["mean_losses"], 3))

# every sub-network can be scored without retraining
for text in ("44444444444", "33333333333", "22222222222", "11111111111"):
    print(text, "inherited val accuracy", accuracy(weights, skeleton, decode(text, skeleton), val))

weights.save("supernet_demo.snas")
